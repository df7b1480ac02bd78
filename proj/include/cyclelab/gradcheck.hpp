#pragma once

#include "cyclelab/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace cyclelab {

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose probes crossed a ReLU/clamp/abs kink even at h/1000
};

/// Scalar loss builder: (tape, bound params, input vars) -> scalar var.
using LossBuilder = std::function<Var<double>(Graph<double>&, const BoundParams<double>&,
                                              const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients with central differences for every parameter array and,
/// if `check_inputs`, every input tensor. The error of one array is the norm-wise relative
/// error ||a - n|| / max(||a||, ||n||, floor); the result holds the worst array.
GradcheckResult gradcheck(ParamSet<double>& params, const std::vector<Tensor<double>>& inputs, bool check_inputs,
                          const LossBuilder& loss, double h = 1e-3, double floor = 1e-6);

/// Builds a micro instance of the given network kind from `seed` (random weights, random
/// inputs, random linear read-out of the output) and returns the worst relative error over
/// parameters and inputs.
GradcheckResult gradcheck(NetKind kind, std::uint64_t seed);

}  // namespace cyclelab
