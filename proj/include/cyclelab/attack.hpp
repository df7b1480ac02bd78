#pragma once

// Probes of the hidden channel: random-noise reconstruction probes and targeted bounded
// perturbations that steer the reverse generator toward an arbitrary image.

#include "cyclelab/evaluation.hpp"
#include "cyclelab/objectives.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <vector>

namespace cyclelab {

struct NoiseProbe {
  Image translation;   // G_B(x)
  Image recon_clean;   // G_A(G_B(x))
  Image recon_noisy;   // G_A(clamp(G_B(x) + N(0, sigma)))
  double mse = 0;      // between the two reconstructions
};

NoiseProbe noise_probe(const ImageFn& g_a, const ImageFn& g_b, const Image& x, double sigma, std::uint64_t seed);

/// Side-by-side panels separated by a one-pixel white column.
Image hconcat_panels(const std::vector<Image>& panels);

template <typename Scalar>
using DiffMap = std::function<Var<Scalar>(Var<Scalar>)>;

struct AttackOptions {
  double epsilon = 0.08;
  int steps = 300;
  double step_size = 0.01;
};

struct AttackResult {
  Image delta;
  double epsilon = 0;
  int steps = 0;
  double achieved_mse = 0;              // at the best iterate
  std::vector<double> mse_trajectory;   // objective at iterates 0..steps
  std::vector<double> max_abs_delta;    // ||delta||_inf after each projected step
};

/// Minimizes mean((F(clamp(y_base + delta, 0, 1)) - x_target)^2) over ||delta||_inf <= epsilon by
/// Adam-driven projected gradient descent, all in [0, 1] intensity units. The Adam step size
/// decays linearly from step_size to 0 so the iterate settles. Returns the best iterate.
template <typename Scalar>
AttackResult targeted_embedding_attack(const DiffMap<Scalar>& f, const Image& y_base, const Image& x_target,
                                       const AttackOptions& options) {
  if (options.epsilon < 0) throw std::invalid_argument("attack epsilon must be >= 0");
  if (options.steps < 0) throw std::invalid_argument("attack steps must be >= 0");
  const auto eps = static_cast<Scalar>(options.epsilon);
  const Tensor<Scalar> base = y_base.cast<Scalar>();
  const Tensor<Scalar> target = x_target.cast<Scalar>();
  Tensor<Scalar> delta(base.shape());
  Tensor<Scalar> m(base.shape()), v(base.shape());
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  AttackResult result;
  result.epsilon = options.epsilon;
  result.steps = options.steps;
  result.achieved_mse = std::numeric_limits<double>::infinity();
  Tensor<Scalar> best = delta;
  for (int step = 0;; ++step) {
    Graph<Scalar> g;
    const Var<Scalar> d = g.input(delta);
    const Var<Scalar> y = clamp(g.constant(base) + d, Scalar(0), Scalar(1));
    const Var<Scalar> out = f(y);
    require_same_shape(out.shape(), target.shape(), "targeted_embedding_attack");
    const Var<Scalar> loss = mean_sq_diff(out, g.constant(target));
    const double value = static_cast<double>(loss.value()[0]);
    result.mse_trajectory.push_back(value);
    if (value < result.achieved_mse) {
      result.achieved_mse = value;
      best = delta;
    }
    if (step == options.steps) break;
    g.backward(loss);
    const auto grad = g.grad(d).data().array();
    const double t = step + 1;
    const double lr = options.step_size * (1.0 - step / static_cast<double>(options.steps));
    m.data().array() = Scalar(kBeta1) * m.data().array() + Scalar(1 - kBeta1) * grad;
    v.data().array() = Scalar(kBeta2) * v.data().array() + Scalar(1 - kBeta2) * grad.square();
    const auto step_size = static_cast<Scalar>(lr / (1 - std::pow(kBeta1, t)));
    const auto root_c2 = static_cast<Scalar>(std::sqrt(1 - std::pow(kBeta2, t)));
    delta.data().array() -= step_size * m.data().array() / (v.data().array().sqrt() / root_c2 + Scalar(kEps));
    delta.data() = delta.data().cwiseMax(-eps).cwiseMin(eps);
    result.max_abs_delta.push_back(static_cast<double>(delta.data().cwiseAbs().maxCoeff()));
  }
  result.delta = best.template cast<float>();
  return result;
}

/// [0, 1] -> model range -> generator -> [0, 1], as a differentiable map.
DiffMap<float> generator_map(const ParamSet<float>& params, const ArchConfig& arch);

struct SweepOptions {
  std::vector<double> epsilons{0.08};
  int n_samples = 20;
  int steps = 300;
  double step_size = 0.01;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // attack.csv and probe grids; default: the run directory
  bool write_grids = true;
};

struct SweepRow {
  double epsilon = 0;
  int sample_index = 0;
  int target_index = 0;
  double achieved_mse = 0;
  int steps = 0;
};

/// Attacks the poor->rich generator at y = G_B(x_i) toward a different test image x_j,
/// for every epsilon and the first n_samples test images. Writes attack.csv.
std::vector<SweepRow> attack_sweep(const std::filesystem::path& run_dir, const std::filesystem::path& data_dir,
                                   const SweepOptions& options);

/// Target index for sample i: uniform over the other n - 1 test images.
int attack_target_index(int i, int n, std::uint64_t seed);

struct NoiseProbeOptions {
  double sigma = 0.08;
  int n_samples = 4;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  bool write_grids = true;
};

/// Noise probe over the first n test images; writes probe_noise.csv and four-panel PNGs
/// (input, translation, reconstruction, noisy reconstruction).
std::vector<double> noise_probe_run(const std::filesystem::path& run_dir, const std::filesystem::path& data_dir,
                                    const NoiseProbeOptions& options);

}  // namespace cyclelab
