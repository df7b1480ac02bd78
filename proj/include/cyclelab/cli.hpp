#pragma once

#include "cyclelab/trainer.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cyclelab {

/// Bad flag combination detected after parsing; exits with code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DefenseDefaults {
  double sigma = 0.0;
  double lambda_a = 10.0;
  double lambda_b = 10.0;
  double lambda_guess = 1.0;
};

/// Weights used when a flag is not given (Google Maps row of the reference settings).
DefenseDefaults defense_defaults(Defense defense);

struct Preset {
  std::string_view name;
  Defense defense;
  DefenseDefaults values;
};

const std::vector<Preset>& presets();
const Preset& find_preset(std::string_view name);

/// Entry point of the `cyclelab` tool. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace cyclelab
