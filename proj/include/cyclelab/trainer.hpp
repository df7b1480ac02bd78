#pragma once

// Alternating min-max optimization of the two generators, the two domain discriminators
// and (with the guess defense) the two guess discriminators.

#include "cyclelab/checkpoint.hpp"
#include "cyclelab/dataset.hpp"
#include "cyclelab/objectives.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclelab {

struct TrainConfig {
  ObjectiveConfig objective;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int total_iters = 20000;
  int decay_start_iter = -1;  // negative: total_iters / 2
  int batch_size = 1;
  int pool_size = 50;
  std::uint64_t seed = 0;
  int image_size = 32;
  ArchConfig arch;
  int checkpoint_every = 5000;  // 0 disables intermediate checkpoints
  bool generator_first = true;
  int disc_steps = 1;           // discriminator updates per generator update
  std::string data_dir;

  [[nodiscard]] int resolved_decay_start() const { return decay_start_iter < 0 ? total_iters / 2 : decay_start_iter; }
};

/// Throws std::invalid_argument on an inconsistent configuration.
void validate(const TrainConfig& cfg);

nlohmann::json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ObjectiveConfig& cfg);
ObjectiveConfig objective_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; wrongly typed values throw.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Constant cfg.lr before the decay start, then linear to 0 at total_iters.
double lr_at(int iter, const TrainConfig& cfg);

/// History of generated images shown to the domain discriminators.
class ReplayPool {
 public:
  explicit ReplayPool(int capacity = 50) : capacity_(capacity < 0 ? 0 : capacity) {}

  /// Fill phase: store and return `image`. Afterwards, with probability 1/2 return `image`,
  /// otherwise store it in place of a uniformly chosen entry and return the evicted one.
  Image sample(const Image& image, Rng& rng);

  [[nodiscard]] int capacity() const { return capacity_; }
  [[nodiscard]] const std::vector<Image>& images() const { return images_; }
  std::vector<Image>& images() { return images_; }

 private:
  int capacity_;
  std::vector<Image> images_;
};

struct AdamHyper {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments, one pair per parameter array.
struct AdamState {
  std::vector<Tensor<float>> m, v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ParamSet<float>& params);

/// Bias-corrected Adam step on params.grad. Returns false and leaves params and moments
/// untouched when any gradient is non-finite.
bool adam_update(ParamSet<float>& params, AdamState& state, double lr, const AdamHyper& hyper);

enum NetSlot { kGenAB = 0, kGenBA, kDiscA, kDiscB, kGuessA, kGuessB, kNumNets };
std::string_view slot_name(int slot);
NetKind slot_kind(int slot);

/// Everything needed to continue a run exactly.
struct RunState {
  int iteration = 0;
  std::array<ParamSet<float>, kNumNets> nets;
  std::array<AdamState, kNumNets> adam;
  ReplayPool pool_a;  // generated A images, shown to D_A
  ReplayPool pool_b;
  Rng rng;
};

/// Fresh state: nets initialized from mix_seed(seed, slot + 1), trainer stream from mix_seed(seed, 100).
RunState initial_state(const TrainConfig& cfg);

/// The checkpoint metadata carries the config so a run can be restored from the file alone.
void save_checkpoint(const RunState& state, const TrainConfig& cfg, const std::filesystem::path& path);
RunState load_checkpoint(const std::filesystem::path& path, TrainConfig* cfg_out = nullptr);

/// One unpaired batch in model range.
struct Batch {
  Tensor<float> x;  // from trainA
  Tensor<float> y;  // from trainB
};

/// Detached generator outputs of one iteration.
struct GeneratorOutputs {
  Tensor<float> fake_b, rec_a, fake_a, rec_b;
  LossBreakdown breakdown;
};

struct DiscriminatorLosses {
  double d_a = 0;
  double d_b = 0;
  double d_guess_a = 0;
  double d_guess_b = 0;
};

struct IterationLog {
  int iter = 0;
  double lr = 0;
  LossBreakdown losses;
  DiscriminatorLosses disc;
};

/// Header of log.csv.
std::string log_header();
std::string log_row(const IterationLog& row);

/// Raised when a loss turns non-finite. train() saves the state before propagating it.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Trainer {
 public:
  /// Models are read in [0, 1] from `data` and converted to model range once.
  Trainer(TrainConfig cfg, const Dataset& data);
  Trainer(TrainConfig cfg, const Dataset& data, RunState state);

  /// Runs iteration state().iteration and advances the counter.
  IterationLog step();

  // The pieces of step(), exposed so tests can inspect each update in isolation.
  Batch sample_batch();
  /// Minimizes the generator objective; only G_AB and G_BA change.
  GeneratorOutputs generator_step(const Batch& batch, double lr);
  /// Updates D_A, D_B and, with the guess defense, the guess discriminators.
  DiscriminatorLosses discriminator_step(const Batch& batch, const GeneratorOutputs& out, double lr);

  [[nodiscard]] const RunState& state() const { return state_; }
  RunState& state() { return state_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }

 private:
  GeneratorOutputs generator_forward_only(const Batch& batch);
  void check_finite(double value, const char* what);

  TrainConfig cfg_;
  std::vector<Tensor<float>> train_a_, train_b_;
  RunState state_;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume_from;
  bool quiet = true;
};

/// Writes config.json, log.csv, ckpt_<iter>.cycd and final.cycd into `out_dir`.
/// A lock file refuses a second concurrent trainer on the same directory.
void train(const TrainConfig& cfg, const std::filesystem::path& out_dir, const TrainOptions& options = {});

}  // namespace cyclelab
