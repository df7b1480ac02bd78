#include "cyclelab/trainer.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace cyclelab {

using nlohmann::json;

void validate(const TrainConfig& cfg) {
  validate(cfg.objective);
  if (!(cfg.lr > 0)) throw std::invalid_argument("lr must be > 0");
  if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(cfg.adam_eps > 0)) throw std::invalid_argument("Adam epsilon must be > 0");
  if (cfg.total_iters < 0) throw std::invalid_argument("total_iters must be >= 0");
  if (cfg.resolved_decay_start() > cfg.total_iters) {
    throw std::invalid_argument("decay_start_iter must not exceed total_iters");
  }
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg.pool_size < 0) throw std::invalid_argument("pool_size must be >= 0");
  if (cfg.image_size < kMinImageSize || cfg.image_size % 4 != 0) {
    throw std::invalid_argument("image_size must be >= 16 and divisible by 4");
  }
  if (cfg.checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (cfg.disc_steps < 1) throw std::invalid_argument("disc_steps must be >= 1");
  const ArchConfig& a = cfg.arch;
  if (a.gen_filters < 1 || a.res_blocks < 0 || a.disc_filters < 1 || a.disc_layers < 1 || a.seg_filters < 1 ||
      a.classes < 2) {
    throw std::invalid_argument("invalid architecture scale");
  }
}

json to_json(const ArchConfig& a) {
  return {{"gen_filters", a.gen_filters}, {"res_blocks", a.res_blocks},   {"disc_filters", a.disc_filters},
          {"disc_layers", a.disc_layers}, {"seg_filters", a.seg_filters}, {"classes", a.classes},
          {"leaky_slope", a.leaky_slope}};
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  read_key(j, "gen_filters", a.gen_filters);
  read_key(j, "res_blocks", a.res_blocks);
  read_key(j, "disc_filters", a.disc_filters);
  read_key(j, "disc_layers", a.disc_layers);
  read_key(j, "seg_filters", a.seg_filters);
  read_key(j, "classes", a.classes);
  read_key(j, "leaky_slope", a.leaky_slope);
  return a;
}

json to_json(const ObjectiveConfig& c) {
  return {{"defense", std::string(to_string(c.defense))},
          {"lambda_a", c.lambda_a},
          {"lambda_b", c.lambda_b},
          {"lambda_guess", c.lambda_guess},
          {"sigma", c.sigma},
          {"noise_a_cycle", c.noise_a_cycle},
          {"noise_b_cycle", c.noise_b_cycle},
          {"identity_loss", c.identity_loss},
          {"guess_form", std::string(to_string(c.guess_form))}};
}

ObjectiveConfig objective_from_json(const json& j) {
  ObjectiveConfig c;
  if (j.contains("defense")) c.defense = defense_from_string(j.at("defense").get<std::string>());
  read_key(j, "lambda_a", c.lambda_a);
  read_key(j, "lambda_b", c.lambda_b);
  read_key(j, "lambda_guess", c.lambda_guess);
  read_key(j, "sigma", c.sigma);
  read_key(j, "noise_a_cycle", c.noise_a_cycle);
  read_key(j, "noise_b_cycle", c.noise_b_cycle);
  read_key(j, "identity_loss", c.identity_loss);
  if (j.contains("guess_form")) c.guess_form = guess_form_from_string(j.at("guess_form").get<std::string>());
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"objective", to_json(c.objective)},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"total_iters", c.total_iters},
          {"decay_start_iter", c.resolved_decay_start()},
          {"batch_size", c.batch_size},
          {"pool_size", c.pool_size},
          {"seed", c.seed},
          {"image_size", c.image_size},
          {"arch", to_json(c.arch)},
          {"checkpoint_every", c.checkpoint_every},
          {"generator_first", c.generator_first},
          {"disc_steps", c.disc_steps},
          {"data_dir", c.data_dir}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (j.contains("objective")) c.objective = objective_from_json(j.at("objective"));
  read_key(j, "lr", c.lr);
  read_key(j, "beta1", c.beta1);
  read_key(j, "beta2", c.beta2);
  read_key(j, "adam_eps", c.adam_eps);
  read_key(j, "total_iters", c.total_iters);
  read_key(j, "decay_start_iter", c.decay_start_iter);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "pool_size", c.pool_size);
  read_key(j, "seed", c.seed);
  read_key(j, "image_size", c.image_size);
  if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"));
  read_key(j, "checkpoint_every", c.checkpoint_every);
  read_key(j, "generator_first", c.generator_first);
  read_key(j, "disc_steps", c.disc_steps);
  read_key(j, "data_dir", c.data_dir);
  return c;
}

double lr_at(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.total_iters) {
    throw std::out_of_range("lr_at: iteration " + std::to_string(iter) + " outside [0, " +
                            std::to_string(cfg.total_iters) + "]");
  }
  const int start = cfg.resolved_decay_start();
  if (iter < start) return cfg.lr;
  const int span = cfg.total_iters - start;
  if (span == 0) return 0.0;  // iter == total_iters
  return cfg.lr * static_cast<double>(cfg.total_iters - iter) / static_cast<double>(span);
}

Image ReplayPool::sample(const Image& image, Rng& rng) {
  if (capacity_ == 0) return image;
  if (static_cast<int>(images_.size()) < capacity_) {
    images_.push_back(image);
    return image;
  }
  if (!rng.coin()) return image;
  const auto k = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(capacity_)));
  Image evicted = std::move(images_[k]);
  images_[k] = image;
  return evicted;
}

AdamState make_adam_state(const ParamSet<float>& params) {
  AdamState s;
  for (const auto& e : params.entries) {
    s.m.emplace_back(e.value.shape());
    s.v.emplace_back(e.value.shape());
  }
  return s;
}

bool adam_update(ParamSet<float>& params, AdamState& state, double lr, const AdamHyper& hyper) {
  if (state.m.size() != params.entries.size() || state.v.size() != params.entries.size()) {
    throw std::invalid_argument("adam_update: moment buffers do not match the parameter set");
  }
  for (std::size_t k = 0; k < params.entries.size(); ++k) {
    const auto& e = params.entries[k];
    if (!(e.grad.shape() == e.value.shape()) || !(state.m[k].shape() == e.value.shape())) {
      throw ShapeError("adam_update: shape mismatch in '" + e.name + "'");
    }
    if (!e.grad.data().allFinite()) {
      std::cerr << "warning: non-finite gradient in '" << e.name << "', Adam step skipped\n";
      return false;
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<float>(hyper.beta1);
  const auto b2 = static_cast<float>(hyper.beta2);
  const auto step_size = static_cast<float>(lr / (1.0 - std::pow(hyper.beta1, t)));
  const auto root_c2 = static_cast<float>(std::sqrt(1.0 - std::pow(hyper.beta2, t)));
  const auto eps = static_cast<float>(hyper.eps);
  for (std::size_t k = 0; k < params.entries.size(); ++k) {
    auto& e = params.entries[k];
    auto g = e.grad.data().array();
    auto m = state.m[k].data().array();
    auto v = state.v[k].data().array();
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.square();
    e.value.data().array() -= step_size * m / (v.sqrt() / root_c2 + eps);
  }
  return true;
}

std::string_view slot_name(int slot) {
  static constexpr std::array<std::string_view, kNumNets> names{"g_ab", "g_ba", "d_a", "d_b", "guess_a", "guess_b"};
  return names.at(static_cast<std::size_t>(slot));
}

NetKind slot_kind(int slot) {
  if (slot == kGenAB || slot == kGenBA) return NetKind::generator;
  if (slot == kDiscA || slot == kDiscB) return NetKind::discriminator;
  return NetKind::guess;
}

RunState initial_state(const TrainConfig& cfg) {
  RunState s;
  for (int k = 0; k < kNumNets; ++k) {
    s.nets[k] = init_params<float>(slot_kind(k), mix_seed(cfg.seed, static_cast<std::uint64_t>(k + 1)), cfg.arch);
    s.adam[k] = make_adam_state(s.nets[k]);
  }
  s.pool_a = ReplayPool(cfg.pool_size);
  s.pool_b = ReplayPool(cfg.pool_size);
  s.rng = Rng(mix_seed(cfg.seed, 100));
  return s;
}

namespace {

CheckpointArray to_array(std::string name, const Tensor<float>& t) {
  const Shape s = t.shape();
  CheckpointArray a;
  a.name = std::move(name);
  a.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
            static_cast<std::uint32_t>(s.w)};
  a.values.assign(t.ptr(), t.ptr() + t.size());
  return a;
}

Tensor<float> from_array(const CheckpointArray& a, const std::optional<Shape>& expected) {
  if (a.dims.size() != 4) throw CorruptCheckpoint("array '" + a.name + "' is not rank 4");
  const Shape s{static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]), static_cast<int>(a.dims[2]),
                static_cast<int>(a.dims[3])};
  if (expected && !(s == *expected)) {
    throw CorruptCheckpoint("array '" + a.name + "' has shape " + to_string(s) + ", expected " + to_string(*expected));
  }
  Tensor<float> t(s);
  std::copy(a.values.begin(), a.values.end(), t.ptr());
  return t;
}

void add_pool(CheckpointFile& file, const ReplayPool& pool, const std::string& tag) {
  for (std::size_t i = 0; i < pool.images().size(); ++i) {
    file.arrays.push_back(to_array("pool/" + tag + "/" + std::to_string(i), pool.images()[i]));
  }
}

}  // namespace

void save_checkpoint(const RunState& state, const TrainConfig& cfg, const std::filesystem::path& path) {
  CheckpointFile file;
  json steps = json::array();
  for (const auto& a : state.adam) steps.push_back(a.step);
  file.metadata = {{"iteration", state.iteration},
                   {"seed", cfg.seed},
                   {"arch", to_json(cfg.arch)},
                   {"config", to_json(cfg)},
                   {"rng_state", state.rng.state()},
                   {"adam_steps", steps},
                   {"pool_a", state.pool_a.images().size()},
                   {"pool_b", state.pool_b.images().size()}};
  for (int k = 0; k < kNumNets; ++k) {
    const std::string net(slot_name(k));
    const auto& ps = state.nets[k];
    for (std::size_t i = 0; i < ps.entries.size(); ++i) {
      file.arrays.push_back(to_array(net + "/" + ps.entries[i].name, ps.entries[i].value));
    }
  }
  for (int k = 0; k < kNumNets; ++k) {
    const std::string net(slot_name(k));
    const auto& ps = state.nets[k];
    for (std::size_t i = 0; i < ps.entries.size(); ++i) {
      file.arrays.push_back(to_array("adam/" + net + "/" + ps.entries[i].name + "/m", state.adam[k].m[i]));
      file.arrays.push_back(to_array("adam/" + net + "/" + ps.entries[i].name + "/v", state.adam[k].v[i]));
    }
  }
  add_pool(file, state.pool_a, "a");
  add_pool(file, state.pool_b, "b");
  write_checkpoint_file(path, file);
}

RunState load_checkpoint(const std::filesystem::path& path, TrainConfig* cfg_out) {
  const CheckpointFile file = read_checkpoint_file(path);
  RunState s;
  TrainConfig cfg;
  try {
    const json& meta = file.metadata;
    cfg = train_config_from_json(meta.at("config"));
    s.iteration = meta.at("iteration").get<int>();
    s.rng.set_state(meta.at("rng_state").get<std::string>());
    const auto steps = meta.at("adam_steps").get<std::vector<std::int64_t>>();
    if (steps.size() != kNumNets) throw CorruptCheckpoint("checkpoint lists the wrong number of optimizers");
    for (int k = 0; k < kNumNets; ++k) s.adam[k].step = steps[k];
    s.pool_a = ReplayPool(cfg.pool_size);
    s.pool_b = ReplayPool(cfg.pool_size);
    const Shape pool_shape{1, 3, cfg.image_size, cfg.image_size};
    const auto na = meta.at("pool_a").get<std::size_t>();
    const auto nb = meta.at("pool_b").get<std::size_t>();
    for (std::size_t i = 0; i < na; ++i) s.pool_a.images().push_back(from_array(file.find("pool/a/" + std::to_string(i)), pool_shape));
    for (std::size_t i = 0; i < nb; ++i) s.pool_b.images().push_back(from_array(file.find("pool/b/" + std::to_string(i)), pool_shape));
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  for (int k = 0; k < kNumNets; ++k) {
    const std::string net(slot_name(k));
    s.nets[k] = make_params<float>(slot_kind(k), cfg.arch);
    s.adam[k].m.clear();
    s.adam[k].v.clear();
    for (auto& e : s.nets[k].entries) {
      const Shape shape = e.value.shape();
      e.value = from_array(file.find(net + "/" + e.name), shape);
      s.adam[k].m.push_back(from_array(file.find("adam/" + net + "/" + e.name + "/m"), shape));
      s.adam[k].v.push_back(from_array(file.find("adam/" + net + "/" + e.name + "/v"), shape));
    }
  }
  if (cfg_out != nullptr) *cfg_out = cfg;
  return s;
}

std::string log_header() {
  return "iter,lr,adv_G_A,adv_G_B,cyc_A,cyc_B,guess_A,guess_B,idt,total,"
         "adv_G_A_raw,adv_G_B_raw,cyc_A_raw,cyc_B_raw,guess_A_raw,guess_B_raw,idt_A_raw,idt_B_raw,"
         "d_A,d_B,d_guess_A,d_guess_B";
}

std::string log_row(const IterationLog& r) {
  const LossBreakdown& b = r.losses;
  const double values[] = {r.lr,        b.adv_G_A,     b.adv_G_B,     b.cyc_A,       b.cyc_B,       b.guess_A,
                           b.guess_B,   b.idt,         b.total,       b.raw.adv_ab,  b.raw.adv_ba,  b.raw.cyc_a,
                           b.raw.cyc_b, b.raw.guess_a, b.raw.guess_b, b.raw.idt_a,   b.raw.idt_b,   r.disc.d_a,
                           r.disc.d_b,  r.disc.d_guess_a, r.disc.d_guess_b};
  std::string row = std::to_string(r.iter);
  char buf[32];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    row += buf;
  }
  return row;
}

Trainer::Trainer(TrainConfig cfg, const Dataset& data) : Trainer(cfg, data, initial_state(cfg)) {}

Trainer::Trainer(TrainConfig cfg, const Dataset& data, RunState state) : cfg_(std::move(cfg)), state_(std::move(state)) {
  validate(cfg_);
  if (data.manifest.image_size != cfg_.image_size) {
    throw std::invalid_argument("dataset image size " + std::to_string(data.manifest.image_size) +
                                " does not match configured image_size " + std::to_string(cfg_.image_size));
  }
  if (data.train_a.empty() || data.train_b.empty()) throw std::invalid_argument("dataset has an empty training split");
  for (const auto& im : data.train_a) train_a_.push_back(to_model_range(im));
  for (const auto& im : data.train_b) train_b_.push_back(to_model_range(im));
}

Batch Trainer::sample_batch() {
  std::vector<Tensor<float>> xs, ys;
  for (int i = 0; i < cfg_.batch_size; ++i) xs.push_back(train_a_[state_.rng.below(train_a_.size())]);
  for (int i = 0; i < cfg_.batch_size; ++i) ys.push_back(train_b_[state_.rng.below(train_b_.size())]);
  return {stack_samples(xs), stack_samples(ys)};
}

void Trainer::check_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw TrainingDiverged(std::string("non-finite ") + what + " at iteration " + std::to_string(state_.iteration));
  }
}

namespace {

AdamHyper hyper_of(const TrainConfig& cfg) { return {cfg.beta1, cfg.beta2, cfg.adam_eps}; }

GeneratorOutputs detach(const GeneratorPass<float>& pass) {
  return {pass.fake_b.value(), pass.rec_a.value(), pass.fake_a.value(), pass.rec_b.value(), pass.breakdown};
}

}  // namespace

GeneratorOutputs Trainer::generator_step(const Batch& batch, double lr) {
  auto& nets = state_.nets;
  nets[kGenAB].zero_grad();
  nets[kGenBA].zero_grad();
  Graph<float> g;
  const BoundParams<float> g_ab(g, nets[kGenAB], true);
  const BoundParams<float> g_ba(g, nets[kGenBA], true);
  const BoundParams<float> d_a(g, std::as_const(nets[kDiscA]));
  const BoundParams<float> d_b(g, std::as_const(nets[kDiscB]));
  const BoundParams<float> q_a(g, std::as_const(nets[kGuessA]));
  const BoundParams<float> q_b(g, std::as_const(nets[kGuessB]));
  const CycleNets<float> cycle{g_ab, g_ba, d_a, d_b, &q_a, &q_b, cfg_.arch};
  const auto pass =
      assemble_generator_objective(cycle, g.constant(batch.x), g.constant(batch.y), cfg_.objective, state_.rng);
  check_finite(pass.breakdown.total, "generator loss");
  g.backward(pass.total);
  adam_update(nets[kGenAB], state_.adam[kGenAB], lr, hyper_of(cfg_));
  adam_update(nets[kGenBA], state_.adam[kGenBA], lr, hyper_of(cfg_));
  return detach(pass);
}

GeneratorOutputs Trainer::generator_forward_only(const Batch& batch) {
  auto& nets = state_.nets;
  Graph<float> g;
  const BoundParams<float> g_ab(g, std::as_const(nets[kGenAB]));
  const BoundParams<float> g_ba(g, std::as_const(nets[kGenBA]));
  const BoundParams<float> d_a(g, std::as_const(nets[kDiscA]));
  const BoundParams<float> d_b(g, std::as_const(nets[kDiscB]));
  const BoundParams<float> q_a(g, std::as_const(nets[kGuessA]));
  const BoundParams<float> q_b(g, std::as_const(nets[kGuessB]));
  const CycleNets<float> cycle{g_ab, g_ba, d_a, d_b, &q_a, &q_b, cfg_.arch};
  return detach(
      assemble_generator_objective(cycle, g.constant(batch.x), g.constant(batch.y), cfg_.objective, state_.rng));
}

DiscriminatorLosses Trainer::discriminator_step(const Batch& batch, const GeneratorOutputs& out, double lr) {
  auto& nets = state_.nets;
  const AdamHyper hyper = hyper_of(cfg_);
  const int n = batch.x.shape().n;

  // Pool draws happen once per iteration, before any discriminator update.
  std::vector<Tensor<float>> hist_b, hist_a;
  for (int i = 0; i < n; ++i) hist_b.push_back(state_.pool_b.sample(slice_sample(out.fake_b, i), state_.rng));
  for (int i = 0; i < n; ++i) hist_a.push_back(state_.pool_a.sample(slice_sample(out.fake_a, i), state_.rng));
  const Tensor<float> fake_b = stack_samples(hist_b);
  const Tensor<float> fake_a = stack_samples(hist_a);

  auto domain_update = [&](int slot, const Tensor<float>& real, const Tensor<float>& fake) {
    nets[slot].zero_grad();
    Graph<float> g;
    const BoundParams<float> d(g, nets[slot], true);
    const auto losses = lsgan_losses(discriminator_forward(d, g.constant(real), cfg_.arch),
                                     discriminator_forward(d, g.constant(fake), cfg_.arch));
    const double value = losses.d_loss.value()[0];
    check_finite(value, "discriminator loss");
    g.backward(losses.d_loss);
    adam_update(nets[slot], state_.adam[slot], lr, hyper);
    return value;
  };
  // The pair always holds one source image and its own reconstruction.
  auto guess_update = [&](int slot, const Tensor<float>& source, const Tensor<float>& rec) {
    const bool coin = state_.rng.coin();
    nets[slot].zero_grad();
    Graph<float> g;
    const BoundParams<float> q(g, nets[slot], true);
    const GuessNet<float> net = [&](Var<float> a, Var<float> b) { return guess_forward(q, a, b, cfg_.arch); };
    const auto losses = guess_loss(g.constant(source), g.constant(rec), net, coin, cfg_.objective.guess_form);
    const double value = losses.d_loss.value()[0];
    check_finite(value, "guess discriminator loss");
    g.backward(losses.d_loss);
    adam_update(nets[slot], state_.adam[slot], lr, hyper);
    return value;
  };

  DiscriminatorLosses d;
  for (int s = 0; s < cfg_.disc_steps; ++s) {
    d.d_a = domain_update(kDiscA, batch.x, fake_a);
    d.d_b = domain_update(kDiscB, batch.y, fake_b);
    if (uses_guess(cfg_.objective.defense)) {
      d.d_guess_a = guess_update(kGuessA, batch.x, out.rec_a);
      d.d_guess_b = guess_update(kGuessB, batch.y, out.rec_b);
    }
  }
  return d;
}

IterationLog Trainer::step() {
  if (state_.iteration >= cfg_.total_iters) throw std::logic_error("training already complete");
  IterationLog row;
  row.iter = state_.iteration;
  row.lr = lr_at(row.iter, cfg_);
  const Batch batch = sample_batch();
  if (cfg_.generator_first) {
    const GeneratorOutputs out = generator_step(batch, row.lr);
    row.losses = out.breakdown;
    row.disc = discriminator_step(batch, out, row.lr);
  } else {
    const GeneratorOutputs before = generator_forward_only(batch);
    row.disc = discriminator_step(batch, before, row.lr);
    row.losses = generator_step(batch, row.lr).breakdown;
  }
  ++state_.iteration;
  return row;
}

namespace {

/// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid());
        const auto written = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        if (written != static_cast<ssize_t>(pid.size())) throw IoError("cannot write lock file " + path_.string());
        return;
      }
      if (errno != EEXIST) throw IoError("cannot create lock file " + path_.string());
      std::ifstream is(path_);
      long holder = 0;
      is >> holder;
      if (holder > 0 && ::kill(static_cast<pid_t>(holder), 0) != 0 && errno == ESRCH) {
        std::filesystem::remove(path_);  // stale: the owning process is gone
        continue;
      }
      throw std::runtime_error("run directory " + path_.parent_path().string() +
                               " is locked by another trainer (pid " + std::to_string(holder) + ")");
    }
    throw std::runtime_error("cannot acquire lock " + path_.string());
  }
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

/// Keeps the header and the rows of iterations < k.
void truncate_log(const std::filesystem::path& path, int k) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string() + " for resume");
  std::string line, kept;
  bool header = true;
  while (std::getline(is, line)) {
    if (header) {
      if (line != log_header()) throw std::runtime_error("log.csv header does not match this version");
      header = false;
    } else if (line.empty() || std::stol(line.substr(0, line.find(','))) >= k) {
      continue;
    }
    kept += line + "\n";
  }
  if (header) kept = log_header() + "\n";
  is.close();
  write_text(path, kept);
}

bool same_run(json a, json b) {
  a.erase("checkpoint_every");
  b.erase("checkpoint_every");
  return a == b;
}

}  // namespace

void train(const TrainConfig& cfg, const std::filesystem::path& out_dir, const TrainOptions& options) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  const RunLock lock(out_dir);
  const Dataset data = load_dataset(cfg.data_dir);

  RunState state;
  if (options.resume_from) {
    TrainConfig saved;
    state = load_checkpoint(*options.resume_from, &saved);
    if (!same_run(to_json(saved), to_json(cfg))) {
      throw std::invalid_argument("checkpoint " + options.resume_from->string() +
                                  " was written by a different configuration");
    }
  } else {
    state = initial_state(cfg);
  }
  write_text(out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  const auto log_path = out_dir / "log.csv";
  if (options.resume_from) {
    truncate_log(log_path, state.iteration);
  } else {
    write_text(log_path, log_header() + "\n");
  }

  Trainer trainer(cfg, data, std::move(state));
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot append to " + log_path.string());
  while (trainer.state().iteration < cfg.total_iters) {
    IterationLog row;
    try {
      row = trainer.step();
    } catch (const TrainingDiverged& e) {
      log.flush();
      const auto path = out_dir / ("diverged_" + std::to_string(trainer.state().iteration) + ".cycd");
      save_checkpoint(trainer.state(), cfg, path);
      throw TrainingDiverged(std::string(e.what()) + "; state saved to " + path.string());
    }
    log << log_row(row) << '\n';
    const int done = trainer.state().iteration;
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      log.flush();
      save_checkpoint(trainer.state(), cfg, out_dir / ("ckpt_" + std::to_string(done) + ".cycd"));
    }
    if (!options.quiet && (done % 500 == 0 || done == cfg.total_iters)) {
      std::cerr << "iter " << done << "/" << cfg.total_iters << "  G " << row.losses.total << "  D_A " << row.disc.d_a
                << "  D_B " << row.disc.d_b << '\n';
    }
  }
  log.flush();
  if (!log) throw IoError("failed writing " + log_path.string());
  save_checkpoint(trainer.state(), cfg, out_dir / "final.cycd");
}

}  // namespace cyclelab
