// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero if any
// criterion fails, except those listed in --known-red (still printed as FAIL). Trained runs and their reports are cached under --work and reused when the
// recorded configuration matches, so an interrupted run picks up where it stopped.

#include "cyclelab/attack.hpp"
#include "cyclelab/cli.hpp"
#include "cyclelab/evaluation.hpp"
#include "cyclelab/gradcheck.hpp"
#include "cyclelab/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace cyclelab;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kSeeds = 3;
constexpr double kAttackEpsilon = 0.08;
constexpr int kAttackPairs = 20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void cli_or_throw(std::vector<std::string> args) {
  args.insert(args.begin(), {"cyclelab", "--quiet"});
  std::string line;
  for (const auto& a : args) line += a + " ";
  std::cerr << "  $ " << line << '\n';
  if (run_cli(args) != 0) throw std::runtime_error("command failed: " + line);
}

// ---- cached experiment artifacts -------------------------------------------------------

class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(fs::absolute(std::move(root)).lexically_normal()) {
    fs::create_directories(root_);
  }

  [[nodiscard]] const fs::path& root() const { return root_; }

  fs::path dataset(DatasetMode mode) {
    const fs::path dir = root_ / (mode == DatasetMode::many_to_one ? "data_m2o" : "data_o2o");
    if (fs::exists(dir / "manifest.json")) {
      const DatasetManifest m = read_manifest(dir);
      if (m.mode == mode && m.n_train == 200 && m.n_test == 50 && m.image_size == 32 && m.seed == 0) return dir;
    }
    cli_or_throw({"--seed", "0", "gen-data", "--out", dir.string(), "--mode", std::string(to_string(mode)),
                  "--n-train", "200", "--n-test", "50", "--size", "32", "--overwrite"});
    return dir;
  }

  /// The configuration `cyclelab --seed S train --data D --defense X` records.
  static TrainConfig expected_config(const fs::path& data, Defense defense, std::uint64_t seed) {
    const DefenseDefaults v = defense_defaults(defense);
    TrainConfig cfg;
    cfg.objective.defense = defense;
    cfg.objective.sigma = uses_noise(defense) ? v.sigma : 0.0;
    cfg.objective.lambda_a = v.lambda_a;
    cfg.objective.lambda_b = v.lambda_b;
    cfg.objective.lambda_guess = v.lambda_guess;
    cfg.seed = seed;
    cfg.data_dir = data.string();
    const DatasetManifest m = read_manifest(data);
    cfg.image_size = m.image_size;
    cfg.arch.classes = m.palette.size();
    return cfg;
  }

  fs::path run(const fs::path& data, const std::string& tag, Defense defense, std::uint64_t seed) {
    const fs::path dir = root_ / (tag + "_" + std::string(to_string(defense)) + "_s" + std::to_string(seed));
    json want = to_json(expected_config(data, defense, seed));
    want.erase("checkpoint_every");
    std::vector<std::string> args{"--seed",    std::to_string(seed), "train", "--data", data.string(), "--out",
                                  dir.string(), "--defense",          std::string(to_string(defense))};
    if (fs::exists(dir / "config.json")) {
      json have = read_json(dir / "config.json");
      have.erase("checkpoint_every");
      if (have == want) {
        if (fs::exists(dir / "final.cycd")) return dir;
        // Continue an interrupted run from its latest checkpoint.
        int latest = 0;
        for (const auto& e : fs::directory_iterator(dir)) {
          const std::string name = e.path().filename().string();
          if (name.starts_with("ckpt_") && e.path().extension() == ".cycd") {
            latest = std::max(latest, std::stoi(name.substr(5)));
          }
        }
        if (latest > 0) args.insert(args.end(), {"--resume", (dir / ("ckpt_" + std::to_string(latest) + ".cycd")).string()});
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    cli_or_throw(args);
    std::cerr << "  trained " << dir.filename().string() << " in "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
    return dir;
  }

  /// metrics.json of the run for the given metric list, recomputed unless the recorded
  /// eval_config.json asks for the same thing.
  json metrics(const fs::path& run, const fs::path& data, const std::string& list) {
    const fs::path dir = run / ("eval_" + std::string(list == "rh,sn,segm,quality" ? "full" : "sn"));
    std::vector<std::string> args{"--seed", "0", "eval",       "--run", run.string(), "--data", data.string(),
                                  "--metrics", list, "--out", dir.string()};
    if (list.find("quality") != std::string::npos) {
      args.insert(args.end(), {"--oracle", (root_ / ("oracle_" + data.filename().string() + ".cycd")).string()});
    }
    if (fs::exists(dir / "metrics.json") && fs::exists(dir / "eval_config.json") &&
        fs::last_write_time(dir / "metrics.json") >= fs::last_write_time(run / "final.cycd")) {
      const json cfg = read_json(dir / "eval_config.json");
      std::set<std::string> want;
      std::stringstream ss(list);
      for (std::string m; std::getline(ss, m, ',');) want.insert(m);
      if (cfg["options"]["metrics"].get<std::set<std::string>>() == want && cfg["options"]["seed"] == 0) {
        return read_json(dir / "metrics.json");
      }
    }
    cli_or_throw(args);
    return read_json(dir / "metrics.json");
  }

  std::vector<double> attack(const fs::path& run, const fs::path& data) {
    const fs::path dir = run / "attack_probe";
    if (fs::exists(dir / "attack.csv") && fs::exists(dir / "probe_config.json") &&
        fs::last_write_time(dir / "attack.csv") >= fs::last_write_time(run / "final.cycd")) {
      const json cfg = read_json(dir / "probe_config.json");
      if (cfg["epsilons"] == json::array({kAttackEpsilon}) && cfg["n"] == kAttackPairs && cfg["steps"] == 300) {
        return read_attack(dir / "attack.csv");
      }
    }
    cli_or_throw({"--seed", "0", "probe", "attack", "--run", run.string(), "--data", data.string(), "--epsilon",
                  fmt(kAttackEpsilon), "--n", std::to_string(kAttackPairs), "--steps", "300", "--no-grids", "--out",
                  dir.string()});
    return read_attack(dir / "attack.csv");
  }

  double noise_probe_mean(const fs::path& run, const fs::path& data) {
    const fs::path dir = run / "noise_probe";
    cli_or_throw({"--seed", "0", "probe", "noise", "--run", run.string(), "--data", data.string(), "--sigma", "0.08",
                  "--n", "20", "--no-grids", "--out", dir.string()});
    std::ifstream is(dir / "probe_noise.csv");
    std::string line;
    std::getline(is, line);
    double sum = 0;
    int n = 0;
    while (std::getline(is, line)) {
      sum += std::stod(line.substr(line.rfind(',') + 1));
      ++n;
    }
    return sum / n;
  }

 private:
  static std::vector<double> read_attack(const fs::path& csv) {
    std::ifstream is(csv);
    std::string line;
    std::getline(is, line);
    std::vector<double> out;
    while (std::getline(is, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      out.push_back(std::stod(cells.at(3)));
    }
    return out;
  }

  fs::path root_;
};

// ---- criteria ---------------------------------------------------------------------

Outcome gradient_correctness() {
  double worst = 0;
  std::string detail;
  for (NetKind k : {NetKind::generator, NetKind::discriminator, NetKind::guess, NetKind::segmenter}) {
    const GradcheckResult r = gradcheck(k, 1);
    worst = std::max(worst, r.max_relative_error);
    detail += std::string(to_string(k)) + " " + fmt(r.max_relative_error) + "  ";
  }
  return {worst <= 1e-4, detail};
}

Outcome loss_formula_oracles() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  auto close = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };
  {
    Graph<double> g;
    const auto half = g.constant(Tensor<double>::constant(Shape{1, 3, 4, 4}, 0.5));
    const auto quarter = g.constant(Tensor<double>::constant(Shape{1, 3, 4, 4}, 0.25));
    expect(close(cycle_loss(half, quarter).value()[0], 0.25, 1e-6), "cycle loss 0.25");
    Tensor<double> a(Shape{1, 1, 2, 1}), b = Tensor<double>::constant(Shape{1, 1, 2, 1}, 0.5);
    a[1] = 1;
    expect(close(cycle_loss(g.constant(a), g.constant(b)).value()[0], 0.5, 1e-6), "cycle loss 0.5");
    const auto s08 = g.constant(Tensor<double>::constant(Shape{1, 1, 4, 4}, 0.8));
    const auto s03 = g.constant(Tensor<double>::constant(Shape{1, 1, 4, 4}, 0.3));
    const auto l = lsgan_losses(s08, s03);
    expect(close(l.d_loss.value()[0], 0.065, 1e-6), "lsgan d 0.065");
    expect(close(l.g_loss.value()[0], 0.49, 1e-6), "lsgan g 0.49");
    const GuessNet<double> zero = [&](Var<double>, Var<double>) {
      return g.constant(Tensor<double>::constant(Shape{1, 1, 2, 2}, 0.0));
    };
    const auto gl = guess_loss(half, quarter, zero, false);
    expect(gl.d_loss.value()[0] == 0.0 && gl.g_loss.value()[0] == 1.0, "guess loss s=0 real first");
  }
  {
    Graph<double> g;
    const auto x = g.constant(Tensor<double>::constant(Shape{1, 1, 250, 400}, 0.5));
    const ImageMap<double> id = [](Var<double> v) { return v; };
    const double e = noisy_cycle_loss(x, id, id, NoiseSpec{0.1, 17}, kUnitRange).value()[0];
    expect(close(e, 0.0798, 0.05 * 0.0798), "noisy cycle E|delta| 0.0798");
  }
  {
    RawLosses raw{1, 1, 1, 1, 1, 1, 0, 0};
    ObjectiveConfig c;
    c.defense = Defense::guess;
    c.lambda_a = 1.5;
    c.lambda_b = 1;
    c.lambda_guess = 2;
    expect(close(combine_losses(raw, c).total, 8.5, 1e-12), "weighted total 8.5");
  }
  {
    TrainConfig c;
    c.total_iters = 1000;
    c.decay_start_iter = 500;
    expect(close(lr_at(750, c), 1e-4, 1e-12), "lr at 750 = 1e-4");
    ParamSet<float> ps;
    ps.add("w", Shape{1, 1, 1, 1});
    ps.entries[0].grad[0] = 1;
    AdamState st = make_adam_state(ps);
    adam_update(ps, st, 0.1, AdamHyper{});
    expect(close(ps.entries[0].value[0], -0.1, 1e-6), "adam first step -0.1");
  }
  {
    const Palette rgbk{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, 0}}, {"r", "g", "b", "k"}};
    Image px(Shape{1, 3, 1, 1});
    px[0] = 0.9f, px[1] = 0.1f, px[2] = 0.1f;
    const Image q = quantize(px, rgbk);
    expect(q[0] == 1 && q[1] == 0 && q[2] == 0, "quantize to red");
    const Palette bw{{{0, 0, 0}, {1, 1, 1}}, {"black", "white"}};
    const ImageFn id = [](const Image& v) { return v; };
    const Image gray = Image::constant(Shape{1, 3, 1, 1}, 0.6f);
    expect(close(reconstruction_honesty(id, id, {gray}, {gray}, bw, 1).mean, 0.4, 1e-6), "RH 0.4");
    std::vector<Image> xs(10, Image::constant(Shape{1, 3, 60, 60}, 0.5f));
    const auto sn = sensitivity_to_noise(id, id, xs, {0.0, 0.1}, 10, 5);
    expect(sn.values[0] == 0.0 && close(sn.values[1], 0.01, 0.0005), "SN 0.01");
    const auto s = segmentation_scores({0, 0, 0, 0}, {0, 0, 0, 1}, 2);
    expect(close(s.mean_iou, 0.375, 1e-12), "mean IoU 0.375");
    const auto probe = noise_probe(id, id, Image::constant(Shape{1, 3, 64, 64}, 0.5f), 0.08, 4);
    expect(close(probe.mse, 0.0064, 0.00064), "noise probe 0.0064");
  }
  std::string detail = failed.empty() ? "all hand-computed examples agree" : "failed:";
  for (const auto& f : failed) detail += " [" + f + "]";
  return {failed.empty(), detail};
}

Outcome sigma_zero_degeneracy() {
  ArchConfig arch;
  const auto g_ab = init_params<float>(NetKind::generator, 1, arch);
  const auto g_ba = init_params<float>(NetKind::generator, 2, arch);
  int equal = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(mix_seed(77, s));
    Tensor<float> x(Shape{1, 3, 32, 32});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
    Graph<float> g;
    const BoundParams<float> ab(g, g_ab), ba(g, g_ba);
    const ImageMap<float> t = [&](Var<float> v) { return generator_forward(ab, v, arch); };
    const ImageMap<float> r = [&](Var<float> v) { return generator_forward(ba, v, arch); };
    const auto vx = g.constant(x);
    const float plain = cycle_loss(vx, r(t(vx))).value()[0];
    const float noisy = noisy_cycle_loss(vx, t, r, NoiseSpec{0.0, s}).value()[0];
    equal += std::bit_cast<std::uint32_t>(plain) == std::bit_cast<std::uint32_t>(noisy);
  }
  return {equal == 100, std::to_string(equal) + "/100 inputs bit-identical"};
}

Outcome quantization_properties() {
  const Palette p = default_palette();
  Rng rng(5);
  Image im(Shape{1, 3, 100, 100});
  for (std::size_t i = 0; i < im.size(); ++i) im[i] = static_cast<float>(rng.uniform());
  const auto labels = labels_from_image(im, p);
  const Image q = quantize(im, p);
  int disagreements = 0;
  for (int i = 0; i < 100 * 100; ++i) {
    int best = 0;
    double best_d = 1e9;
    for (int k = 0; k < p.size(); ++k) {
      double d = 0;
      for (int c = 0; c < 3; ++c) d += std::pow(im[c * 10000 + i] - p.colors[k][c], 2);
      if (d < best_d) best_d = d, best = k;
    }
    disagreements += best != labels[i];
  }
  const bool idempotent = quantize(q, p).data() == q.data();
  const SceneSpec scene = sample_scene(3);
  const Image poor = render_poor(scene, p, 32);
  const bool fixed = quantize(poor, p).data() == poor.data() && labels_from_image(poor, p) == class_mask(scene, 32);
  const Palette tri{{{0, 0, 0}, {0.5f, 0.5f, 0.5f}, {1, 1, 1}}, {"a", "b", "c"}};
  const bool tie = labels_from_image(Image::constant(Shape{1, 3, 1, 1}, 0.25f), tri)[0] == 0 &&
                   labels_from_image(Image::constant(Shape{1, 3, 1, 1}, 0.75f), tri)[0] == 1;
  const bool ok = disagreements == 0 && idempotent && fixed && tie;
  return {ok, "brute-force disagreements " + std::to_string(disagreements) + ", idempotent " +
                  (idempotent ? "yes" : "no") + ", fixed point " + (fixed ? "yes" : "no") + ", ties " +
                  (tie ? "lowest index" : "wrong")};
}

Outcome determinism(Workspace& ws) {
  const fs::path data = ws.dataset(DatasetMode::many_to_one);
  const fs::path root = ws.root() / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  auto train_eval = [&](const std::string& name) {
    const fs::path run = root / name;
    cli_or_throw({"--seed", "0", "train", "--data", data.string(), "--out", run.string(), "--defense", "noise+guess",
                  "--iters", "400", "--checkpoint-every", "200"});
    cli_or_throw({"--seed", "0", "eval", "--run", run.string(), "--data", data.string(), "--oracle",
                  (run / "oracle.cycd").string()});
    return run;
  };
  const fs::path a = train_eval("a");
  const fs::path b = train_eval("b");
  const bool logs = slurp(a / "log.csv") == slurp(b / "log.csv");
  const bool metrics = slurp(a / "metrics.json") == slurp(b / "metrics.json");
  // Resume a copy of run a from its midway checkpoint.
  const fs::path c = root / "c";
  fs::create_directories(c);
  fs::copy_file(a / "config.json", c / "config.json");
  fs::copy_file(a / "log.csv", c / "log.csv");
  cli_or_throw({"--seed", "0", "train", "--data", data.string(), "--out", c.string(), "--defense", "noise+guess",
                "--iters", "400", "--checkpoint-every", "200", "--resume", (a / "ckpt_200.cycd").string()});
  const bool tail = slurp(a / "log.csv") == slurp(c / "log.csv");
  const bool ok = logs && metrics && tail;
  return {ok, std::string("log.csv ") + (logs ? "identical" : "differs") + ", metrics.json " +
                  (metrics ? "identical" : "differs") + ", resumed tail " + (tail ? "identical" : "differs")};
}

struct ModelMetrics {
  std::vector<double> sn_auc, rh, segm_iou, quality_iou, oracle_iou;
};

ModelMetrics collect(Workspace& ws, const fs::path& data, Defense d) {
  ModelMetrics m;
  for (int s = 0; s < kSeeds; ++s) {
    const fs::path run = ws.run(data, "m2o", d, static_cast<std::uint64_t>(s));
    const json r = ws.metrics(run, data, "rh,sn,segm,quality");
    m.sn_auc.push_back(r["sn"]["auc"].get<double>());
    m.rh.push_back(r["rh"]["mean"].get<double>());
    m.segm_iou.push_back(r["segm"]["mean_iou"].get<double>());
    m.quality_iou.push_back(r["quality"]["mean_iou"].get<double>());
    m.oracle_iou.push_back(r["quality"]["oracle"]["mean_iou"].get<double>());
  }
  return m;
}

struct Experiment {
  fs::path data;
  ModelMetrics none, noise, guess;
};

Outcome attack_reproduction(Workspace& ws, const Experiment& e) {
  const double sn_none = median(e.none.sn_auc), sn_noise = median(e.noise.sn_auc);
  const double rh_none = median(e.none.rh), rh_noise = median(e.noise.rh), rh_guess = median(e.guess.rh);
  const bool ok = sn_none >= 2 * sn_noise && rh_none > rh_noise && rh_none > rh_guess;
  const double probe_none = ws.noise_probe_mean(ws.run(e.data, "m2o", Defense::none, 0), e.data);
  const double probe_noise = ws.noise_probe_mean(ws.run(e.data, "m2o", Defense::noise, 0), e.data);
  return {ok, "SN AuC baseline " + fmt(sn_none) + " vs noise " + fmt(sn_noise) + " (ratio " + fmt(sn_none / sn_noise) +
                  "); RH baseline " + fmt(rh_none) + " vs noise " + fmt(rh_noise) + ", guess " + fmt(rh_guess) +
                  "; noise probe at 0.08 (seed 0) baseline " + fmt(probe_none) + " vs noise " + fmt(probe_noise)};
}

Outcome quality_ordering(const Experiment& e) {
  std::vector<double> oracle;
  for (const auto* m : {&e.none, &e.noise, &e.guess}) oracle.insert(oracle.end(), m->oracle_iou.begin(), m->oracle_iou.end());
  const double gate = *std::min_element(oracle.begin(), oracle.end());
  if (gate < 0.95) return {false, "oracle self-IoU " + fmt(gate) + " below the 0.95 gate"};
  const double segm_none = median(e.none.segm_iou), segm_noise = median(e.noise.segm_iou),
               segm_guess = median(e.guess.segm_iou);
  const double q_none = median(e.none.quality_iou), q_noise = median(e.noise.quality_iou),
               q_guess = median(e.guess.quality_iou);
  const bool ok = segm_noise >= segm_none - 0.02 && segm_guess >= segm_none - 0.02 && q_noise >= q_none - 0.02 &&
                  q_guess >= q_none - 0.02;
  return {ok, "oracle self-IoU >= " + fmt(gate) + "; segm IoU baseline " + fmt(segm_none) + ", noise " +
                  fmt(segm_noise) + ", guess " + fmt(segm_guess) + "; one-to-many IoU baseline " + fmt(q_none) +
                  ", noise " + fmt(q_noise) + ", guess " + fmt(q_guess)};
}

Outcome hidden_channel_capacity(Workspace& ws, const Experiment& e) {
  std::map<Defense, double> med;
  for (Defense d : {Defense::none, Defense::noise, Defense::guess}) {
    std::vector<double> per_seed;
    for (int s = 0; s < kSeeds; ++s) {
      per_seed.push_back(median(ws.attack(ws.run(e.data, "m2o", d, static_cast<std::uint64_t>(s)), e.data)));
    }
    med[d] = median(per_seed);
  }
  const bool ok = med[Defense::none] < med[Defense::noise] && med[Defense::none] < med[Defense::guess];
  return {ok, "median achieved MSE at eps 0.08: baseline " + fmt(med[Defense::none]) + ", noise " +
                  fmt(med[Defense::noise]) + ", guess " + fmt(med[Defense::guess])};
}

Outcome one_to_one(Workspace& ws) {
  const fs::path data = ws.dataset(DatasetMode::one_to_one);
  const double none = ws.metrics(ws.run(data, "o2o", Defense::none, 0), data, "sn")["sn"]["auc"].get<double>();
  const double noise = ws.metrics(ws.run(data, "o2o", Defense::noise, 0), data, "sn")["sn"]["auc"].get<double>();
  return {noise < none, "SN AuC baseline " + fmt(none) + " vs noise " + fmt(noise)};
}

Outcome attack_analytics() {
  std::vector<std::string> failed;
  Rng rng(21);
  auto random_image = [&](Shape s, double lo, double hi) {
    Image im(s);
    for (std::size_t i = 0; i < im.size(); ++i) im[i] = static_cast<float>(rng.uniform(lo, hi));
    return im;
  };
  const DiffMap<double> id = [](Var<double> y) { return y; };
  // Projection bound at every step.
  const Image base = random_image(Shape{1, 3, 8, 8}, 0, 1), target = random_image(Shape{1, 3, 8, 8}, 0, 1);
  for (double eps : {0.0, 0.02, 0.08, 0.3}) {
    const auto r = targeted_embedding_attack<double>(id, base, target, AttackOptions{eps, 100, 0.05});
    for (double m : r.max_abs_delta) {
      if (m > eps) {
        failed.push_back("projection at eps " + fmt(eps));
        break;
      }
    }
  }
  // Nesting: a larger budget is not worse by more than 5%.
  const DiffMap<double> smooth = [](Var<double> y) { return tanh(affine(y, 3.0, -1.5)); };
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.0, 0.02, 0.04, 0.08, 0.16}) {
    const double v = targeted_embedding_attack<double>(smooth, base, target, AttackOptions{eps, 300, 0.01}).achieved_mse;
    if (v > prev * 1.05) failed.push_back("nesting at eps " + fmt(eps));
    prev = v;
  }
  // Identity closed forms.
  const Image t = random_image(Shape{1, 3, 8, 8}, 0.2, 0.8);
  Image near = t;
  for (std::size_t i = 0; i < near.size(); ++i) near[i] += static_cast<float>(rng.uniform(-0.05, 0.05));
  if (targeted_embedding_attack<double>(id, near, t, AttackOptions{0.08, 300, 0.01}).achieved_mse > 1e-4) {
    failed.push_back("identity attainable");
  }
  const Image far = Image::constant(Shape{1, 3, 4, 4}, 0.5f), goal = Image::constant(Shape{1, 3, 4, 4}, 0.9f);
  const double clipped = targeted_embedding_attack<double>(id, far, goal, AttackOptions{0.1, 300, 0.01}).achieved_mse;
  if (std::abs(clipped - 0.09) > 1e-4) failed.push_back("identity clipped " + fmt(clipped));
  std::string detail = failed.empty() ? "projection, nesting and identity closed forms hold" : "failed:";
  for (const auto& f : failed) detail += " [" + f + "]";
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("End-to-end acceptance criteria");
  std::string work = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--work", work, "Directory for datasets, runs and reports")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria (1-10)")->delimiter(',');
  std::vector<int> known_red;
  app.add_option("--known-red", known_red, "Criteria whose FAIL does not affect the exit code")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Workspace ws(work);
  std::optional<Experiment> experiment;
  auto m2o = [&]() -> const Experiment& {
    if (!experiment) {
      Experiment e;
      e.data = ws.dataset(DatasetMode::many_to_one);
      e.none = collect(ws, e.data, Defense::none);
      e.noise = collect(ws, e.data, Defense::noise);
      e.guess = collect(ws, e.data, Defense::guess);
      experiment = std::move(e);
    }
    return *experiment;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"loss-formula oracles", loss_formula_oracles},
      {"sigma=0 noisy cycle degeneracy", sigma_zero_degeneracy},
      {"quantization properties", quantization_properties},
      {"determinism and resume", [&] { return determinism(ws); }},
      {"self-adversarial attack ordering", [&] { return attack_reproduction(ws, m2o()); }},
      {"defense quality ordering", [&] { return quality_ordering(m2o()); }},
      {"hidden-channel capacity", [&] { return hidden_channel_capacity(ws, m2o()); }},
      {"one-to-one mode", [&] { return one_to_one(ws); }},
      {"attack-probe analytics", attack_analytics},
  };

  int failures = 0, unexpected = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool red = std::find(known_red.begin(), known_red.end(), id) != known_red.end();
    failures += !o.pass;
    unexpected += !o.pass && !red;
    char head[96];
    std::snprintf(head, sizeof head, "criterion %2d %s  %-34s", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str());
    lines.push_back(std::string(head) + o.detail + "  (" + fmt(secs) + " s)" + (!o.pass && red ? "  [known red]" : ""));
    std::cout << lines.back() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  if (failures > unexpected) std::cout << failures - unexpected << " of them listed as known red" << std::endl;
  return unexpected == 0 ? 0 : 1;
}
