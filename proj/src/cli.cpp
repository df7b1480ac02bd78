#include "cyclelab/cli.hpp"

#include "cyclelab/attack.hpp"
#include "cyclelab/evaluation.hpp"
#include "cyclelab/plot.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace cyclelab {

namespace fs = std::filesystem;
using nlohmann::json;

DefenseDefaults defense_defaults(Defense defense) {
  switch (defense) {
    case Defense::none: return {0.0, 10.0, 10.0, 1.0};
    case Defense::noise: return {0.06, 10.0, 10.0, 1.0};
    case Defense::guess: return {0.0, 1.0, 2.0, 1.0};
    case Defense::noise_guess: return {0.06, 1.0, 2.0, 1.0};
  }
  return {};
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table{
      {"gta-baseline", Defense::none, {0.0, 10.0, 10.0, 1.0}},
      {"gta-noise", Defense::noise, {0.06, 5.0, 3.0, 1.0}},
      {"gta-guess", Defense::guess, {0.0, 1.5, 1.0, 2.0}},
      {"maps-baseline", Defense::none, {0.0, 10.0, 10.0, 1.0}},
      {"maps-noise", Defense::noise, {0.06, 10.0, 10.0, 1.0}},
      {"maps-guess", Defense::guess, {0.0, 1.0, 2.0, 1.0}},
      {"synaction-baseline", Defense::none, {0.0, 10.0, 10.0, 1.0}},
      {"synaction-noise", Defense::noise, {0.1, 10.0, 10.0, 1.0}},
      {"synaction-guess", Defense::guess, {0.0, 2.0, 2.0, 1.0}},
  };
  return table;
}

const Preset& find_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  throw UsageError("unknown preset '" + std::string(name) + "'");
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read config file " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const char* flag) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw UsageError(std::string(flag) + ": '" + s + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(flag) + " needs at least one value");
  return out;
}

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool quiet = false;
};

// ---- gen-data ----------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::string mode = "many-to-one";
  int n_train = 200;
  int n_test = 50;
  int size = 32;
  bool overwrite = false;
  std::string config;
};

int run_gen_data(const GenArgs& a, const Globals& g) {
  GenerateOptions o;
  if (!a.config.empty()) {
    const json j = read_json_file(a.config);
    o.mode = dataset_mode_from_string(j.at("mode").get<std::string>());
    o.n_train = j.at("n_train").get<int>();
    o.n_test = j.at("n_test").get<int>();
    o.size = j.at("size").get<int>();
    o.seed = j.at("seed").get<std::uint64_t>();
    o.out_dir = a.out.empty() ? j.at("out").get<std::string>() : a.out;
  } else {
    if (a.out.empty()) throw UsageError("gen-data: --out is required");
    o.mode = dataset_mode_from_string(a.mode);
    o.n_train = a.n_train;
    o.n_test = a.n_test;
    o.size = a.size;
    o.seed = g.seed;
    o.out_dir = a.out;
  }
  if (o.n_train < 1 || o.n_test < 1) throw UsageError("gen-data: --n-train and --n-test must be >= 1");
  if (o.size < kMinImageSize) throw UsageError("gen-data: --size must be >= 16");
  if (fs::exists(o.out_dir) && !fs::is_empty(o.out_dir) && !a.overwrite) {
    throw IoError("output directory already exists (pass --overwrite to replace): " + o.out_dir.string());
  }
  fs::create_directories(o.out_dir);
  write_json_file(o.out_dir / "gen_config.json", {{"command", "gen-data"},
                                                   {"out", o.out_dir.string()},
                                                   {"mode", std::string(to_string(o.mode))},
                                                   {"n_train", o.n_train},
                                                   {"n_test", o.n_test},
                                                   {"size", o.size},
                                                   {"seed", o.seed}});
  o.overwrite = true;  // the directory now holds gen_config.json
  const DatasetManifest m = generate_dataset(o);
  if (!g.quiet) {
    std::cout << "wrote " << (m.train_a.size() + m.train_b.size() + m.test_a.size() + m.test_b.size())
              << " images to " << o.out_dir.string() << '\n';
  }
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, preset, resume;
  std::string defense = "none";
  double sigma = 0, lambda_a = 0, lambda_b = 0, lambda_guess = 0;
  int iters = 20000, decay_start = -1, batch_size = 1, pool_size = 50, checkpoint_every = 5000, disc_steps = 1;
  double lr = 2e-4;
  int gen_filters = 16, res_blocks = 2, disc_filters = 16, disc_layers = 3;
  std::string guess_form = "least-squares";
  std::string noise_dirs = "both";
  bool identity = false, disc_first = false;
  CLI::Option *o_defense = nullptr, *o_sigma = nullptr, *o_la = nullptr, *o_lb = nullptr, *o_lg = nullptr;
};

TrainConfig resolve_train(const TrainArgs& a, const Globals& g) {
  TrainConfig cfg;
  if (!a.config.empty()) {
    try {
      cfg = train_config_from_json(read_json_file(a.config));
    } catch (const json::exception& e) {
      throw UsageError("config file " + a.config + ": " + e.what());
    }
    if (!a.data.empty()) cfg.data_dir = a.data;
    return cfg;
  }
  if (a.data.empty()) throw UsageError("train: --data is required");
  Defense defense = Defense::none;
  DefenseDefaults v;
  if (!a.preset.empty()) {
    const Preset& p = find_preset(a.preset);
    defense = p.defense;
    v = p.values;
  }
  if (a.o_defense->count() > 0) {
    defense = defense_from_string(a.defense);
    if (a.preset.empty()) v = defense_defaults(defense);
  } else if (a.preset.empty()) {
    v = defense_defaults(defense);
  }
  if (a.o_sigma->count() > 0) v.sigma = a.sigma;
  if (a.o_la->count() > 0) v.lambda_a = a.lambda_a;
  if (a.o_lb->count() > 0) v.lambda_b = a.lambda_b;
  if (a.o_lg->count() > 0) v.lambda_guess = a.lambda_guess;
  if (a.o_sigma->count() > 0 && !uses_noise(defense)) {
    std::cerr << "warning: --sigma is ignored with --defense " << to_string(defense) << '\n';
  }
  if (!uses_noise(defense)) v.sigma = 0.0;

  cfg.objective.defense = defense;
  cfg.objective.sigma = v.sigma;
  cfg.objective.lambda_a = v.lambda_a;
  cfg.objective.lambda_b = v.lambda_b;
  cfg.objective.lambda_guess = v.lambda_guess;
  cfg.objective.identity_loss = a.identity;
  cfg.objective.guess_form = guess_form_from_string(a.guess_form);
  cfg.objective.noise_a_cycle = a.noise_dirs == "both" || a.noise_dirs == "a";
  cfg.objective.noise_b_cycle = a.noise_dirs == "both" || a.noise_dirs == "b";
  cfg.lr = a.lr;
  cfg.total_iters = a.iters;
  cfg.decay_start_iter = a.decay_start;
  cfg.batch_size = a.batch_size;
  cfg.pool_size = a.pool_size;
  cfg.seed = g.seed;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.generator_first = !a.disc_first;
  cfg.disc_steps = a.disc_steps;
  cfg.arch.gen_filters = a.gen_filters;
  cfg.arch.res_blocks = a.res_blocks;
  cfg.arch.disc_filters = a.disc_filters;
  cfg.arch.disc_layers = a.disc_layers;
  cfg.data_dir = fs::absolute(a.data).lexically_normal().string();
  cfg.image_size = read_manifest(cfg.data_dir).image_size;
  cfg.arch.classes = static_cast<int>(read_manifest(cfg.data_dir).palette.colors.size());
  return cfg;
}

int run_train(const TrainArgs& a, const Globals& g) {
  if (a.out.empty()) throw UsageError("train: --out is required");
  const TrainConfig cfg = resolve_train(a, g);
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("train: ") + e.what());
  }
  TrainOptions opts;
  opts.quiet = g.quiet;
  if (!a.resume.empty()) opts.resume_from = fs::path(a.resume);
  train(cfg, a.out, opts);
  if (!g.quiet) std::cout << "run written to " << a.out << '\n';
  return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string run, data, out, config, oracle;
  std::string metrics = "rh,sn,segm,quality";
  std::string sigma_grid = "0:0.2:21";
  std::string norm = "l1";
  int n = -1, repeats = 1, oracle_iters = 20000;
};

int run_eval(const EvalArgs& a, const Globals& g) {
  fs::path run, data;
  EvalOptions o;
  if (!a.config.empty()) {
    const json j = read_json_file(a.config);
    try {
      run = j.at("run").get<std::string>();
      data = j.at("data").get<std::string>();
      const json& jo = j.at("options");
      o.metrics = jo.at("metrics").get<std::set<std::string>>();
      o.grid = {jo.at("sigma_grid").at("a").get<double>(), jo.at("sigma_grid").at("b").get<double>(),
                jo.at("sigma_grid").at("count").get<int>()};
      o.n = jo.at("n").get<int>();
      o.seed = jo.at("seed").get<std::uint64_t>();
      o.sn_repeats = jo.at("sn_repeats").get<int>();
      o.norm = rh_norm_from_string(jo.at("norm").get<std::string>());
      o.oracle_iters = jo.at("oracle_iters").get<int>();
      if (!jo.at("oracle_path").is_null()) o.oracle_path = jo.at("oracle_path").get<std::string>();
      if (!jo.at("out_dir").is_null()) o.out_dir = jo.at("out_dir").get<std::string>();
    } catch (const json::exception& e) {
      throw UsageError("config file " + a.config + ": " + e.what());
    }
  } else {
    if (a.run.empty() || a.data.empty()) throw UsageError("eval: --run and --data are required");
    run = a.run;
    data = a.data;
    for (const auto& m : split_list(a.metrics)) {
      if (m != "rh" && m != "sn" && m != "segm" && m != "quality") {
        throw UsageError("eval: unknown metric '" + m + "' (rh|sn|segm|quality)");
      }
      o.metrics.insert(m);
    }
    try {
      o.grid = parse_sigma_grid(a.sigma_grid);
      o.norm = rh_norm_from_string(a.norm);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("eval: ") + e.what());
    }
    o.n = a.n;
    o.seed = g.seed;
    o.sn_repeats = a.repeats;
    o.oracle_iters = a.oracle_iters;
    if (!a.oracle.empty()) o.oracle_path = fs::path(a.oracle);
    if (!a.out.empty()) o.out_dir = fs::path(a.out);
  }
  const fs::path out_dir = o.out_dir.value_or(run);
  fs::create_directories(out_dir);
  write_json_file(out_dir / "eval_config.json",
                  {{"command", "eval"}, {"run", run.string()}, {"data", data.string()}, {"options", to_json(o)}});
  const json report = evaluate_run(run, data, o);
  if (!g.quiet) {
    if (report.contains("rh")) std::cout << "RH   " << report["rh"]["mean"] << " +- " << report["rh"]["std"] << '\n';
    if (report.contains("sn")) std::cout << "SN   AuC " << report["sn"]["auc"] << '\n';
    if (report.contains("segm")) std::cout << "segm IoU " << report["segm"]["mean_iou"] << '\n';
    if (report.contains("quality")) std::cout << "quality IoU " << report["quality"]["mean_iou"] << '\n';
  }
  return 0;
}

// ---- probe -------------------------------------------------------------------

struct ProbeArgs {
  std::string kind, run, data, out, config;
  std::string epsilon = "0.08";
  double sigma = 0.08, step_size = 0.01;
  int steps = 300, n = 4;
  bool no_grids = false;
};

int run_probe(const ProbeArgs& a, const Globals& g) {
  json resolved;
  if (!a.config.empty()) {
    resolved = read_json_file(a.config);
  } else {
    if (a.run.empty() || a.data.empty()) throw UsageError("probe: --run and --data are required");
    if (a.kind != "attack" && a.kind != "noise") throw UsageError("probe: mode must be attack or noise");
    resolved = {{"command", "probe"},
                {"mode", a.kind},
                {"run", a.run},
                {"data", a.data},
                {"out", a.out.empty() ? a.run : a.out},
                {"epsilons", parse_doubles(a.epsilon, "--epsilon")},
                {"sigma", a.sigma},
                {"steps", a.steps},
                {"step_size", a.step_size},
                {"n", a.n},
                {"seed", g.seed},
                {"grids", !a.no_grids}};
  }
  try {
    const fs::path out = resolved.at("out").get<std::string>();
    fs::create_directories(out);
    write_json_file(out / "probe_config.json", resolved);
    const fs::path run = resolved.at("run").get<std::string>();
    const fs::path data = resolved.at("data").get<std::string>();
    if (resolved.at("mode") == "attack") {
      SweepOptions o;
      o.epsilons = resolved.at("epsilons").get<std::vector<double>>();
      o.n_samples = resolved.at("n").get<int>();
      o.steps = resolved.at("steps").get<int>();
      o.step_size = resolved.at("step_size").get<double>();
      o.seed = resolved.at("seed").get<std::uint64_t>();
      o.out_dir = out;
      o.write_grids = resolved.at("grids").get<bool>();
      const auto rows = attack_sweep(run, data, o);
      if (!g.quiet) {
        for (double e : o.epsilons) {
          double sum = 0;
          int count = 0;
          for (const auto& r : rows) {
            if (r.epsilon == e) {
              sum += r.achieved_mse;
              ++count;
            }
          }
          std::cout << "epsilon " << e << "  mean achieved MSE " << sum / count << '\n';
        }
      }
    } else {
      NoiseProbeOptions o;
      o.sigma = resolved.at("sigma").get<double>();
      o.n_samples = resolved.at("n").get<int>();
      o.seed = resolved.at("seed").get<std::uint64_t>();
      o.out_dir = out;
      o.write_grids = resolved.at("grids").get<bool>();
      const auto mses = noise_probe_run(run, data, o);
      if (!g.quiet) {
        for (std::size_t i = 0; i < mses.size(); ++i) std::cout << "sample " << i << "  mse " << mses[i] << '\n';
      }
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("probe config: ") + e.what());
  }
  return 0;
}

// ---- plot --------------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string kind = "sn";
};

int run_plot(const PlotArgs& a, const Globals& g) {
  std::vector<fs::path> inputs(a.inputs.begin(), a.inputs.end());
  plot_files(plot_kind_from_string(a.kind), inputs, a.out);
  if (!g.quiet) std::cout << "wrote " << a.out << '\n';
  return 0;
}

constexpr const char* kTrainHelp =
    "Train a cycle-consistent translator.\n"
    "Unset weights take defense-specific defaults (Google Maps row, scaled architectures):\n"
    "  none:        lambda_a=10 lambda_b=10\n"
    "  noise:       sigma=0.06 lambda_a=10 lambda_b=10\n"
    "  guess:       lambda_guess=1 lambda_a=1 lambda_b=2\n"
    "  noise+guess: sigma=0.06 lambda_guess=1 lambda_a=1 lambda_b=2\n"
    "A --preset installs a full row; explicit flags override it.";

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"cyclelab: self-adversarial attack and defenses in cycle-consistent translation"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed (default 0)");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic paired/unpaired dataset");
  c_gen->add_option("--out", gen.out, "Output directory");
  c_gen->add_option("--mode", gen.mode, "many-to-one | one-to-one")
      ->check(CLI::IsMember({"many-to-one", "one-to-one"}))
      ->capture_default_str();
  c_gen->add_option("--n-train", gen.n_train, "Training images per domain")->capture_default_str();
  c_gen->add_option("--n-test", gen.n_test, "Paired test images")->capture_default_str();
  c_gen->add_option("--size", gen.size, "Image side in pixels")->capture_default_str();
  c_gen->add_flag("--overwrite", gen.overwrite, "Replace an existing dataset directory");
  c_gen->add_option("--config", gen.config, "Re-run from a recorded gen_config.json");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", kTrainHelp);
  c_train->add_option("--data", tr.data, "Dataset directory");
  c_train->add_option("--out", tr.out, "Run directory");
  tr.o_defense = c_train->add_option("--defense", tr.defense, "none | noise | guess | noise+guess")
                     ->check(CLI::IsMember({"none", "noise", "guess", "noise+guess"}));
  tr.o_sigma = c_train->add_option("--sigma", tr.sigma, "Noise std in [0,1] intensity units")->check(CLI::Range(0.0, 1.0));
  tr.o_la = c_train->add_option("--lambda-a", tr.lambda_a, "Cycle weight of domain A")->check(CLI::NonNegativeNumber);
  tr.o_lb = c_train->add_option("--lambda-b", tr.lambda_b, "Cycle weight of domain B")->check(CLI::NonNegativeNumber);
  tr.o_lg = c_train->add_option("--lambda-guess", tr.lambda_guess, "Guess loss weight")->check(CLI::NonNegativeNumber);
  std::vector<std::string> preset_names;
  for (const auto& p : presets()) preset_names.emplace_back(p.name);
  c_train->add_option("--preset", tr.preset, "Reference configuration row")->check(CLI::IsMember(preset_names));
  c_train->add_option("--iters", tr.iters, "Total iterations")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_train->add_option("--decay-start", tr.decay_start, "Iteration where lr starts decaying (default iters/2)");
  c_train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--batch-size", tr.batch_size, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--pool-size", tr.pool_size, "Replay pool capacity")->capture_default_str();
  c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint interval (0: only final)")->capture_default_str();
  c_train->add_option("--disc-steps", tr.disc_steps, "Discriminator updates per generator update")->capture_default_str();
  c_train->add_flag("--disc-first", tr.disc_first, "Update discriminators before generators");
  c_train->add_option("--gen-filters", tr.gen_filters, "Generator base filters F")->capture_default_str();
  c_train->add_option("--res-blocks", tr.res_blocks, "Generator residual blocks R")->capture_default_str();
  c_train->add_option("--disc-filters", tr.disc_filters, "Discriminator base filters")->capture_default_str();
  c_train->add_option("--disc-layers", tr.disc_layers, "Discriminator strided layers")->capture_default_str();
  c_train->add_option("--guess-form", tr.guess_form, "least-squares | cross-entropy")
      ->check(CLI::IsMember({"least-squares", "cross-entropy"}))
      ->capture_default_str();
  c_train->add_option("--noise-dirs", tr.noise_dirs, "Cycles that receive noise: both | a | b")
      ->check(CLI::IsMember({"both", "a", "b"}))
      ->capture_default_str();
  c_train->add_flag("--identity-loss", tr.identity, "Add the identity loss with weight 0.5*lambda");
  c_train->add_option("--resume", tr.resume, "Continue from a checkpoint of the same configuration");
  c_train->add_option("--config", tr.config, "Re-run from a recorded config.json");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Compute metrics of a trained run");
  c_eval->add_option("--run", ev.run, "Run directory");
  c_eval->add_option("--data", ev.data, "Dataset directory");
  c_eval->add_option("--metrics", ev.metrics, "Comma list of rh, sn, segm, quality")->capture_default_str();
  c_eval->add_option("--sigma-grid", ev.sigma_grid, "a:b:count")->capture_default_str();
  c_eval->add_option("--n", ev.n, "Test samples (default min(500, test size))");
  c_eval->add_option("--repeats", ev.repeats, "Noise draws per sample and sigma")->capture_default_str();
  c_eval->add_option("--norm", ev.norm, "RH norm: l1 | l2")->check(CLI::IsMember({"l1", "l2"}))->capture_default_str();
  c_eval->add_option("--oracle", ev.oracle, "Oracle segmenter file (reused if compatible)");
  c_eval->add_option("--oracle-iters", ev.oracle_iters, "Oracle training iterations")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Output directory (default: the run directory)");
  c_eval->add_option("--config", ev.config, "Re-run from a recorded eval_config.json");

  ProbeArgs pr;
  auto* c_probe = app.add_subcommand("probe", "Noise probe or targeted embedding attack");
  c_probe->add_option("mode", pr.kind, "attack | noise")->check(CLI::IsMember({"attack", "noise"}));
  c_probe->add_option("--run", pr.run, "Run directory");
  c_probe->add_option("--data", pr.data, "Dataset directory");
  c_probe->add_option("--epsilon", pr.epsilon, "Attack bound(s), comma separated")->capture_default_str();
  c_probe->add_option("--sigma", pr.sigma, "Noise probe std")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c_probe->add_option("--steps", pr.steps, "Attack steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_probe->add_option("--step-size", pr.step_size, "Attack Adam step size")->capture_default_str();
  c_probe->add_option("--n", pr.n, "Test samples")->capture_default_str();
  c_probe->add_flag("--no-grids", pr.no_grids, "Skip PNG grids");
  c_probe->add_option("--out", pr.out, "Output directory (default: the run directory)");
  c_probe->add_option("--config", pr.config, "Re-run from a recorded probe_config.json");

  PlotArgs pl;
  auto* c_plot = app.add_subcommand("plot", "Emit an SVG plot");
  c_plot->add_option("--in", pl.inputs, "Input CSV/JSON (repeatable)")->required();
  c_plot->add_option("--out", pl.out, "Output SVG")->required();
  c_plot->add_option("--kind", pl.kind, "sn | rh | log")->check(CLI::IsMember({"sn", "rh", "log"}))->capture_default_str();

  for (auto* sub : {c_gen, c_train, c_eval, c_probe, c_plot}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (c_gen->parsed()) return run_gen_data(gen, g);
    if (c_train->parsed()) return run_train(tr, g);
    if (c_eval->parsed()) return run_eval(ev, g);
    if (c_probe->parsed()) {
      if (pr.kind.empty() && pr.config.empty()) throw UsageError("probe: mode attack|noise is required");
      return run_probe(pr, g);
    }
    if (c_plot->parsed()) return run_plot(pl, g);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cyclelab
