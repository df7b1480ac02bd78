#include "cyclelab/attack.hpp"

#include "cyclelab/png_io.hpp"
#include "cyclelab/trainer.hpp"

#include <cstdio>
#include <fstream>

namespace cyclelab {

namespace fs = std::filesystem;

NoiseProbe noise_probe(const ImageFn& g_a, const ImageFn& g_b, const Image& x, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw std::invalid_argument("noise probe sigma must be >= 0");
  NoiseProbe p;
  p.translation = g_b(x);
  p.recon_clean = g_a(p.translation);
  if (sigma == 0) {
    p.recon_noisy = p.recon_clean;
    return p;
  }
  Rng rng(seed);
  const Image delta = gaussian_noise<float>(p.translation.shape(), sigma, kUnitRange, rng);
  const Image noisy(p.translation.shape(), (p.translation.data() + delta.data()).cwiseMax(0.0f).cwiseMin(1.0f));
  p.recon_noisy = g_a(noisy);
  p.mse = (p.recon_noisy.data().cast<double>() - p.recon_clean.data().cast<double>()).squaredNorm() /
          static_cast<double>(p.recon_clean.size());
  return p;
}

Image hconcat_panels(const std::vector<Image>& panels) {
  if (panels.empty()) throw std::invalid_argument("hconcat_panels: no panels");
  const Shape s = panels.front().shape();
  for (const auto& p : panels) require_same_shape(s, p.shape(), "hconcat_panels");
  const int count = static_cast<int>(panels.size());
  const int width = count * s.w + (count - 1);
  Image out = Image::constant(Shape{1, 3, s.h, width}, 1.0f);
  for (int k = 0; k < count; ++k) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) out(0, c, y, k * (s.w + 1) + x) = panels[k](0, c, y, x);
      }
    }
  }
  return out;
}

DiffMap<float> generator_map(const ParamSet<float>& params, const ArchConfig& arch) {
  return [&params, arch](Var<float> unit) {
    const BoundParams<float> bound(*unit.graph, params);
    return affine(generator_forward(bound, affine(unit, 2.0f, -1.0f), arch), 0.5f, 0.5f);
  };
}

int attack_target_index(int i, int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("attack needs at least two test images");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
  return static_cast<int>((static_cast<std::uint64_t>(i) + 1 + rng.below(static_cast<std::uint64_t>(n - 1))) %
                          static_cast<std::uint64_t>(n));
}

namespace {

struct LoadedRun {
  TrainConfig cfg;
  RunState state;
  Dataset data;
};

LoadedRun load_run(const fs::path& run_dir, const fs::path& data_dir) {
  const fs::path ckpt = run_dir / "final.cycd";
  if (!fs::exists(ckpt)) throw IoError("missing checkpoint " + ckpt.string());
  LoadedRun r;
  r.state = load_checkpoint(ckpt, &r.cfg);
  r.data = load_dataset(data_dir);
  if (r.data.manifest.image_size != r.cfg.image_size) {
    throw std::invalid_argument("dataset image size " + std::to_string(r.data.manifest.image_size) +
                                " does not match the run's image size " + std::to_string(r.cfg.image_size));
  }
  return r;
}

void check_samples(int n, std::size_t available) {
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  if (static_cast<std::size_t>(n) > available) {
    throw std::invalid_argument("requested " + std::to_string(n) + " samples but the test set has " +
                                std::to_string(available));
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

std::string index_tag(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

}  // namespace

std::vector<SweepRow> attack_sweep(const fs::path& run_dir, const fs::path& data_dir, const SweepOptions& options) {
  const LoadedRun run = load_run(run_dir, data_dir);
  const auto& test_a = run.data.test_a;
  check_samples(options.n_samples, test_a.size());
  if (options.epsilons.empty()) throw std::invalid_argument("attack sweep needs at least one epsilon");
  for (double e : options.epsilons) {
    if (e < 0 || e > 1) throw std::invalid_argument("attack epsilon must lie in [0, 1]");
  }
  const fs::path out_dir = options.out_dir.empty() ? run_dir : options.out_dir;
  fs::create_directories(out_dir);

  const ImageFn g_b = generator_fn(run.state.nets[kGenAB], run.cfg.arch);
  const ImageFn g_a = generator_fn(run.state.nets[kGenBA], run.cfg.arch);
  const DiffMap<float> f = generator_map(run.state.nets[kGenBA], run.cfg.arch);
  const int n = options.n_samples;
  const auto ne = options.epsilons.size();
  std::vector<SweepRow> rows(ne * static_cast<std::size_t>(n));
  std::vector<AttackResult> last(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    const int j = attack_target_index(i, static_cast<int>(test_a.size()), options.seed);
    const Image base = g_b(test_a[i]);
    for (std::size_t e = 0; e < ne; ++e) {
      AttackResult res = targeted_embedding_attack<float>(
          f, base, test_a[j], AttackOptions{options.epsilons[e], options.steps, options.step_size});
      rows[e * n + i] = {options.epsilons[e], i, j, res.achieved_mse, options.steps};
      if (e + 1 == ne) last[i] = std::move(res);
    }
  });

  std::string csv = "epsilon,sample_index,target_index,achieved_mse,steps\n";
  for (const auto& r : rows) {
    csv += fmt(r.epsilon) + "," + std::to_string(r.sample_index) + "," + std::to_string(r.target_index) + "," +
           fmt(r.achieved_mse) + "," + std::to_string(r.steps) + "\n";
  }
  write_text(out_dir / "attack.csv", csv);
  if (options.write_grids) {
    // input, clean translation, target, attacked reconstruction (largest epsilon)
    for (int i = 0; i < n; ++i) {
      const int j = rows[(ne - 1) * n + i].target_index;
      const Image base = g_b(test_a[i]);
      const Image attacked(base.shape(), (base.data() + last[i].delta.data()).cwiseMax(0.0f).cwiseMin(1.0f));
      write_png(out_dir / ("attack_" + index_tag(i) + ".png"),
                hconcat_panels({test_a[i], base, test_a[j], g_a(attacked)}));
    }
  }
  return rows;
}

std::vector<double> noise_probe_run(const fs::path& run_dir, const fs::path& data_dir, const NoiseProbeOptions& options) {
  const LoadedRun run = load_run(run_dir, data_dir);
  check_samples(options.n_samples, run.data.test_a.size());
  const fs::path out_dir = options.out_dir.empty() ? run_dir : options.out_dir;
  fs::create_directories(out_dir);
  const ImageFn g_b = generator_fn(run.state.nets[kGenAB], run.cfg.arch);
  const ImageFn g_a = generator_fn(run.state.nets[kGenBA], run.cfg.arch);
  const int n = options.n_samples;
  std::vector<NoiseProbe> probes(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    probes[i] = noise_probe(g_a, g_b, run.data.test_a[i], options.sigma, mix_seed(options.seed, static_cast<std::uint64_t>(i)));
  });
  std::string csv = "sample_index,sigma,mse\n";
  std::vector<double> mses;
  for (int i = 0; i < n; ++i) {
    mses.push_back(probes[i].mse);
    csv += std::to_string(i) + "," + fmt(options.sigma) + "," + fmt(probes[i].mse) + "\n";
    if (options.write_grids) {
      write_png(out_dir / ("probe_" + index_tag(i) + ".png"),
                hconcat_panels({run.data.test_a[i], probes[i].translation, probes[i].recon_clean, probes[i].recon_noisy}));
    }
  }
  write_text(out_dir / "probe_noise.csv", csv);
  return mses;
}

}  // namespace cyclelab
