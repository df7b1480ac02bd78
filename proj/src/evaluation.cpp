#include "cyclelab/evaluation.hpp"

#include "cyclelab/checkpoint.hpp"
#include "cyclelab/objectives.hpp"
#include "cyclelab/trainer.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

namespace cyclelab {

using nlohmann::json;
namespace fs = std::filesystem;

ImageFn generator_fn(const ParamSet<float>& params, const ArchConfig& arch) {
  return [&params, arch](const Image& image) {
    Graph<float> g;
    const BoundParams<float> bound(g, params);
    return to_unit_range(generator_forward(bound, g.constant(to_model_range(image)), arch).value());
  };
}

namespace {

void require_palette(const Palette& palette) {
  if (palette.colors.empty()) throw std::invalid_argument("palette is empty");
}

void require_rgb(const Image& image, const char* what) {
  if (image.shape().c != 3) throw ShapeError(std::string(what) + ": expected a 3-channel image");
}

int nearest_color(const Palette& palette, float r, float g, float b) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < palette.colors.size(); ++k) {
    const auto& c = palette.colors[k];
    const double dr = static_cast<double>(r) - c[0];
    const double dg = static_cast<double>(g) - c[1];
    const double db = static_cast<double>(b) - c[2];
    const double d = dr * dr + dg * dg + db * db;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace

std::vector<int> labels_from_image(const Image& image, const Palette& palette) {
  require_palette(palette);
  require_rgb(image, "labels_from_image");
  const Shape s = image.shape();
  const std::size_t plane = s.plane();
  std::vector<int> labels(static_cast<std::size_t>(s.n) * plane);
  for (int n = 0; n < s.n; ++n) {
    const float* p = image.sample(n);
    for (std::size_t i = 0; i < plane; ++i) {
      labels[n * plane + i] = nearest_color(palette, p[i], p[plane + i], p[2 * plane + i]);
    }
  }
  return labels;
}

Image quantize(const Image& image, const Palette& palette) {
  const std::vector<int> labels = labels_from_image(image, palette);
  const Shape s = image.shape();
  const std::size_t plane = s.plane();
  Image out(s);
  for (int n = 0; n < s.n; ++n) {
    float* p = out.sample(n);
    for (std::size_t i = 0; i < plane; ++i) {
      const auto& c = palette.colors[static_cast<std::size_t>(labels[n * plane + i])];
      for (int ch = 0; ch < 3; ++ch) p[ch * plane + i] = c[static_cast<std::size_t>(ch)];
    }
  }
  return out;
}

int eval_threads() {
  if (const char* env = std::getenv("CYCLELAB_THREADS")) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
    if (ec == std::errc() && *ptr == '\0' && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(eval_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string_view to_string(RhNorm norm) { return norm == RhNorm::l1 ? "l1" : "l2"; }

RhNorm rh_norm_from_string(std::string_view name) {
  if (name == "l1") return RhNorm::l1;
  if (name == "l2") return RhNorm::l2;
  throw std::invalid_argument("unknown norm '" + std::string(name) + "' (l1|l2)");
}

namespace {

double image_distance(const Image& a, const Image& b, RhNorm norm) {
  require_same_shape(a.shape(), b.shape(), "image distance");
  const auto diff = (a.data().cast<double>() - b.data().cast<double>()).array();
  const auto count = static_cast<double>(a.size());
  if (norm == RhNorm::l1) return diff.abs().sum() / count;
  return std::sqrt(diff.square().sum() / count);
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  return (a.data().cast<double>() - b.data().cast<double>()).squaredNorm() / static_cast<double>(a.size());
}

void check_count(int n, std::size_t available, const char* what) {
  if (n < 1) throw std::invalid_argument(std::string(what) + ": N must be >= 1");
  if (static_cast<std::size_t>(n) > available) {
    throw std::invalid_argument(std::string(what) + ": N = " + std::to_string(n) + " exceeds the " +
                                std::to_string(available) + " available test samples");
  }
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

}  // namespace

HonestyReport reconstruction_honesty(const ImageFn& g_a, const ImageFn& g_b, const std::vector<Image>& inputs,
                                     const std::vector<Image>& targets, const Palette& palette, int n, RhNorm norm) {
  require_palette(palette);
  if (inputs.size() != targets.size()) {
    throw std::invalid_argument("reconstruction_honesty: needs paired inputs and targets (" +
                                std::to_string(inputs.size()) + " vs " + std::to_string(targets.size()) + ")");
  }
  check_count(n, inputs.size(), "reconstruction_honesty");
  HonestyReport r;
  r.norm = norm;
  r.n = n;
  r.values.assign(static_cast<std::size_t>(n), 0.0);
  parallel_for(n, [&](int i) {
    const Image t = g_b(inputs[i]);
    const double honest = image_distance(g_a(quantize(t, palette)), targets[i], norm);
    const double raw = image_distance(g_a(t), targets[i], norm);
    r.values[static_cast<std::size_t>(i)] = honest - raw;
  });
  std::tie(r.mean, r.std) = mean_std(r.values);
  return r;
}

std::vector<double> SigmaGrid::points() const {
  if (count < 2) throw std::invalid_argument("sigma grid needs at least 2 points");
  if (!(a >= 0 && b <= 1 && a < b)) throw std::invalid_argument("sigma grid must satisfy 0 <= a < b <= 1");
  std::vector<double> p(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) p[k] = a + (b - a) * k / (count - 1);
  p.back() = b;
  return p;
}

SigmaGrid parse_sigma_grid(std::string_view text) {
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string_view::npos || text.find(':', c2 + 1) != std::string_view::npos) {
    throw std::invalid_argument("sigma grid must look like a:b:count, got '" + std::string(text) + "'");
  }
  SigmaGrid g;
  try {
    std::size_t used = 0;
    const std::string sa(text.substr(0, c1)), sb(text.substr(c1 + 1, c2 - c1 - 1)), sc(text.substr(c2 + 1));
    g.a = std::stod(sa, &used);
    if (used != sa.size()) throw std::invalid_argument("a");
    g.b = std::stod(sb, &used);
    if (used != sb.size()) throw std::invalid_argument("b");
    g.count = std::stoi(sc, &used);
    if (used != sc.size()) throw std::invalid_argument("count");
  } catch (const std::exception&) {
    throw std::invalid_argument("sigma grid must look like a:b:count, got '" + std::string(text) + "'");
  }
  (void)g.points();
  return g;
}

double trapezoid_auc(const std::vector<double>& grid, const std::vector<double>& values) {
  if (grid.size() != values.size()) throw std::invalid_argument("trapezoid_auc: length mismatch");
  double area = 0;
  for (std::size_t k = 1; k < grid.size(); ++k) area += 0.5 * (grid[k] - grid[k - 1]) * (values[k] + values[k - 1]);
  return area;
}

SNCurve sensitivity_to_noise(const ImageFn& g_a, const ImageFn& g_b, const std::vector<Image>& inputs,
                             const std::vector<double>& sigma_grid, int n, std::uint64_t seed, int repeats) {
  check_count(n, inputs.size(), "sensitivity_to_noise");
  if (repeats < 1) throw std::invalid_argument("sensitivity_to_noise: repeats must be >= 1");
  if (sigma_grid.empty()) throw std::invalid_argument("sensitivity_to_noise: empty sigma grid");
  for (std::size_t k = 0; k < sigma_grid.size(); ++k) {
    if (sigma_grid[k] < 0 || sigma_grid[k] > 1 || (k > 0 && sigma_grid[k] <= sigma_grid[k - 1])) {
      throw std::invalid_argument("sigma grid must be ascending within [0, 1]");
    }
  }
  const std::size_t m = sigma_grid.size();
  std::vector<std::vector<double>> per_sample(static_cast<std::size_t>(n), std::vector<double>(m, 0.0));
  parallel_for(n, [&](int i) {
    const Image t = g_b(inputs[i]);
    const Image clean = g_a(t);
    const std::uint64_t sample_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    for (std::size_t k = 0; k < m; ++k) {
      double acc = 0;
      for (int r = 0; r < repeats; ++r) {
        Rng rng(mix_seed(sample_seed, k * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r)));
        const Image delta = gaussian_noise<float>(t.shape(), sigma_grid[k], kUnitRange, rng);
        const Image noisy(t.shape(), (t.data() + delta.data()).cwiseMax(0.0f).cwiseMin(1.0f));
        acc += mse(g_a(noisy), clean);
      }
      per_sample[static_cast<std::size_t>(i)][k] = acc / repeats;
    }
  });
  SNCurve c;
  c.grid = sigma_grid;
  c.values.assign(m, 0.0);
  for (const auto& row : per_sample) {
    for (std::size_t k = 0; k < m; ++k) c.values[k] += row[k];
  }
  for (double& v : c.values) v /= n;
  c.auc = trapezoid_auc(c.grid, c.values);
  c.n = n;
  c.repeats = repeats;
  c.seed = seed;
  return c;
}

void accumulate_confusion(ConfusionMatrix& confusion, const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("segmentation maps differ in size");
  const auto k = confusion.rows();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= k || truth[i] < 0 || truth[i] >= k) {
      throw std::out_of_range("segmentation label out of range [0, " + std::to_string(k) + ")");
    }
    ++confusion(truth[i], pred[i]);
  }
}

SegScores scores_from_confusion(const ConfusionMatrix& confusion) {
  if (confusion.rows() != confusion.cols() || confusion.rows() < 1) {
    throw std::invalid_argument("confusion matrix must be square and non-empty");
  }
  SegScores s;
  s.confusion = confusion;
  const auto k = confusion.rows();
  double acc_sum = 0, iou_sum = 0;
  int acc_count = 0, iou_count = 0;
  std::int64_t diag_total = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const std::int64_t diag = confusion(c, c);
    const std::int64_t row = confusion.row(c).sum();
    const std::int64_t col = confusion.col(c).sum();
    diag_total += diag;
    if (row > 0) {
      acc_sum += static_cast<double>(diag) / static_cast<double>(row);
      ++acc_count;
    }
    const std::int64_t uni = row + col - diag;
    if (uni > 0) {
      const double iou = static_cast<double>(diag) / static_cast<double>(uni);
      s.per_class_iou.emplace_back(iou);
      iou_sum += iou;
      ++iou_count;
    } else {
      s.per_class_iou.emplace_back(std::nullopt);
    }
  }
  const std::int64_t total = confusion.sum();
  s.mean_accuracy = acc_count > 0 ? acc_sum / acc_count : 0.0;
  s.mean_iou = iou_count > 0 ? iou_sum / iou_count : 0.0;
  s.pixel_accuracy = total > 0 ? static_cast<double>(diag_total) / static_cast<double>(total) : 0.0;
  return s;
}

SegScores segmentation_scores(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  if (k < 1) throw std::invalid_argument("segmentation_scores: K must be >= 1");
  ConfusionMatrix conf = ConfusionMatrix::Zero(k, k);
  accumulate_confusion(conf, pred, truth);
  return scores_from_confusion(conf);
}

namespace {

LabeledImage labeled_scene(DatasetMode mode, int size, std::uint64_t scene_seed_value) {
  const SceneSpec scene = sample_scene(scene_seed_value);
  const Image rich = mode == DatasetMode::many_to_one ? render_rich(scene, size)
                                                      : render_with_bank(scene, style_bank(1), size);
  // Dataset images pass through 8-bit PNG; the oracle sees the same quantized intensities.
  return {quantize_8bit(rich), class_mask(scene, size)};
}

}  // namespace

std::vector<LabeledImage> synthetic_labeled_pairs(DatasetMode mode, int count, int size, std::uint64_t seed) {
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(labeled_scene(mode, size, mix_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

std::vector<int> segment(const ParamSet<float>& params, const ArchConfig& arch, const Image& image) {
  Graph<float> g;
  const BoundParams<float> bound(g, params);
  const Var<float> logits = segmenter_forward(bound, g.constant(to_model_range(image)), arch);
  const Tensor<float>& z = logits.value();
  const Shape s = z.shape();
  const std::size_t plane = s.plane();
  std::vector<int> labels(static_cast<std::size_t>(s.n) * plane);
  for (int n = 0; n < s.n; ++n) {
    const float* p = z.sample(n);
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      for (int c = 1; c < s.c; ++c) {
        if (p[c * plane + i] > p[best * plane + i]) best = c;
      }
      labels[n * plane + i] = best;
    }
  }
  return labels;
}

SegScores score_segmenter(const ParamSet<float>& params, const ArchConfig& arch, const std::vector<LabeledImage>& pairs) {
  std::vector<std::vector<int>> preds(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), [&](int i) { preds[i] = segment(params, arch, pairs[i].image); });
  ConfusionMatrix conf = ConfusionMatrix::Zero(arch.classes, arch.classes);
  for (std::size_t i = 0; i < pairs.size(); ++i) accumulate_confusion(conf, preds[i], pairs[i].labels);
  return scores_from_confusion(conf);
}

namespace {

// Keeps the oracle's scene stream apart from the dataset's scene seeds.
constexpr std::uint64_t kOracleStream = 0x0ac1e5e9ULL;

json oracle_options_json(const OracleOptions& o) {
  return {{"iters", o.iters}, {"batch", o.batch},           {"lr", o.lr},
          {"seed", o.seed},   {"image_size", o.image_size}, {"arch", to_json(o.arch)},
          {"mode", std::string(to_string(o.mode))}};
}

}  // namespace

OracleSegmenter train_oracle_segmenter(const OracleOptions& options, const std::vector<LabeledImage>& heldout) {
  if (options.iters < 0 || options.batch < 1) throw std::invalid_argument("oracle: iters >= 0 and batch >= 1 required");
  OracleSegmenter oracle;
  oracle.arch = options.arch;
  oracle.params = init_params<float>(NetKind::segmenter, mix_seed(options.seed, 7), options.arch);
  AdamState adam = make_adam_state(oracle.params);
  const AdamHyper hyper{0.9, 0.999, 1e-8};
  const std::uint64_t stream = mix_seed(options.seed, kOracleStream);
  const int decay_start = options.iters / 2;
  for (int it = 0; it < options.iters; ++it) {
    std::vector<Tensor<float>> images;
    std::vector<int> labels;
    for (int b = 0; b < options.batch; ++b) {
      const auto index = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(options.batch) +
                         static_cast<std::uint64_t>(b);
      LabeledImage p = labeled_scene(options.mode, options.image_size, mix_seed(stream, index));
      images.push_back(to_model_range(p.image));
      labels.insert(labels.end(), p.labels.begin(), p.labels.end());
    }
    oracle.params.zero_grad();
    Graph<float> g;
    const BoundParams<float> bound(g, oracle.params, true);
    const Var<float> loss = softmax_cross_entropy(segmenter_forward(bound, g.constant(stack_samples(images)), options.arch), labels);
    g.backward(loss);
    const double lr = it < decay_start ? options.lr
                                       : options.lr * static_cast<double>(options.iters - it) /
                                             static_cast<double>(options.iters - decay_start);
    adam_update(oracle.params, adam, lr, hyper);
  }
  oracle.heldout = score_segmenter(oracle.params, oracle.arch, heldout);
  if (oracle.heldout.pixel_accuracy < kOracleGate) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "oracle segmenter unusable: held-out pixel accuracy %.4f is below %.2f",
                  oracle.heldout.pixel_accuracy, kOracleGate);
    throw std::runtime_error(buf);
  }
  return oracle;
}

void save_oracle(const OracleSegmenter& oracle, const OracleOptions& options, const fs::path& path) {
  CheckpointFile file;
  file.metadata = {{"kind", "oracle_segmenter"}, {"options", oracle_options_json(options)}};
  for (const auto& e : oracle.params.entries) {
    const Shape s = e.value.shape();
    file.arrays.push_back({"seg/" + e.name,
                           {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                            static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                           std::vector<float>(e.value.ptr(), e.value.ptr() + e.value.size())});
  }
  write_checkpoint_file(path, file);
}

std::optional<OracleSegmenter> load_oracle(const fs::path& path, const OracleOptions& options) {
  const CheckpointFile file = read_checkpoint_file(path);
  if (!file.metadata.contains("options") || file.metadata["options"] != oracle_options_json(options)) {
    return std::nullopt;
  }
  OracleSegmenter oracle;
  oracle.arch = options.arch;
  oracle.params = make_params<float>(NetKind::segmenter, options.arch);
  for (auto& e : oracle.params.entries) {
    const CheckpointArray& a = file.find("seg/" + e.name);
    if (a.values.size() != e.value.size()) throw CorruptCheckpoint("oracle array '" + e.name + "' has the wrong size");
    std::copy(a.values.begin(), a.values.end(), e.value.ptr());
  }
  return oracle;
}

SegScores translation_quality_one_to_many(const ImageFn& g_a, const OracleSegmenter& oracle,
                                          const std::vector<Image>& rich, const std::vector<Image>& poor, int k) {
  if (rich.size() != poor.size()) throw std::invalid_argument("translation quality needs paired test images");
  if (oracle.params.entries.empty()) throw std::invalid_argument("translation quality needs a trained oracle segmenter");
  std::vector<std::vector<int>> pred(rich.size()), truth(rich.size());
  parallel_for(static_cast<int>(rich.size()), [&](int i) {
    pred[i] = segment(oracle.params, oracle.arch, g_a(poor[i]));
    truth[i] = segment(oracle.params, oracle.arch, rich[i]);
  });
  ConfusionMatrix conf = ConfusionMatrix::Zero(k, k);
  for (std::size_t i = 0; i < rich.size(); ++i) accumulate_confusion(conf, pred[i], truth[i]);
  return scores_from_confusion(conf);
}

json to_json(const HonestyReport& r) {
  return {{"mean", r.mean}, {"std", r.std}, {"n", r.n}, {"norm", std::string(to_string(r.norm))}, {"values", r.values}};
}

json to_json(const SNCurve& c) {
  return {{"grid", c.grid}, {"values", c.values}, {"auc", c.auc}, {"n", c.n}, {"seed", c.seed}, {"repeats", c.repeats}};
}

json to_json(const SegScores& s) {
  json iou = json::array();
  for (const auto& v : s.per_class_iou) iou.push_back(v ? json(*v) : json(nullptr));
  json conf = json::array();
  for (Eigen::Index r = 0; r < s.confusion.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < s.confusion.cols(); ++c) row.push_back(s.confusion(r, c));
    conf.push_back(row);
  }
  return {{"mean_accuracy", s.mean_accuracy},
          {"mean_iou", s.mean_iou},
          {"pixel_accuracy", s.pixel_accuracy},
          {"per_class_iou", iou},
          {"confusion", conf}};
}

json to_json(const EvalOptions& o) {
  json j = {{"metrics", o.metrics},
            {"sigma_grid", {{"a", o.grid.a}, {"b", o.grid.b}, {"count", o.grid.count}}},
            {"n", o.n},
            {"seed", o.seed},
            {"sn_repeats", o.sn_repeats},
            {"norm", std::string(to_string(o.norm))},
            {"oracle_iters", o.oracle_iters}};
  j["oracle_path"] = o.oracle_path ? json(o.oracle_path->string()) : json(nullptr);
  j["out_dir"] = o.out_dir ? json(o.out_dir->string()) : json(nullptr);
  return j;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string seg_csv(const SegScores& s) {
  std::string out = "class,iou\n";
  for (std::size_t c = 0; c < s.per_class_iou.size(); ++c) {
    out += std::to_string(c) + "," + (s.per_class_iou[c] ? fmt(*s.per_class_iou[c]) : std::string("nan")) + "\n";
  }
  return out;
}

}  // namespace

json evaluate_run(const fs::path& run_dir, const fs::path& data_dir, const EvalOptions& options) {
  for (const auto& m : options.metrics) {
    if (m != "rh" && m != "sn" && m != "segm" && m != "quality") {
      throw std::invalid_argument("unknown metric '" + m + "' (rh|sn|segm|quality)");
    }
  }
  const fs::path ckpt = run_dir / "final.cycd";
  if (!fs::exists(ckpt)) throw IoError("missing checkpoint " + ckpt.string());
  TrainConfig cfg;
  const RunState state = load_checkpoint(ckpt, &cfg);
  const Dataset data = load_dataset(data_dir);
  if (data.manifest.image_size != cfg.image_size) {
    throw std::invalid_argument("dataset image size " + std::to_string(data.manifest.image_size) +
                                " does not match the run's image size " + std::to_string(cfg.image_size));
  }
  const std::size_t available = data.test_a.size();
  const int n = options.n < 0 ? static_cast<int>(std::min<std::size_t>(500, available)) : options.n;
  check_count(n, available, "eval");
  const fs::path out_dir = options.out_dir.value_or(run_dir);
  fs::create_directories(out_dir);

  const ImageFn g_b = generator_fn(state.nets[kGenAB], cfg.arch);  // many-to-one: rich -> poor
  const ImageFn g_a = generator_fn(state.nets[kGenBA], cfg.arch);
  const Palette& palette = data.manifest.palette;
  const std::vector<Image> rich(data.test_a.begin(), data.test_a.begin() + n);
  const std::vector<Image> poor(data.test_b.begin(), data.test_b.begin() + n);
  const auto k = static_cast<int>(palette.colors.size());

  json report = json::object();
  if (options.metrics.contains("rh")) {
    const HonestyReport rh = reconstruction_honesty(g_a, g_b, rich, rich, palette, n, options.norm);
    report["rh"] = to_json(rh);
    std::string csv = "index,value\n";
    for (std::size_t i = 0; i < rh.values.size(); ++i) csv += std::to_string(i) + "," + fmt(rh.values[i]) + "\n";
    write_file(out_dir / "rh.csv", csv);
  }
  if (options.metrics.contains("sn")) {
    const SNCurve sn = sensitivity_to_noise(g_a, g_b, rich, options.grid.points(), n, options.seed, options.sn_repeats);
    report["sn"] = to_json(sn);
    std::string csv = "sigma,value\n";
    for (std::size_t i = 0; i < sn.grid.size(); ++i) csv += fmt(sn.grid[i]) + "," + fmt(sn.values[i]) + "\n";
    write_file(out_dir / "sn_curve.csv", csv);
  }
  if (options.metrics.contains("segm")) {
    if (data.manifest.mode != DatasetMode::many_to_one) {
      throw std::invalid_argument("segm scores quantized label maps and needs a many-to-one dataset");
    }
    std::vector<std::vector<int>> pred(static_cast<std::size_t>(n)), truth(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
      pred[i] = labels_from_image(g_b(rich[i]), palette);
      truth[i] = labels_from_image(poor[i], palette);
    });
    ConfusionMatrix conf = ConfusionMatrix::Zero(k, k);
    for (int i = 0; i < n; ++i) accumulate_confusion(conf, pred[i], truth[i]);
    const SegScores s = scores_from_confusion(conf);
    report["segm"] = to_json(s);
    write_file(out_dir / "segm.csv", seg_csv(s));
  }
  if (options.metrics.contains("quality")) {
    OracleOptions oo;
    oo.iters = options.oracle_iters;
    oo.seed = options.seed;
    oo.image_size = cfg.image_size;
    oo.arch = cfg.arch;
    oo.arch.classes = k;
    oo.mode = data.manifest.mode;
    std::vector<LabeledImage> heldout;
    for (int j = 0; j < n; ++j) {
      const SceneSpec scene =
          sample_scene(scene_seed(data.manifest.seed, static_cast<std::uint64_t>(data.manifest.n_train + j)));
      heldout.push_back({rich[j], class_mask(scene, cfg.image_size)});
    }
    std::optional<OracleSegmenter> oracle;
    if (options.oracle_path && fs::exists(*options.oracle_path)) oracle = load_oracle(*options.oracle_path, oo);
    if (oracle) {
      oracle->heldout = score_segmenter(oracle->params, oracle->arch, heldout);
      if (oracle->heldout.pixel_accuracy < kOracleGate) throw std::runtime_error("cached oracle segmenter fails the gate");
    } else {
      oracle = train_oracle_segmenter(oo, heldout);
      save_oracle(*oracle, oo, options.oracle_path.value_or(out_dir / "oracle_segmenter.cycd"));
    }
    const SegScores q = translation_quality_one_to_many(g_a, *oracle, rich, poor, k);
    json jq = to_json(q);
    jq["oracle"] = to_json(oracle->heldout);
    report["quality"] = jq;
    write_file(out_dir / "quality.csv", seg_csv(q));
  }
  write_file(out_dir / "metrics.json", report.dump(2) + "\n");
  return report;
}

}  // namespace cyclelab
