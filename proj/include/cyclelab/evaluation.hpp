#pragma once

// Metric suite: palette quantization, quantized reconstruction honesty, sensitivity to noise,
// confusion-matrix segmentation scores, and oracle-segmenter translation quality.

#include "cyclelab/dataset.hpp"
#include "cyclelab/nets.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cyclelab {

/// Image-to-image map on [0, 1] intensities. Must be safe to call concurrently.
using ImageFn = std::function<Image(const Image&)>;

/// Wraps a generator: [0, 1] -> model range -> generator -> [0, 1]. Holds a reference to params.
ImageFn generator_fn(const ParamSet<float>& params, const ArchConfig& arch);

/// Nearest palette color per pixel; ties go to the lowest palette index.
Image quantize(const Image& image, const Palette& palette);

/// Per-pixel palette index by the same rule as quantize(); row-major, one map per batch sample.
std::vector<int> labels_from_image(const Image& image, const Palette& palette);

/// Worker count from CYCLELAB_THREADS, else every hardware thread.
int eval_threads();

/// Runs fn(i) for i in [0, n) on eval_threads() workers. fn must write only to slot i.
void parallel_for(int n, const std::function<void(int)>& fn);

enum class RhNorm { l1, l2 };
std::string_view to_string(RhNorm norm);
RhNorm rh_norm_from_string(std::string_view name);

struct HonestyReport {
  double mean = 0;
  double std = 0;  // population standard deviation of `values`
  std::vector<double> values;
  RhNorm norm = RhNorm::l1;
  int n = 0;
};

/// Per sample: ||G_A(quantize(G_B(X_i))) - Y_i|| - ||G_A(G_B(X_i)) - Y_i||, with G_B the
/// many-to-one map and ||.|| the per-pixel mean L1 (or root-mean-square for l2).
HonestyReport reconstruction_honesty(const ImageFn& g_a, const ImageFn& g_b, const std::vector<Image>& inputs,
                                     const std::vector<Image>& targets, const Palette& palette, int n,
                                     RhNorm norm = RhNorm::l1);

/// Evenly spaced sigma values: a, ..., b (count points).
struct SigmaGrid {
  double a = 0.0;
  double b = 0.2;
  int count = 21;
  [[nodiscard]] std::vector<double> points() const;
};

/// Parses "a:b:count".
SigmaGrid parse_sigma_grid(std::string_view text);

struct SNCurve {
  std::vector<double> grid;
  std::vector<double> values;
  double auc = 0;
  int n = 0;
  int repeats = 1;
  std::uint64_t seed = 0;
};

/// Trapezoidal area under (grid, values).
double trapezoid_auc(const std::vector<double>& grid, const std::vector<double>& values);

/// SN(sigma) = mean_i MSE(G_A(clamp(G_B(X_i) + N(0, sigma))), G_A(G_B(X_i))) on the [0, 1] scale.
/// The noise of sample i, grid point k, repeat r comes from its own counter-derived seed, so
/// the result does not depend on the worker count.
SNCurve sensitivity_to_noise(const ImageFn& g_a, const ImageFn& g_b, const std::vector<Image>& inputs,
                             const std::vector<double>& sigma_grid, int n, std::uint64_t seed, int repeats = 1);

using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct SegScores {
  double mean_accuracy = 0;  // mean over classes of diag / row sum
  double mean_iou = 0;
  double pixel_accuracy = 0;
  std::vector<std::optional<double>> per_class_iou;  // empty: class absent from both maps
  ConfusionMatrix confusion;                        // rows: true class, columns: predicted
};

/// Adds one (pred, truth) pair of label maps into `confusion` (K x K).
void accumulate_confusion(ConfusionMatrix& confusion, const std::vector<int>& pred, const std::vector<int>& truth);

/// Scores from a confusion matrix; classes with empty rows (accuracy) or empty unions (IoU) are
/// left out of the means.
SegScores scores_from_confusion(const ConfusionMatrix& confusion);

SegScores segmentation_scores(const std::vector<int>& pred, const std::vector<int>& truth, int k);

/// Rich image with its exact per-pixel class map.
struct LabeledImage {
  Image image;
  std::vector<int> labels;
};

/// Rich-domain renderings of fresh scenes drawn from `seed` with their exact class masks.
std::vector<LabeledImage> synthetic_labeled_pairs(DatasetMode mode, int count, int size, std::uint64_t seed);

struct OracleOptions {
  int iters = 20000;
  int batch = 4;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  int image_size = 32;
  ArchConfig arch;
  DatasetMode mode = DatasetMode::many_to_one;
};

/// Minimum held-out pixel accuracy below which the oracle is unusable.
inline constexpr double kOracleGate = 0.90;

struct OracleSegmenter {
  ParamSet<float> params;
  ArchConfig arch;
  SegScores heldout;
};

/// Per-pixel argmax of the segmenter on a [0, 1] image.
std::vector<int> segment(const ParamSet<float>& params, const ArchConfig& arch, const Image& image);

SegScores score_segmenter(const ParamSet<float>& params, const ArchConfig& arch, const std::vector<LabeledImage>& pairs);

/// Supervised per-pixel cross-entropy training on freshly rendered scenes, then scored on
/// `heldout`. Throws std::runtime_error if held-out pixel accuracy is below kOracleGate.
OracleSegmenter train_oracle_segmenter(const OracleOptions& options, const std::vector<LabeledImage>& heldout);

void save_oracle(const OracleSegmenter& oracle, const OracleOptions& options, const std::filesystem::path& path);
/// Returns nullopt if the file was written with different options.
std::optional<OracleSegmenter> load_oracle(const std::filesystem::path& path, const OracleOptions& options);

/// Compares segment(G_A(B_i)) against segment(A_i) over every pair.
SegScores translation_quality_one_to_many(const ImageFn& g_a, const OracleSegmenter& oracle,
                                          const std::vector<Image>& rich, const std::vector<Image>& poor, int k);

nlohmann::json to_json(const HonestyReport& r);
nlohmann::json to_json(const SNCurve& c);
nlohmann::json to_json(const SegScores& s);

struct EvalOptions {
  std::set<std::string> metrics;  // subset of {rh, sn, segm, quality}
  SigmaGrid grid;
  int n = -1;  // negative: min(500, test size)
  std::uint64_t seed = 0;
  int sn_repeats = 1;
  RhNorm norm = RhNorm::l1;
  std::optional<std::filesystem::path> oracle_path;  // reused when compatible, else trained and written
  int oracle_iters = 20000;
  std::optional<std::filesystem::path> out_dir;  // default: the run directory
};

nlohmann::json to_json(const EvalOptions& options);

/// Loads final.cycd of `run_dir`, computes the requested metrics on the test split and writes
/// metrics.json plus rh.csv, sn_curve.csv, segm.csv and quality.csv as applicable.
nlohmann::json evaluate_run(const std::filesystem::path& run_dir, const std::filesystem::path& data_dir,
                            const EvalOptions& options);

}  // namespace cyclelab
