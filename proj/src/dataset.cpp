#include "cyclelab/dataset.hpp"

#include "cyclelab/rng.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace cyclelab {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainAShuffle = 0xA11CE;
constexpr std::uint64_t kTrainBShuffle = 0xB0B;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::string index_name(std::size_t i, std::size_t total) {
  const int width = std::max<int>(4, static_cast<int>(std::to_string(total).size()));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu.png", width, i);
  return buf;
}

}  // namespace

std::pair<Image, Image> render_pair(DatasetMode mode, const SceneSpec& scene, const Palette& palette, int size) {
  if (mode == DatasetMode::many_to_one) return {render_rich(scene, size), render_poor(scene, palette, size)};
  return {render_with_bank(scene, style_bank(1), size), render_with_bank(scene, style_bank(2), size)};
}

std::string_view to_string(DatasetMode mode) {
  return mode == DatasetMode::many_to_one ? "many-to-one" : "one-to-one";
}

DatasetMode dataset_mode_from_string(std::string_view name) {
  if (name == "many-to-one") return DatasetMode::many_to_one;
  if (name == "one-to-one") return DatasetMode::one_to_one;
  throw std::invalid_argument("unknown dataset mode '" + std::string(name) + "'");
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::uint64_t index) { return mix_seed(dataset_seed, index); }

DatasetManifest generate_dataset(const GenerateOptions& options) {
  if (options.n_train < 1 || options.n_test < 1) throw std::invalid_argument("n_train and n_test must be >= 1");
  if (options.size < kMinImageSize) {
    throw std::invalid_argument("image size must be >= " + std::to_string(kMinImageSize));
  }
  if (options.out_dir.empty()) throw std::invalid_argument("output directory is required");

  const fs::path& out = options.out_dir;
  std::error_code ec;
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw IoError("output path exists and is not a directory: " + out.string());
    if (!fs::is_empty(out)) {
      if (!options.overwrite) {
        throw IoError("output directory already exists (use overwrite to replace): " + out.string());
      }
      for (const char* sub : {"trainA", "trainB", "testA", "testB"}) fs::remove_all(out / sub);
      fs::remove(out / "manifest.json");
    }
  }
  for (const char* sub : {"trainA", "trainB", "testA", "testB"}) {
    fs::create_directories(out / sub, ec);
    if (ec) throw IoError("cannot create " + (out / sub).string() + ": " + ec.message());
  }

  DatasetManifest m;
  m.mode = options.mode;
  m.image_size = options.size;
  m.palette = default_palette();
  m.seed = options.seed;
  m.n_train = options.n_train;
  m.n_test = options.n_test;

  const auto n_train = static_cast<std::size_t>(options.n_train);
  const auto n_test = static_cast<std::size_t>(options.n_test);
  const auto order_a = shuffled(n_train, mix_seed(options.seed, kTrainAShuffle));
  const auto order_b = shuffled(n_train, mix_seed(options.seed, kTrainBShuffle));
  for (std::size_t i = 0; i < n_train; ++i) {
    const std::string name = index_name(i, n_train);
    const SceneSpec scene_a = sample_scene(scene_seed(options.seed, order_a[i]));
    const SceneSpec scene_b = sample_scene(scene_seed(options.seed, order_b[i]));
    write_png(out / "trainA" / name, render_pair(m.mode, scene_a, m.palette, m.image_size).first);
    write_png(out / "trainB" / name, render_pair(m.mode, scene_b, m.palette, m.image_size).second);
    m.train_a.push_back("trainA/" + name);
    m.train_b.push_back("trainB/" + name);
  }
  for (std::size_t j = 0; j < n_test; ++j) {
    const std::string name = index_name(j, n_test);
    const SceneSpec scene = sample_scene(scene_seed(options.seed, n_train + j));
    auto [a, b] = render_pair(m.mode, scene, m.palette, m.image_size);
    write_png(out / "testA" / name, a);
    write_png(out / "testB" / name, b);
    m.test_a.push_back("testA/" + name);
    m.test_b.push_back("testB/" + name);
  }
  write_manifest(out, m);
  return m;
}

void write_manifest(const fs::path& dir, const DatasetManifest& m) {
  json palette = {{"colors", json::array()}, {"class_names", m.palette.class_names}};
  for (const auto& c : m.palette.colors) palette["colors"].push_back({c[0], c[1], c[2]});
  const json j = {{"format_version", 1},
                  {"mode", std::string(to_string(m.mode))},
                  {"image_size", m.image_size},
                  {"palette", palette},
                  {"seed", m.seed},
                  {"n_train", m.n_train},
                  {"n_test", m.n_test},
                  {"train_a", m.train_a},
                  {"train_b", m.train_b},
                  {"test_a", m.test_a},
                  {"test_b", m.test_b}};
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("dataset manifest not found: " + (dir / "manifest.json").string());
  json j;
  try {
    is >> j;
    DatasetManifest m;
    m.mode = dataset_mode_from_string(j.at("mode").get<std::string>());
    m.image_size = j.at("image_size").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_train = j.at("n_train").get<int>();
    m.n_test = j.at("n_test").get<int>();
    for (const auto& c : j.at("palette").at("colors")) {
      m.palette.colors.push_back({c.at(0).get<float>(), c.at(1).get<float>(), c.at(2).get<float>()});
    }
    m.palette.class_names = j.at("palette").at("class_names").get<std::vector<std::string>>();
    m.train_a = j.at("train_a").get<std::vector<std::string>>();
    m.train_b = j.at("train_b").get<std::vector<std::string>>();
    m.test_a = j.at("test_a").get<std::vector<std::string>>();
    m.test_b = j.at("test_b").get<std::vector<std::string>>();
    validate_palette(m.palette);
    return m;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const int s = ds.manifest.image_size;
  auto load = [&](const std::vector<std::string>& files, std::vector<Image>& out) {
    out.reserve(files.size());
    for (const auto& f : files) {
      Image img = read_png(dir / f);
      if (!(img.shape() == Shape{1, 3, s, s})) {
        throw IoError("image " + f + " has shape " + to_string(img.shape()) + ", expected " + std::to_string(s) +
                      "x" + std::to_string(s) + "x3");
      }
      out.push_back(std::move(img));
    }
  };
  load(ds.manifest.train_a, ds.train_a);
  load(ds.manifest.train_b, ds.train_b);
  load(ds.manifest.test_a, ds.test_a);
  load(ds.manifest.test_b, ds.test_b);
  if (ds.test_a.size() != ds.test_b.size()) throw IoError("test split is not paired");
  return ds;
}

}  // namespace cyclelab
