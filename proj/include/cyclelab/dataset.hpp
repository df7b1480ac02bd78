#pragma once

#include "cyclelab/png_io.hpp"
#include "cyclelab/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cyclelab {

enum class DatasetMode { many_to_one, one_to_one };

std::string_view to_string(DatasetMode mode);
DatasetMode dataset_mode_from_string(std::string_view name);

/// Contents of `manifest.json`. File lists are relative to the dataset directory.
struct DatasetManifest {
  DatasetMode mode = DatasetMode::many_to_one;
  int image_size = 32;
  Palette palette;
  std::uint64_t seed = 0;
  int n_train = 0;
  int n_test = 0;
  std::vector<std::string> train_a, train_b, test_a, test_b;
};

struct GenerateOptions {
  DatasetMode mode = DatasetMode::many_to_one;
  int n_train = 200;
  int n_test = 50;
  int size = 32;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  bool overwrite = false;
};

/// The (A, B) renderings of one scene under the given mode.
std::pair<Image, Image> render_pair(DatasetMode mode, const SceneSpec& scene, const Palette& palette, int size);

/// Scene seed of dataset item `index` (train items first, then test items).
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::uint64_t index);

/// Writes manifest.json and trainA/ trainB/ testA/ testB/ PNGs. Train splits are independently
/// shuffled (unpaired); test files with equal names are pairs.
DatasetManifest generate_dataset(const GenerateOptions& options);

DatasetManifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);

/// A decoded dataset; images are (1, 3, S, S) in [0, 1].
struct Dataset {
  DatasetManifest manifest;
  std::vector<Image> train_a, train_b, test_a, test_b;
};

/// Reads and validates every listed image (existence and S x S x 3 extent).
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace cyclelab
