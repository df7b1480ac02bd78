#pragma once

// Binary checkpoint container:
//   "CYCD" | version byte (1) | u32 LE metadata length | UTF-8 JSON metadata
//   then per array: u32 LE name length | name | u32 LE rank | rank x u32 LE dims | raw f32 LE values.
// The metadata records "num_arrays" so truncation at an array boundary is detected.

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclelab {

/// The file exists and was read, but its contents are not a valid checkpoint.
class CorruptCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct CheckpointFile {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointArray> arrays;

  [[nodiscard]] const CheckpointArray& find(const std::string& name) const;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Throws IoError when the file cannot be opened or written.
void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);

/// Throws IoError when the file cannot be opened, CorruptCheckpoint on bad magic, version,
/// truncation or malformed metadata.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

}  // namespace cyclelab
