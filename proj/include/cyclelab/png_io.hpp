#pragma once

#include "cyclelab/tensor.hpp"

#include <filesystem>
#include <stdexcept>

namespace cyclelab {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes a (1, 3, H, W) image in [0, 1] as 8-bit RGB PNG (round-to-nearest, clamped).
void write_png(const std::filesystem::path& path, const Image& image);

/// Reads an 8-bit RGB(A)/gray PNG into a (1, 3, H, W) image in [0, 1].
Image read_png(const std::filesystem::path& path);

/// Rounds every intensity to the nearest 8-bit level, as a PNG round trip would.
Image quantize_8bit(const Image& image);

}  // namespace cyclelab
