#pragma once

// Procedural paired image domains. The rich domain renders textured, colored shapes; the
// poor domain renders the same geometry as a flat label map. Geometry is shared, style is
// dropped, so rich -> poor is many-to-one by construction.

#include "cyclelab/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cyclelab {

enum class ShapeKind : std::uint8_t { circle = 0, square = 1, triangle = 2 };

std::string_view to_string(ShapeKind kind);

/// Appearance of a region: hue angle (also the texture orientation), sinusoid phase and
/// frequency in cycles per image.
struct Style {
  double hue = 0.0;
  double texture_phase = 0.0;
  double texture_freq = 2.0;

  friend bool operator==(const Style&, const Style&) = default;
};

struct SceneShape {
  ShapeKind kind = ShapeKind::circle;
  double cx = 0.5;  // fraction of width
  double cy = 0.5;  // fraction of height
  double radius = 0.2;
  Style style;

  friend bool operator==(const SceneShape&, const SceneShape&) = default;
};

/// Latent description of one scene. Later shapes are drawn on top of earlier ones.
struct SceneSpec {
  std::vector<SceneShape> shapes;
  Style background;
  std::uint64_t seed = 0;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Class colors of the label-map domain. Class 0 is background, class 1 + kind a shape.
struct Palette {
  std::vector<std::array<float, 3>> colors;
  std::vector<std::string> class_names;

  [[nodiscard]] int size() const { return static_cast<int>(colors.size()); }
};

/// Background + one color per shape kind; every component is an exact 8-bit level.
Palette default_palette();

/// Throws std::invalid_argument unless K >= 2, names match colors, and every pair of
/// colors is at least 0.3 apart.
void validate_palette(const Palette& palette);

inline constexpr int kMinImageSize = 16;

/// Deterministic scene from a seed: 1-3 shapes, centers in [0.2, 0.8]^2, radii in [0.1, 0.3].
SceneSpec sample_scene(std::uint64_t seed);

/// Per-pixel class (0 = background, 1 + kind otherwise), row-major size x size.
std::vector<int> class_mask(const SceneSpec& scene, int size);

/// Textured RGB rendering in [0, 1]; no anti-aliasing.
Image render_rich(const SceneSpec& scene, int size);

/// Flat label-map rendering: each pixel is exactly one palette color.
Image render_poor(const SceneSpec& scene, const Palette& palette, int size);

/// Fixed per-class styles used by the one-to-one mode; index 0 is background,
/// 1 + kind the shape kinds.
using StyleBank = std::array<Style, 4>;
const StyleBank& style_bank(int which);  // which in {1, 2}

/// Rich rendering with every region's style replaced from the bank by class.
Image render_with_bank(const SceneSpec& scene, const StyleBank& bank, int size);

/// Color a region of the given style would take at a pixel (shape or background shading).
std::array<float, 3> region_color(const Style& style, bool is_background, int x, int y, int size);

}  // namespace cyclelab
