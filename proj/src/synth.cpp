#include "cyclelab/synth.hpp"

#include "cyclelab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cyclelab {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::array<double, 3> hue_to_rgb(double hue, double saturation) {
  // HSV with V = 1.
  const double h = std::fmod(hue, kTwoPi) / kTwoPi * 6.0;
  const int sector = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = 1.0 - saturation;
  const double q = 1.0 - saturation * f;
  const double t = 1.0 - saturation * (1.0 - f);
  switch (sector) {
    case 0: return {1.0, t, p};
    case 1: return {q, 1.0, p};
    case 2: return {p, 1.0, t};
    case 3: return {p, q, 1.0};
    case 4: return {t, p, 1.0};
    default: return {1.0, p, q};
  }
}

bool covers(const SceneShape& s, double u, double v) {
  const double dx = u - s.cx;
  const double dy = v - s.cy;
  switch (s.kind) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= s.radius * s.radius;
    case ShapeKind::square:
      return std::abs(dx) <= s.radius && std::abs(dy) <= s.radius;
    case ShapeKind::triangle: {
      // Upward equilateral triangle with circumradius `radius`.
      const double r = s.radius;
      const double ax = 0.0, ay = -r;
      const double bx = -r * std::numbers::sqrt3 / 2.0, by = r / 2.0;
      const double cx = r * std::numbers::sqrt3 / 2.0, cy = r / 2.0;
      auto edge = [&](double x0, double y0, double x1, double y1) {
        return (x1 - x0) * (dy - y0) - (y1 - y0) * (dx - x0);
      };
      const double e0 = edge(ax, ay, bx, by);
      const double e1 = edge(bx, by, cx, cy);
      const double e2 = edge(cx, cy, ax, ay);
      return (e0 <= 0 && e1 <= 0 && e2 <= 0) || (e0 >= 0 && e1 >= 0 && e2 >= 0);
    }
  }
  return false;
}

void check_size(int size) {
  if (size < kMinImageSize) {
    throw std::invalid_argument("image size must be >= " + std::to_string(kMinImageSize) + ", got " +
                                std::to_string(size));
  }
}

Style random_style(Rng& rng) {
  Style s;
  s.hue = rng.uniform(0.0, kTwoPi);
  s.texture_phase = rng.uniform(0.0, kTwoPi);
  s.texture_freq = rng.uniform(2.0, 8.0);
  return s;
}

}  // namespace

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

Palette default_palette() {
  Palette p;
  p.colors = {{{0.2f, 0.2f, 0.2f}}, {{0.8f, 0.2f, 0.2f}}, {{0.2f, 0.8f, 0.2f}}, {{0.2f, 0.2f, 0.8f}}};
  p.class_names = {"background", "circle", "square", "triangle"};
  return p;
}

void validate_palette(const Palette& palette) {
  if (palette.size() < 2) throw std::invalid_argument("palette needs at least 2 colors");
  if (palette.class_names.size() != palette.colors.size()) {
    throw std::invalid_argument("palette: class_names and colors differ in length");
  }
  for (int i = 0; i < palette.size(); ++i) {
    for (int j = i + 1; j < palette.size(); ++j) {
      double d2 = 0;
      for (int c = 0; c < 3; ++c) {
        const double d = palette.colors[i][c] - palette.colors[j][c];
        d2 += d * d;
      }
      if (std::sqrt(d2) < 0.3) {
        throw std::invalid_argument("palette colors " + std::to_string(i) + " and " + std::to_string(j) +
                                    " are closer than 0.3");
      }
    }
  }
}

SceneSpec sample_scene(std::uint64_t seed) {
  Rng rng(seed);
  SceneSpec scene;
  scene.seed = seed;
  scene.background = random_style(rng);
  const auto count = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < count; ++i) {
    SceneShape s;
    s.kind = static_cast<ShapeKind>(rng.below(3));
    s.cx = rng.uniform(0.2, 0.8);
    s.cy = rng.uniform(0.2, 0.8);
    s.radius = rng.uniform(0.1, 0.3);
    s.style = random_style(rng);
    scene.shapes.push_back(s);
  }
  return scene;
}

std::vector<int> class_mask(const SceneSpec& scene, int size) {
  check_size(size);
  std::vector<int> mask(static_cast<std::size_t>(size) * size, 0);
  for (int y = 0; y < size; ++y) {
    const double v = (y + 0.5) / size;
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size;
      for (const auto& s : scene.shapes) {
        if (covers(s, u, v)) mask[static_cast<std::size_t>(y) * size + x] = 1 + static_cast<int>(s.kind);
      }
    }
  }
  return mask;
}

std::array<float, 3> region_color(const Style& style, bool is_background, int x, int y, int size) {
  const double u = (x + 0.5) / size;
  const double v = (y + 0.5) / size;
  const double t = std::sin(kTwoPi * style.texture_freq * (u * std::cos(style.hue) + v * std::sin(style.hue)) +
                            style.texture_phase);
  // Shapes are bright and saturated, background dark and washed out.
  const double saturation = is_background ? 0.35 : 0.85;
  const double brightness = is_background ? 0.25 + 0.1 * t : 0.75 + 0.25 * t;
  const auto rgb = hue_to_rgb(style.hue, saturation);
  return {static_cast<float>(rgb[0] * brightness), static_cast<float>(rgb[1] * brightness),
          static_cast<float>(rgb[2] * brightness)};
}

namespace {

Image render_styles(const SceneSpec& scene, int size, const StyleBank* bank) {
  check_size(size);
  Image img(Shape{1, 3, size, size});
  for (int y = 0; y < size; ++y) {
    const double v = (y + 0.5) / size;
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size;
      const SceneShape* top = nullptr;
      for (const auto& s : scene.shapes) {
        if (covers(s, u, v)) top = &s;
      }
      std::array<float, 3> rgb;
      if (top == nullptr) {
        rgb = region_color(bank ? (*bank)[0] : scene.background, true, x, y, size);
      } else {
        rgb = region_color(bank ? (*bank)[1 + static_cast<int>(top->kind)] : top->style, false, x, y, size);
      }
      for (int c = 0; c < 3; ++c) img(0, c, y, x) = rgb[c];
    }
  }
  return img;
}

}  // namespace

Image render_rich(const SceneSpec& scene, int size) { return render_styles(scene, size, nullptr); }

Image render_poor(const SceneSpec& scene, const Palette& palette, int size) {
  if (palette.size() < 4) throw std::invalid_argument("render_poor: palette needs background + 3 kinds");
  const std::vector<int> mask = class_mask(scene, size);
  Image img(Shape{1, 3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto& col = palette.colors[static_cast<std::size_t>(mask[static_cast<std::size_t>(y) * size + x])];
      for (int c = 0; c < 3; ++c) img(0, c, y, x) = col[c];
    }
  }
  return img;
}

const StyleBank& style_bank(int which) {
  static const StyleBank bank1{{{0.3, 0.0, 3.0}, {0.1, 1.0, 4.0}, {2.2, 2.0, 5.0}, {4.3, 3.0, 6.0}}};
  static const StyleBank bank2{{{3.5, 1.5, 2.5}, {1.1, 0.5, 6.5}, {3.2, 2.5, 3.5}, {5.3, 4.0, 5.5}}};
  if (which == 1) return bank1;
  if (which == 2) return bank2;
  throw std::invalid_argument("style bank must be 1 or 2");
}

Image render_with_bank(const SceneSpec& scene, const StyleBank& bank, int size) {
  return render_styles(scene, size, &bank);
}

}  // namespace cyclelab
