#pragma once

// Network definitions: encoder-residual-decoder generator, PatchGAN-style discriminators
// (domain and guess), and the supervised oracle segmenter.

#include "cyclelab/ops.hpp"
#include "cyclelab/rng.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cyclelab {

enum class NetKind { generator, discriminator, guess, segmenter };

std::string_view to_string(NetKind kind);
NetKind net_kind_from_string(std::string_view name);

/// Architecture scale knobs shared by every network kind.
struct ArchConfig {
  int gen_filters = 16;   // F
  int res_blocks = 2;     // R
  int disc_filters = 16;
  int disc_layers = 3;    // strided layers in the patch classifier
  int seg_filters = 16;
  int classes = 4;        // segmenter output channels (palette size)
  double leaky_slope = 0.2;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Named parameter arrays of one network, in forward-pass order, with gradient buffers.
template <typename Scalar>
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
  };
  std::vector<Entry> entries;

  void add(std::string name, Shape shape) {
    entries.push_back(Entry{std::move(name), Tensor<Scalar>(shape), Tensor<Scalar>(shape)});
  }
  [[nodiscard]] std::size_t count() const {
    std::size_t total = 0;
    for (const auto& e : entries) total += e.value.size();
    return total;
  }
  void zero_grad() {
    for (auto& e : entries) e.grad.set_zero();
  }
  template <typename Other>
  [[nodiscard]] ParamSet<Other> cast() const {
    ParamSet<Other> out;
    for (const auto& e : entries) {
      out.entries.push_back({e.name, e.value.template cast<Other>(), Tensor<Other>(e.value.shape())});
    }
    return out;
  }
};

/// Parameters of one network placed on a tape, consumed in declaration order.
template <typename Scalar>
class BoundParams {
 public:
  /// trainable: gradients accumulate into params.grad on backward(); otherwise constants.
  BoundParams(Graph<Scalar>& g, ParamSet<Scalar>& params, bool trainable) {
    vars_.reserve(params.entries.size());
    for (auto& e : params.entries) {
      vars_.push_back(trainable ? g.parameter(e.value, &e.grad) : g.constant(e.value));
    }
  }
  BoundParams(Graph<Scalar>& g, const ParamSet<Scalar>& params) {
    vars_.reserve(params.entries.size());
    for (const auto& e : params.entries) vars_.push_back(g.constant(e.value));
  }

  [[nodiscard]] Var<Scalar> at(std::size_t i) const { return vars_.at(i); }
  [[nodiscard]] std::size_t size() const { return vars_.size(); }

 private:
  std::vector<Var<Scalar>> vars_;
};

namespace detail {

template <typename Scalar>
struct Cursor {
  const BoundParams<Scalar>& params;
  std::size_t next = 0;
  Var<Scalar> take() { return params.at(next++); }
};

inline void add_conv(auto& ps, const std::string& name, int cin, int cout, int k) {
  ps.add(name + ".w", Shape{cout, cin, k, k});
  ps.add(name + ".b", Shape{1, cout, 1, 1});
}
inline void add_deconv(auto& ps, const std::string& name, int cin, int cout, int k) {
  ps.add(name + ".w", Shape{cin, cout, k, k});
  ps.add(name + ".b", Shape{1, cout, 1, 1});
}

template <typename Scalar>
Var<Scalar> conv(Cursor<Scalar>& cur, Var<Scalar> x, const ConvSpec& spec) {
  Var<Scalar> w = cur.take();
  Var<Scalar> b = cur.take();
  return conv2d(x, w, b, spec);
}

template <typename Scalar>
Var<Scalar> deconv(Cursor<Scalar>& cur, Var<Scalar> x) {
  Var<Scalar> w = cur.take();
  Var<Scalar> b = cur.take();
  return conv_transpose2d(x, w, b, 2, 1, 1);
}

inline int input_channels(NetKind kind) { return kind == NetKind::guess ? 6 : 3; }

}  // namespace detail

/// Allocates zeroed parameters with the layout of the given network kind.
template <typename Scalar>
ParamSet<Scalar> make_params(NetKind kind, const ArchConfig& arch) {
  ParamSet<Scalar> ps;
  switch (kind) {
    case NetKind::generator: {
      const int f = arch.gen_filters;
      detail::add_conv(ps, "in", 3, f, 7);
      detail::add_conv(ps, "down1", f, 2 * f, 3);
      detail::add_conv(ps, "down2", 2 * f, 4 * f, 3);
      for (int r = 0; r < arch.res_blocks; ++r) {
        detail::add_conv(ps, "res" + std::to_string(r) + ".a", 4 * f, 4 * f, 3);
        detail::add_conv(ps, "res" + std::to_string(r) + ".b", 4 * f, 4 * f, 3);
      }
      detail::add_deconv(ps, "up1", 4 * f, 2 * f, 3);
      detail::add_deconv(ps, "up2", 2 * f, f, 3);
      detail::add_conv(ps, "out", f, 3, 7);
      break;
    }
    case NetKind::discriminator:
    case NetKind::guess: {
      int cin = detail::input_channels(kind);
      int cout = arch.disc_filters;
      for (int l = 0; l < arch.disc_layers; ++l) {
        detail::add_conv(ps, "layer" + std::to_string(l), cin, cout, 4);
        cin = cout;
        cout *= 2;
      }
      detail::add_conv(ps, "score", cin, 1, 3);
      break;
    }
    case NetKind::segmenter: {
      const int f = arch.seg_filters;
      detail::add_conv(ps, "stem", 3, f, 3);
      detail::add_conv(ps, "down1", f, 2 * f, 3);
      detail::add_conv(ps, "down2", 2 * f, 4 * f, 3);
      detail::add_conv(ps, "mid", 4 * f, 4 * f, 3);
      detail::add_deconv(ps, "up1", 4 * f, 2 * f, 3);
      detail::add_deconv(ps, "up2", 2 * f, f, 3);
      detail::add_conv(ps, "head", 2 * f, arch.classes, 3);
      break;
    }
  }
  return ps;
}

/// Weights ~ N(0, 0.02^2), biases zero, drawn in declaration order from `seed`.
template <typename Scalar>
ParamSet<Scalar> init_params(NetKind kind, std::uint64_t seed, const ArchConfig& arch) {
  ParamSet<Scalar> ps = make_params<Scalar>(kind, arch);
  Rng rng(seed);
  for (auto& e : ps.entries) {
    if (e.name.ends_with(".b")) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] = static_cast<Scalar>(0.02 * rng.normal());
  }
  return ps;
}

/// Closed-form parameter count of a network kind.
std::size_t param_count(NetKind kind, const ArchConfig& arch);

/// Generator: H x W x 3 in [-1, 1] -> H x W x 3 in (-1, 1). H and W must be divisible by 4.
template <typename Scalar>
Var<Scalar> generator_forward(const BoundParams<Scalar>& params, Var<Scalar> x, const ArchConfig& arch) {
  const Shape s = x.shape();
  if (s.c != 3) throw ShapeError("generator: expected 3 input channels, got " + to_string(s));
  if (s.h % 4 != 0 || s.w % 4 != 0) throw ShapeError("generator: spatial size must be divisible by 4");
  detail::Cursor<Scalar> cur{params};
  const ConvSpec c7{1, 3, 1, Padding::reflect};
  const ConvSpec c3{1, 1, 1, Padding::reflect};
  const ConvSpec down{2, 1, 1, Padding::reflect};
  Var<Scalar> h = relu(instance_norm(detail::conv(cur, x, c7)));
  h = relu(instance_norm(detail::conv(cur, h, down)));
  h = relu(instance_norm(detail::conv(cur, h, down)));
  for (int r = 0; r < arch.res_blocks; ++r) {
    Var<Scalar> t = relu(instance_norm(detail::conv(cur, h, c3)));
    t = instance_norm(detail::conv(cur, t, c3));
    h = h + t;
  }
  h = relu(instance_norm(detail::deconv(cur, h)));
  h = relu(instance_norm(detail::deconv(cur, h)));
  return tanh(detail::conv(cur, h, c7));
}

/// Patch classifier: raw (unsquashed) score map.
template <typename Scalar>
Var<Scalar> discriminator_forward(const BoundParams<Scalar>& params, Var<Scalar> x, const ArchConfig& arch,
                                  int expected_channels = 3) {
  if (x.shape().c != expected_channels) {
    throw ShapeError("discriminator: expected " + std::to_string(expected_channels) +
                     " input channels, got " + to_string(x.shape()));
  }
  detail::Cursor<Scalar> cur{params};
  const ConvSpec strided{2, 1, 1, Padding::zero};
  const auto slope = static_cast<Scalar>(arch.leaky_slope);
  Var<Scalar> h = x;
  for (int l = 0; l < arch.disc_layers; ++l) {
    h = detail::conv(cur, h, strided);
    if (l > 0) h = instance_norm(h);
    h = leaky_relu(h, slope);
  }
  return detail::conv(cur, h, ConvSpec{1, 1, 1, Padding::zero});
}

/// Guess discriminator on the channel-stacked pair (first, second).
/// Higher score means "first is the reconstruction".
template <typename Scalar>
Var<Scalar> guess_forward(const BoundParams<Scalar>& params, Var<Scalar> first, Var<Scalar> second,
                          const ArchConfig& arch) {
  require_same_shape(first.shape(), second.shape(), "guess");
  return discriminator_forward(params, concat_channels(first, second), arch, 6);
}

/// Per-pixel class logits, same spatial size as the input.
template <typename Scalar>
Var<Scalar> segmenter_forward(const BoundParams<Scalar>& params, Var<Scalar> x, const ArchConfig& arch) {
  (void)arch;
  if (x.shape().c != 3) throw ShapeError("segmenter: expected 3 input channels");
  if (x.shape().h % 4 != 0 || x.shape().w % 4 != 0) {
    throw ShapeError("segmenter: spatial size must be divisible by 4");
  }
  detail::Cursor<Scalar> cur{params};
  const ConvSpec c3{1, 1, 1, Padding::reflect};
  const ConvSpec down{2, 1, 1, Padding::reflect};
  Var<Scalar> stem = relu(instance_norm(detail::conv(cur, x, c3)));
  Var<Scalar> h = relu(instance_norm(detail::conv(cur, stem, down)));
  h = relu(instance_norm(detail::conv(cur, h, down)));
  h = relu(instance_norm(detail::conv(cur, h, c3)));
  h = relu(instance_norm(detail::deconv(cur, h)));
  h = relu(instance_norm(detail::deconv(cur, h)));
  return detail::conv(cur, concat_channels(stem, h), c3);
}

/// Generic forward dispatch for single-input kinds.
template <typename Scalar>
Var<Scalar> forward(NetKind kind, const BoundParams<Scalar>& params, Var<Scalar> x, const ArchConfig& arch) {
  switch (kind) {
    case NetKind::generator:
      return generator_forward(params, x, arch);
    case NetKind::discriminator:
      return discriminator_forward(params, x, arch);
    case NetKind::segmenter:
      return segmenter_forward(params, x, arch);
    case NetKind::guess:
      break;
  }
  throw std::invalid_argument("forward: guess discriminator takes two inputs");
}

}  // namespace cyclelab
