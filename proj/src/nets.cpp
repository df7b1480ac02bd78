#include "cyclelab/nets.hpp"

namespace cyclelab {
namespace {

std::size_t conv_size(int cin, int cout, int k) {
  return static_cast<std::size_t>(cout) * cin * k * k + static_cast<std::size_t>(cout);
}

}  // namespace

std::string_view to_string(NetKind kind) {
  switch (kind) {
    case NetKind::generator: return "generator";
    case NetKind::discriminator: return "discriminator";
    case NetKind::guess: return "guess";
    case NetKind::segmenter: return "segmenter";
  }
  return "?";
}

NetKind net_kind_from_string(std::string_view name) {
  if (name == "generator") return NetKind::generator;
  if (name == "discriminator") return NetKind::discriminator;
  if (name == "guess") return NetKind::guess;
  if (name == "segmenter") return NetKind::segmenter;
  throw std::invalid_argument("unknown network kind '" + std::string(name) + "'");
}

std::size_t param_count(NetKind kind, const ArchConfig& arch) {
  switch (kind) {
    case NetKind::generator: {
      const int f = arch.gen_filters;
      std::size_t n = conv_size(3, f, 7) + conv_size(f, 2 * f, 3) + conv_size(2 * f, 4 * f, 3);
      n += static_cast<std::size_t>(arch.res_blocks) * 2 * conv_size(4 * f, 4 * f, 3);
      // Transposed convs carry the same weight count as the mirrored convolution.
      n += conv_size(4 * f, 2 * f, 3) + conv_size(2 * f, f, 3) + conv_size(f, 3, 7);
      return n;
    }
    case NetKind::discriminator:
    case NetKind::guess: {
      int cin = kind == NetKind::guess ? 6 : 3;
      int cout = arch.disc_filters;
      std::size_t n = 0;
      for (int l = 0; l < arch.disc_layers; ++l) {
        n += conv_size(cin, cout, 4);
        cin = cout;
        cout *= 2;
      }
      return n + conv_size(cin, 1, 3);
    }
    case NetKind::segmenter: {
      const int f = arch.seg_filters;
      return conv_size(3, f, 3) + conv_size(f, 2 * f, 3) + conv_size(2 * f, 4 * f, 3) + conv_size(4 * f, 4 * f, 3) +
             conv_size(4 * f, 2 * f, 3) + conv_size(2 * f, f, 3) + conv_size(2 * f, arch.classes, 3);
    }
  }
  return 0;
}

}  // namespace cyclelab
