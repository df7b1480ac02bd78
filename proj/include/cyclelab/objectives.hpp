#pragma once

// Loss functions of cycle-consistent translation: least-squares adversarial terms, the L1
// cycle-consistency term and its noisy variant, the guess-discriminator loss, and their
// weighted assembly into the generator objective.

#include "cyclelab/nets.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace cyclelab {

enum class Defense { none, noise, guess, noise_guess };

std::string_view to_string(Defense defense);
Defense defense_from_string(std::string_view name);
inline bool uses_noise(Defense d) { return d == Defense::noise || d == Defense::noise_guess; }
inline bool uses_guess(Defense d) { return d == Defense::guess || d == Defense::noise_guess; }

/// Divergence used to train the guess discriminator.
enum class GuessForm { least_squares, cross_entropy };

std::string_view to_string(GuessForm form);
GuessForm guess_form_from_string(std::string_view name);

/// Zero-mean Gaussian perturbation; sigma is in [0, 1] intensity units.
struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Value interval of an image representation.
struct ValueRange {
  double lo = -1.0;
  double hi = 1.0;
  [[nodiscard]] double span() const { return hi - lo; }
};
inline constexpr ValueRange kModelRange{-1.0, 1.0};
inline constexpr ValueRange kUnitRange{0.0, 1.0};

/// I.i.d. N(0, (sigma * span)^2) tensor, i.e. sigma expressed on the [0, 1] scale.
template <typename Scalar>
Tensor<Scalar> gaussian_noise(Shape shape, double sigma, ValueRange range, Rng& rng) {
  Tensor<Scalar> t(shape);
  const double scale = sigma * range.span();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(scale * rng.normal());
  return t;
}

/// clamp(y + delta) with fresh delta drawn from `noise`. sigma == 0 returns y itself.
template <typename Scalar>
Var<Scalar> perturb(Var<Scalar> y, const NoiseSpec& noise, ValueRange range = kModelRange) {
  if (noise.sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  if (noise.sigma == 0.0) return y;
  Rng rng(noise.seed);
  Graph<Scalar>& g = *y.graph;
  Var<Scalar> delta = g.constant(gaussian_noise<Scalar>(y.shape(), noise.sigma, range, rng));
  return clamp(y + delta, static_cast<Scalar>(range.lo), static_cast<Scalar>(range.hi));
}

/// Cycle-consistency: mean absolute difference over all pixels and channels.
template <typename Scalar>
Var<Scalar> cycle_loss(Var<Scalar> x, Var<Scalar> x_rec) {
  return mean_abs_diff(x_rec, x);
}

/// Plain-value cycle loss.
double cycle_loss(const Image& x, const Image& x_rec);

template <typename Scalar>
using ImageMap = std::function<Var<Scalar>(Var<Scalar>)>;

/// Noisy cycle-consistency: cycle_loss(x, reconstruct(clamp(translate(x) + delta))).
template <typename Scalar>
Var<Scalar> noisy_cycle_loss(Var<Scalar> x, const ImageMap<Scalar>& translate, const ImageMap<Scalar>& reconstruct,
                             const NoiseSpec& noise, ValueRange range = kModelRange) {
  Var<Scalar> y = translate(x);
  if (y.shape().h != x.shape().h || y.shape().w != x.shape().w) {
    throw ShapeError("noisy_cycle_loss: translation changes spatial size");
  }
  return cycle_loss(x, reconstruct(perturb(y, noise, range)));
}

template <typename Scalar>
struct AdversarialLosses {
  Var<Scalar> d_loss;
  Var<Scalar> g_loss;
};

/// Least-squares GAN losses averaged over patch scores.
template <typename Scalar>
AdversarialLosses<Scalar> lsgan_losses(Var<Scalar> scores_real, Var<Scalar> scores_fake) {
  const Scalar half(0.5);
  Var<Scalar> d = half * mean_sq_to(scores_real, Scalar(1)) + half * mean_sq_to(scores_fake, Scalar(0));
  return {d, mean_sq_to(scores_fake, Scalar(1))};
}

template <typename Scalar>
using GuessNet = std::function<Var<Scalar>(Var<Scalar> first, Var<Scalar> second)>;

/// Guess-discriminator losses for one (input, reconstruction) pair.
/// coin == false shows (x, x_rec), coin == true shows (x_rec, x). The target is 1 when the
/// first image is the reconstruction; the generator is scored against the flipped target.
/// x enters as a constant, so the generator gradient flows only through x_rec.
template <typename Scalar>
AdversarialLosses<Scalar> guess_loss(Var<Scalar> x, Var<Scalar> x_rec, const GuessNet<Scalar>& guess, bool coin,
                                     GuessForm form = GuessForm::least_squares) {
  require_same_shape(x.shape(), x_rec.shape(), "guess_loss");
  Var<Scalar> real = x.graph->constant(x.value());
  Var<Scalar> s = coin ? guess(x_rec, real) : guess(real, x_rec);
  const Scalar t = coin ? Scalar(1) : Scalar(0);
  if (form == GuessForm::cross_entropy) return {bce_with_logits(s, t), bce_with_logits(s, Scalar(1) - t)};
  return {mean_sq_to(s, t), mean_sq_to(s, Scalar(1) - t)};
}

/// Loss weights and defense switches for the generator objective.
struct ObjectiveConfig {
  Defense defense = Defense::none;
  double lambda_a = 10.0;
  double lambda_b = 10.0;
  double lambda_guess = 1.0;
  double sigma = 0.0;
  bool noise_a_cycle = true;  // perturb G_AB(x) before reconstructing x
  bool noise_b_cycle = true;  // perturb G_BA(y) before reconstructing y
  bool identity_loss = false;
  GuessForm guess_form = GuessForm::least_squares;
};

void validate(const ObjectiveConfig& cfg);

/// Unweighted component values of one generator objective evaluation.
struct RawLosses {
  double adv_ab = 0;  // G_AB judged by D_B
  double adv_ba = 0;  // G_BA judged by D_A
  double cyc_a = 0;
  double cyc_b = 0;
  double guess_a = 0;
  double guess_b = 0;
  double idt_a = 0;
  double idt_b = 0;
};

/// Weighted breakdown. Columns ending in _raw are unweighted.
struct LossBreakdown {
  double adv_G_A = 0;
  double adv_G_B = 0;
  double cyc_A = 0;
  double cyc_B = 0;
  double guess_A = 0;
  double guess_B = 0;
  double idt = 0;
  double total = 0;
  RawLosses raw;
};

/// total = adv_ab + adv_ba + lambda_a cyc_a + lambda_b cyc_b
///         [+ lambda_guess (guess_a + guess_b)] [+ 0.5 (lambda_a idt_a + lambda_b idt_b)].
LossBreakdown combine_losses(const RawLosses& raw, const ObjectiveConfig& cfg);

/// The six networks of a cycle model bound onto one tape.
template <typename Scalar>
struct CycleNets {
  const BoundParams<Scalar>& g_ab;
  const BoundParams<Scalar>& g_ba;
  const BoundParams<Scalar>& d_a;
  const BoundParams<Scalar>& d_b;
  const BoundParams<Scalar>* guess_a = nullptr;
  const BoundParams<Scalar>* guess_b = nullptr;
  const ArchConfig& arch;
};

template <typename Scalar>
struct GeneratorPass {
  Var<Scalar> fake_b;  // G_AB(x)
  Var<Scalar> rec_a;   // G_BA(perturbed G_AB(x))
  Var<Scalar> fake_a;  // G_BA(y)
  Var<Scalar> rec_b;   // G_AB(perturbed G_BA(y))
  Var<Scalar> total;
  LossBreakdown breakdown;
};

/// Builds the full generator objective on the tape. Random draws, in order: noise seed for
/// the A cycle, noise seed for the B cycle (each only when noise is enabled for it), then
/// the guess coins for A and B (only when guess is enabled).
template <typename Scalar>
GeneratorPass<Scalar> assemble_generator_objective(const CycleNets<Scalar>& nets, Var<Scalar> x, Var<Scalar> y,
                                                   const ObjectiveConfig& cfg, Rng& rng) {
  validate(cfg);
  const ArchConfig& arch = nets.arch;
  const ImageMap<Scalar> g_ab = [&](Var<Scalar> v) { return generator_forward(nets.g_ab, v, arch); };
  const ImageMap<Scalar> g_ba = [&](Var<Scalar> v) { return generator_forward(nets.g_ba, v, arch); };
  const bool noisy = uses_noise(cfg.defense);
  NoiseSpec noise_a{0.0, 0}, noise_b{0.0, 0};
  if (noisy && cfg.noise_a_cycle) noise_a = {cfg.sigma, rng.next()};
  if (noisy && cfg.noise_b_cycle) noise_b = {cfg.sigma, rng.next()};

  GeneratorPass<Scalar> pass;
  pass.fake_b = g_ab(x);
  pass.rec_a = g_ba(perturb(pass.fake_b, noise_a));
  pass.fake_a = g_ba(y);
  pass.rec_b = g_ab(perturb(pass.fake_a, noise_b));

  Var<Scalar> adv_ab = mean_sq_to(discriminator_forward(nets.d_b, pass.fake_b, arch), Scalar(1));
  Var<Scalar> adv_ba = mean_sq_to(discriminator_forward(nets.d_a, pass.fake_a, arch), Scalar(1));
  Var<Scalar> cyc_a = cycle_loss(x, pass.rec_a);
  Var<Scalar> cyc_b = cycle_loss(y, pass.rec_b);
  Var<Scalar> total = adv_ab + adv_ba + static_cast<Scalar>(cfg.lambda_a) * cyc_a +
                      static_cast<Scalar>(cfg.lambda_b) * cyc_b;

  RawLosses raw;
  raw.adv_ab = static_cast<double>(adv_ab.value()[0]);
  raw.adv_ba = static_cast<double>(adv_ba.value()[0]);
  raw.cyc_a = static_cast<double>(cyc_a.value()[0]);
  raw.cyc_b = static_cast<double>(cyc_b.value()[0]);

  if (uses_guess(cfg.defense)) {
    if (nets.guess_a == nullptr || nets.guess_b == nullptr) {
      throw std::invalid_argument("guess defense requires guess discriminators");
    }
    const GuessNet<Scalar> ga = [&](Var<Scalar> f, Var<Scalar> s) { return guess_forward(*nets.guess_a, f, s, arch); };
    const GuessNet<Scalar> gb = [&](Var<Scalar> f, Var<Scalar> s) { return guess_forward(*nets.guess_b, f, s, arch); };
    const bool coin_a = rng.coin();
    const bool coin_b = rng.coin();
    Var<Scalar> guess_a = guess_loss(x, pass.rec_a, ga, coin_a, cfg.guess_form).g_loss;
    Var<Scalar> guess_b = guess_loss(y, pass.rec_b, gb, coin_b, cfg.guess_form).g_loss;
    total = total + static_cast<Scalar>(cfg.lambda_guess) * (guess_a + guess_b);
    raw.guess_a = static_cast<double>(guess_a.value()[0]);
    raw.guess_b = static_cast<double>(guess_b.value()[0]);
  }
  if (cfg.identity_loss) {
    Var<Scalar> idt_a = cycle_loss(x, g_ba(x));
    Var<Scalar> idt_b = cycle_loss(y, g_ab(y));
    total = total + static_cast<Scalar>(0.5 * cfg.lambda_a) * idt_a + static_cast<Scalar>(0.5 * cfg.lambda_b) * idt_b;
    raw.idt_a = static_cast<double>(idt_a.value()[0]);
    raw.idt_b = static_cast<double>(idt_b.value()[0]);
  }
  pass.total = total;
  pass.breakdown = combine_losses(raw, cfg);
  return pass;
}

}  // namespace cyclelab
