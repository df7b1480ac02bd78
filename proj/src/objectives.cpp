#include "cyclelab/objectives.hpp"

#include <cmath>

namespace cyclelab {

std::string_view to_string(Defense defense) {
  switch (defense) {
    case Defense::none: return "none";
    case Defense::noise: return "noise";
    case Defense::guess: return "guess";
    case Defense::noise_guess: return "noise+guess";
  }
  return "?";
}

Defense defense_from_string(std::string_view name) {
  if (name == "none") return Defense::none;
  if (name == "noise") return Defense::noise;
  if (name == "guess") return Defense::guess;
  if (name == "noise+guess") return Defense::noise_guess;
  throw std::invalid_argument("unknown defense '" + std::string(name) + "' (none|noise|guess|noise+guess)");
}

std::string_view to_string(GuessForm form) {
  return form == GuessForm::least_squares ? "least-squares" : "cross-entropy";
}

GuessForm guess_form_from_string(std::string_view name) {
  if (name == "least-squares") return GuessForm::least_squares;
  if (name == "cross-entropy") return GuessForm::cross_entropy;
  throw std::invalid_argument("unknown guess loss form '" + std::string(name) + "'");
}

double cycle_loss(const Image& x, const Image& x_rec) {
  require_same_shape(x.shape(), x_rec.shape(), "cycle_loss");
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) total += std::abs(static_cast<double>(x_rec[i]) - x[i]);
  return total / static_cast<double>(x.size());
}

void validate(const ObjectiveConfig& cfg) {
  if (cfg.lambda_a < 0 || cfg.lambda_b < 0 || cfg.lambda_guess < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (cfg.sigma < 0 || cfg.sigma > 1) throw std::invalid_argument("sigma must lie in [0, 1]");
}

LossBreakdown combine_losses(const RawLosses& raw, const ObjectiveConfig& cfg) {
  validate(cfg);
  LossBreakdown b;
  b.raw = raw;
  b.adv_G_A = raw.adv_ab;
  b.adv_G_B = raw.adv_ba;
  b.cyc_A = cfg.lambda_a * raw.cyc_a;
  b.cyc_B = cfg.lambda_b * raw.cyc_b;
  if (uses_guess(cfg.defense)) {
    b.guess_A = cfg.lambda_guess * raw.guess_a;
    b.guess_B = cfg.lambda_guess * raw.guess_b;
  } else {
    b.raw.guess_a = 0;
    b.raw.guess_b = 0;
  }
  if (cfg.identity_loss) b.idt = 0.5 * (cfg.lambda_a * raw.idt_a + cfg.lambda_b * raw.idt_b);
  b.total = b.adv_G_A + b.adv_G_B + b.cyc_A + b.cyc_B + b.guess_A + b.guess_B + b.idt;
  return b;
}

}  // namespace cyclelab
