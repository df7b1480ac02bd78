#include "cyclelab/objectives.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace cyclelab;
using cyclelab::testing::random_tensor;

namespace {

Image constant_image(Shape s, float v) { return Image::constant(s, v); }

ArchConfig small_arch() {
  ArchConfig a;
  a.gen_filters = 4;
  a.res_blocks = 1;
  a.disc_filters = 4;
  return a;
}

struct SixNets {
  ArchConfig arch = small_arch();
  ParamSet<float> g_ab = init_params<float>(NetKind::generator, 1, arch);
  ParamSet<float> g_ba = init_params<float>(NetKind::generator, 2, arch);
  ParamSet<float> d_a = init_params<float>(NetKind::discriminator, 3, arch);
  ParamSet<float> d_b = init_params<float>(NetKind::discriminator, 4, arch);
  ParamSet<float> q_a = init_params<float>(NetKind::guess, 5, arch);
  ParamSet<float> q_b = init_params<float>(NetKind::guess, 6, arch);
};

LossBreakdown assemble(const SixNets& n, const Tensor<float>& x, const Tensor<float>& y, const ObjectiveConfig& cfg,
                       std::uint64_t seed, double* graph_total = nullptr) {
  Graph<float> g;
  const BoundParams<float> gab(g, n.g_ab), gba(g, n.g_ba), da(g, n.d_a), db(g, n.d_b), qa(g, n.q_a), qb(g, n.q_b);
  const CycleNets<float> nets{gab, gba, da, db, &qa, &qb, n.arch};
  Rng rng(seed);
  const auto pass = assemble_generator_objective(nets, g.constant(x), g.constant(y), cfg, rng);
  if (graph_total != nullptr) *graph_total = pass.total.value()[0];
  return pass.breakdown;
}

}  // namespace

TEST(CycleLoss, HandComputedValues) {
  const Image x = random_tensor(Shape{1, 3, 5, 5}, 1);
  EXPECT_EQ(cycle_loss(x, x), 0.0);
  for (Shape s : {Shape{1, 3, 4, 4}, Shape{1, 1, 1, 1}, Shape{2, 3, 7, 3}}) {
    EXPECT_NEAR(cycle_loss(constant_image(s, 0.5f), constant_image(s, 0.25f)), 0.25, 1e-12);
  }
  Image a(Shape{1, 1, 1, 2}), b(Shape{1, 1, 1, 2});
  a[0] = 0.0f;
  a[1] = 1.0f;
  b[0] = 0.5f;
  b[1] = 0.5f;
  EXPECT_NEAR(cycle_loss(a, b), 0.5, 1e-12);
  EXPECT_THROW(cycle_loss(a, Image(Shape{1, 1, 2, 1})), ShapeError);
}

TEST(CycleLoss, NonNegativeSymmetricAndZeroOnlyOnEquality) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Image x = random_tensor(Shape{1, 3, 6, 6}, 2 * s);
    Image y = random_tensor(Shape{1, 3, 6, 6}, 2 * s + 1);
    EXPECT_GT(cycle_loss(x, y), 0.0);
    EXPECT_EQ(cycle_loss(x, y), cycle_loss(y, x));
    y = x;
    y[s % y.size()] += 1e-3f;
    EXPECT_GT(cycle_loss(x, y), 0.0);
  }
}

TEST(NoisyCycleLoss, SigmaZeroIsBitIdenticalToCycleLoss) {
  const SixNets n;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Tensor<float> x = random_tensor(Shape{1, 3, 16, 16}, s, -1, 1);
    Graph<float> g;
    const BoundParams<float> gab(g, n.g_ab), gba(g, n.g_ba);
    const ImageMap<float> t = [&](Var<float> v) { return generator_forward(gab, v, n.arch); };
    const ImageMap<float> r = [&](Var<float> v) { return generator_forward(gba, v, n.arch); };
    const auto vx = g.constant(x);
    const float plain = cycle_loss(vx, r(t(vx))).value()[0];
    const float noisy = noisy_cycle_loss(vx, t, r, NoiseSpec{0.0, s}).value()[0];
    ASSERT_EQ(std::bit_cast<std::uint32_t>(plain), std::bit_cast<std::uint32_t>(noisy)) << "input " << s;
  }
}

TEST(NoisyCycleLoss, IdentityMapsGiveMeanAbsoluteNoise) {
  // E|N(0, s)| = s sqrt(2/pi) on the [0, 1] scale, interior values so clamping is inactive.
  const double sigma = 0.1;
  const double expected = sigma * std::sqrt(2.0 / 3.141592653589793);
  EXPECT_NEAR(expected, 0.0798, 1e-4);
  Graph<double> g;
  const auto x = g.constant(Tensor<double>::constant(Shape{1, 1, 250, 400}, 0.5));
  const ImageMap<double> id = [](Var<double> v) { return v; };
  const double got = noisy_cycle_loss(x, id, id, NoiseSpec{sigma, 17}, kUnitRange).value()[0];
  EXPECT_NEAR(got, expected, 0.05 * expected);
  // The same scale in model units: span 2 doubles the standard deviation.
  Graph<double> g2;
  const auto xm = g2.constant(Tensor<double>::constant(Shape{1, 1, 250, 400}, 0.0));
  EXPECT_NEAR(noisy_cycle_loss(xm, id, id, NoiseSpec{sigma, 17}, kModelRange).value()[0], 2 * expected,
              0.1 * expected);
}

TEST(NoisyCycleLoss, DeterministicPerSeedAndFreshAcrossSeeds) {
  Graph<double> g;
  const auto x = g.constant(random_tensor<double>(Shape{1, 3, 8, 8}, 5, -0.5, 0.5));
  const ImageMap<double> id = [](Var<double> v) { return v; };
  const double a = noisy_cycle_loss(x, id, id, NoiseSpec{0.1, 9}).value()[0];
  EXPECT_EQ(a, noisy_cycle_loss(x, id, id, NoiseSpec{0.1, 9}).value()[0]);
  EXPECT_NE(a, noisy_cycle_loss(x, id, id, NoiseSpec{0.1, 10}).value()[0]);
  EXPECT_THROW(noisy_cycle_loss(x, id, id, NoiseSpec{-0.1, 9}), std::invalid_argument);
}

TEST(NoisyCycleLoss, PerturbationIsClampedToRange) {
  Graph<double> g;
  const auto y = g.constant(Tensor<double>::constant(Shape{1, 3, 32, 32}, 0.95));
  const auto p = perturb(y, NoiseSpec{0.5, 3}).value();
  EXPECT_LE(p.data().maxCoeff(), 1.0);
  EXPECT_GE(p.data().minCoeff(), -1.0);
  EXPECT_EQ(p.data().maxCoeff(), 1.0);
}

TEST(Lsgan, HandComputedValues) {
  Graph<double> g;
  const auto c = [&](double v) { return g.constant(Tensor<double>::constant(Shape{1, 1, 4, 4}, v)); };
  auto l = lsgan_losses(c(1.0), c(0.0));
  EXPECT_EQ(l.d_loss.value()[0], 0.0);
  EXPECT_EQ(l.g_loss.value()[0], 1.0);
  EXPECT_EQ(lsgan_losses(c(0.3), c(1.0)).g_loss.value()[0], 0.0);
  l = lsgan_losses(c(0.8), c(0.3));
  EXPECT_NEAR(l.d_loss.value()[0], 0.065, 1e-12);
  EXPECT_NEAR(l.g_loss.value()[0], 0.49, 1e-12);
}

TEST(GuessLoss, ChanceLevelNetwork) {
  Graph<double> g;
  const auto x = g.constant(random_tensor<double>(Shape{1, 3, 8, 8}, 1, -1, 1));
  const auto xr = g.input(random_tensor<double>(Shape{1, 3, 8, 8}, 2, -1, 1));
  const GuessNet<double> half = [&](Var<double>, Var<double>) {
    return g.constant(Tensor<double>::constant(Shape{1, 1, 2, 2}, 0.5));
  };
  for (bool coin : {false, true}) {
    const auto l = guess_loss(x, xr, half, coin);
    EXPECT_DOUBLE_EQ(l.d_loss.value()[0], 0.25);
    EXPECT_DOUBLE_EQ(l.g_loss.value()[0], 0.25);
  }
}

TEST(GuessLoss, ZeroScoreRealFirst) {
  Graph<double> g;
  const auto x = g.constant(random_tensor<double>(Shape{1, 3, 8, 8}, 1, -1, 1));
  const auto xr = g.constant(random_tensor<double>(Shape{1, 3, 8, 8}, 2, -1, 1));
  const GuessNet<double> zero = [&](Var<double>, Var<double>) {
    return g.constant(Tensor<double>(Shape{1, 1, 2, 2}));
  };
  const auto l = guess_loss(x, xr, zero, false);
  EXPECT_EQ(l.d_loss.value()[0], 0.0);
  EXPECT_EQ(l.g_loss.value()[0], 1.0);
}

TEST(GuessLoss, SwappingInputsAndTargetLeavesLossesUnchanged) {
  // Metamorphic check with the real guess network: the coin only permutes inputs. Feeding the
  // swapped order with the flipped target reproduces the losses of the other coin.
  const ArchConfig arch = small_arch();
  const auto q = init_params<double>(NetKind::guess, 3, arch);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Graph<double> g;
    const BoundParams<double> b(g, q);
    const auto x = g.constant(random_tensor<double>(Shape{1, 3, 16, 16}, 2 * s, -1, 1));
    const auto xr = g.constant(random_tensor<double>(Shape{1, 3, 16, 16}, 2 * s + 1, -1, 1));
    const GuessNet<double> net = [&](Var<double> f, Var<double> sec) { return guess_forward(b, f, sec, arch); };
    for (bool coin : {false, true}) {
      const auto l = guess_loss(x, xr, net, coin);
      // Manual form: first = reconstruction iff coin, target 1 iff first is the reconstruction.
      const auto sc = coin ? net(xr, x) : net(x, xr);
      const double t = coin ? 1.0 : 0.0;
      EXPECT_DOUBLE_EQ(l.d_loss.value()[0], mean_sq_to(sc, t).value()[0]);
      EXPECT_DOUBLE_EQ(l.g_loss.value()[0], mean_sq_to(sc, 1.0 - t).value()[0]);
    }
    // Swapping the inputs and flipping the target: guess_loss(x_rec, x, coin=false) shows the same
    // ordered pair as guess_loss(x, x_rec, coin=true) under the opposite target, so its losses
    // are the same pair with roles exchanged.
    const auto l1 = guess_loss(x, xr, net, true);
    const auto l0_swapped = guess_loss(xr, x, net, false);
    EXPECT_DOUBLE_EQ(l1.d_loss.value()[0], l0_swapped.g_loss.value()[0]);
    EXPECT_DOUBLE_EQ(l1.g_loss.value()[0], l0_swapped.d_loss.value()[0]);
  }
}

TEST(GuessLoss, GeneratorGradientSkipsRealImage) {
  const ArchConfig arch = small_arch();
  const auto q = init_params<double>(NetKind::guess, 3, arch);
  for (bool coin : {false, true}) {
    Graph<double> g;
    const BoundParams<double> b(g, q);
    const auto x = g.input(random_tensor<double>(Shape{1, 3, 16, 16}, 1, -1, 1));
    const auto xr = g.input(random_tensor<double>(Shape{1, 3, 16, 16}, 2, -1, 1));
    const GuessNet<double> net = [&](Var<double> f, Var<double> sec) { return guess_forward(b, f, sec, arch); };
    const auto l = guess_loss(x, xr, net, coin);
    g.backward(l.g_loss);
    EXPECT_TRUE(!g.has_grad(x) || g.grad(x).data().cwiseAbs().maxCoeff() == 0.0);
    ASSERT_TRUE(g.has_grad(xr));
    EXPECT_GT(g.grad(xr).data().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(GuessLoss, ShapeMismatch) {
  Graph<double> g;
  const GuessNet<double> zero = [&](Var<double>, Var<double>) { return g.constant(Tensor<double>(Shape{1, 1, 1, 1})); };
  EXPECT_THROW(guess_loss(g.constant(Tensor<double>(Shape{1, 3, 4, 4})), g.constant(Tensor<double>(Shape{1, 3, 4, 8})),
                          zero, false),
               ShapeError);
}

TEST(CombineLosses, WeightedSumArithmetic) {
  RawLosses raw{1, 1, 1, 1, 1, 1, 0, 0};
  ObjectiveConfig cfg;
  cfg.defense = Defense::guess;
  cfg.lambda_a = 1.5;
  cfg.lambda_b = 1.0;
  cfg.lambda_guess = 2.0;
  EXPECT_DOUBLE_EQ(combine_losses(raw, cfg).total, 8.5);
  cfg.defense = Defense::none;
  const auto b = combine_losses(raw, cfg);
  EXPECT_DOUBLE_EQ(b.total, 4.5);
  EXPECT_EQ(b.guess_A, 0.0);
  EXPECT_EQ(b.raw.guess_a, 0.0);
}

TEST(CombineLosses, RejectsNegativeWeights) {
  ObjectiveConfig cfg;
  cfg.lambda_b = -1;
  EXPECT_THROW(combine_losses(RawLosses{}, cfg), std::invalid_argument);
  cfg.lambda_b = 1;
  cfg.lambda_guess = -0.5;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg.lambda_guess = 1;
  cfg.sigma = 1.5;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

TEST(Assemble, NoneHasNoGuessTermsAndIgnoresSigma) {
  const SixNets n;
  const auto x = random_tensor(Shape{1, 3, 16, 16}, 1, -1, 1);
  const auto y = random_tensor(Shape{1, 3, 16, 16}, 2, -1, 1);
  ObjectiveConfig cfg;
  cfg.sigma = 0.3;
  const auto b = assemble(n, x, y, cfg, 4);
  EXPECT_EQ(b.guess_A, 0.0);
  EXPECT_EQ(b.guess_B, 0.0);
  cfg.sigma = 0.0;
  const auto b0 = assemble(n, x, y, cfg, 4);
  EXPECT_EQ(b.total, b0.total);
}

TEST(Assemble, NoiseAtSigmaZeroEqualsNone) {
  const SixNets n;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = random_tensor(Shape{1, 3, 16, 16}, 10 + s, -1, 1);
    const auto y = random_tensor(Shape{1, 3, 16, 16}, 20 + s, -1, 1);
    ObjectiveConfig none;
    ObjectiveConfig noise = none;
    noise.defense = Defense::noise;
    noise.sigma = 0.0;
    const auto a = assemble(n, x, y, none, s);
    const auto b = assemble(n, x, y, noise, s);
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(a.raw.cyc_a, b.raw.cyc_a);
    EXPECT_EQ(a.raw.cyc_b, b.raw.cyc_b);
  }
}

TEST(Assemble, TotalRecomputesFromComponents) {
  const SixNets n;
  for (Defense d : {Defense::none, Defense::noise, Defense::guess, Defense::noise_guess}) {
    for (bool idt : {false, true}) {
      ObjectiveConfig cfg;
      cfg.defense = d;
      cfg.sigma = 0.06;
      cfg.lambda_a = 1.5;
      cfg.lambda_b = 3;
      cfg.lambda_guess = 2;
      cfg.identity_loss = idt;
      double graph_total = 0;
      const auto b = assemble(n, random_tensor(Shape{1, 3, 16, 16}, 1, -1, 1),
                              random_tensor(Shape{1, 3, 16, 16}, 2, -1, 1), cfg, 7, &graph_total);
      const double sum = b.adv_G_A + b.adv_G_B + b.cyc_A + b.cyc_B + b.guess_A + b.guess_B + b.idt;
      EXPECT_NEAR(b.total, sum, 1e-6 * std::abs(sum));
      EXPECT_NEAR(graph_total, b.total, 1e-6 * std::abs(b.total));
      EXPECT_NEAR(b.cyc_A, cfg.lambda_a * b.raw.cyc_a, 1e-12);
      EXPECT_NEAR(b.cyc_B, cfg.lambda_b * b.raw.cyc_b, 1e-12);
      for (double v : {b.raw.adv_ab, b.raw.adv_ba, b.raw.cyc_a, b.raw.cyc_b, b.raw.guess_a, b.raw.guess_b}) {
        EXPECT_GE(v, 0.0);
      }
      EXPECT_EQ(uses_guess(d), b.raw.guess_a > 0);
    }
  }
}

TEST(Assemble, NoiseChangesBothCyclesOnlyWhenEnabled) {
  const SixNets n;
  const auto x = random_tensor(Shape{1, 3, 16, 16}, 1, -1, 1);
  const auto y = random_tensor(Shape{1, 3, 16, 16}, 2, -1, 1);
  ObjectiveConfig plain;
  const auto base = assemble(n, x, y, plain, 3);
  ObjectiveConfig noisy;
  noisy.defense = Defense::noise;
  noisy.sigma = 0.2;
  const auto both = assemble(n, x, y, noisy, 3);
  EXPECT_NE(both.raw.cyc_a, base.raw.cyc_a);
  EXPECT_NE(both.raw.cyc_b, base.raw.cyc_b);
  noisy.noise_b_cycle = false;
  const auto only_a = assemble(n, x, y, noisy, 3);
  EXPECT_NE(only_a.raw.cyc_a, base.raw.cyc_a);
  EXPECT_EQ(only_a.raw.cyc_b, base.raw.cyc_b);
}

TEST(Assemble, GuessNeedsGuessNetworks) {
  const SixNets n;
  Graph<float> g;
  const BoundParams<float> gab(g, n.g_ab), gba(g, n.g_ba), da(g, n.d_a), db(g, n.d_b);
  const CycleNets<float> nets{gab, gba, da, db, nullptr, nullptr, n.arch};
  ObjectiveConfig cfg;
  cfg.defense = Defense::guess;
  Rng rng(1);
  EXPECT_THROW(assemble_generator_objective(nets, g.constant(Tensor<float>(Shape{1, 3, 16, 16})),
                                            g.constant(Tensor<float>(Shape{1, 3, 16, 16})), cfg, rng),
               std::invalid_argument);
}

TEST(Names, RoundTrip) {
  for (Defense d : {Defense::none, Defense::noise, Defense::guess, Defense::noise_guess}) {
    EXPECT_EQ(defense_from_string(to_string(d)), d);
  }
  EXPECT_EQ(to_string(Defense::noise_guess), "noise+guess");
  EXPECT_THROW(defense_from_string("tv"), std::invalid_argument);
  EXPECT_EQ(guess_form_from_string(to_string(GuessForm::cross_entropy)), GuessForm::cross_entropy);
}
