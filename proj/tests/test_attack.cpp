#include "cyclelab/attack.hpp"
#include "cyclelab/png_io.hpp"
#include "cyclelab/trainer.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

using namespace cyclelab;
using cyclelab::testing::TempDir;
using cyclelab::testing::random_tensor;
using cyclelab::testing::slurp;

namespace {

const ImageFn kIdentity = [](const Image& x) { return x; };
const DiffMap<double> kIdentityMap = [](Var<double> y) { return y; };
const DiffMap<float> kIdentityMapF = [](Var<float> y) { return y; };

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

// Box-constrained least squares min |A(b + d) - t|^2 / 4, |d_i| <= eps, by enumerating every
// assignment of each coordinate to lower bound, upper bound or free.
double box_least_squares(const Mat4& a, const Vec4& b, const Vec4& t, double eps) {
  double best = std::numeric_limits<double>::infinity();
  for (int code = 0; code < 81; ++code) {
    int c = code;
    Vec4 d = Vec4::Zero();
    std::vector<int> free;
    for (int i = 0; i < 4; ++i, c /= 3) {
      if (c % 3 == 0) d[i] = -eps;
      else if (c % 3 == 1) d[i] = eps;
      else free.push_back(i);
    }
    if (!free.empty()) {
      const Vec4 r = t - a * (b + d);
      Eigen::MatrixXd af(4, free.size());
      for (std::size_t k = 0; k < free.size(); ++k) af.col(static_cast<Eigen::Index>(k)) = a.col(free[k]);
      const Eigen::VectorXd sol = af.colPivHouseholderQr().solve(r);
      bool feasible = true;
      for (std::size_t k = 0; k < free.size(); ++k) {
        d[free[k]] = sol[static_cast<Eigen::Index>(k)];
        feasible &= std::abs(sol[static_cast<Eigen::Index>(k)]) <= eps + 1e-12;
      }
      if (!feasible) continue;
    }
    best = std::min(best, (a * (b + d) - t).squaredNorm() / 4);
  }
  return best;
}

}  // namespace

TEST(NoiseProbe, ZeroSigmaIsExact) {
  const Image x = random_tensor(Shape{1, 3, 16, 16}, 1);
  const auto p = noise_probe(kIdentity, kIdentity, x, 0.0, 9);
  EXPECT_EQ(p.mse, 0.0);
  EXPECT_EQ(p.recon_noisy.data(), p.recon_clean.data());
}

TEST(NoiseProbe, IdentityMatchesNoiseVariance) {
  const Image x = Image::constant(Shape{1, 3, 64, 64}, 0.5f);
  const auto p = noise_probe(kIdentity, kIdentity, x, 0.08, 4);
  EXPECT_NEAR(p.mse, 0.0064, 0.00064);
  EXPECT_EQ(p.translation.data(), x.data());
  EXPECT_GE(p.recon_noisy.data().minCoeff(), 0.0f);
  EXPECT_LE(p.recon_noisy.data().maxCoeff(), 1.0f);
  EXPECT_THROW(noise_probe(kIdentity, kIdentity, x, -0.1, 4), std::invalid_argument);
}

TEST(Panels, WidthAndSeparators) {
  const Image a = Image::constant(Shape{1, 3, 5, 4}, 0.2f);
  const Image out = hconcat_panels({a, a, a, a});
  EXPECT_EQ(out.shape().w, 4 * 4 + 3);
  EXPECT_EQ(out.shape().h, 5);
  EXPECT_EQ(out(0, 1, 2, 4), 1.0f);
  EXPECT_EQ(out(0, 1, 2, 3), 0.2f);
}

TEST(Attack, ProjectionHoldsAtEveryStep) {
  const Image base = random_tensor(Shape{1, 3, 8, 8}, 2);
  const Image target = random_tensor(Shape{1, 3, 8, 8}, 3);
  for (double eps : {0.0, 0.01, 0.08, 0.3}) {
    const auto r = targeted_embedding_attack<float>(kIdentityMapF, base, target, AttackOptions{eps, 60, 0.05});
    ASSERT_EQ(r.max_abs_delta.size(), 60u);
    ASSERT_EQ(r.mse_trajectory.size(), 61u);
    for (double m : r.max_abs_delta) EXPECT_LE(m, eps + 1e-7);
    EXPECT_LE(r.delta.data().cwiseAbs().maxCoeff(), eps + 1e-7);
  }
}

TEST(Attack, ZeroEpsilonGivesBaselineError) {
  const Image base = random_tensor(Shape{1, 3, 8, 8}, 2);
  const Image target = random_tensor(Shape{1, 3, 8, 8}, 3);
  const auto r = targeted_embedding_attack<float>(kIdentityMapF, base, target, AttackOptions{0.0, 20, 0.01});
  const double expected = (base.data().cast<double>() - target.data().cast<double>()).squaredNorm() / base.size();
  EXPECT_NEAR(r.achieved_mse, expected, 1e-7);
  EXPECT_EQ(r.delta.data().cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Attack, IdentityReachesTargetInsideBall) {
  const Image target = random_tensor(Shape{1, 3, 8, 8}, 5, 0.2f, 0.8f);
  const Image noise = random_tensor(Shape{1, 3, 8, 8}, 6, -0.05f, 0.05f);
  const Image base(target.shape(), target.data() + noise.data());
  const auto r = targeted_embedding_attack<double>(kIdentityMap, base, target, AttackOptions{0.08, 300, 0.01});
  EXPECT_LT(r.achieved_mse, 1e-4);
}

TEST(Attack, IdentityClippedClosedForm) {
  // Target 0.4 above the base with budget 0.1: the optimum saturates every coordinate.
  const Image base = Image::constant(Shape{1, 3, 4, 4}, 0.5f);
  const Image target = Image::constant(Shape{1, 3, 4, 4}, 0.9f);
  const auto r = targeted_embedding_attack<double>(kIdentityMap, base, target, AttackOptions{0.1, 300, 0.01});
  EXPECT_NEAR(r.achieved_mse, 0.09, 1e-4);
  EXPECT_NEAR(r.delta.data().minCoeff(), 0.1, 1e-3);
}

TEST(Attack, LinearMapMatchesActiveSetOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Mat4 a;
    for (int i = 0; i < 16; ++i) a(i / 4, i % 4) = rng.uniform(-1, 1);
    a += 2 * Mat4::Identity();
    Vec4 t;
    for (int i = 0; i < 4; ++i) t[i] = rng.uniform(0, 2.5);
    const Vec4 b = Vec4::Constant(0.5);
    const DiffMap<double> f = [a](Var<double> y) { return linear_map(y, Eigen::MatrixXd(a), Shape{1, 4, 1, 1}); };
    Image base(Shape{1, 4, 1, 1}), target(Shape{1, 4, 1, 1});
    for (int i = 0; i < 4; ++i) {
      base[i] = static_cast<float>(b[i]);
      target[i] = static_cast<float>(t[i]);
    }
    for (double eps : {0.05, 0.2, 0.5}) {
      const double oracle = box_least_squares(a, b, target.data().cast<double>(), eps);
      const auto r = targeted_embedding_attack<double>(f, base, target, AttackOptions{eps, 1000, 0.01});
      EXPECT_NEAR(r.achieved_mse, oracle, 0.02 * oracle + 1e-6) << "trial " << trial << " eps " << eps;
      EXPECT_GE(r.achieved_mse, oracle - 1e-9);
    }
  }
}

TEST(Attack, Deterministic) {
  const Image base = random_tensor(Shape{1, 3, 8, 8}, 7);
  const Image target = random_tensor(Shape{1, 3, 8, 8}, 8);
  const DiffMap<float> f = [](Var<float> y) { return tanh(affine(y, 3.0f, -1.5f)); };
  const auto a = targeted_embedding_attack<float>(f, base, target, AttackOptions{});
  const auto b = targeted_embedding_attack<float>(f, base, target, AttackOptions{});
  EXPECT_EQ(a.mse_trajectory, b.mse_trajectory);
  EXPECT_EQ(a.delta.data(), b.delta.data());
}

TEST(Attack, RejectsBadOptions) {
  const Image x = Image::constant(Shape{1, 3, 2, 2}, 0.5f);
  EXPECT_THROW(targeted_embedding_attack<float>(kIdentityMapF, x, x, AttackOptions{-0.1, 10, 0.01}), std::invalid_argument);
  EXPECT_THROW(targeted_embedding_attack<float>(kIdentityMapF, x, x, AttackOptions{0.1, -1, 0.01}), std::invalid_argument);
}

TEST(TargetIndex, NeverSelfAndSpreadOut) {
  std::vector<int> hits(10);
  for (int i = 0; i < 10; ++i) {
    for (std::uint64_t s = 0; s < 200; ++s) {
      const int j = attack_target_index(i, 10, s);
      ASSERT_NE(j, i);
      ASSERT_GE(j, 0);
      ASSERT_LT(j, 10);
      ++hits[j];
    }
  }
  for (int h : hits) EXPECT_GT(h, 100);
  EXPECT_THROW(attack_target_index(0, 1, 0), std::invalid_argument);
}

class SweepRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("attack_run");
    GenerateOptions o;
    o.n_train = 4;
    o.n_test = 5;
    o.size = 16;
    o.out_dir = dir_->path() / "data";
    generate_dataset(o);
    TrainConfig cfg;
    cfg.total_iters = 0;
    cfg.image_size = 16;
    cfg.arch.gen_filters = 4;
    cfg.arch.res_blocks = 1;
    cfg.arch.disc_filters = 4;
    cfg.data_dir = o.out_dir.string();
    train(cfg, dir_->path() / "run");
  }
  static void TearDownTestSuite() { delete dir_; }
  static TempDir* dir_;
};

TempDir* SweepRun::dir_ = nullptr;

TEST_F(SweepRun, ZeroEpsilonMatchesCleanReconstructionError) {
  SweepOptions o;
  o.epsilons = {0.0};
  o.n_samples = 3;
  o.steps = 5;
  o.out_dir = dir_->path() / "eps0";
  const auto rows = attack_sweep(dir_->path() / "run", dir_->path() / "data", o);
  TrainConfig cfg;
  const RunState st = load_checkpoint(dir_->path() / "run/final.cycd", &cfg);
  const Dataset data = load_dataset(dir_->path() / "data");
  const ImageFn g_b = generator_fn(st.nets[kGenAB], cfg.arch);
  const ImageFn g_a = generator_fn(st.nets[kGenBA], cfg.arch);
  for (const auto& r : rows) {
    const Image rec = g_a(g_b(data.test_a[r.sample_index]));
    const double base = (rec.data().cast<double>() - data.test_a[r.target_index].data().cast<double>()).squaredNorm() /
                        static_cast<double>(rec.size());
    EXPECT_NEAR(r.achieved_mse, base, 1e-5 * base);
  }
  EXPECT_TRUE(std::filesystem::exists(dir_->path() / "eps0/attack_0000.png"));
}

TEST_F(SweepRun, LargerBudgetIsNotWorseAndRerunIsIdentical) {
  SweepOptions o;
  o.epsilons = {0.02, 0.08, 0.3};
  o.n_samples = 2;
  o.steps = 100;
  o.write_grids = false;
  o.out_dir = dir_->path() / "s1";
  const auto a = attack_sweep(dir_->path() / "run", dir_->path() / "data", o);
  o.out_dir = dir_->path() / "s2";
  attack_sweep(dir_->path() / "run", dir_->path() / "data", o);
  EXPECT_EQ(slurp(dir_->path() / "s1/attack.csv"), slurp(dir_->path() / "s2/attack.csv"));
  ASSERT_EQ(a.size(), 6u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LE(a[2 + i].achieved_mse, a[0 + i].achieved_mse * 1.05);
    EXPECT_LE(a[4 + i].achieved_mse, a[2 + i].achieved_mse * 1.05);
  }
  EXPECT_FALSE(std::filesystem::exists(dir_->path() / "s1/attack_0000.png"));
}

TEST_F(SweepRun, TooManySamplesFails) {
  SweepOptions o;
  o.n_samples = 6;
  o.out_dir = dir_->path() / "big";
  try {
    attack_sweep(dir_->path() / "run", dir_->path() / "data", o);
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('6'), std::string::npos);
    EXPECT_NE(msg.find('5'), std::string::npos);
  }
  NoiseProbeOptions p;
  p.n_samples = 6;
  p.out_dir = o.out_dir;
  EXPECT_THROW(noise_probe_run(dir_->path() / "run", dir_->path() / "data", p), std::invalid_argument);
}

TEST_F(SweepRun, NoiseProbeRunWritesFourPanelGrids) {
  NoiseProbeOptions p;
  p.out_dir = dir_->path() / "probe";
  const auto a = noise_probe_run(dir_->path() / "run", dir_->path() / "data", p);
  ASSERT_EQ(a.size(), 4u);
  const Image grid = read_png(dir_->path() / "probe/probe_0000.png");
  EXPECT_EQ(grid.shape().w, 4 * 16 + 3);
  EXPECT_EQ(grid.shape().h, 16);
  const std::string first = slurp(dir_->path() / "probe/probe_noise.csv");
  EXPECT_EQ(noise_probe_run(dir_->path() / "run", dir_->path() / "data", p), a);
  EXPECT_EQ(slurp(dir_->path() / "probe/probe_noise.csv"), first);
  p.sigma = 0;
  for (double m : noise_probe_run(dir_->path() / "run", dir_->path() / "data", p)) EXPECT_EQ(m, 0.0);
}
