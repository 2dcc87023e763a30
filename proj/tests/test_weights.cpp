#include <gtest/gtest.h>

#include "mcsq/weights.hpp"

using namespace mcsq;

TEST(WeightEval, PositiveAtOrigin) {
  for (int n : {1, 2, 3}) {
    WeightSpec s = isotropic_weight(n, 4.0 * n);
    double w0 = weight_eval(s, Vec::Zero(n));
    EXPECT_GT(w0, 0.0);
    EXPECT_GE(w0, weight_radial(n, 4.0 * n, 0.0, 1) * (1.0 - 1e-12));
  }
}

TEST(WeightEval, DecaySlope) {
  // kappa = 4: log2 W(1) - log2 W(8) close to 3 kappa
  for (int n : {1, 2, 3}) {
    const double kappa = 4.0 > n ? 4.0 : 4.0 * n;
    double r = std::log2(weight_radial(n, kappa, 1.0) / weight_radial(n, kappa, 8.0));
    EXPECT_NEAR(r, 3.0 * kappa, 0.15 * 3.0 * kappa) << n;
  }
}

TEST(WeightEval, AffinePullback) {
  WeightSpec s = isotropic_weight(2, 8.0);
  s.center = Vec::Constant(2, 3.0);
  s.shape << 2.0, 1.0, 0.0, 5.0;
  EXPECT_NEAR(weight_eval(s, s.center), weight_radial(2, 8.0, 0.0), 1e-15);
  Vec u(2);
  u << 0.6, -0.3;
  EXPECT_NEAR(weight_eval(s, s.center + s.shape * u), weight_radial(2, 8.0, u.norm()), 1e-14);
}

TEST(WeightEval, StrictlyPositiveAndComparable) {
  const int n = 2;
  const double kappa = 8.0;
  double lo = 1e300, hi = 0.0;
  for (int i = 0; i <= 400; ++i) {
    double r = std::pow(2.0, -3.0 + 13.0 * i / 400.0);
    double w = weight_radial(n, kappa, r);
    ASSERT_GT(w, 0.0) << r;
    double q = w * std::pow(1.0 + r, kappa);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  EXPECT_LT(hi / lo, 1e4);
}

TEST(WeightEval, Preconditions) {
  WeightSpec s = isotropic_weight(2, 8.0);
  EXPECT_THROW(weight_eval(s, Vec::Zero(3)), std::invalid_argument);
  s.shape << 1.0, 0.0, 0.0, 0.0;
  EXPECT_THROW(weight_eval(s, Vec::Zero(2)), std::domain_error);
  EXPECT_THROW(isotropic_weight(2, 2.0).validate(), std::domain_error);
}

TEST(OmegaBlock, NormalizedAndConcentrated) {
  MomentBlock b = make_block(2, 16, 1);
  WeightSpec s = omega_block(b, 8.0);
  DualBox d = dual_box(b);
  EXPECT_LT((s.shape - d.axes * d.half_lengths.asDiagonal()).norm(), 1e-12);

  Grid g;
  g.n = 2;
  g.sides = {256, 256};
  g.box = {256.0, 256.0};
  RField w = sample_weight(g, s);
  EXPECT_NEAR(grid_integral(g, w), 1.0, 0.02);

  Mat Tinv = s.shape.inverse();
  double inside = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    auto p = g.wrap(g.position(i));
    Vec x(2);
    x << p[0], p[1];
    if ((Tinv * x).cwiseAbs().maxCoeff() <= 2.0) inside += w[i];
  }
  EXPECT_GE(inside * g.cell_volume(), 0.9);
}

TEST(WeightCalculus, UnitBallTwoDimensional) {
  WeightCalculusReport r = verify_weight_calculus(2, 8.0, 64, 32.0);
  EXPECT_GT(r.min_on_unit_ball, 0.0);
  EXPECT_LT(r.fourier_mass_outside, 1e-6);
  EXPECT_TRUE(std::isfinite(r.self_convolution));
  EXPECT_LT(r.self_convolution, 64.0);
  EXPECT_LE(r.monotonicity, 2.0);
  EXPECT_TRUE(std::isfinite(r.mixed_decay));
  EXPECT_NEAR(r.grid_mass, 1.0, 0.02);
}

TEST(WeightCalculus, RefinementDrift) {
  WeightCalculusReport a = verify_weight_calculus(2, 8.0, 64, 32.0);
  WeightCalculusReport b = verify_weight_calculus(2, 8.0, 128, 32.0);
  EXPECT_LT(std::abs(a.self_convolution - b.self_convolution) / b.self_convolution, 0.1);
  EXPECT_LT(std::abs(a.mixed_decay - b.mixed_decay) / b.mixed_decay, 0.1);
}

TEST(WeightCalculus, RejectsSmallKappa) { EXPECT_THROW(verify_weight_calculus(2, 2.5, 32, 16.0), std::domain_error); }
