#include <gtest/gtest.h>

#include <chrono>

#include "mcsq/certify.hpp"

using namespace mcsq;

namespace {
RecursionConfig toy(double eps) {
  RecursionConfig c;
  c.epsilon = eps;
  c.n = 2;
  c.c_small = 2.0;
  c.c_large = 2.0;
  return c;
}
}  // namespace

TEST(Snmm, HalfEpsilonFindsMinimalK) {
  RecursionConfig c = toy(0.5);
  SnmmResult r = snmm_halting_check(c);
  ASSERT_TRUE(r.pass) << r.message;
  EXPECT_GT(r.minimal_log2K, 0);
  EXPECT_TRUE(snmm_check_fixed_K(c, r.minimal_log2K));
  EXPECT_FALSE(snmm_check_fixed_K(c, r.minimal_log2K - 1));
  ASSERT_FALSE(r.witnesses.empty());
  for (std::size_t i = 0; i + 1 < r.witnesses.size(); ++i) {
    const auto& w = r.witnesses[i];
    EXPECT_NEAR(snmm_log_lhs(c, w.k, r.minimal_log2K, w.log2_r), w.log_value, 1e-12);
    EXPECT_TRUE(snmm_witness_holds(c, r.minimal_log2K, w));
  }
  // the last witness sits one step below K and shows minimality
  const auto& last = r.witnesses.back();
  EXPECT_NEAR(snmm_log_lhs(c, last.k, r.minimal_log2K - 1, last.log2_r), last.log_value, 1e-12);
  EXPECT_GT(last.log_value, 0.0);
}

TEST(Snmm, KOneFailsWithWitness) {
  RecursionConfig c = toy(0.5);
  std::int64_t k = 0;
  EXPECT_FALSE(snmm_check_fixed_K(c, 0.0, &k));
  EXPECT_GE(k, 1);
  EXPECT_GT(snmm_log_lhs(c, 1, 0.0, 0.0), 0.0);
}

TEST(Snmm, TailSlopeTurnsNegativeAndStays) {
  RecursionConfig c = toy(0.5);
  SnmmResult r = snmm_halting_check(c);
  ASSERT_TRUE(r.pass);
  EXPECT_LT(r.tail_slope, 0.0);
  double prev = snmm_log_lhs(c, r.k_turn, r.minimal_log2K, r.minimal_log2K);
  for (std::int64_t k = r.k_turn + 1; k < r.k_turn + 2000; k += 7) {
    double v = snmm_log_lhs(c, k, r.minimal_log2K, r.minimal_log2K);
    EXPECT_LT(v, prev) << k;
    prev = v;
  }
}

TEST(Snmm, MinimalKMonotoneInEpsilon) {
  int prev = std::numeric_limits<int>::max();
  for (double e : {0.1, 0.25, 0.5, 0.75}) {
    SnmmResult r = snmm_halting_check(toy(e));
    ASSERT_TRUE(r.pass) << e;
    EXPECT_LE(r.minimal_log2K, prev) << e;
    prev = r.minimal_log2K;
  }
}

TEST(Snmm, RejectsInvalidConfig) {
  RecursionConfig c = toy(1.5);
  EXPECT_THROW(snmm_halting_check(c), std::domain_error);
  c = toy(0.5);
  c.c_small = -1.0;
  EXPECT_THROW(snmm_halting_check(c), std::domain_error);
}

TEST(Snmm, ConstantSweepStillCloses) {
  for (double C : {1.5, 2.0, 8.0, 64.0}) {
    RecursionConfig c = toy(0.25);
    c.c_small = C;
    c.c_large = C;
    EXPECT_TRUE(snmm_halting_check(c).pass) << C;
  }
}

TEST(S1bd, EtaOneAdmissible) {
  S1bdResult r = s1bd_closure_check(1.0);
  ASSERT_TRUE(r.admissible) << r.message;
  for (double x : r.exponents) EXPECT_GT(x, 0.0);
  EXPECT_GT(1.0 - 10.0 * std::sqrt(r.epsilon), 0.5);
  EXPECT_LT(r.epsilon1, std::sqrt(r.epsilon) * 1.0 / 220.0);
}

TEST(S1bd, EtaZeroInfeasible) {
  EXPECT_FALSE(s1bd_closure_check(0.0).admissible);
  EXPECT_FALSE(s1bd_closure_check(-1.0).admissible);
}

TEST(S1bd, LargerConstantNeedsSmallerEps1) {
  S1bdResult base = s1bd_closure_check(1.0);
  S1bdConstants k;
  k.c_first = 5400.0;
  S1bdResult big = s1bd_closure_check(1.0, k);
  ASSERT_TRUE(big.admissible);
  EXPECT_LT(big.epsilon1, base.epsilon1);
}

TEST(S1bd, SmallEtas) {
  for (double eta : {1.0, 0.5, 0.1}) EXPECT_TRUE(s1bd_closure_check(eta).admissible) << eta;
}

TEST(FixedPoint, BoundedAboveThreshold) {
  FixedPointConfig f;
  f.epsilon = 0.25;
  f.N0 = 0.0;  // eps^{-1/2}
  double thr = fixed_point_threshold(f);
  EXPECT_NEAR(thr, (53 * 0.01 + 4 * 0.0625 + 50.0) / 0.5, 1e-12);
  f.delta = thr + 1.0;
  FixedPointTrajectory t = multiscale_fixed_point(f);
  EXPECT_TRUE(t.bounded) << t.message;
  EXPECT_FALSE(t.diverged);
  f.delta = thr - 5.0;
  f.log2R_max = 1024.0;
  EXPECT_FALSE(multiscale_fixed_point(f).bounded);
}

TEST(FixedPoint, ConstantKDiverges) {
  FixedPointConfig f;
  f.K_const = 1.0;
  FixedPointTrajectory t = multiscale_fixed_point(f);
  EXPECT_TRUE(t.diverged);
  EXPECT_FALSE(t.bounded);
}

TEST(FixedPoint, ZeroBaseStaysZero) {
  FixedPointConfig f;
  f.T_base = 0.0;
  FixedPointTrajectory t = multiscale_fixed_point(f);
  ASSERT_FALSE(t.log2T.empty());
  for (double v : t.log2T) EXPECT_EQ(v, -std::numeric_limits<double>::infinity());
}

TEST(Ingredients, OneLevelExact) {
  IngredientConfig c;
  c.A = 3.0;
  c.B = 5.0;
  c.delta = 0.1;
  c.K = 16.0;
  c.levels = 1;
  c.log2_ratio = 1000.0;
  IngredientResult r = ingredient_composition_check(c);
  EXPECT_EQ(r.depth, 1);
  EXPECT_NEAR(std::exp2(r.log2_constant), 3.0 * 5.0 * std::pow(16.0, 0.2) * 2.0, 1e-9);
}

TEST(Ingredients, NoScaleGainBlowsUp) {
  IngredientConfig c;
  c.delta = 0.0;
  c.K = 1.0;
  c.levels = 40;
  IngredientResult r = ingredient_composition_check(c);
  EXPECT_TRUE(r.blowup);
  EXPECT_NEAR(r.log2_constant, 40 * std::log2(8.0), 1e-9);
}

TEST(Ingredients, QuarterEpsilonRuleBounded) {
  const double eps = 0.25;
  const double cap = ingredient_rule_constant_log2(eps, 2.0, 2.0);
  for (double l : {16.0, 64.0, 256.0, 1024.0, 4096.0}) {
    IngredientResult r = ingredient_composition_check(ingredient_rule(eps, 2.0, 2.0, l));
    EXPECT_LE(r.log2_constant, cap + eps * l + 1e-9) << l;
  }
}

TEST(Certify, RuntimeUnderTenSeconds) {
  auto t0 = std::chrono::steady_clock::now();
  for (double e : {0.5, 0.25, 0.1}) EXPECT_TRUE(snmm_halting_check(toy(e)).pass);
  for (double eta : {1.0, 0.5, 0.1}) EXPECT_TRUE(s1bd_closure_check(eta).admissible);
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(dt, 10.0);
}
