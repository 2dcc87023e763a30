#include <gtest/gtest.h>

#include "mcsq/highlow.hpp"

using namespace mcsq;

namespace {
DiscreteField make(int n, double R, int c, Profile kind, std::uint64_t seed, int factor = 2) {
  auto L = make_field_lattice(n, R, c);
  ProfileSpec ps;
  ps.kind = kind;
  return synthesize(L, make_field_grid(*L, factor), ps, seed);
}
double max_abs_diff(const CField& a, const CField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
}  // namespace

TEST(Ladder, Examples) {
  for (int n : {2, 3}) {
    double R = std::pow(2.0, 2 * n);
    ScaleLadder L = build_ladder(n, R, 0.5);
    EXPECT_EQ(L.N, 2);
    EXPECT_EQ(L.scales.back(), R);
    EXPECT_EQ(L.scales.front(), 1.0);
  }
  ScaleLadder q = build_ladder(2, 4096, 0.25);
  ASSERT_EQ(q.N, 4);
  EXPECT_EQ(q.scales, (std::vector<double>{1, 8, 64, 512, 4096}));
  EXPECT_THROW(build_ladder(2, 256, 1.0), std::domain_error);
  EXPECT_THROW(build_ladder(2, 256, 0.0), std::domain_error);
}

TEST(Ladder, Monotone) {
  for (double eps : {0.5, 1.0 / 3.0, 0.25, 0.2}) {
    ScaleLadder L = build_ladder(2, 4096, eps);
    EXPECT_LE(L.N, static_cast<int>(std::ceil(1.0 / eps)));
    for (int k = 0; k < L.N; ++k) {
      EXPECT_LE(L.scales[k], L.scales[k + 1]);
      EXPECT_LE(L.block_scales[k], L.block_scales[k + 1]);
      EXPECT_GT(L.kappa[k], L.kappa[k + 1]);
      EXPECT_EQ(L.blocks_at(k + 1) % L.blocks_at(k), 0);
    }
    EXPECT_EQ(L.block_scales.back(), 4096.0);
  }
}

TEST(Prune, ThresholdExtremes) {
  DiscreteField f = make(2, 256, 2, Profile::RandomPhase, 1);
  ScaleLadder L = build_ladder(2, 256, 0.5, 2, 10, 0);
  PruneState keep = prune(f, L, 1.0, 1.0, 1e300);
  for (int k = L.N - 1; k >= 0; --k) {
    EXPECT_EQ(keep.pruned[k], 0);
    auto up = upper_on_level(keep, k);
    for (std::size_t j = 0; j < up.size(); ++j) EXPECT_EQ(max_abs_diff(keep.level[k][j], up[j]), 0.0);
  }
  EXPECT_LT(max_abs_diff(keep.level[0][0], field_samples(f)), 1e-9);

  PruneState kill = prune(f, L, 1.0, 1.0, 0.0);
  for (int k = L.N - 1; k >= 0; --k)
    for (const auto& piece : kill.level[k]) EXPECT_EQ(sup_abs(piece), 0.0);
  EXPECT_THROW(prune(f, L, 0.0, 1.0), std::domain_error);
}

TEST(Prune, BoundAndMonotonicity) {
  for (std::uint64_t seed : {2u, 3u}) {
    DiscreteField f = make(2, 256, 2, Profile::RandomPhase, seed);
    ScaleLadder L = build_ladder(2, 256, 0.5, 2, 1, 0);
    // a low threshold forces real pruning
    const double thr = 0.25 * sup_abs(field_samples(f));
    PruneState st = prune(f, L, 1.0, 1.0, thr);
    std::int64_t pruned = 0;
    for (auto v : st.pruned) pruned += v;
    EXPECT_GT(pruned, 0);
    PruneBoundReport r = prune_bound_check(st);
    EXPECT_EQ(r.monotonicity_violations, 0);
    // good tiles bound psi_T^{1/2} f; the sum of the roots of the windows is at most 2^n
    EXPECT_LE(r.worst, 4.0);
  }
}

TEST(GLevel, ZeroAndMass) {
  DiscreteField z = make(2, 256, 2, Profile::SingleBlock, 0);
  for (auto& b : z.coeffs) std::fill(b.begin(), b.end(), cplx(0.0));
  ScaleLadder L = build_ladder(2, 256, 0.5);
  PruneState zs = prune(z, L, 1.0, 1.0);
  RField g0 = g_level(zs, z.grid, 2, 1);
  EXPECT_EQ(grid_max(g0), 0.0);
  EXPECT_TRUE(low_frequency_ratio(g0, g0).vacuous);

  DiscreteField f = make(2, 256, 2, Profile::RandomPhase, 4);
  PruneState st = prune(f, L, 1.0, 1.0, 1e300);
  for (int k = L.N0; k <= L.N; ++k) {
    RField g = g_level(st, f.grid, 2, k);
    double mass = 0.0;
    const auto pieces = k >= L.N ? st.level[L.N] : upper_on_level(st, k);
    for (const auto& p : pieces)
      for (const auto& v : p) mass += std::norm(v);
    mass *= f.grid.cell_volume();
    EXPECT_NEAR(grid_integral(f.grid, g) / mass, 1.0, 0.01) << k;
    const double gmax = grid_max(g);
    for (double v : g) ASSERT_GE(v, -1e-9 * gmax);
  }
}

TEST(Split, ExactLinearAndLowPass) {
  DiscreteField f = make(2, 256, 2, Profile::RandomPhase, 5);
  ScaleLadder L = build_ladder(2, 256, 0.5);
  PruneState st = prune(f, L, 1.0, 1.0, 1e300);
  RField g = g_level(st, f.grid, 2, 1);
  const double rad = L.frequency_scale(2);
  HighLowSplit s = highlow_split(f.grid, g, rad);
  const double gmax = grid_max(g);
  for (std::size_t i = 0; i < g.size(); ++i) ASSERT_NEAR(s.low[i] + s.high[i], g[i], 1e-12 * gmax);
  EXPECT_LT(spectral_mass_outside(f.grid, s.high, 0.5 * rad, 1e300), 1e-20);

  RField g2(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) g2[i] = 3.0 * g[i];
  HighLowSplit s2 = highlow_split(f.grid, g2, rad);
  for (std::size_t i = 0; i < g.size(); i += 97) EXPECT_NEAR(s2.low[i], 3.0 * s.low[i], 1e-10 * gmax);

  // a constant has only the zero mode
  RField c(g.size(), 2.5);
  HighLowSplit sc = highlow_split(f.grid, c, rad);
  double hm = 0.0;
  for (double v : sc.high) hm += v * v;
  EXPECT_LT(hm, 1e-8 * 2.5 * 2.5 * g.size());
}

TEST(LowFrequency, BoundedAcrossSeeds) {
  double lo = 1e300, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    DiscreteField f = make(2, 256, 2, Profile::RandomPhase, seed);
    ScaleLadder L = build_ladder(2, 256, 0.5);
    PruneState st = prune(f, L, 1.0, 1.0, 1e300);
    RField g1 = g_level(st, f.grid, 2, 1), g2 = g_level(st, f.grid, 2, 2);
    LowFrequencyReport r = low_frequency_ratio(highlow_split(f.grid, g1, L.frequency_scale(2)).low, g2);
    EXPECT_GT(r.points, 0);
    lo = std::min(lo, r.ratio);
    hi = std::max(hi, r.ratio);
  }
  EXPECT_LT(hi, 4.0);
  EXPECT_LT(hi / lo, 2.0);
}

TEST(ImportantSets, PartitionExact) {
  DiscreteField f = make(2, 256, 2, Profile::RandomPhase, 6);
  ScaleLadder L = build_ladder(2, 256, 1.0 / 3.0, 2, 1.5, 1);
  PruneState st = prune(f, L, 1.0, 1.0, 1e300);
  std::vector<RField> gs(L.N + 1);
  for (int k = L.N0; k <= L.N; ++k) gs[k] = g_level(st, f.grid, 2, k);
  CField fs = field_samples(f);
  std::vector<double> mags;
  for (const auto& v : fs) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end());
  const double alpha = dyadic_floor(mags[mags.size() / 2]);
  for (double beta : {dyadic_floor(grid_max(gs[L.N])) / 4.0, 1e300}) {
    LevelSets s = important_sets(fs, gs, L, alpha, beta);
    std::int64_t total = s.count(s.low);
    for (int k = L.N0; k < L.N; ++k) total += s.count(s.omega[k]);
    EXPECT_EQ(total, s.count(s.U));
    for (std::size_t i = 0; i < fs.size(); ++i) {
      int member = s.low[i];
      for (int k = L.N0; k < L.N; ++k) member += s.omega[k][i];
      ASSERT_EQ(member, s.U[i] ? 1 : 0);
    }
  }
  // huge beta leaves U empty, so L = U trivially
  LevelSets e = important_sets(fs, gs, L, alpha, 1e300);
  EXPECT_EQ(e.count(e.U), 0);
  EXPECT_EQ(high_dominance_check(gs[1], gs[1], e.omega[1]), 0);
}

TEST(PruningError, UnprunedIsExact) {
  DiscreteField f = make(2, 256, 2, Profile::RandomPhase, 7);
  ScaleLadder L = build_ladder(2, 256, 0.5);
  PruneState st = prune(f, L, 1.0, 1.0, 1e300);
  CField fs = field_samples(f);
  std::vector<char> all(fs.size(), 1);
  EXPECT_LT(pruning_error_check(st, fs, 1, all), 1e-9);
  EXPECT_LT(pruning_error_low(st, fs, all), 1e-9);
}

TEST(BroadNarrow, Examples) {
  DiscreteField single = make(2, 256, 2, Profile::SingleBlock, 1);
  BroadNarrowReport s = broad_set(single, 4);
  EXPECT_EQ(s.broad_points, 0);
  EXPECT_EQ(s.violations, 0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    BroadNarrowReport r = broad_set(make(2, 64, 2, Profile::RandomPhase, seed), 4);
    EXPECT_EQ(r.violations, 0) << seed;
  }
  EXPECT_THROW(broad_set(single, 2), std::domain_error);
}

TEST(Pigeonhole, EqualAndTwoClasses) {
  DiscreteField f = make(2, 64, 2, Profile::RandomPhase, 3);
  const double a = sup_abs(field_samples(f));
  PigeonholeResult r = pigeonhole_packets(f, 0.25 * a);
  EXPECT_GT(r.report.packets_retained, 0);
  EXPECT_LE(r.report.spread, 4.0);
  EXPECT_GE(r.report.retained_fraction, 1.0 / std::log(64.0));

  // one block scaled far down falls below the degenerate floor
  DiscreteField g = f;
  for (auto& v : g.coeffs[1]) v *= std::pow(64.0, -10.0);
  PigeonholeResult q = pigeonhole_packets(g, 0.25 * a);
  EXPECT_GT(q.report.packets_negligible, 0);
  EXPECT_EQ(sup_abs(q.blocks[1]), 0.0);

  DiscreteField z = f;
  for (auto& b : z.coeffs)
    for (auto& v : b) v *= 1e-30;
  EXPECT_THROW(pigeonhole_packets(z, 1.0), std::domain_error);
}

TEST(Cascade, SingleBlockTerminates) {
  DiscreteField f = make(2, 256, 2, Profile::SingleBlock, 1);
  ScaleLadder L = build_ladder(2, 256, 0.5);
  CascadeTrace t = unwind_cascade(f, L, 4.0);
  ASSERT_TRUE(t.terminated);
  ASSERT_EQ(t.steps.size(), 1u);
  EXPECT_EQ(t.steps[0].branch, "terminal");
  EXPECT_NEAR(t.steps[0].constant, 1.0, 1e-9);
}

TEST(Cascade, PlancherelAtTwo) {
  DiscreteField f = make(2, 256, 2, Profile::RandomPhase, 2);
  ScaleLadder L = build_ladder(2, 256, 0.5);
  CascadeTrace t = unwind_cascade(f, L, 2.0);
  ASSERT_TRUE(t.terminated);
  for (const auto& s : t.steps) EXPECT_LE(s.constant, 1.0 + 1e-6);
  EXPECT_LE(static_cast<int>(t.steps.size()), t.step_cap);
  EXPECT_THROW(unwind_cascade(f, L, 1.5), std::domain_error);
}

TEST(Cascade, FocusingRefinementStable) {
  ScaleLadder L = build_ladder(2, 256, 0.5);
  CascadeTrace a = unwind_cascade(make(2, 256, 2, Profile::Focusing, 0, 2), L, 4.0);
  CascadeTrace b = unwind_cascade(make(2, 256, 2, Profile::Focusing, 0, 4), L, 4.0);
  ASSERT_TRUE(a.terminated && b.terminated);
  EXPECT_TRUE(std::isfinite(a.final_constant));
  EXPECT_LT(std::abs(a.final_constant - b.final_constant) / b.final_constant, 0.3);
}

TEST(Cascade, StepCapReported) {
  ScaleLadder L = build_ladder(2, 256, 0.25);
  CascadeTrace t = unwind_cascade(make(2, 256, 2, Profile::RandomPhase, 0), L, 4.0, 2);
  EXPECT_FALSE(t.terminated);
  EXPECT_EQ(t.message, "step cap reached before termination");
}

TEST(RunHighLow, EndToEnd) {
  HighLowConfig cfg;
  HighLowResult r = run_highlow(cfg);
  EXPECT_TRUE(std::isfinite(r.D));
  EXPECT_GT(r.D, 0.0);
  EXPECT_NEAR(r.A, cfg.A_factor * std::max(r.D, 1.0), 1e-12);
  std::int64_t parts = r.low_set;
  for (const auto& lv : r.levels) {
    parts += lv.omega;
    EXPECT_EQ(lv.violations, 0);
    EXPECT_EQ(lv.steep_violations, 0);
    EXPECT_LE(lv.pruning_error, 1.0);
    EXPECT_LT(lv.high_leakage, 1e-6);
    EXPECT_LE(lv.low_ratio, r.D * (1.0 + 1e-9) + 1e-12);
  }
  EXPECT_EQ(parts, r.U);
  EXPECT_GT(r.U, 0);
  EXPECT_LE(r.low_error, 1.0);
  EXPECT_LE(r.prune_bound, 1.0 + 1e-9);
  EXPECT_EQ(r.monotonicity_violations, 0);
}
