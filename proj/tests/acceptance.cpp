// Acceptance driver: one PASS/FAIL line per criterion, tolerances pinned below.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mcsq/certify.hpp"
#include "mcsq/exponents.hpp"
#include "mcsq/functionals.hpp"
#include "mcsq/geometry.hpp"
#include "mcsq/highlow.hpp"
#include "mcsq/weights.hpp"

using namespace mcsq;

namespace tol {
constexpr double exponents_seconds = 1.0;
constexpr int pprops_n_max = 200;
constexpr double bounded_slope = 0.1;
constexpr double bounded_seconds = 300.0;
constexpr int bounded_seeds = 16;
constexpr int optimizer_starts = 2;
constexpr int optimizer_budget = 10;
constexpr double growth_slope = 0.25;
constexpr double baseline_refinement = 0.10;
constexpr double low_frequency_config = 4.0;
constexpr double seed_spread = 2.0;
constexpr double highlow_seconds = 600.0;
constexpr int highlow_seeds = 20;
constexpr double pruning_error = 1.0;
constexpr int local_l2_instances = 50;
constexpr double refinement_spread = 2.0;
constexpr int nesting_samples = 10000;
constexpr double l2tech_spread = 2.0;
constexpr double weight_drift = 0.10;
constexpr double weight_fourier_tail = 1e-6;
constexpr double weight_monotonicity = 2.0;
constexpr double weight_box = 16.0;
constexpr double certify_seconds = 10.0;
constexpr int cascade_fields = 20;
constexpr double plancherel_slack = 1e-6;
constexpr double gradient_error = 1e-5;
constexpr int gradient_fields = 5;
constexpr int gradient_coords = 10;
}  // namespace tol

namespace {

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s AC%d %s: %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
}

void guarded(int id, const std::string& what, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, what, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

DiscreteField make(int n, double R, Profile kind, std::uint64_t seed, int c = 0, int factor = 2) {
  auto L = make_field_lattice(n, R, c);
  ProfileSpec ps;
  ps.kind = kind;
  return synthesize(L, make_field_grid(*L, factor), ps, seed);
}

const std::vector<double> kLadder{64.0, 256.0, 1024.0, 4096.0};

void exponents_check() {
  auto t0 = std::chrono::steady_clock::now();
  const bool values = critical_exponent_int(2) == 4 && critical_exponent_int(3) == 7 && critical_exponent_int(4) == 11;
  PpropsReport r = verify_pprops(tol::pprops_n_max);
  const double dt = seconds_since(t0);
  std::int64_t checked = r.checked[0] + r.checked[1] + r.checked[2] + r.checked[3];
  report(1, values && r.all_pass() && dt < tol::exponents_seconds, "exponent arithmetic",
         "p2,p3,p4 = " + std::to_string(critical_exponent_int(2)) + "," + std::to_string(critical_exponent_int(3)) + "," +
             std::to_string(critical_exponent_int(4)) + "; " + std::to_string(checked) + " property checks, " +
             std::to_string(r.failed[0] + r.failed[1] + r.failed[2] + r.failed[3]) + " failed; " + fmt("%.3f s", dt));
}

void bounded_check() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<double> ens, opt;
  std::string detail;
  for (double R : kLadder) {
    auto L = make_field_lattice(2, R, 0);
    Grid g = make_field_grid(*L, 2);
    double worst = 0.0;
    for (int s = 0; s < tol::bounded_seeds; ++s) {
      ProfileSpec ps;
      worst = std::max(worst, sq_constant(synthesize(L, g, ps, 1000 + s), 4.0).ratio);
    }
    double best = 0.0;
    for (int s = 0; s < tol::optimizer_starts; ++s) {
      ProfileSpec ps;
      OptimizeOptions o;
      o.budget = tol::optimizer_budget;
      o.amplitudes = true;
      best = std::max(best, maximize_ratio(synthesize(L, g, ps, 2000 + s), 4.0, o).ratio);
    }
    ens.push_back(worst);
    opt.push_back(std::max(best, worst));
    detail += fmt(" R=%g", R) + fmt(":%.3f", worst) + fmt("/%.3f", opt.back());
  }
  const double se = loglog_slope(kLadder, ens), so = loglog_slope(kLadder, opt);
  const double dt = seconds_since(t0);
  report(2, se <= tol::bounded_slope && so <= tol::bounded_slope && dt < tol::bounded_seconds, "p=4 boundedness",
         "ensemble/optimized max" + detail + fmt("; slopes %.4f", se) + fmt(", %.4f", so) + fmt("; %.1f s", dt));
}

void growth_check() {
  std::vector<double> v;
  std::string detail;
  for (double R : kLadder) {
    v.push_back(sq_constant(make(2, R, Profile::Focusing, 0), 6.0).ratio);
    detail += fmt(" R=%g", R) + fmt(":%.3f", v.back());
  }
  const double slope = loglog_slope(kLadder, v);
  const double fine = sq_constant(make(2, kLadder[0], Profile::Focusing, 0), 6.0, 2).ratio;
  const double drift = std::abs(fine - v[0]) / v[0];
  report(3, slope >= tol::growth_slope && drift <= tol::baseline_refinement, "p=6 focusing growth",
         "ratios" + detail + fmt("; slope %.4f", slope) + fmt("; baseline refinement drift %.2e", drift));
}

void highlow_checks() {
  auto t0 = std::chrono::steady_clock::now();
  double worst_D = 0.0, worst_spread = 0.0, worst_err = 0.0;
  std::int64_t violations = 0, omega = 0, steep = 0, pruned = 0, runs = 0;
  std::string detail;
  for (int n : {2, 3}) {
    for (double eps : {0.5, 1.0 / 3.0}) {
      double lo = 1e300, hi = 0.0;
      for (int s = 0; s < tol::highlow_seeds; ++s) {
        HighLowConfig cfg;
        cfg.n = n;
        cfg.R = n == 2 ? 256.0 : 64.0;
        cfg.oversample = n == 2 ? 2 : 1;
        cfg.epsilon = eps;
        cfg.seed = 300 + s;
        HighLowResult r = run_highlow(cfg);
        ++runs;
        lo = std::min(lo, r.D);
        hi = std::max(hi, r.D);
        worst_err = std::max(worst_err, r.low_error);
        for (const auto& lv : r.levels) {
          violations += lv.violations + lv.steep_violations;
          omega += lv.omega;
          steep += lv.steep;
          pruned += lv.pruned;
          worst_err = std::max(worst_err, lv.pruning_error);
        }
      }
      worst_D = std::max(worst_D, hi);
      worst_spread = std::max(worst_spread, hi / lo);
      detail += fmt(" n=%g", n) + fmt(" eps=%.3f", eps) + fmt(" D in [%.3f,", lo) + fmt(" %.3f]", hi);
    }
  }
  const double dt = seconds_since(t0);
  report(4, worst_D <= tol::low_frequency_config && worst_spread <= tol::seed_spread && dt < tol::highlow_seconds,
         "low-frequency domination", std::to_string(runs) + " runs;" + detail + fmt("; config %.1f", tol::low_frequency_config) +
                          fmt("; spread %.3f", worst_spread) + fmt("; %.1f s", dt));
  report(5, violations == 0, "high dominance",
         std::to_string(violations) + " violations; important-set points " + std::to_string(omega) +
             ", steep points " + std::to_string(steep));
  report(6, worst_err <= tol::pruning_error, "pruning error",
         fmt("max normalized error %.4f", worst_err) + "; pruned tiles " + std::to_string(pruned));
}

void local_l2_check_all() {
  bool pass = true;
  std::string detail;
  for (int n : {2, 3}) {
    const double R = n == 2 ? 256.0 : 64.0, r = n == 2 ? 16.0 : 64.0;
    const int c = n == 2 ? 2 : 1;
    double C[2] = {0.0, 0.0};
    for (int k = 0; k < 2; ++k) {
      auto L = make_field_lattice(n, R, c);
      Grid g = make_field_grid(*L, 2 << k);
      for (int s = 0; s < tol::local_l2_instances; ++s) {
        ProfileSpec ps;
        DiscreteField f = synthesize(L, g, ps, 4000 + s);
        std::mt19937_64 rng(s);
        Vec center(n);
        for (int a = 0; a < n; ++a) center(a) = unit_uniform(rng) * g.box[a];
        LocalL2Report rep = local_l2_check(f, 1.0, r, 4.0 * n, center);
        C[k] = std::max(C[k], rep.ratio);
      }
    }
    const double spread = std::max(C[0], C[1]) / std::min(C[0], C[1]);
    pass = pass && std::isfinite(C[0]) && spread <= tol::refinement_spread;
    detail += fmt(" n=%g", n) + fmt(" C=%.4f", C[0]) + fmt(" refined %.4f", C[1]);
  }
  report(7, pass, "local L2 orthogonality", std::to_string(tol::local_l2_instances) + " instances per n;" + detail);
}

void geometry_check() {
  std::vector<int> mx;
  std::string detail;
  for (double R : {16.0, 64.0, 256.0}) {
    mx.push_back(sumset_overlap_census(2, R).max_overlap);
    detail += fmt(" R=%g", R) + ":" + std::to_string(mx.back());
  }
  const bool census = std::all_of(mx.begin(), mx.end(), [&](int v) { return v == mx[0]; });
  NestingReport nest = cone_nesting_check(2, 0, 256, 16, tol::nesting_samples);
  std::vector<double> C;
  for (double r : {256.0, 1024.0, 4096.0}) C.push_back(l2tech_overlap_probe(2, r, 1.0, 1000).normalized);
  const double cmax = *std::max_element(C.begin(), C.end());
  const bool l2tech = cmax > 0.0 && cmax / C[0] <= tol::l2tech_spread;
  report(8, census && nest.violations == 0 && l2tech, "geometry",
         "census max overlap" + detail + (census ? " (identical)" : " (not identical)") + "; nesting violations " +
             std::to_string(nest.violations) + "/" + std::to_string(nest.samples) + fmt("; l2tech C %.4f", C[0]) +
             fmt(" %.4f", C[1]) + fmt(" %.4f", C[2]));
}

void weights_check() {
  bool pass = true;
  std::string detail;
  struct Level {
    int n, coarse, fine;
  };
  for (Level lv : {Level{1, 128, 256}, Level{2, 64, 128}, Level{3, 64, 128}}) {
    const double kappa = 4.0 * lv.n;
    WeightCalculusReport a = verify_weight_calculus(lv.n, kappa, lv.coarse, tol::weight_box);
    WeightCalculusReport b = verify_weight_calculus(lv.n, kappa, lv.fine, tol::weight_box);
    const bool p1 = a.min_on_unit_ball > 0.0 && a.decay_lower > 0.0 && std::isfinite(a.decay_upper);
    const bool p2 = b.fourier_mass_outside < tol::weight_fourier_tail;
    const bool p3 = std::isfinite(b.self_convolution) && b.monotonicity <= tol::weight_monotonicity &&
                    std::isfinite(b.mixed_decay);
    const double drift = std::max(std::abs(a.self_convolution - b.self_convolution) / b.self_convolution,
                                  std::abs(a.mixed_decay - b.mixed_decay) / b.mixed_decay);
    pass = pass && p1 && p2 && p3 && drift < tol::weight_drift;
    detail += fmt(" n=%g", lv.n) + fmt(" self %.3f", b.self_convolution) + fmt(" mixed %.3f", b.mixed_decay) +
              fmt(" drift %.4f", drift) + ";";
  }
  report(9, pass, "weight calculus", fmt("kappa=4n, box %g;", tol::weight_box) + detail);
}

void certify_check() {
  auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (double eps : {0.5, 0.25, 0.1}) {
    RecursionConfig c;
    c.epsilon = eps;
    SnmmResult r = snmm_halting_check(c);
    const int K = r.minimal_log2K;
    bool ok = r.pass && K > 0 && r.witnesses.size() > 1 && snmm_check_fixed_K(c, K);
    // every witness but the last holds at K; the last one refutes K/2
    for (std::size_t i = 0; ok && i + 1 < r.witnesses.size(); ++i) {
      const auto& w = r.witnesses[i];
      ok = snmm_witness_holds(c, K, w) && std::abs(snmm_log_lhs(c, w.k, K, w.log2_r) - w.log_value) <= 1e-9 * (1.0 + std::abs(w.log_value));
    }
    if (ok) {
      const auto& w = r.witnesses.back();
      const double v = snmm_log_lhs(c, w.k, K - 1, w.log2_r);
      ok = v > 0.0 && std::abs(v - w.log_value) <= 1e-9 * (1.0 + std::abs(v));
    }
    pass = pass && ok;
    detail += fmt(" eps=%g", eps) + " K=2^" + std::to_string(r.minimal_log2K);
  }
  for (double eta : {1.0, 0.5, 0.1}) {
    S1bdResult r = s1bd_closure_check(eta);
    pass = pass && r.admissible;
    detail += fmt(" eta=%g", eta) + fmt(" (%g,", r.epsilon) + fmt(" %g)", r.epsilon1);
  }
  const double dt = seconds_since(t0);
  report(10, pass && dt < tol::certify_seconds, "certify", detail.substr(1) + fmt("; %.2f s", dt));
}

void cascade_check() {
  bool pass = true;
  int runs = 0, max_steps = 0, cap = 0;
  double worst_const = 0.0, worst_two = 0.0;
  ScaleLadder L = build_ladder(2, 256, 0.5);
  for (int s = 0; s < tol::cascade_fields; ++s) {
    DiscreteField f = make(2, 256, Profile::RandomPhase, 5000 + s, 2);
    for (double p : {4.0, 3.5}) {
      CascadeTrace t = unwind_cascade(f, L, p);
      ++runs;
      pass = pass && t.terminated && static_cast<int>(t.steps.size()) <= t.step_cap && std::isfinite(t.final_constant);
      for (const auto& st : t.steps) pass = pass && std::isfinite(st.constant);
      max_steps = std::max(max_steps, static_cast<int>(t.steps.size()));
      cap = t.step_cap;
      worst_const = std::max(worst_const, t.final_constant);
    }
    CascadeTrace two = unwind_cascade(f, L, 2.0);
    pass = pass && two.terminated;
    for (const auto& st : two.steps) worst_two = std::max(worst_two, st.constant);
  }
  pass = pass && worst_two <= 1.0 + tol::plancherel_slack;
  report(11, pass, "cascade",
         std::to_string(runs) + " runs, max steps " + std::to_string(max_steps) + " of cap " + std::to_string(cap) +
             fmt("; max final constant %.4f", worst_const) + fmt("; p=2 max step constant %.9f", worst_two));
}

void gradient_check() {
  double worst = 0.0;
  for (int s = 0; s < tol::gradient_fields; ++s)
    for (double p : {4.0, 3.5}) {
      GradientCheck gc = check_ratio_gradient(make(2, 64, Profile::RandomPhase, 6000 + s), p, tol::gradient_coords, s);
      worst = std::max(worst, gc.max_rel_error);
    }
  report(12, worst < tol::gradient_error, "gradient hygiene",
         std::to_string(tol::gradient_fields) + " fields x " + std::to_string(tol::gradient_coords) +
             fmt(" coords, p in {4, 3.5}; max relative error %.2e", worst));
}

}  // namespace

int main() {
  guarded(1, "exponent arithmetic", exponents_check);
  guarded(2, "p=4 boundedness", bounded_check);
  guarded(3, "p=6 focusing growth", growth_check);
  guarded(4, "low-frequency domination", highlow_checks);
  guarded(7, "local L2 orthogonality", local_l2_check_all);
  guarded(8, "geometry", geometry_check);
  guarded(9, "weight calculus", weights_check);
  guarded(10, "certify", certify_check);
  guarded(11, "cascade", cascade_check);
  guarded(12, "gradient hygiene", gradient_check);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
