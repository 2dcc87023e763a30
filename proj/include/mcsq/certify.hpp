#pragma once
// Closure arithmetic for the induction-on-scales recursions, evaluated in log space.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsq {

struct RecursionConfig {
  double epsilon = 0.5;
  int n = 2;
  double c_small = 2.0;   // constant attached to delta = eps/8
  double c_large = 2.0;   // constant attached to delta = eps/4
  double n_factor = 0.0;  // multiplier in (n_factor * c_large)^k; 0 means use n
  std::int64_t k_cap = 50000000;
  int log2K_cap = 1 << 22;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::domain_error("epsilon must lie in (0,1)");
    if (n < 1) throw std::domain_error("n must be positive");
    if (!(c_small > 0.0 && c_large > 0.0) || n_factor < 0.0) throw std::domain_error("constants must be positive");
  }
  double growth() const { return (n_factor > 0.0 ? n_factor : static_cast<double>(n)) * c_large; }
};

struct SnmmWitness {
  std::int64_t k = 0;
  double log2_r = 0.0;
  double log_value = 0.0;  // natural log of the left side; pass iff <= 0
};

struct SnmmResult {
  bool pass = false;
  int minimal_log2K = -1;
  std::int64_t k_peak = 0;    // integer k maximizing the left side at r = K
  std::int64_t k_turn = 0;    // first k from which the k-slope is negative
  double tail_slope = 0.0;    // k-slope at k_turn (negative certifies the tail)
  std::vector<SnmmWitness> witnesses;
  std::string message;
};

// natural log of C_{e/8} K^{e/8} (n C_{e/4})^k r^{-(e/2)(1+(e/4)^n)^k}
inline double snmm_log_lhs(const RecursionConfig& c, std::int64_t k, double log2K, double log2r) {
  const double e = c.epsilon;
  const double a = std::pow(e / 4.0, c.n);
  const double ln2 = std::log(2.0);
  return std::log(c.c_small) + (e / 8.0) * log2K * ln2 + static_cast<double>(k) * std::log(c.growth()) -
         (e / 2.0) * std::exp(static_cast<double>(k) * std::log1p(a)) * log2r * ln2;
}

namespace detail {

// Worst case over r >= K is r = K; over k the log side is concave with a single peak.
struct SnmmScan {
  bool pass = true;
  std::int64_t k_peak = 1;
  std::int64_t k_turn = 1;
  double peak = -std::numeric_limits<double>::infinity();
  double tail_slope = 0.0;
};

inline SnmmScan snmm_scan(const RecursionConfig& c, double log2K) {
  SnmmScan s;
  const double e = c.epsilon;
  const double a = std::pow(e / 4.0, c.n);
  const double la = std::log1p(a);
  const double gc = std::log(c.growth());
  const double b = (e / 2.0) * log2K * std::log(2.0);
  // slope(k) = gc - b la (1+a)^k, decreasing in k
  double kstar = 1.0;
  if (gc > 0.0 && b > 0.0) kstar = std::max(1.0, std::log(gc / (b * la)) / la);
  std::int64_t kt = static_cast<std::int64_t>(std::ceil(kstar)) + 1;
  kt = std::max<std::int64_t>(kt, 2);
  if (kt > c.k_cap) kt = c.k_cap;
  s.k_turn = kt;
  s.tail_slope = gc - b * la * std::exp(static_cast<double>(kt) * la);
  std::int64_t lo = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(kstar)) - 1);
  std::int64_t hi = std::min<std::int64_t>(kt, lo + 3);
  for (std::int64_t k : {std::int64_t{1}, lo, lo + 1, lo + 2, hi, kt}) {
    if (k < 1) continue;
    double v = snmm_log_lhs(c, k, log2K, log2K);
    if (v > s.peak) { s.peak = v; s.k_peak = k; }
  }
  s.pass = s.peak <= 0.0 && s.tail_slope < 0.0;
  return s;
}

}  // namespace detail

// Exhaustive check of every k up to the turn point for a fixed K = 2^log2K.
inline bool snmm_check_fixed_K(const RecursionConfig& c, double log2K, std::int64_t* fail_k = nullptr) {
  detail::SnmmScan s = detail::snmm_scan(c, log2K);
  if (s.tail_slope >= 0.0) {
    if (fail_k) *fail_k = s.k_turn;
    return false;
  }
  for (std::int64_t k = 1; k <= s.k_turn; ++k) {
    if (snmm_log_lhs(c, k, log2K, log2K) > 0.0) {
      if (fail_k) *fail_k = k;
      return false;
    }
  }
  return true;
}

inline SnmmResult snmm_halting_check(const RecursionConfig& c) {
  c.validate();
  SnmmResult res;
  auto ok = [&](int j) { return detail::snmm_scan(c, j).pass; };
  int hi = 1;
  while (!ok(hi)) {
    if (hi >= c.log2K_cap) {
      res.message = "no K below cap 2^" + std::to_string(c.log2K_cap);
      return res;
    }
    hi = std::min(hi * 2, c.log2K_cap);
  }
  int lo = hi / 2;  // ok(lo) false unless lo == 0
  if (lo == 0 && ok(0)) hi = 0;
  while (hi - lo > 1) {
    int mid = lo + (hi - lo) / 2;
    if (ok(mid)) hi = mid; else lo = mid;
  }
  std::int64_t fail_k = 0;
  if (!snmm_check_fixed_K(c, hi, &fail_k)) {
    res.message = "exhaustive scan failed at k = " + std::to_string(fail_k);
    return res;
  }
  detail::SnmmScan s = detail::snmm_scan(c, hi);
  res.pass = true;
  res.minimal_log2K = hi;
  res.k_peak = s.k_peak;
  res.k_turn = s.k_turn;
  res.tail_slope = s.tail_slope;
  std::vector<std::int64_t> ks = {1, 2, 3, s.k_peak, s.k_turn, 2 * s.k_turn};
  for (std::int64_t k : ks) {
    for (double extra : {0.0, 1.0, 10.0}) {
      double lr = hi + extra;
      res.witnesses.push_back({k, lr, snmm_log_lhs(c, k, hi, lr)});
    }
  }
  if (hi > 0) {
    double v = detail::snmm_scan(c, hi - 1).peak;
    res.witnesses.push_back({detail::snmm_scan(c, hi - 1).k_peak, static_cast<double>(hi - 1), v});
  }
  res.message = "minimal K = 2^" + std::to_string(hi);
  return res;
}

inline bool snmm_witness_holds(const RecursionConfig& c, int log2K, const SnmmWitness& w) {
  return snmm_log_lhs(c, w.k, log2K, w.log2_r) <= 0.0;
}

struct S1bdConstants {
  double c_sqrt = 10.0;     // coefficient of eps^{1/2}
  double c_first = 54.0;    // eps1 coefficient in the first exponent
  double c_square = 4.0;    // coefficient of eps^2 (and eps^{3/2} in the admissibility test)
  double c_linear = 10.0;   // coefficient of eps in the second exponent
  double c_second = 55.0;   // eps1 coefficient in the second exponent
  double safety = 4.0;      // eps1 < eps^{1/2} eta / (c_second * safety)
  int n = 3;
};

struct S1bdResult {
  bool admissible = false;
  double epsilon = 0.0;
  double epsilon1 = 0.0;
  double exponents[3] = {0.0, 0.0, 0.0};
  std::string message;
};

inline S1bdResult s1bd_closure_check(double eta, const S1bdConstants& k = {}) {
  S1bdResult r;
  if (!(eta > 0.0)) {
    r.message = "eta must be positive";
    return r;
  }
  double eps = 0.0;
  for (int j = 1; j < 200; ++j) {
    double e = std::ldexp(1.0, -j);
    double s = std::sqrt(e);
    double m = std::min(eta - k.c_sqrt * s, eta - k.c_square * e * s - k.c_sqrt * s);
    if (m > eta / 2.0) {
      eps = e;
      break;
    }
  }
  if (eps == 0.0) {
    r.message = "no admissible epsilon";
    return r;
  }
  double bound = std::sqrt(eps) * eta / (k.c_second * k.safety);
  // largest dyadic eps1 strictly below the bound that keeps all exponents positive
  double e1 = 0.0;
  for (int j = 0; j < 400; ++j) {
    double cand = std::ldexp(1.0, -j);
    if (cand >= bound) continue;
    double x1 = eta - k.c_sqrt * std::sqrt(eps) - k.c_first * cand;
    double x2 = std::sqrt(eps) * eta - k.c_square * eps * eps - k.c_linear * eps - k.c_second * cand;
    if (x1 > 0.0 && x2 > 0.0) {
      e1 = cand;
      break;
    }
  }
  r.epsilon = eps;
  r.epsilon1 = e1;
  if (e1 == 0.0) {
    r.message = "no admissible epsilon1";
    return r;
  }
  r.exponents[0] = eta - k.c_sqrt * std::sqrt(eps) - k.c_first * e1;
  r.exponents[1] = std::sqrt(eps) * eta - k.c_square * eps * eps - k.c_linear * eps - k.c_second * e1;
  r.exponents[2] = (k.n - 2) * e1;
  r.admissible = r.exponents[0] > 0.0 && r.exponents[1] > 0.0 && r.exponents[2] > 0.0;
  r.message = r.admissible ? "all exponents positive" : "third exponent vanishes (n <= 2)";
  return r;
}

struct FixedPointConfig {
  double epsilon = 0.25;
  double N0 = 2.0;          // 0 means eps^{-1/2}
  double eps1 = 0.01;       // K = R^eps1; ignored when K_const > 0
  double K_const = 0.0;     // fixed K (no scale gain when 1)
  double A = 2.0;
  double C = 1.0;           // implicit constant of the recursion
  double T_base = 1.0;      // value on the base range R < R_base
  double log2R_base = 4.0;
  double log2R_max = 4096.0;
  double delta = 0.5;       // probe exponent for T(R)/R^delta
  double overflow_log2 = 1.0e6;
};

struct FixedPointTrajectory {
  std::vector<double> log2R;
  std::vector<double> log2T;  // -inf encodes T = 0
  bool bounded = false;       // T(R)/R^delta stays bounded on the ladder
  bool diverged = false;
  double max_log2_ratio = 0.0;
  std::string message;
};

// T(R) = C (log R)^2 (K^53 [R^{10 eps N0} A^{1/eps} + R^{4eps^2+200eps} A^{1/eps} T(R^eps)^{1/eps-N0}] + T(R/K^3))
inline FixedPointTrajectory multiscale_fixed_point(const FixedPointConfig& cfg) {
  FixedPointTrajectory tr;
  const double e = cfg.epsilon;
  if (!(e > 0.0 && e < 1.0)) throw std::domain_error("epsilon must lie in (0,1)");
  const double N0 = cfg.N0 > 0.0 ? cfg.N0 : 1.0 / std::sqrt(e);
  const double ninf = -std::numeric_limits<double>::infinity();
  auto lse = [](double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    double m = std::max(a, b);
    return m + std::log2(std::exp2(a - m) + std::exp2(b - m));
  };
  const int steps = static_cast<int>(std::ceil(cfg.log2R_max));
  std::vector<double> table(steps + 1, ninf);
  const double lbase = cfg.T_base > 0.0 ? std::log2(cfg.T_base) : ninf;
  auto lookup = [&](double l2) {
    if (l2 < cfg.log2R_base) return lbase;
    int i = static_cast<int>(std::floor(l2));
    i = std::clamp(i, 0, steps);
    return table[i];
  };
  tr.max_log2_ratio = ninf;
  for (int i = 0; i <= steps; ++i) {
    double l2 = i;
    double val;
    if (l2 < cfg.log2R_base) {
      val = lbase;
    } else {
      double log2K = cfg.K_const > 0.0 ? std::log2(cfg.K_const) : cfg.eps1 * l2;
      double lA = std::log2(cfg.A) / e;
      double t1 = 10.0 * e * N0 * l2 + lA;
      double inner = lookup(e * l2);
      double power = 1.0 / e - N0;
      double t2 = (inner == ninf) ? ninf : (4.0 * e * e + 200.0 * e) * l2 + lA + power * inner;
      double rec = lookup(l2 - 3.0 * log2K);
      if (3.0 * log2K <= 0.0) {
        // no scale gain: the recursion refers to itself
        tr.diverged = true;
        tr.message = "no scale gain (K <= 1)";
        tr.log2R.push_back(l2);
        tr.log2T.push_back(std::numeric_limits<double>::infinity());
        return tr;
      }
      double logpart = 2.0 * std::log2(std::max(l2 * std::log(2.0), 1.0));
      double bracket = (cfg.T_base > 0.0) ? lse(t1, t2) : ninf;
      double head = bracket == ninf ? ninf : std::log2(cfg.C) + logpart + 53.0 * log2K + bracket;
      val = lse(head, rec == ninf ? ninf : std::log2(cfg.C) + logpart + rec);
    }
    table[i] = val;
    tr.log2R.push_back(l2);
    tr.log2T.push_back(val);
    if (val > cfg.overflow_log2) {
      tr.diverged = true;
      tr.message = "overflow at log2 R = " + std::to_string(l2);
      return tr;
    }
    if (val != ninf) tr.max_log2_ratio = std::max(tr.max_log2_ratio, val - cfg.delta * l2);
  }
  // bounded: ratio on the last quarter of the ladder does not exceed its earlier maximum
  double early = ninf, late = ninf;
  for (std::size_t i = 0; i < tr.log2T.size(); ++i) {
    if (tr.log2T[i] == ninf) continue;
    double r = tr.log2T[i] - cfg.delta * tr.log2R[i];
    if (i < 3 * tr.log2T.size() / 4) early = std::max(early, r); else late = std::max(late, r);
  }
  tr.bounded = late <= early + 1e-9;
  tr.message = tr.bounded ? "bounded" : "growing";
  return tr;
}

// polynomial exponent at which the leading terms of the recursion balance:
// delta = 53 eps1 + max(10 eps N0, (4 eps^2 + 200 eps) / (eps N0)) up to the eps1 correction
inline double fixed_point_threshold(const FixedPointConfig& cfg) {
  const double e = cfg.epsilon;
  const double N0 = cfg.N0 > 0.0 ? cfg.N0 : 1.0 / std::sqrt(e);
  const double gain = e * N0;  // 1 - eps (1/eps - N0)
  if (!(gain > 0.0)) return std::numeric_limits<double>::infinity();
  const double k = cfg.K_const > 0.0 ? 0.0 : 53.0 * cfg.eps1;
  return std::max(k + 10.0 * e * N0, (k + 4.0 * e * e + 200.0 * e) / gain);
}

struct IngredientConfig {
  double A = 2.0;       // base case constant
  double B = 2.0;       // progress constant
  double delta = 0.0;
  double K = 1.0;
  double log2_ratio = 64.0;  // log2(R/r)
  int levels = 64;
  double leaf = 1.0;    // value substituted for unresolved terms
};

struct IngredientResult {
  double log2_constant = 0.0;
  int depth = 0;
  bool resolved = false;   // every branch reached the base range before the depth cap
  bool blowup = false;     // depth cap reached without scale gain
  std::string message;
};

// Both branches D(rK,R) and D(K^2,RK/r) shrink R/r by K, so the tree is uniform.
inline IngredientResult ingredient_composition_check(const IngredientConfig& c) {
  if (!(c.A > 0 && c.B > 0 && c.K >= 1.0 && c.delta >= 0.0)) throw std::domain_error("invalid ingredient constants");
  IngredientResult res;
  const double lK = std::log2(c.K);
  const double step = std::log2(2.0 * c.A * c.B) + 2.0 * c.delta * lK;
  double ratio = c.log2_ratio;
  double acc = 0.0;
  int d = 0;
  while (d < c.levels && (lK <= 0.0 || ratio >= 3.0 * lK)) {
    acc += step;
    ratio -= lK;
    ++d;
  }
  res.depth = d;
  res.resolved = lK > 0.0 && ratio < 3.0 * lK;
  res.blowup = lK <= 0.0;
  double leaf = res.resolved ? std::log2(c.A) + c.delta * lK : std::log2(c.leaf);
  res.log2_constant = acc + leaf;
  res.message = res.blowup ? "no scale gain: constant grows geometrically with depth" : "resolved";
  return res;
}

// Parameter rule: delta = eps/4, K = (2AB)^{2/eps}; claims constant <= C_eps (R/r)^eps
inline IngredientConfig ingredient_rule(double eps, double A, double B, double log2_ratio) {
  IngredientConfig c;
  c.A = A;
  c.B = B;
  c.delta = eps / 4.0;
  c.K = std::exp2(2.0 / eps * std::log2(2.0 * A * B));
  c.log2_ratio = log2_ratio;
  c.levels = 1 << 20;
  return c;
}

inline double ingredient_rule_constant_log2(double eps, double A, double B) {
  IngredientConfig c = ingredient_rule(eps, A, B, 0.0);
  // leaf constant plus the three-step base range slack
  return std::log2(A) + c.delta * std::log2(c.K) + 3.0 * eps * std::log2(c.K);
}

}  // namespace mcsq
