#pragma once
// Moment-curve blocks, Taylor-cone sectors, dual boxes and brute-force overlap probes.
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kMembershipTol = 1e-9;

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// i-th derivative of (t, t^2, ..., t^n)
inline Vec moment_derivative(int n, double t, int i) {
  Vec v = Vec::Zero(n);
  for (int j = 1; j <= n; ++j) {
    if (j < i) continue;
    v(j - 1) = factorial(j) / factorial(j - i) * std::pow(t, j - i);
  }
  return v;
}

inline Vec moment_curve(int n, double t) {
  if (n < 1) throw std::domain_error("moment_curve: n must be positive");
  return moment_derivative(n, t, 0);
}

// i-th derivative of (1, t/1!, ..., t^n/n!)
inline Vec phi_derivative(int n, double t, int i) {
  Vec v = Vec::Zero(n + 1);
  for (int j = i; j <= n; ++j) v(j) = std::pow(t, j - i) / factorial(j - i);
  return v;
}

inline Vec phi_curve(int n, double t) { return phi_derivative(n, t, 0); }

inline Mat moment_frame(int n, double t) {
  Mat F(n, n);
  for (int i = 1; i <= n; ++i) F.col(i - 1) = moment_derivative(n, t, i);
  return F;
}

inline Mat phi_frame(int n, double t) {
  Mat F(n + 1, n + 1);
  for (int i = 0; i <= n; ++i) F.col(i) = phi_derivative(n, t, i);
  return F;
}

// R = 2^{n j}; returns R^{1/n} as an integer count
inline std::int64_t blocks_per_side(int n, double R) {
  if (n < 1 || !(R >= 1.0)) throw std::domain_error("inadmissible scale");
  double l = std::log2(R);
  double lr = std::round(l);
  if (std::abs(l - lr) > 1e-9 || static_cast<std::int64_t>(lr) % n != 0)
    throw std::domain_error("scale R = " + std::to_string(R) + " is not a power of 2^" + std::to_string(n));
  return std::int64_t{1} << (static_cast<std::int64_t>(lr) / n);
}

inline bool is_admissible_scale(int n, double R) {
  try {
    blocks_per_side(n, R);
    return true;
  } catch (const std::domain_error&) {
    return false;
  }
}

struct MomentBlock {
  int n = 0;
  double R = 1.0;
  std::int64_t index = 0;
  double t0 = 0.0;
  double width = 1.0;
  Mat frame;
  Vec half_widths;

  Vec center() const { return moment_curve(n, t0); }
  Vec coordinates(const Vec& xi) const { return frame.triangularView<Eigen::Lower>().solve(xi - center()); }
};

inline MomentBlock make_block(int n, double R, std::int64_t index) {
  std::int64_t m = blocks_per_side(n, R);
  if (index < 0 || index >= m) throw std::out_of_range("block index out of range");
  MomentBlock b;
  b.n = n;
  b.R = R;
  b.index = index;
  b.width = 1.0 / static_cast<double>(m);
  b.t0 = index * b.width;
  b.frame = moment_frame(n, b.t0);
  b.half_widths = Vec(n);
  for (int i = 1; i <= n; ++i) b.half_widths(i - 1) = std::pow(R, -static_cast<double>(i) / n);
  return b;
}

inline std::vector<MomentBlock> partition_moment(int n, double R) {
  std::int64_t m = blocks_per_side(n, R);
  std::vector<MomentBlock> out;
  out.reserve(m);
  for (std::int64_t i = 0; i < m; ++i) out.push_back(make_block(n, R, i));
  return out;
}

inline bool block_contains(const MomentBlock& b, const Vec& xi, double dilate = 1.0) {
  if (xi.size() != b.n) throw std::invalid_argument("block_contains: dimension mismatch");
  if (std::abs(b.frame.determinant()) < 1e-300) throw std::runtime_error("singular frame");
  Vec lam = b.coordinates(xi);
  for (int i = 0; i < b.n; ++i)
    if (std::abs(lam(i)) > dilate * (1.0 + kMembershipTol) * b.half_widths(i)) return false;
  return true;
}

struct TaylorConeSector {
  int n = 0;
  int m = 0;
  double R = 1.0;
  std::int64_t index = 0;
  double a = 0.0;
  double width = 1.0;
  Mat frame;        // (n+1)x(n+1), unit lower triangular
  Vec half_widths;  // R^{-i/n}, i = 0..n
};

inline Vec cone_coordinates(int n, double t, const Vec& xi) {
  return phi_frame(n, t).triangularView<Eigen::UnitLower>().solve(xi);
}

inline bool cone_box_ok(int n, double R, const Vec& lam) {
  for (int i = 0; i <= n; ++i)
    if (std::abs(lam(i)) > (1.0 + kMembershipTol) * std::pow(R, -static_cast<double>(i) / n)) return false;
  return true;
}

// max_{0<=j<=m} |lam_j| 2^{m+1-j} R^{j/n} >= 1
inline bool cone_low_bound_ok(int n, int m, double R, const Vec& lam) {
  double best = 0.0;
  for (int j = 0; j <= m; ++j)
    best = std::max(best, std::abs(lam(j)) * std::ldexp(1.0, m + 1 - j) * std::pow(R, static_cast<double>(j) / n));
  return best >= 1.0 - kMembershipTol;
}

inline std::vector<TaylorConeSector> partition_cone(int n, int m, double R, double c_block = 1.0) {
  if (m < 0 || m > n - 1) throw std::domain_error("partition_cone: need 0 <= m <= n-1");
  if (!(c_block > 0.0 && c_block <= 1.0)) throw std::domain_error("partition_cone: c_block must lie in (0,1]");
  std::int64_t per = blocks_per_side(n, R);
  double w = c_block / static_cast<double>(per);
  std::int64_t count = static_cast<std::int64_t>(std::ceil(1.0 / w - 1e-9));
  std::vector<TaylorConeSector> out;
  for (std::int64_t i = 0; i < count; ++i) {
    TaylorConeSector s;
    s.n = n;
    s.m = m;
    s.R = R;
    s.index = i;
    s.width = w;
    s.a = i * w;
    s.frame = phi_frame(n, s.a);
    s.half_widths = Vec(n + 1);
    for (int k = 0; k <= n; ++k) s.half_widths(k) = std::pow(R, -static_cast<double>(k) / n);
    out.push_back(std::move(s));
  }
  return out;
}

inline bool sector_contains(const TaylorConeSector& s, const Vec& xi) {
  if (xi.size() != s.n + 1) throw std::invalid_argument("sector_contains: dimension mismatch");
  Vec lam = s.frame.triangularView<Eigen::UnitLower>().solve(xi);
  return cone_box_ok(s.n, s.R, lam) && cone_low_bound_ok(s.n, s.m, s.R, lam);
}

// Membership in the union over t in [0,1]: grid scan plus golden-section refinement of the box violation.
inline bool cone_contains(int n, int m, double R, const Vec& xi, int grid = 0) {
  if (xi.size() != n + 1) throw std::invalid_argument("cone_contains: dimension mismatch");
  auto violation = [&](double t) {
    Vec lam = cone_coordinates(n, t, xi);
    double v = 0.0;
    for (int i = 0; i <= n; ++i) v = std::max(v, std::abs(lam(i)) / std::pow(R, -static_cast<double>(i) / n));
    return v;
  };
  auto accept = [&](double t) {
    Vec lam = cone_coordinates(n, t, xi);
    return cone_box_ok(n, R, lam) && cone_low_bound_ok(n, m, R, lam);
  };
  if (grid <= 0) grid = static_cast<int>(std::min<double>(1 << 16, 64.0 * std::pow(R, 1.0 / n) + 64.0));
  std::vector<std::pair<double, double>> scored;
  scored.reserve(grid + 1);
  for (int g = 0; g <= grid; ++g) {
    double t = static_cast<double>(g) / grid;
    if (accept(t)) return true;
    scored.push_back({violation(t), t});
  }
  std::partial_sort(scored.begin(), scored.begin() + std::min<std::size_t>(4, scored.size()), scored.end());
  const double h = 1.0 / grid;
  for (std::size_t c = 0; c < std::min<std::size_t>(4, scored.size()); ++c) {
    double lo = std::max(0.0, scored[c].second - h), hi = std::min(1.0, scored[c].second + h);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = violation(x1), f2 = violation(x2);
    for (int it = 0; it < 80; ++it) {
      if (f1 < f2) {
        hi = x2; x2 = x1; f2 = f1; x1 = hi - gr * (hi - lo); f1 = violation(x1);
      } else {
        lo = x1; x1 = x2; f1 = f2; x2 = lo + gr * (hi - lo); f2 = violation(x2);
      }
    }
    if (accept(0.5 * (lo + hi))) return true;
  }
  return false;
}

struct DualBox {
  Vec center;
  Mat axes;  // columns orthonormal
  Vec half_lengths;

  double orthonormality_residual() const {
    return (axes.transpose() * axes - Mat::Identity(axes.cols(), axes.cols())).cwiseAbs().maxCoeff();
  }
  double volume() const { return std::pow(2.0, static_cast<double>(half_lengths.size())) * half_lengths.prod(); }
};

// modified Gram-Schmidt on the derivative frame
inline Mat gram_schmidt(const Mat& F) {
  Mat Q = F;
  for (int j = 0; j < Q.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < j; ++i) Q.col(j) -= Q.col(i).dot(Q.col(j)) * Q.col(i);
    double nrm = Q.col(j).norm();
    if (nrm < 1e-300) throw std::runtime_error("degenerate frame in Gram-Schmidt");
    Q.col(j) /= nrm;
  }
  return Q;
}

inline DualBox dual_box(const MomentBlock& b) {
  DualBox d;
  d.center = Vec::Zero(b.n);
  d.axes = gram_schmidt(b.frame);
  d.half_lengths = Vec(b.n);
  for (int i = 1; i <= b.n; ++i) d.half_lengths(i - 1) = std::pow(b.R, static_cast<double>(i) / b.n);
  return d;
}

// Zonotope {c + G beta : |beta_i| <= 1} contains the origin iff no facet normal separates.
inline bool zonotope_contains_origin(const Vec& c, const Mat& G, double tol = 1e-12) {
  const int n = static_cast<int>(c.size());
  auto separates = [&](const Vec& u) {
    double nu = u.norm();
    if (nu < 1e-14) return false;
    double support = (G.transpose() * u).cwiseAbs().sum();
    return std::abs(u.dot(c)) > support + tol * (support + std::abs(u.dot(c)) + nu);
  };
  for (int a = 0; a < n; ++a)
    if (separates(Vec::Unit(n, a))) return false;
  const int g = static_cast<int>(G.cols());
  if (n == 1) return true;
  if (n == 2) {
    for (int i = 0; i < g; ++i) {
      Vec u(2);
      u << -G(1, i), G(0, i);
      if (separates(u)) return false;
    }
    return true;
  }
  // facet normals are orthogonal complements of (n-1)-subsets of generators
  std::vector<int> idx(n - 1);
  std::function<bool(int, int)> rec = [&](int start, int depth) -> bool {
    if (depth == n - 1) {
      Mat S(n, n - 1);
      for (int k = 0; k < n - 1; ++k) S.col(k) = G.col(idx[k]);
      Eigen::FullPivLU<Mat> lu(S.transpose());
      Mat ker = lu.kernel();
      if (ker.cols() == 1 && separates(ker.col(0))) return true;
      return false;
    }
    for (int i = start; i < g; ++i) {
      idx[depth] = i;
      if (rec(i + 1, depth + 1)) return true;
    }
    return false;
  };
  return !rec(0, 0);
}

struct OverlapCensus {
  int n = 0;
  double R = 0.0;
  int max_overlap = 0;
  std::map<int, std::int64_t> histogram;  // overlap count -> number of pairs
  int diagonal_min = 0;
};

// Bounding box, in the frame at the interval midpoint, of the slab piece
// {gamma(s) + sum_{i>=2} nu_i gamma^(i)(s) : s in I, |nu_i| <= R^{-i/n}}.
struct SlabBox {
  Vec center;
  Mat frame;
  Vec half_widths;
  Mat generators() const { return frame * half_widths.asDiagonal(); }
};

inline SlabBox slab_box(const MomentBlock& b, double thickness = 1.0) {
  SlabBox s;
  const int n = b.n;
  const double w = b.width;
  const double tc = b.t0 + 0.5 * w;
  s.center = moment_curve(n, tc);
  s.frame = moment_frame(n, tc);
  s.half_widths = Vec(n);
  for (int i = 1; i <= n; ++i) {
    double h = std::pow(0.5 * w, i) / factorial(i);
    for (int j = 2; j <= i; ++j) h += thickness * std::pow(b.R, -static_cast<double>(j) / n) * std::pow(0.5 * w, i - j) / factorial(i - j);
    s.half_widths(i - 1) = h;
  }
  return s;
}

// For every unordered pair (i,j), count unordered pairs (l,k) with (theta_i+theta_j) meeting (theta_l+theta_k).
inline OverlapCensus sumset_overlap_census(int n, double R, double thickness = 1.0, std::int64_t pair_cap = 4096) {
  auto blocks = partition_moment(n, R);
  const std::int64_t m = static_cast<std::int64_t>(blocks.size());
  if (m * (m + 1) / 2 > pair_cap) throw std::runtime_error("sumset census: resource cap exceeded");
  std::vector<Mat> gens(m);
  std::vector<Vec> centers(m);
  for (std::int64_t i = 0; i < m; ++i) {
    SlabBox sb = slab_box(blocks[i], thickness);
    gens[i] = sb.generators();
    centers[i] = sb.center;
  }
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) pairs.push_back({i, j});
  OverlapCensus out;
  out.n = n;
  out.R = R;
  out.diagonal_min = 1 << 30;
  Mat G(n, 4 * n);
  for (auto [i, j] : pairs) {
    int count = 0;
    for (auto [l, k] : pairs) {
      Vec c = centers[i] + centers[j] - centers[l] - centers[k];
      G << gens[i], gens[j], gens[l], gens[k];
      if (zonotope_contains_origin(c, G)) ++count;
    }
    out.histogram[count]++;
    out.max_overlap = std::max(out.max_overlap, count);
    if (i == j) out.diagonal_min = std::min(out.diagonal_min, count);
  }
  return out;
}

struct NestingReport {
  int n = 0;
  int m = 0;
  double R = 0.0, r = 0.0;
  int samples = 0;
  int violations = 0;                 // m = 0: sampled points of the fine cone missing from the coarse cone
  bool witness_fine_minus_coarse = false;
  bool witness_coarse_minus_fine = false;
  bool symmetric_difference_empty = false;
};

inline Vec sample_cone_point(int n, int m, double R, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    double t = U(rng);
    Vec lam(n + 1);
    for (int i = 0; i <= n; ++i) {
      double hw = std::pow(R, -static_cast<double>(i) / n);
      lam(i) = (2.0 * U(rng) - 1.0) * hw;
    }
    if (m == 0) {
      double s = U(rng) < 0.5 ? -1.0 : 1.0;
      lam(0) = s * (0.5 + 0.5 * U(rng));
    }
    if (!cone_low_bound_ok(n, m, R, lam)) continue;
    return phi_frame(n, t) * lam;
  }
  throw std::runtime_error("sample_cone_point: rejection sampling failed");
}

// point of {0}^m x s^{-m/n} Gamma_0^{n-m+1}(R^{(n-m)/n}) with lowest coefficient lam0
inline Vec embedded_cone_point(int n, int m, double R, double s, double t, double lam0) {
  const int nn = n - m;
  const double Rl = std::pow(R, static_cast<double>(nn) / n);
  Vec lam = Vec::Zero(nn + 1);
  lam(0) = lam0;
  for (int i = 1; i <= nn; ++i) lam(i) = 0.5 * std::pow(Rl, -static_cast<double>(i) / nn);
  Vec low = phi_frame(nn, t) * lam;
  Vec xi = Vec::Zero(n + 1);
  xi.tail(nn + 1) = std::pow(s, -static_cast<double>(m) / n) * low;
  return xi;
}

inline NestingReport cone_nesting_check(int n, int m, double R, double r, int samples, std::uint64_t seed = 1) {
  if (!(r <= R)) throw std::domain_error("cone_nesting_check: need r <= R");
  if (m < 0 || m > n - 1) throw std::domain_error("cone_nesting_check: need 0 <= m <= n-1");
  NestingReport rep;
  rep.n = n;
  rep.m = m;
  rep.R = R;
  rep.r = r;
  rep.samples = samples;
  std::mt19937_64 rng(seed);
  if (m == 0) {
    for (int s = 0; s < samples; ++s) {
      Vec xi = sample_cone_point(n, 0, R, rng);
      if (!cone_contains(n, 0, r, xi)) ++rep.violations;
    }
    rep.symmetric_difference_empty = true;
    return rep;
  }
  if (r == R) {
    rep.symmetric_difference_empty = true;
    return rep;
  }
  for (double t : {0.0, 0.25, 0.5, 0.75}) {
    Vec a = embedded_cone_point(n, m, R, R, t, 0.75);
    if (cone_contains(n, m, R, a) && !cone_contains(n, m, r, a)) rep.witness_fine_minus_coarse = true;
    Vec b = embedded_cone_point(n, m, R, r, t, 0.75);
    if (cone_contains(n, m, r, b) && !cone_contains(n, m, R, b)) rep.witness_coarse_minus_fine = true;
  }
  return rep;
}

struct L2TechProbe {
  int n = 0;
  double r = 0.0;
  double lambda = 0.0;
  int trials = 0;
  int admissible_systems = 0;
  double max_T = 0.0;
  double normalized = 0.0;  // max_T * r^{1/n}
};

struct L2TechConfig {
  double C = 1.0;
  double c = 0.5;
  double T_max = 0.25;  // shift window |T| <= 1/L
  int scan = 4000;
  std::uint64_t seed = 7;
};

// Residuals of the hypothesis at T: max_k |H1_kk - sum_i H2_ki T^{k-i}/(k-i)!| / (C lambda / r)
inline double l2tech_violation(const Mat& H1diag, const Mat& H2, double T, double bound) {
  const int n = static_cast<int>(H2.rows());
  double v = 0.0;
  for (int k = 1; k <= n; ++k) {
    double s = 0.0;
    for (int i = 0; i <= k; ++i) s += H2(k - 1, i) * std::pow(T, k - i) / factorial(k - i);
    v = std::max(v, std::abs(H1diag(k - 1, 0) - s) / bound);
  }
  return v;
}

inline L2TechProbe l2tech_overlap_probe(int n, double r, double lambda, int trials, const L2TechConfig& cfg = {}) {
  if (n < 1) throw std::domain_error("l2tech: n must be positive");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::domain_error("l2tech: lambda must lie in (0,1]");
  L2TechProbe out;
  out.n = n;
  out.r = r;
  out.lambda = lambda;
  out.trials = trials;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double bound = cfg.C * lambda / r;
  for (int trial = 0; trial < trials; ++trial) {
    Mat H2;
    Mat H1(n, 1);
    bool built = false;
    for (int attempt = 0; attempt < 200 && !built; ++attempt) {
      int k0 = static_cast<int>(U(rng) * n);
      std::vector<int> kv(n);
      bool nonzero = false;
      for (int i = 0; i < n; ++i) {
        kv[i] = static_cast<int>(std::floor(U(rng) * 3.0)) - 1;
        nonzero |= kv[i] != 0;
      }
      if (!nonzero) continue;
      H2 = Mat::Zero(n, n + 1);
      bool ok = true;
      for (int k = 1; k <= n && ok; ++k) {
        for (int i = 0; i <= k && ok; ++i) {
          double upper = cfg.C * std::min(std::pow(r, -static_cast<double>(i) / n), lambda);
          double lower = 0.0;
          double sign = U(rng) < 0.5 ? -1.0 : 1.0;
          if (i == k0) lower = std::max(lower, cfg.c * std::pow(r, -static_cast<double>(k0) / n));
          if (i < n && kv[i] != 0) {
            lower = std::max(lower, cfg.c * lambda);
            sign = kv[i];
          }
          if (lower > upper) ok = false;
          else H2(k - 1, i) = sign * (lower + (upper - lower) * U(rng));
        }
      }
      if (!ok) continue;
      for (int k = 1; k <= n; ++k) H1(k - 1, 0) = H2(k - 1, k) + (2.0 * U(rng) - 1.0) * bound;
      built = true;
    }
    if (!built) continue;
    ++out.admissible_systems;
    // farthest admissible grid point on each side, then bisection outward
    for (double side : {1.0, -1.0}) {
      double best = 0.0;
      for (int g = 1; g <= cfg.scan; ++g) {
        double T = side * cfg.T_max * g / cfg.scan;
        if (l2tech_violation(H1, H2, T, bound) <= 1.0) best = std::abs(T);
      }
      double lo = best, hi = std::min(cfg.T_max, best + cfg.T_max / cfg.scan);
      if (best > 0.0 || l2tech_violation(H1, H2, 0.0, bound) <= 1.0) {
        for (int it = 0; it < 60; ++it) {
          double mid = 0.5 * (lo + hi);
          if (l2tech_violation(H1, H2, side * mid, bound) <= 1.0) lo = mid; else hi = mid;
        }
      }
      out.max_T = std::max(out.max_T, lo);
    }
  }
  if (out.admissible_systems == 0) throw std::runtime_error("l2tech: no admissible coefficient system generated");
  out.normalized = out.max_T * std::pow(r, 1.0 / n);
  return out;
}

}  // namespace mcsq
