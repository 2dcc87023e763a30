#pragma once
// Dyadic weight functions built from a compactly supported radial mollifier.
#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"

namespace mcsq {

inline constexpr double kMollifierRadius = 0.5;

inline double mollifier(double rho) {
  if (rho >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - rho * rho));
}

inline double unit_sphere_area(int d) {
  // area of S^{d-1} in R^d
  return 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
}

namespace detail {

inline void gauss_legendre(int m, std::vector<double>& x, std::vector<double>& w) {
  x.resize(m);
  w.resize(m);
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (m + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= m; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = m * (z * p1 - p2) / (z * z - 1.0);
      double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
}

// composite rule on [a,b]
inline void composite_gauss(double a, double b, int panels, int order, std::vector<double>& x, std::vector<double>& w) {
  std::vector<double> gx, gw;
  gauss_legendre(order, gx, gw);
  x.clear();
  w.clear();
  double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p)
    for (int i = 0; i < order; ++i) {
      x.push_back(a + h * (p + 0.5 * (gx[i] + 1.0)));
      w.push_back(0.5 * h * gw[i]);
    }
}

}  // namespace detail

// Radial profile of the inverse Fourier transform of the unit mollifier in R^n,
// computed through its one-dimensional projection.
class MollifierProfile {
 public:
  static const MollifierProfile& get(int n) {
    static std::mutex mu;
    static std::vector<std::unique_ptr<MollifierProfile>> cache(16);
    if (n < 1 || n >= 16) throw std::domain_error("mollifier profile: unsupported dimension");
    std::lock_guard<std::mutex> lock(mu);
    if (!cache[n]) cache[n].reset(new MollifierProfile(n));
    return *cache[n];
  }

  double r_max() const { return dr_ * (table_.size() - 4); }

  // unit-support transform at radius r (zero beyond the table)
  double unit(double r) const {
    if (r < 0.0) r = -r;
    double u = r / dr_;
    std::size_t i = static_cast<std::size_t>(u);
    if (i + 3 >= table_.size()) return 0.0;
    double t = u - i;
    double p0 = i > 0 ? table_[i - 1] : table_[1];
    double p1 = table_[i], p2 = table_[i + 1], p3 = table_[i + 2];
    return p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
  }

  // transform of psi(xi / s), s = kMollifierRadius
  double value(double r) const {
    const double s = kMollifierRadius;
    return std::pow(s, n_) * unit(s * r);
  }
  double value_sq(double r) const {
    double v = value(r);
    return v * v;
  }
  // squared L2 norm of psi(xi/s)
  double l2_sq() const { return std::pow(kMollifierRadius, n_) * l2_unit_; }
  int dim() const { return n_; }

 private:
  explicit MollifierProfile(int n) : n_(n) {
    std::vector<double> ux, uw;
    detail::composite_gauss(0.0, 1.0, 64, 16, ux, uw);
    std::vector<double> proj(ux.size());
    std::vector<double> vx, vw;
    for (std::size_t k = 0; k < ux.size(); ++k) {
      double u = ux[k];
      if (n == 1) {
        proj[k] = mollifier(u);
        continue;
      }
      double vmax = std::sqrt(std::max(0.0, 1.0 - u * u));
      detail::composite_gauss(0.0, vmax, 8, 16, vx, vw);
      double acc = 0.0;
      for (std::size_t i = 0; i < vx.size(); ++i)
        acc += vw[i] * mollifier(std::sqrt(u * u + vx[i] * vx[i])) * std::pow(vx[i], n - 2);
      proj[k] = unit_sphere_area(n - 1) * acc;
    }
    const double rmax = 80.0;
    const int m = static_cast<int>(rmax / dr_) + 4;
    table_.resize(m);
    for (int i = 0; i < m; ++i) {
      double r = i * dr_;
      double acc = 0.0;
      for (std::size_t k = 0; k < ux.size(); ++k) acc += uw[k] * proj[k] * std::cos(2.0 * M_PI * r * ux[k]);
      table_[i] = 2.0 * acc;
    }
    std::vector<double> rx, rw;
    detail::composite_gauss(0.0, 1.0, 64, 16, rx, rw);
    double l2 = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) l2 += rw[i] * std::pow(mollifier(rx[i]), 2) * std::pow(rx[i], n - 1);
    l2_unit_ = unit_sphere_area(n) * l2;
  }

  int n_;
  double dr_ = 1.0 / 64.0;
  std::vector<double> table_;
  double l2_unit_ = 0.0;
};

// sum_j 2^{-kappa j} |psi^|^2(2^{-j} r)
inline double weight_radial(int n, double kappa, double r, int j_cap = 200) {
  const MollifierProfile& P = MollifierProfile::get(n);
  const double g0 = P.value_sq(0.0);
  const double rmax = P.r_max() / kMollifierRadius;
  const double decay = std::pow(2.0, -kappa);
  double rr = std::abs(r);
  int j = 0;
  if (rr > rmax) j = static_cast<int>(std::ceil(std::log2(rr / rmax)));
  if (j > j_cap) return 0.0;
  double term_weight = std::pow(2.0, -kappa * j);
  double scale = std::ldexp(1.0, -j);
  double sum = 0.0;
  for (; j <= j_cap; ++j) {
    double u = rr * scale;
    if (u <= rmax) sum += term_weight * P.value_sq(u);
    if (u < 1.0) {
      double tail = g0 * term_weight * decay / (1.0 - decay);
      if (tail < 1e-13 * sum) break;
    }
    term_weight *= decay;
    scale *= 0.5;
  }
  return sum;
}

// integral of the isotropic weight over R^n
inline double weight_mass(int n, double kappa) {
  if (!(kappa > n)) throw std::domain_error("weight_mass: kappa must exceed n");
  return MollifierProfile::get(n).l2_sq() / (1.0 - std::pow(2.0, n - kappa));
}

enum class Normalization { None, L1, Linf };

struct WeightSpec {
  int n = 0;
  double kappa = 8.0;
  Vec center;
  Mat shape;  // T: unit ball -> support shape, x = center + shape * u
  Normalization normalization = Normalization::None;
  int j_max = 200;  // cap on dyadic terms; the sum stops earlier once the tail is below 1e-13

  void validate() const {
    if (n < 1 || center.size() != n || shape.rows() != n || shape.cols() != n)
      throw std::invalid_argument("weight spec: dimension mismatch");
    if (!(kappa > n)) throw std::domain_error("weight spec: kappa must exceed n");
    Eigen::JacobiSVD<Mat> svd(shape);
    double smin = svd.singularValues().minCoeff(), smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0) || smin < 1e-12 * smax || smin < 1e-300) throw std::domain_error("weight spec: degenerate shape");
  }
  Mat shape_inverse() const { return shape.inverse(); }
  double factor() const {
    switch (normalization) {
      case Normalization::L1:
        return 1.0 / (std::abs(shape.determinant()) * weight_mass(n, kappa));
      case Normalization::Linf:
        return 1.0 / weight_radial(n, kappa, 0.0);
      default:
        return 1.0;
    }
  }
};

inline WeightSpec isotropic_weight(int n, double kappa, double radius = 1.0, Normalization nm = Normalization::None) {
  WeightSpec s;
  s.n = n;
  s.kappa = kappa;
  s.center = Vec::Zero(n);
  s.shape = radius * Mat::Identity(n, n);
  s.normalization = nm;
  return s;
}

inline double weight_eval(const WeightSpec& s, const Vec& x) {
  if (x.size() != s.n) throw std::invalid_argument("weight_eval: dimension mismatch");
  s.validate();
  Vec u = s.shape.lu().solve(x - s.center);
  return s.factor() * weight_radial(s.n, s.kappa, u.norm(), s.j_max);
}

// L1-normalized weight adapted to the dual box of a block
inline WeightSpec omega_block(const MomentBlock& b, double kappa) {
  DualBox d = dual_box(b);
  if (d.half_lengths.minCoeff() <= 0.0) throw std::runtime_error("omega_block: degenerate dual box");
  WeightSpec s;
  s.n = b.n;
  s.kappa = kappa;
  s.center = Vec::Zero(b.n);
  s.shape = d.axes * d.half_lengths.asDiagonal();
  s.normalization = Normalization::L1;
  return s;
}

// Samples of a weight on the torus, using the nearest periodic image of each point.
inline RField sample_weight(const Grid& g, const WeightSpec& s) {
  if (g.n != s.n) throw std::invalid_argument("sample_weight: dimension mismatch");
  s.validate();
  RField out(g.size());
  const Mat Tinv = s.shape.inverse();
  const double f = s.factor();
  const int n = g.n;
  std::vector<double> c(s.center.data(), s.center.data() + n), x(n), d(n);
  std::vector<double> ti(Tinv.data(), Tinv.data() + n * n);  // column-major
  for (std::int64_t i = 0; i < g.size(); ++i) {
    std::int64_t rem = i;
    for (int a = n - 1; a >= 0; --a) {
      x[a] = static_cast<double>(rem % g.sides[a]) * g.spacing(a) - c[a];
      rem /= g.sides[a];
      x[a] -= g.box[a] * std::round(x[a] / g.box[a]);
    }
    double r2 = 0.0;
    for (int a = 0; a < n; ++a) {
      double v = 0.0;
      for (int b = 0; b < n; ++b) v += ti[b * n + a] * x[b];
      r2 += v * v;
    }
    out[i] = f * weight_radial(n, s.kappa, std::sqrt(r2), s.j_max);
  }
  return out;
}

struct WeightCalculusReport {
  int n = 0;
  double kappa = 0.0;
  int sides = 0;
  double box = 0.0;
  double decay_lower = 0.0;       // min over sampled radii of W(r) (1+r)^kappa
  double decay_upper = 0.0;       // max of the same
  double min_on_unit_ball = 0.0;  // min of W on |x| <= 1
  double fourier_mass_outside = 0.0;
  double self_convolution = 0.0;  // sup (W~ * W~) / W~
  double monotonicity = 0.0;      // sup W_{A1} / W_{A2}
  double mixed_decay = 0.0;       // sup (W~_{A1,k1} * W~_{A2,k2}) / W~_{A2,k_low}
  double grid_mass = 0.0;         // grid integral of W~ (should be 1)
  std::string note = "mixed decay checked against the lower kappa of the ladder, not the exact loss";
};

inline WeightCalculusReport verify_weight_calculus(int n, double kappa, int sides, double box,
                                                   double kappa_step = 1.0) {
  if (n < 1 || !(kappa > n + kappa_step)) throw std::domain_error("verify_weight_calculus: kappa too small");
  WeightCalculusReport rep;
  rep.n = n;
  rep.kappa = kappa;
  rep.sides = sides;
  rep.box = box;
  // property 1 along a radial ray
  rep.decay_lower = 1e300;
  rep.decay_upper = 0.0;
  rep.min_on_unit_ball = 1e300;
  for (int i = 0; i <= 4000; ++i) {
    double r = std::pow(2.0, -4.0 + 16.0 * i / 4000.0);
    double w = weight_radial(n, kappa, r);
    double q = w * std::pow(1.0 + r, kappa);
    rep.decay_lower = std::min(rep.decay_lower, q);
    rep.decay_upper = std::max(rep.decay_upper, q);
    if (r <= 1.0) rep.min_on_unit_ball = std::min(rep.min_on_unit_ball, w);
  }
  rep.min_on_unit_ball = std::min(rep.min_on_unit_ball, weight_radial(n, kappa, 0.0));

  Grid g;
  g.n = n;
  g.sides.assign(n, sides);
  g.box.assign(n, box);
  // center the shapes in the middle of the torus
  auto centered = [&](WeightSpec s) {
    s.center = Vec::Constant(n, 0.5 * box);
    return s;
  };
  WeightSpec w1 = centered(isotropic_weight(n, kappa, 1.0, Normalization::L1));
  Mat A2 = Mat::Identity(n, n);
  for (int a = 0; a < n; ++a) A2(a, a) = 2.0 + a;
  WeightSpec w2 = centered(isotropic_weight(n, kappa, 1.0, Normalization::L1));
  w2.shape = A2;
  WeightSpec w2low = w2;
  w2low.kappa = kappa - kappa_step;

  RField W1 = sample_weight(g, w1);
  RField W2 = sample_weight(g, w2);
  RField W2low = sample_weight(g, w2low);
  rep.grid_mass = grid_integral(g, W1);

  // property 2: spectrum of the unnormalized weight
  {
    RField U = W1;
    CField S = spectrum(U, g);
    double total = 0.0, outside = 0.0;
    for (std::int64_t i = 0; i < g.size(); ++i) {
      auto idx = g.unflat(i);
      double rad2 = 0.0;
      for (int a = 0; a < n; ++a) {
        double xi = g.signed_freq(a, idx[a]) / box;
        rad2 += xi * xi;
      }
      double m = std::norm(S[i]);
      total += m;
      if (rad2 > 4.0) outside += m;
    }
    rep.fourier_mass_outside = total > 0.0 ? outside / total : 0.0;
  }

  // convolutions are taken about the torus center; compare within the inner half of the box
  auto inner = [&](std::int64_t i) {
    auto x = g.position(i);
    for (int a = 0; a < n; ++a)
      if (std::abs(x[a] - 0.5 * box) > 0.25 * box) return false;
    return true;
  };
  // shift a kernel centered at the middle to the origin
  auto to_origin = [&](const WeightSpec& s) {
    WeightSpec t = s;
    t.center = Vec::Zero(n);
    return sample_weight(g, t);
  };
  RField K1 = to_origin(w1);
  RField C11 = circular_convolve(g, W1, K1);
  RField C12 = circular_convolve(g, W2, K1);
  rep.self_convolution = 0.0;
  rep.monotonicity = 0.0;
  rep.mixed_decay = 0.0;
  WeightSpec u1 = centered(isotropic_weight(n, kappa));
  WeightSpec u2 = centered(isotropic_weight(n, kappa));
  u2.shape = A2;
  RField U1 = sample_weight(g, u1), U2 = sample_weight(g, u2);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (!inner(i)) continue;
    rep.self_convolution = std::max(rep.self_convolution, C11[i] / W1[i]);
    rep.monotonicity = std::max(rep.monotonicity, U1[i] / U2[i]);
    rep.mixed_decay = std::max(rep.mixed_decay, C12[i] / W2low[i]);
  }
  return rep;
}

}  // namespace mcsq
