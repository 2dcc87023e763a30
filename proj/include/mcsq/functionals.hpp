#pragma once
// Norms, square functions, square-function constants and the ratio optimizer.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "field.hpp"
#include "grid.hpp"
#include "weights.hpp"

namespace mcsq {

// integral of |f|^p (times an optional weight) by Riemann sum
inline double lp_norm(const Grid& g, const CField& f, double p, const RField* weight = nullptr) {
  if (!(p >= 1.0)) throw std::domain_error("lp_norm: p must be at least 1");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double v = std::pow(std::abs(f[i]), p);
    s += weight ? v * (*weight)[i] : v;
  }
  return s * g.cell_volume();
}

inline double lp_norm(const DiscreteField& f, double p, const WeightSpec* w = nullptr) {
  CField s = field_samples(f);
  if (!w) return lp_norm(f.grid, s, p);
  RField ws = sample_weight(f.grid, *w);
  return lp_norm(f.grid, s, p, &ws);
}

// coarse groups of fine blocks at scale r
inline std::vector<std::vector<std::int64_t>> block_groups(const FieldLattice& L, double r) {
  std::int64_t mr = L.coarse_count(r);
  std::int64_t per = L.M / mr;
  std::vector<std::vector<std::int64_t>> g(mr);
  for (std::int64_t b = 0; b < L.M; ++b) g[b / per].push_back(b);
  return g;
}

// pointwise sum over blocks at scale r of |f_tau|^2
inline RField square_function(const DiscreteField& f, double r) {
  auto groups = block_groups(*f.lattice, r);
  RField out(f.grid.size(), 0.0);
  for (const auto& gr : groups) {
    CField s = samples_of_blocks(f, gr);
    for (std::size_t i = 0; i < s.size(); ++i) out[i] += std::norm(s[i]);
  }
  return out;
}

// Exact quadrature of  integral (sum_g |F_g|^2)^{p/2}  over the torus, where F_g is the
// part of the field on block group g. The grid is sized so that the Riemann sum is exact
// for even p; the last axis is streamed one slice at a time.
struct GroupedPowerResult {
  double value = 0.0;
  std::vector<int> sides;
  std::vector<std::vector<double>> grad_phase;  // d value / d phase, per block and point
  std::vector<std::vector<double>> grad_amp;    // d value / d modulus
};

inline std::vector<int> exact_sides(const FieldLattice& L, const std::vector<std::vector<std::int64_t>>& groups, double p,
                                    int refine) {
  std::vector<std::int64_t> spread(L.n, 0);
  for (const auto& gr : groups) {
    std::vector<std::int64_t> lo(L.n, INT64_MAX), hi(L.n, INT64_MIN);
    for (auto b : gr)
      for (std::int64_t k = 0; k < L.points_in(b); ++k) {
        const std::int64_t* e = L.point(b, k);
        for (int a = 0; a < L.n; ++a) {
          lo[a] = std::min(lo[a], e[a]);
          hi[a] = std::max(hi[a], e[a]);
        }
      }
    for (int a = 0; a < L.n; ++a)
      if (hi[a] >= lo[a]) spread[a] = std::max(spread[a], hi[a] - lo[a]);
  }
  const std::int64_t q = static_cast<std::int64_t>(std::ceil(p / 2.0 - 1e-12));
  std::vector<int> sides(L.n);
  for (int a = 0; a < L.n; ++a) sides[a] = smooth_size(refine * (q * spread[a] + 1));
  return sides;
}

inline GroupedPowerResult grouped_power_integral(const DiscreteField& f, const std::vector<std::vector<std::int64_t>>& groups,
                                                 double p, bool want_grad = false, int refine = 1,
                                                 const std::vector<int>* sides = nullptr) {
  const auto& L = *f.lattice;
  const int n = L.n;
  GroupedPowerResult res;
  res.sides = sides ? *sides : exact_sides(L, groups, p, refine);
  const auto& N = res.sides;
  // slice axes and streamed axis
  std::vector<int> slice_dims;
  std::int64_t stream_len = 1;
  if (n == 1) {
    slice_dims = {N[0]};
  } else {
    slice_dims.assign(N.begin(), N.end() - 1);
    stream_len = N[n - 1];
  }
  std::int64_t slice_size = 1;
  for (int d : slice_dims) slice_size *= d;
  double vol = 1.0;
  for (double b : L.period) vol *= b;
  const double cell = vol / (static_cast<double>(slice_size) * stream_len);

  struct Entry {
    std::int64_t block, k, slot, last;
  };
  std::vector<std::vector<Entry>> entries(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (auto b : groups[gi])
      for (std::int64_t k = 0; k < L.points_in(b); ++k) {
        if (f.coeffs[b][k] == cplx(0.0) && !want_grad) continue;
        const std::int64_t* e = L.point(b, k);
        std::int64_t slot = 0;
        int sd = static_cast<int>(slice_dims.size());
        for (int a = 0; a < sd; ++a) {
          std::int64_t v = e[a] % slice_dims[a];
          if (v < 0) v += slice_dims[a];
          slot = slot * slice_dims[a] + v;
        }
        std::int64_t last = 0;
        if (n > 1) {
          last = e[n - 1] % stream_len;
          if (last < 0) last += stream_len;
        }
        entries[gi].push_back({b, k, slot, last});
      }
  std::vector<cplx> tw(stream_len);
  for (std::int64_t j = 0; j < stream_len; ++j) tw[j] = std::polar(1.0, 2.0 * M_PI * j / stream_len);

  std::vector<std::vector<cplx>> acc;
  if (want_grad) {
    acc.resize(L.block_count());
    for (std::int64_t b = 0; b < L.block_count(); ++b) acc[b].assign(L.points_in(b), cplx(0.0));
  }
  std::vector<CField> sl(groups.size(), CField(slice_size));
  RField S(slice_size);
  const double half = 0.5 * p;
  double total = 0.0;
  for (std::int64_t j = 0; j < stream_len; ++j) {
    std::fill(S.begin(), S.end(), 0.0);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      auto& s = sl[gi];
      std::fill(s.begin(), s.end(), cplx(0.0));
      for (const auto& en : entries[gi]) s[en.slot] += f.coeffs[en.block][en.k] * tw[(en.last * j) % stream_len];
      fft_backward(s, slice_dims);
      for (std::int64_t i = 0; i < slice_size; ++i) S[i] += std::norm(s[i]);
    }
    double part = 0.0;
    for (std::int64_t i = 0; i < slice_size; ++i) part += std::pow(S[i], half);
    total += part;
    if (want_grad) {
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        auto& s = sl[gi];
        for (std::int64_t i = 0; i < slice_size; ++i) s[i] *= (S[i] > 0.0 ? std::pow(S[i], half - 1.0) : (half == 1.0 ? 1.0 : 0.0));
        fft_forward(s, slice_dims);
        for (const auto& en : entries[gi]) {
          std::int64_t k = (stream_len - (en.last * j) % stream_len) % stream_len;
          acc[en.block][en.k] += s[en.slot] * tw[k];
        }
      }
    }
  }
  res.value = total * cell;
  if (want_grad) {
    res.grad_phase.resize(L.block_count());
    res.grad_amp.resize(L.block_count());
    for (std::int64_t b = 0; b < L.block_count(); ++b) {
      res.grad_phase[b].assign(L.points_in(b), 0.0);
      res.grad_amp[b].assign(L.points_in(b), 0.0);
      for (std::int64_t k = 0; k < L.points_in(b); ++k) {
        cplx G = std::conj(acc[b][k]);
        cplx a = f.coeffs[b][k];
        res.grad_phase[b][k] = -p * cell * (a * G).imag();
        double m = std::abs(a);
        cplx u = m > 0.0 ? a / m : cplx(1.0);
        res.grad_amp[b][k] = p * cell * (u * G).real();
      }
    }
  }
  return res;
}

inline std::vector<std::vector<std::int64_t>> all_blocks_group(const FieldLattice& L) {
  std::vector<std::int64_t> g(L.M);
  for (std::int64_t b = 0; b < L.M; ++b) g[b] = b;
  return {g};
}

inline std::vector<std::vector<std::int64_t>> single_block_groups(const FieldLattice& L) { return block_groups(L, L.R); }

// Numerator and denominator of a ratio share one grid unless p is an even integer, where
// each Riemann sum is already exact.
struct RatioGrids {
  std::vector<int> top, bottom;
  const std::vector<int>* top_ptr() const { return top.empty() ? nullptr : &top; }
  const std::vector<int>* bottom_ptr() const { return bottom.empty() ? nullptr : &bottom; }
};

inline RatioGrids ratio_grids(const FieldLattice& L, const std::vector<std::vector<std::int64_t>>& top,
                              const std::vector<std::vector<std::int64_t>>& bottom, double p, int refine) {
  RatioGrids g;
  if (std::abs(p / 2.0 - std::round(p / 2.0)) < 1e-12) return g;
  auto a = exact_sides(L, top, p, refine), b = exact_sides(L, bottom, p, refine);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::max(a[i], b[i]);
  g.top = a;
  g.bottom = a;
  return g;
}

struct RatioReport {
  int n = 0;
  double p = 0.0;
  double R = 0.0;
  std::string ensemble;
  std::uint64_t seed = 0;
  double numerator = 0.0;
  double denominator = 0.0;
  double ratio = 0.0;
  std::vector<int> numerator_sides, denominator_sides;
};

inline RatioReport sq_constant(const DiscreteField& f, double p, int refine = 1) {
  if (!(p >= 2.0)) throw std::domain_error("sq_constant: p must be at least 2");
  const auto& L = *f.lattice;
  auto top = all_blocks_group(L), bottom = single_block_groups(L);
  RatioGrids rg = ratio_grids(L, top, bottom, p, refine);
  auto num = grouped_power_integral(f, top, p, false, refine, rg.top_ptr());
  auto den = grouped_power_integral(f, bottom, p, false, refine, rg.bottom_ptr());
  if (!(den.value > 0.0)) throw std::domain_error("sq_constant: zero denominator");
  RatioReport r;
  r.n = L.n;
  r.p = p;
  r.R = L.R;
  r.numerator = num.value;
  r.denominator = den.value;
  r.ratio = num.value / den.value;
  r.numerator_sides = num.sides;
  r.denominator_sides = den.sides;
  return r;
}

// integral (sum_{tau at scale r} |f_tau|^2)^{p/2} / integral (sum_theta |f_theta|^2)^{p/2}
inline double two_scale_constant(const DiscreteField& f, double r, double p, int refine = 1) {
  const auto& L = *f.lattice;
  if (r > L.R) throw std::domain_error("two_scale_constant: r must not exceed R");
  auto coarse = block_groups(L, r), fine = single_block_groups(L);
  RatioGrids rg = ratio_grids(L, coarse, fine, p, refine);
  auto top = grouped_power_integral(f, coarse, p, false, refine, rg.top_ptr());
  auto bot = grouped_power_integral(f, fine, p, false, refine, rg.bottom_ptr());
  if (!(bot.value > 0.0)) throw std::domain_error("two_scale_constant: zero denominator");
  return top.value / bot.value;
}

// ---- local L2 orthogonality ----

struct LocalL2Report {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;          // lhs / rhs
  double overlap = 0.0;        // measured frequency-side overlap of the group neighborhoods
  double normalized = 0.0;     // lhs / (overlap * rhs)
  std::int64_t groups = 0;
  double ball_radius = 0.0;
};

// maximal number of group neighborhoods (support + ball of radius rho) meeting a common group
inline int group_overlap(const FieldLattice& L, const std::vector<std::vector<std::int64_t>>& groups, double rho) {
  std::vector<std::vector<Vec>> pts(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (auto b : groups[g])
      for (std::int64_t k = 0; k < L.points_in(b); ++k) pts[g].push_back(L.frequency(L.point(b, k)));
  int best = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (pts[g].empty()) continue;
    int cnt = 0;
    for (std::size_t h = 0; h < groups.size(); ++h) {
      if (pts[h].empty()) continue;
      bool near = (g == h);
      for (std::size_t i = 0; i < pts[g].size() && !near; ++i)
        for (std::size_t j = 0; j < pts[h].size(); ++j)
          if ((pts[g][i] - pts[h][j]).norm() <= 2.0 * rho) {
            near = true;
            break;
          }
      cnt += near;
    }
    best = std::max(best, cnt);
  }
  return best;
}

// integral |sum_J f_J|^2 w versus sum_J integral |f_J|^2 w, with J the blocks at scale r and
// w the isotropic weight on a ball of radius r / lambda centered at `center`
inline LocalL2Report local_l2_check(const DiscreteField& f, double lambda, double r, double kappa, const Vec& center) {
  if (!(lambda > 0.0)) throw std::domain_error("local_l2_check: lambda must be positive");
  const auto& L = *f.lattice;
  auto groups = block_groups(L, r);
  std::vector<std::vector<std::int64_t>> active;
  for (auto& g : groups) {
    bool nz = false;
    for (auto b : g) nz = nz || f.block_nonzero(b);
    if (nz) active.push_back(g);
  }
  if (active.empty()) throw std::domain_error("local_l2_check: empty sector selection");
  LocalL2Report rep;
  rep.groups = static_cast<std::int64_t>(active.size());
  rep.ball_radius = r / lambda;
  WeightSpec w = isotropic_weight(L.n, kappa, rep.ball_radius, Normalization::Linf);
  w.center = center;
  RField ws = sample_weight(f.grid, w);
  CField total(f.grid.size(), cplx(0.0));
  for (const auto& g : active) {
    CField s = samples_of_blocks(f, g);
    rep.rhs += lp_norm(f.grid, s, 2.0, &ws);
    for (std::size_t i = 0; i < s.size(); ++i) total[i] += s[i];
  }
  rep.lhs = lp_norm(f.grid, total, 2.0, &ws);
  rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : 0.0;
  rep.overlap = group_overlap(L, active, lambda / r);
  rep.normalized = rep.ratio / rep.overlap;
  return rep;
}

// ---- ratio optimizer ----

struct RatioValue {
  double ratio = 0.0;
  double num = 0.0, den = 0.0;
  std::vector<std::vector<double>> grad_phase, grad_amp;  // gradient of the ratio
};

inline RatioValue ratio_with_gradient(const DiscreteField& f, double p, bool want_grad = true, int refine = 1) {
  const auto& L = *f.lattice;
  auto top = all_blocks_group(L), bottom = single_block_groups(L);
  RatioGrids rg = ratio_grids(L, top, bottom, p, refine);
  auto num = grouped_power_integral(f, top, p, want_grad, refine, rg.top_ptr());
  auto den = grouped_power_integral(f, bottom, p, want_grad, refine, rg.bottom_ptr());
  RatioValue v;
  v.num = num.value;
  v.den = den.value;
  v.ratio = den.value > 0.0 ? num.value / den.value : std::numeric_limits<double>::quiet_NaN();
  if (want_grad) {
    v.grad_phase = num.grad_phase;
    v.grad_amp = num.grad_amp;
    for (std::size_t b = 0; b < v.grad_phase.size(); ++b)
      for (std::size_t k = 0; k < v.grad_phase[b].size(); ++k) {
        v.grad_phase[b][k] = (num.grad_phase[b][k] - v.ratio * den.grad_phase[b][k]) / den.value;
        v.grad_amp[b][k] = (num.grad_amp[b][k] - v.ratio * den.grad_amp[b][k]) / den.value;
      }
  }
  return v;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::vector<double> analytic, numeric;
};

// central differences in the phase of `samples` random coefficients
inline GradientCheck check_ratio_gradient(const DiscreteField& f, double p, int samples, std::uint64_t seed, double h = 1e-5) {
  GradientCheck gc;
  RatioValue v = ratio_with_gradient(f, p, true);
  std::mt19937_64 rng(seed);
  const auto& L = *f.lattice;
  double gscale = 0.0;
  for (const auto& b : v.grad_phase)
    for (double g : b) gscale = std::max(gscale, std::abs(g));
  for (int s = 0; s < samples; ++s) {
    std::int64_t b = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(L.block_count()));
    std::int64_t k = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(L.points_in(b)));
    DiscreteField fp = f, fm = f;
    fp.coeffs[b][k] *= std::polar(1.0, h);
    fm.coeffs[b][k] *= std::polar(1.0, -h);
    double d = (ratio_with_gradient(fp, p, false).ratio - ratio_with_gradient(fm, p, false).ratio) / (2.0 * h);
    double a = v.grad_phase[b][k];
    gc.analytic.push_back(a);
    gc.numeric.push_back(d);
    double denom = std::max(std::abs(a), 1e-3 * gscale);
    gc.max_rel_error = std::max(gc.max_rel_error, std::abs(a - d) / denom);
  }
  return gc;
}

struct OptimizeOptions {
  int budget = 200;
  bool amplitudes = false;  // also move moduli (kept in [0.1, 10])
  double step = 0.2;        // initial max phase change per iteration (radians)
  int patience = 50;
  double min_gain = 1e-4;
};

struct OptimizeResult {
  DiscreteField best;
  double ratio = 0.0;
  double initial_ratio = 0.0;
  std::vector<double> trace;
  int iterations = 0;
  int rejected = 0;
  std::string stop_reason;
};

inline OptimizeResult maximize_ratio(const DiscreteField& start, double p, const OptimizeOptions& opt = {}) {
  OptimizeResult res;
  DiscreteField cur = start;
  RatioValue v = ratio_with_gradient(cur, p, true);
  if (!std::isfinite(v.ratio)) throw std::domain_error("maximize_ratio: non-finite starting objective");
  res.initial_ratio = v.ratio;
  res.trace.push_back(v.ratio);
  double step = opt.step;
  res.stop_reason = "budget";
  for (int it = 0; it < opt.budget; ++it) {
    double gmax = 0.0;
    for (const auto& b : v.grad_phase)
      for (double g : b) gmax = std::max(gmax, std::abs(g));
    double amax = 0.0;
    if (opt.amplitudes)
      for (const auto& b : v.grad_amp)
        for (double g : b) amax = std::max(amax, std::abs(g));
    if (gmax == 0.0 && amax == 0.0) {
      res.stop_reason = "stationary";
      break;
    }
    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      DiscreteField trial = cur;
      for (std::size_t b = 0; b < trial.coeffs.size(); ++b)
        for (std::size_t k = 0; k < trial.coeffs[b].size(); ++k) {
          cplx& a = trial.coeffs[b][k];
          if (gmax > 0.0) a *= std::polar(1.0, step * v.grad_phase[b][k] / gmax);
          if (opt.amplitudes && amax > 0.0) {
            double m = std::abs(a);
            double nm = std::clamp(m * std::exp(step * v.grad_amp[b][k] / amax), 0.1, 10.0);
            if (m > 0.0) a *= nm / m;
          }
        }
      RatioValue tv = ratio_with_gradient(trial, p, true);
      if (std::isfinite(tv.ratio) && tv.ratio > v.ratio) {
        cur = std::move(trial);
        v = std::move(tv);
        accepted = true;
        step = std::min(step * 1.25, 1.0);
      } else {
        ++res.rejected;
        step *= 0.5;
      }
    }
    res.iterations = it + 1;
    res.trace.push_back(v.ratio);
    if (!accepted) {
      res.stop_reason = "no ascent step";
      break;
    }
    if (static_cast<int>(res.trace.size()) > opt.patience) {
      double old = res.trace[res.trace.size() - 1 - opt.patience];
      if ((v.ratio - old) / old < opt.min_gain) {
        res.stop_reason = "converged";
        break;
      }
    }
  }
  res.best = std::move(cur);
  res.ratio = v.ratio;
  return res;
}

// least-squares slope of log y against log x
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace mcsq
