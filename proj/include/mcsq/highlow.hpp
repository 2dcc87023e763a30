#pragma once
// Scale ladders, pruning, high/low splitting, important sets, broad-narrow,
// packet pigeonholing and the unwinding cascade, all on discrete fields.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "field.hpp"
#include "functionals.hpp"
#include "weights.hpp"

namespace mcsq {

struct ScaleLadder {
  int n = 0;
  double R = 1.0;
  double epsilon = 0.5;
  int N = 0;
  std::vector<double> scales;        // nominal R_k, powers of 8
  std::vector<double> block_scales;  // partition scale used for tau_k (a power of 2^n)
  std::vector<double> kappa;         // decay ladder, strictly decreasing in k
  double K = 2.0;
  double A = 10.0;
  int N0 = 1;

  std::int64_t blocks_at(int k) const { return blocks_per_side(n, block_scales[k]); }
  // frequency radius R_k^{-1/n} at the partition scale
  double frequency_scale(int k) const { return 1.0 / static_cast<double>(blocks_at(k)); }
};

// nearest power of `base` in the logarithmic sense, ties toward the smaller power
inline double nearest_power(double x, double base) {
  double e = std::log(x) / std::log(base);
  double lo = std::floor(e);
  double k = (e - lo > 0.5 + 1e-12) ? lo + 1.0 : lo;
  return std::pow(base, std::max(0.0, k));
}

inline ScaleLadder build_ladder(int n, double R, double epsilon, double K = 2.0, double A = 10.0, int N0 = 1,
                                double kappa_base = 0.0, double kappa_step = 1.0) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::domain_error("build_ladder: epsilon must lie in (0,1)");
  const std::int64_t M = blocks_per_side(n, R);
  ScaleLadder L;
  L.n = n;
  L.R = R;
  L.epsilon = epsilon;
  L.N = static_cast<int>(std::ceil(1.0 / epsilon - 1e-12));
  if (L.N < 2) throw std::domain_error("build_ladder: N < 2, R^epsilon too coarse for a ladder");
  L.K = K;
  L.A = A;
  L.N0 = std::clamp(N0, 0, L.N - 1);
  if (kappa_base <= 0.0) kappa_base = 4.0 * n;
  for (int k = 0; k <= L.N; ++k) {
    double Rk;
    if (k == 0)
      Rk = 1.0;
    else if (k == L.N)
      Rk = R;
    else
      Rk = std::min(R, nearest_power(std::pow(R, k * epsilon), 8.0));
    if (!L.scales.empty()) Rk = std::max(Rk, L.scales.back());
    L.scales.push_back(Rk);
    double m = nearest_power(std::pow(Rk, 1.0 / n), 2.0);
    m = std::min<double>(m, static_cast<double>(M));
    L.block_scales.push_back(std::pow(m, n));
    L.kappa.push_back(kappa_base + (L.N - k) * kappa_step);
  }
  return L;
}

// ---- pruning ----

struct PruneState {
  ScaleLadder ladder;
  double alpha = 1.0, beta = 1.0;
  // level[k][j]: samples of f^k on the j-th block at ladder scale k (k = N0..N)
  std::vector<std::vector<CField>> level;
  // good-tile flags per level and block
  std::vector<std::vector<std::vector<char>>> good;
  std::vector<double> threshold;      // per level
  std::vector<std::int64_t> pruned;   // bad tiles per level
  std::vector<std::int64_t> tiles;    // total tiles per level
  int reach = kWindowReach;

  int N() const { return ladder.N; }
};

inline double prune_threshold(const ScaleLadder& L, int k, double alpha, double beta) {
  return std::pow(L.K, 3) * std::pow(L.A, L.N - k + 1) * beta / alpha;
}

// samples of f on each block of the partition at scale r
inline std::vector<CField> blocks_at_scale(const DiscreteField& f, double r) {
  auto groups = block_groups(*f.lattice, r);
  std::vector<CField> out;
  for (const auto& g : groups) out.push_back(samples_of_blocks(f, g));
  return out;
}

// threshold_override < 0 uses the ladder threshold
inline PruneState prune(const DiscreteField& f, const ScaleLadder& L, double alpha, double beta,
                        double threshold_override = -1.0, int reach = kWindowReach) {
  if (!(alpha > 0.0 && beta > 0.0)) throw std::domain_error("prune: alpha and beta must be positive");
  PruneState st;
  st.ladder = L;
  st.alpha = alpha;
  st.beta = beta;
  st.reach = reach;
  const int N = L.N;
  st.level.resize(N + 1);
  st.good.resize(N + 1);
  st.threshold.assign(N + 1, 0.0);
  st.pruned.assign(N + 1, 0);
  st.tiles.assign(N + 1, 0);
  st.level[N] = blocks_at_scale(f, L.block_scales[N]);
  const std::int64_t gsize = f.grid.size();
  for (int k = N - 1; k >= L.N0; --k) {
    const double thr = threshold_override >= 0.0 ? threshold_override : prune_threshold(L, k, alpha, beta);
    st.threshold[k] = thr;
    const std::int64_t mk = L.blocks_at(k);
    const std::int64_t mk1 = L.blocks_at(k + 1);
    const std::int64_t per = mk1 / mk;
    st.level[k].assign(mk, CField(gsize, cplx(0.0)));
    st.good[k].resize(mk);
    for (std::int64_t j = 0; j < mk; ++j) {
      CField up(gsize, cplx(0.0));
      for (std::int64_t c = j * per; c < (j + 1) * per; ++c)
        for (std::int64_t i = 0; i < gsize; ++i) up[i] += st.level[k + 1][c][i];
      TileSystem ts = make_tiles(*f.lattice, L.block_scales[k], j);
      st.tiles[k] += ts.count;
      // windows are bounded by 1, so every tile is good when the whole piece is below threshold
      if (sup_abs(up) <= thr) {
        st.good[k][j].assign(ts.count, 1);
        st.level[k][j] = std::move(up);
        continue;
      }
      RField sup = tile_sup(ts, f.grid, up, reach);
      std::vector<char> ok(ts.count);
      for (std::int64_t t = 0; t < ts.count; ++t) {
        ok[t] = sup[t] <= thr;
        st.pruned[k] += !ok[t];
      }
      RField w = window_sum(ts, f.grid, ok, reach);
      for (std::int64_t i = 0; i < gsize; ++i) st.level[k][j][i] = w[i] * up[i];
      st.good[k][j] = std::move(ok);
    }
  }
  return st;
}

// f^{k+1} on the blocks at scale k: sum of level k+1 pieces inside each block
inline std::vector<CField> upper_on_level(const PruneState& st, int k) {
  const auto& L = st.ladder;
  const std::int64_t mk = L.blocks_at(k), per = L.blocks_at(k + 1) / mk;
  const std::size_t gsize = st.level[k + 1][0].size();
  std::vector<CField> out(mk, CField(gsize, cplx(0.0)));
  for (std::int64_t j = 0; j < mk; ++j)
    for (std::int64_t c = j * per; c < (j + 1) * per; ++c)
      for (std::size_t i = 0; i < gsize; ++i) out[j][i] += st.level[k + 1][c][i];
  return out;
}

struct PruneBoundReport {
  std::vector<double> ratio;  // per level: max_tau ||f^k_tau||_inf / threshold
  std::int64_t monotonicity_violations = 0;
  double worst = 0.0;
};

inline PruneBoundReport prune_bound_check(const PruneState& st) {
  PruneBoundReport rep;
  const auto& L = st.ladder;
  rep.ratio.assign(L.N + 1, 0.0);
  for (int k = L.N - 1; k >= L.N0; --k) {
    auto up = upper_on_level(st, k);
    for (std::size_t j = 0; j < st.level[k].size(); ++j) {
      double m = sup_abs(st.level[k][j]);
      if (st.threshold[k] > 0.0) rep.ratio[k] = std::max(rep.ratio[k], m / st.threshold[k]);
      for (std::size_t i = 0; i < up[j].size(); ++i)
        if (std::abs(st.level[k][j][i]) > std::abs(up[j][i]) * (1.0 + 1e-12) + 1e-300) ++rep.monotonicity_violations;
    }
    rep.worst = std::max(rep.worst, rep.ratio[k]);
  }
  return rep;
}

// ---- g_k and its high/low split ----

// omega for a block at an arbitrary partition scale, normalized to unit mass on the grid
inline RField omega_samples(const Grid& g, int n, double scale, std::int64_t j, double kappa) {
  WeightSpec w = omega_block(make_block(n, scale, j), kappa);
  RField s = sample_weight(g, w);
  double m = grid_integral(g, s);
  for (auto& v : s) v /= m;
  return s;
}

// g_k = sum_{tau_k} |f^{k+1}_{tau_k}|^2 * omega_{tau_k}; level N uses f itself
inline RField g_level(const PruneState& st, const Grid& grid, int n, int k) {
  const auto& L = st.ladder;
  std::vector<CField> pieces = (k >= L.N) ? st.level[L.N] : upper_on_level(st, k);
  const double scale = L.block_scales[std::min(k, L.N)];
  RField g(grid.size(), 0.0);
  for (std::size_t j = 0; j < pieces.size(); ++j) {
    RField sq(grid.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = std::norm(pieces[j][i]);
    RField om = omega_samples(grid, n, scale, static_cast<std::int64_t>(j), L.kappa[std::min(k, L.N)]);
    RField c = circular_convolve(grid, sq, om);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c[i];
  }
  return g;
}

// smooth radial cutoff: 1 on [0, 1/2], 0 beyond 1
inline double smooth_cutoff(double rho) {
  if (rho <= 0.5) return 1.0;
  if (rho >= 1.0) return 0.0;
  auto h = [](double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; };
  double s = (rho - 0.5) / 0.5;
  return h(1.0 - s) / (h(1.0 - s) + h(s));
}

inline double grid_frequency_norm(const Grid& g, std::int64_t p) {
  auto idx = g.unflat(p);
  double r2 = 0.0;
  for (int a = 0; a < g.n; ++a) {
    double xi = g.signed_freq(a, idx[a]) / g.box[a];
    r2 += xi * xi;
  }
  return std::sqrt(r2);
}

struct HighLowSplit {
  RField low, high;
  double radius = 0.0;
};

// low part keeps frequencies |xi| <= radius/2 and fades out by radius
inline HighLowSplit highlow_split(const Grid& g, const RField& gk, double radius) {
  CField S = to_complex(gk);
  fft_forward(S, g.sides);
  const double inv = 1.0 / static_cast<double>(g.size());
  for (std::int64_t p = 0; p < g.size(); ++p) S[p] *= smooth_cutoff(grid_frequency_norm(g, p) / radius) * inv;
  fft_backward(S, g.sides);
  HighLowSplit out;
  out.radius = radius;
  out.low.resize(gk.size());
  out.high.resize(gk.size());
  for (std::size_t i = 0; i < gk.size(); ++i) {
    out.low[i] = S[i].real();
    out.high[i] = gk[i] - out.low[i];
  }
  return out;
}

// fraction of spectral energy of u inside |xi| < inner or beyond outer
inline double spectral_mass_outside(const Grid& g, const RField& u, double inner, double outer) {
  CField S = to_complex(u);
  fft_forward(S, g.sides);
  double tot = 0.0, out = 0.0;
  for (std::int64_t p = 0; p < g.size(); ++p) {
    double m = std::norm(S[p]);
    tot += m;
    double r = grid_frequency_norm(g, p);
    if (r < inner * (1.0 - 1e-9) || r > outer) out += m;
  }
  return tot > 0.0 ? out / tot : 0.0;
}

struct LowFrequencyReport {
  double ratio = 0.0;
  std::int64_t points = 0;
  bool vacuous = false;
};

inline LowFrequencyReport low_frequency_ratio(const RField& glow, const RField& gnext, double floor_rel = 1e-12) {
  LowFrequencyReport rep;
  double mx = grid_max(gnext);
  if (!(mx > 0.0)) {
    rep.vacuous = true;
    return rep;
  }
  const double fl = floor_rel * mx;
  for (std::size_t i = 0; i < glow.size(); ++i) {
    if (gnext[i] <= fl) continue;
    ++rep.points;
    rep.ratio = std::max(rep.ratio, std::abs(glow[i]) / gnext[i]);
  }
  if (rep.points == 0) throw std::domain_error("low_frequency_ratio: all points below floor");
  return rep;
}

// ---- important sets ----

struct LevelSets {
  int N = 0, N0 = 0;
  std::vector<char> U;
  std::vector<std::vector<char>> omega;  // omega[k] for N0 <= k <= N-1
  std::vector<char> low;
  std::int64_t count(const std::vector<char>& m) const {
    std::int64_t c = 0;
    for (char v : m) c += v;
    return c;
  }
};

// U = {alpha <= |f| < 2 alpha, beta <= g_N < 2 beta}; Omega_k from the top down, L the rest
inline LevelSets important_sets(const CField& f, const std::vector<RField>& g, const ScaleLadder& L, double alpha,
                                double beta) {
  LevelSets s;
  s.N = L.N;
  s.N0 = L.N0;
  const std::size_t m = f.size();
  s.U.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    double a = std::abs(f[i]);
    s.U[i] = a >= alpha && a < 2.0 * alpha && g[L.N][i] >= beta && g[L.N][i] < 2.0 * beta;
  }
  s.omega.assign(L.N, std::vector<char>(m, 0));
  std::vector<char> taken(m, 0);
  for (int k = L.N - 1; k >= L.N0; --k) {
    const double thr = std::pow(L.A, L.N - k) * beta;
    for (std::size_t i = 0; i < m; ++i)
      if (s.U[i] && !taken[i] && g[k][i] >= thr) {
        s.omega[k][i] = 1;
        taken[i] = 1;
      }
  }
  s.low.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) s.low[i] = s.U[i] && !taken[i];
  return s;
}

inline std::int64_t high_dominance_check(const RField& gk, const RField& ghigh, const std::vector<char>& omega) {
  std::int64_t v = 0;
  for (std::size_t i = 0; i < gk.size(); ++i)
    if (omega[i] && gk[i] > 2.0 * std::abs(ghigh[i])) ++v;
  return v;
}

// max over the mask of |f - sum_tau f^{k+1}_tau| in units of alpha / (A^{1/2} K^3)
inline double pruning_error_check(const PruneState& st, const CField& f, int k, const std::vector<char>& mask) {
  const auto& L = st.ladder;
  const auto& pieces = st.level[std::min(k + 1, L.N)];
  const double unit = st.alpha / (std::sqrt(L.A) * std::pow(L.K, 3));
  double worst = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!mask[i]) continue;
    cplx s(0.0);
    for (const auto& p : pieces) s += p[i];
    worst = std::max(worst, std::abs(f[i] - s));
  }
  return worst / unit;
}

// variant for the low set, which compares with level N0
inline double pruning_error_low(const PruneState& st, const CField& f, const std::vector<char>& mask) {
  return pruning_error_check(st, f, st.ladder.N0 - 1, mask);
}

// ---- broad-narrow ----

struct BroadNarrowReport {
  std::vector<char> broad;
  std::int64_t broad_points = 0;
  std::int64_t violations = 0;
  double narrow_constant = 0.0;
  double broad_constant = 0.0;
  std::int64_t blocks = 0;
};

// blocks of width 1/K; a tuple is admissible when its members are pairwise non-adjacent
inline BroadNarrowReport broad_set(const DiscreteField& f, std::int64_t K, const std::vector<char>* U = nullptr) {
  const auto& L = *f.lattice;
  const int n = L.n;
  if (K < 2 * n - 1) throw std::domain_error("broad_set: K too small for n pairwise separated blocks");
  const double r = std::pow(static_cast<double>(K), n);
  auto pieces = blocks_at_scale(f, r);
  CField total = field_samples(f);
  BroadNarrowReport rep;
  rep.blocks = K;
  rep.narrow_constant = 4.0 * std::max(1, n - 1);
  rep.broad_constant = 2.0 * K;
  rep.broad.assign(total.size(), 0);
  std::vector<double> mod(K);
  for (std::size_t i = 0; i < total.size(); ++i) {
    const double a = std::abs(total[i]);
    double mx = 0.0;
    for (std::int64_t j = 0; j < K; ++j) {
      mod[j] = std::abs(pieces[j][i]);
      mx = std::max(mx, mod[j]);
    }
    // significant blocks, then a greedy maximal separated family
    std::vector<std::int64_t> sig;
    for (std::int64_t j = 0; j < K; ++j)
      if (mod[j] >= a / (2.0 * K)) sig.push_back(j);
    std::vector<std::int64_t> pick;
    for (auto j : sig)
      if (pick.empty() || j >= pick.back() + 2) pick.push_back(j);
    // best product over separated n-tuples: take the n largest moduli under separation greedily
    double best = 0.0;
    if (static_cast<int>(pick.size()) >= n) {
      std::vector<std::int64_t> order(sig.begin(), sig.end());
      std::sort(order.begin(), order.end(), [&](auto x, auto y) { return mod[x] > mod[y]; });
      std::vector<std::int64_t> chosen;
      for (auto j : order) {
        bool sep = true;
        for (auto c : chosen) sep = sep && std::llabs(c - j) >= 2;
        if (sep) chosen.push_back(j);
        if (static_cast<int>(chosen.size()) == n) break;
      }
      if (static_cast<int>(chosen.size()) < n) chosen.assign(pick.begin(), pick.begin() + n);
      double prod = 1.0;
      for (auto c : chosen) prod *= mod[c];
      best = std::pow(prod, 1.0 / n);
      if (!U || (*U)[i]) {
        rep.broad[i] = 1;
        ++rep.broad_points;
      }
    }
    double rhs = rep.narrow_constant * mx + rep.broad_constant * best;
    if (a > rhs * (1.0 + 1e-12) + 1e-300) ++rep.violations;
  }
  return rep;
}

// ---- packet pigeonholing ----

struct PigeonholeReport {
  double A = 0.0;                 // amplitude of the retained dyadic class
  int retained_class = 0;
  std::int64_t packets_total = 0, packets_retained = 0, packets_negligible = 0;
  double spread = 0.0;            // max/min amplitude among retained packets
  double superlevel_original = 0.0, superlevel_retained = 0.0, retained_fraction = 0.0;
  std::map<int, std::int64_t> class_sizes;
};

struct PigeonholeResult {
  std::vector<CField> blocks;  // retained part of each block, as samples
  PigeonholeReport report;
};

// packets with amplitude below alpha / negligible_factor are dropped as degenerate
inline PigeonholeResult pigeonhole_packets(const DiscreteField& f, double alpha, double negligible_factor = 0.0) {
  const auto& L = *f.lattice;
  if (!(alpha > 0.0)) throw std::domain_error("pigeonhole_packets: alpha must be positive");
  if (negligible_factor <= 0.0) negligible_factor = std::pow(L.R, L.n);
  const double floor_amp = alpha / negligible_factor;
  PigeonholeResult res;
  auto& rep = res.report;
  struct Info {
    std::vector<double> amp;
    TileSystem ts;
  };
  std::vector<Info> info(L.block_count());
  for (std::int64_t b = 0; b < L.block_count(); ++b) {
    if (!f.block_nonzero(b)) continue;
    auto pk = wave_packet_decompose(f, b, false);
    info[b].ts = make_tiles(L, L.R, b);
    for (const auto& p : pk) {
      info[b].amp.push_back(p.amplitude);
      ++rep.packets_total;
      if (p.amplitude < floor_amp) {
        ++rep.packets_negligible;
        continue;
      }
      ++rep.class_sizes[static_cast<int>(std::floor(std::log2(p.amplitude)))];
    }
  }
  if (rep.class_sizes.empty()) throw std::domain_error("pigeonhole_packets: all packets below threshold");
  CField full = field_samples(f);
  std::int64_t orig = 0;
  for (const auto& v : full) orig += std::abs(v) >= alpha;
  rep.superlevel_original = static_cast<double>(orig) * f.grid.cell_volume();
  const double classes = static_cast<double>(rep.class_sizes.size());
  double best_measure = -1.0;
  std::vector<CField> best_blocks;
  for (const auto& [cls, cnt] : rep.class_sizes) {
    std::vector<CField> bl(L.block_count());
    CField sum(f.grid.size(), cplx(0.0));
    for (std::int64_t b = 0; b < L.block_count(); ++b) {
      if (info[b].amp.empty()) continue;
      std::vector<char> sel(info[b].ts.count, 0);
      bool any = false;
      for (std::int64_t t = 0; t < info[b].ts.count; ++t) {
        double a = info[b].amp[t];
        sel[t] = a >= floor_amp && static_cast<int>(std::floor(std::log2(a))) == cls;
        any = any || sel[t];
      }
      if (!any) continue;
      CField s = block_samples(f, b);
      RField w = window_sum(info[b].ts, f.grid, sel);
      bl[b].resize(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        bl[b][i] = w[i] * s[i];
        sum[i] += bl[b][i];
      }
    }
    std::int64_t cntlev = 0;
    for (const auto& v : sum) cntlev += std::abs(v) >= alpha / classes;
    double meas = static_cast<double>(cntlev) * f.grid.cell_volume();
    if (meas > best_measure) {
      best_measure = meas;
      best_blocks = std::move(bl);
      rep.retained_class = cls;
    }
  }
  rep.superlevel_retained = best_measure;
  rep.retained_fraction = rep.superlevel_original > 0.0 ? best_measure / rep.superlevel_original : 1.0;
  rep.A = std::ldexp(1.0, rep.retained_class);
  double amin = INFINITY, amax = 0.0;
  for (std::int64_t b = 0; b < L.block_count(); ++b)
    for (double a : info[b].amp)
      if (a >= floor_amp && static_cast<int>(std::floor(std::log2(a))) == rep.retained_class) {
        ++rep.packets_retained;
        amin = std::min(amin, a);
        amax = std::max(amax, a);
      }
  rep.spread = amax / amin;
  for (auto& b : best_blocks)
    if (b.empty()) b.assign(f.grid.size(), cplx(0.0));
  res.blocks = std::move(best_blocks);
  return res;
}

// ---- unwinding cascade ----

struct CascadeStep {
  int step = 0;
  int level = 0;
  std::string branch;  // low, high, terminal
  int sigma = 0;       // dominant dyadic value class of the square function
  double constant = 0.0;
  double margin = 0.0;  // ratio of the dominant to the other piece
  double low_integral = 0.0, high_integral = 0.0;
  double regroup = 0.0;  // high branch: sector regrouping constant
};

struct CascadeTrace {
  std::vector<CascadeStep> steps;
  double start = 0.0;               // integral |f|^p
  double final_unsmoothed = 0.0;    // integral (sum_theta |f_theta|^2)^{p/2}
  double final_smoothed = 0.0;      // integral (sum_theta |f_theta|^2 * omega_theta)^{p/2}
  double final_constant = 0.0;      // start / final_smoothed
  bool terminated = false;
  int step_cap = 0;
  std::string message;
};

inline double power_integral(const Grid& g, const RField& s, double e) {
  double acc = 0.0;
  for (double v : s) acc += std::pow(std::abs(v), e);
  return acc * g.cell_volume();
}

inline CascadeTrace unwind_cascade(const DiscreteField& f, const ScaleLadder& L, double p, int step_cap = 0) {
  if (!(p >= 2.0)) throw std::domain_error("unwind_cascade: p must be at least 2");
  CascadeTrace tr;
  tr.step_cap = step_cap > 0 ? step_cap : static_cast<int>(std::ceil(2.0 / std::pow(L.epsilon, 3)));
  const Grid& g = f.grid;
  const double half = 0.5 * p;
  RField sq_top = square_function(f, L.block_scales[0]);
  tr.start = power_integral(g, sq_top, half);
  RField fine = square_function(f, L.block_scales[L.N]);
  tr.final_unsmoothed = power_integral(g, fine, half);
  {
    RField sm(g.size(), 0.0);
    auto pieces = blocks_at_scale(f, L.R);
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      RField sq(g.size());
      for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = std::norm(pieces[j][i]);
      RField om = omega_samples(g, L.n, L.R, static_cast<std::int64_t>(j), L.kappa[L.N]);
      RField c = circular_convolve(g, sq, om);
      for (std::size_t i = 0; i < sm.size(); ++i) sm[i] += c[i];
    }
    tr.final_smoothed = power_integral(g, sm, half);
  }
  std::int64_t nonzero = 0;
  for (std::int64_t b = 0; b < f.block_count(); ++b) nonzero += f.block_nonzero(b);
  int k = 0;
  RField cur = sq_top;
  double Q = tr.start;
  int step = 0;
  while (true) {
    if (step >= tr.step_cap) {
      tr.message = "step cap reached before termination";
      break;
    }
    CascadeStep cs;
    cs.step = step;
    cs.level = k;
    // dominant dyadic class of the current square function by contribution to the integral
    std::map<int, double> cls;
    for (double v : cur)
      if (v > 0.0) cls[static_cast<int>(std::floor(std::log2(v)))] += std::pow(v, half);
    double bestc = -1.0;
    for (const auto& [c, m] : cls)
      if (m > bestc) {
        bestc = m;
        cs.sigma = c;
      }
    if (k >= L.N || nonzero <= 1) {
      cs.branch = "terminal";
      cs.constant = tr.final_unsmoothed > 0.0 ? Q / tr.final_unsmoothed : 1.0;
      cs.margin = 1.0;
      tr.steps.push_back(cs);
      tr.terminated = true;
      break;
    }
    HighLowSplit hl = highlow_split(g, cur, L.frequency_scale(k + 1));
    cs.low_integral = power_integral(g, hl.low, half);
    cs.high_integral = power_integral(g, hl.high, half);
    const bool low_wins = cs.low_integral >= cs.high_integral;
    cs.branch = low_wins ? "low" : "high";
    double lo = std::min(cs.low_integral, cs.high_integral), hi = std::max(cs.low_integral, cs.high_integral);
    cs.margin = lo > 0.0 ? hi / lo : INFINITY;
    if (!low_wins) {
      // regroup the high part by first-coordinate frequency sectors of width R_{k+1}^{-1/n}
      const double w = L.frequency_scale(k + 1);
      CField S = to_complex(hl.high);
      fft_forward(S, g.sides);
      std::map<std::int64_t, CField> sectors;
      for (std::int64_t q = 0; q < g.size(); ++q) {
        if (S[q] == cplx(0.0)) continue;
        auto idx = g.unflat(q);
        std::int64_t sidx = static_cast<std::int64_t>(std::floor(g.signed_freq(0, idx[0]) / g.box[0] / w));
        auto& sec = sectors[sidx];
        if (sec.empty()) sec.assign(g.size(), cplx(0.0));
        sec[q] = S[q] / static_cast<double>(g.size());
      }
      RField sqs(g.size(), 0.0);
      for (auto& [id, sec] : sectors) {
        fft_backward(sec, g.sides);
        for (std::size_t i = 0; i < sqs.size(); ++i) sqs[i] += std::norm(sec[i]);
      }
      double den = power_integral(g, sqs, 0.5 * half);
      cs.regroup = den > 0.0 ? cs.high_integral / den : 0.0;
    }
    RField next = square_function(f, L.block_scales[k + 1]);
    double Qn = power_integral(g, next, half);
    cs.constant = Qn > 0.0 ? Q / Qn : 1.0;
    tr.steps.push_back(cs);
    cur = std::move(next);
    Q = Qn;
    ++k;
    ++step;
  }
  tr.final_constant = tr.final_smoothed > 0.0 ? tr.start / tr.final_smoothed : 0.0;
  if (tr.terminated && tr.message.empty()) tr.message = "terminated";
  return tr;
}

// ---- one ensemble member, end to end ----

struct HighLowConfig {
  int n = 2;
  double R = 256.0;
  int oversample = 2;
  double epsilon = 0.5;
  double K = 2.0;
  double A_factor = 10.0;     // A = A_factor * measured D~
  int N0 = 1;
  Profile profile = Profile::RandomPhase;
  std::uint64_t seed = 0;
  double alpha_quantile = 0.75;
};

struct HighLowLevel {
  int k = 0;
  double low_ratio = 0.0;       // sup |g_k^low| / g_{k+1}
  double high_leakage = 0.0;    // spectral mass of g_k^high outside the annulus
  std::int64_t omega = 0;
  std::int64_t violations = 0;  // high dominance on Omega_k
  std::int64_t steep = 0;       // points with g_k >= A g_{k+1}
  std::int64_t steep_violations = 0;
  double pruning_error = 0.0;
  std::int64_t pruned = 0, tiles = 0;
};

struct HighLowResult {
  HighLowConfig config;
  ScaleLadder ladder;
  std::vector<int> sides;
  double alpha = 0.0, beta = 0.0;
  double D = 0.0;  // measured, max over levels
  double A = 0.0;
  std::vector<HighLowLevel> levels;
  std::int64_t U = 0, low_set = 0;
  double low_error = 0.0;
  double prune_bound = 0.0;
  std::int64_t monotonicity_violations = 0;
};

inline double dyadic_floor(double x) { return std::ldexp(1.0, static_cast<int>(std::floor(std::log2(x)))); }

inline HighLowResult run_highlow(const HighLowConfig& cfg) {
  auto lat = make_field_lattice(cfg.n, cfg.R, cfg.oversample);
  Grid grid = make_field_grid(*lat, 2);
  ProfileSpec ps;
  ps.kind = cfg.profile;
  DiscreteField f = synthesize(lat, grid, ps, cfg.seed);
  ScaleLadder lad = build_ladder(cfg.n, cfg.R, cfg.epsilon, cfg.K, cfg.A_factor, cfg.N0);
  HighLowResult res;
  res.config = cfg;
  res.sides = grid.sides;
  const CField fs = field_samples(f);
  std::vector<double> mags(fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) mags[i] = std::abs(fs[i]);
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const double top = sorted.back();
  if (!(top > 0.0)) throw std::domain_error("run_highlow: zero field");
  res.alpha = dyadic_floor(sorted[static_cast<std::size_t>(cfg.alpha_quantile * (sorted.size() - 1))]);
  const int N = lad.N;
  auto levels_of = [&](const PruneState& st) {
    std::vector<RField> gs(N + 1);
    for (int k = lad.N0; k <= N; ++k) gs[k] = g_level(st, grid, cfg.n, k);
    return gs;
  };
  // first pass measures D~ with the nominal A
  {
    PruneState st = prune(f, lad, res.alpha, 1.0);
    auto gs = levels_of(st);
    for (int k = lad.N0; k < N; ++k) {
      HighLowSplit hl = highlow_split(grid, gs[k], lad.frequency_scale(k + 1));
      res.D = std::max(res.D, low_frequency_ratio(hl.low, gs[k + 1]).ratio);
    }
    std::vector<double> shell;
    for (std::size_t i = 0; i < fs.size(); ++i)
      if (mags[i] >= res.alpha && mags[i] < 2.0 * res.alpha) shell.push_back(gs[N][i]);
    if (shell.empty()) throw std::domain_error("run_highlow: empty amplitude shell");
    std::sort(shell.begin(), shell.end());
    res.beta = dyadic_floor(shell[shell.size() / 2]);
  }
  lad.A = cfg.A_factor * std::max(res.D, 1.0);
  res.A = lad.A;
  res.ladder = lad;
  PruneState st = prune(f, lad, res.alpha, res.beta);
  auto gs = levels_of(st);
  LevelSets sets = important_sets(fs, gs, lad, res.alpha, res.beta);
  res.U = sets.count(sets.U);
  res.low_set = sets.count(sets.low);
  for (int k = lad.N0; k < N; ++k) {
    HighLowLevel lv;
    lv.k = k;
    HighLowSplit hl = highlow_split(grid, gs[k], lad.frequency_scale(k + 1));
    lv.low_ratio = low_frequency_ratio(hl.low, gs[k + 1]).ratio;
    lv.high_leakage = spectral_mass_outside(grid, hl.high, 0.5 * hl.radius, 10.0 * lad.frequency_scale(k));
    lv.omega = sets.count(sets.omega[k]);
    lv.violations = high_dominance_check(gs[k], hl.high, sets.omega[k]);
    std::vector<char> steep(fs.size(), 0);
    for (std::size_t i = 0; i < fs.size(); ++i) steep[i] = gs[k][i] >= lad.A * gs[k + 1][i];
    lv.steep = sets.count(steep);
    lv.steep_violations = high_dominance_check(gs[k], hl.high, steep);
    lv.pruning_error = pruning_error_check(st, fs, k, sets.omega[k]);
    lv.pruned = st.pruned[k];
    lv.tiles = st.tiles[k];
    res.levels.push_back(lv);
  }
  res.low_error = pruning_error_low(st, fs, sets.low);
  PruneBoundReport pb = prune_bound_check(st);
  res.prune_bound = pb.worst;
  res.monotonicity_violations = pb.monotonicity_violations;
  return res;
}

}  // namespace mcsq
