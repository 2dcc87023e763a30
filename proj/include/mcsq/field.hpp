#pragma once
// Lattice partitions of the moment-curve neighborhood, discrete fields with
// block-decomposed spectra, dual tilings and wave packets.
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"
#include "weights.hpp"

namespace mcsq {

inline int default_oversample(int n) { return n <= 2 ? 4 : 2; }

// Frequencies are xi_i = eta_i / period_i with eta integer and period_i = c R^{i/n}.
struct FieldLattice {
  int n = 0;
  double R = 1.0;
  std::int64_t M = 1;  // blocks along the curve
  int oversample = 1;
  std::vector<double> period;
  std::vector<std::vector<std::int64_t>> points;  // per block, n entries per point
  std::vector<std::int64_t> lo, hi;

  std::int64_t block_count() const { return static_cast<std::int64_t>(points.size()); }
  std::int64_t points_in(std::int64_t b) const { return static_cast<std::int64_t>(points[b].size()) / n; }
  std::int64_t total_points() const {
    std::int64_t s = 0;
    for (std::int64_t b = 0; b < block_count(); ++b) s += points_in(b);
    return s;
  }
  const std::int64_t* point(std::int64_t b, std::int64_t k) const { return points[b].data() + k * n; }
  Vec frequency(const std::int64_t* eta) const {
    Vec xi(n);
    for (int a = 0; a < n; ++a) xi(a) = static_cast<double>(eta[a]) / period[a];
    return xi;
  }
  // blocks at scale r are unions of consecutive fine blocks
  std::int64_t coarse_count(double r) const {
    std::int64_t mr = blocks_per_side(n, r);
    if (mr > M || M % mr != 0) throw std::invalid_argument("scale " + std::to_string(r) + " does not nest in the partition");
    return mr;
  }
  std::int64_t coarse_of(std::int64_t b, double r) const { return b / (M / coarse_count(r)); }
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    };
    mix(n);
    mix(static_cast<std::uint64_t>(M));
    mix(oversample);
    for (const auto& b : points)
      for (auto v : b) mix(static_cast<std::uint64_t>(v));
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }
};

inline std::shared_ptr<const FieldLattice> make_field_lattice(int n, double R, int oversample = 0) {
  if (oversample <= 0) oversample = default_oversample(n);
  auto L = std::make_shared<FieldLattice>();
  L->n = n;
  L->R = R;
  L->M = blocks_per_side(n, R);
  L->oversample = oversample;
  L->period.resize(n);
  for (int i = 1; i <= n; ++i) L->period[i - 1] = oversample * std::pow(static_cast<double>(L->M), i);
  L->points.resize(L->M);
  L->lo.assign(n, INT64_MAX);
  L->hi.assign(n, INT64_MIN);
  const double tol = 1e-9;
  for (std::int64_t l = 0; l < L->M; ++l) {
    auto& out = L->points[l];
    for (std::int64_t e1 = l * oversample; e1 < (l + 1) * oversample; ++e1) {
      const double t = e1 / L->period[0];
      const Mat F = moment_frame(n, t);
      const Vec g = moment_curve(n, t);
      std::vector<std::int64_t> eta(n, 0);
      std::vector<double> lam(n + 1, 0.0);
      eta[0] = e1;
      std::function<void(int)> rec = [&](int j) {
        if (j > n) {
          out.insert(out.end(), eta.begin(), eta.end());
          for (int a = 0; a < n; ++a) {
            L->lo[a] = std::min(L->lo[a], eta[a]);
            L->hi[a] = std::max(L->hi[a], eta[a]);
          }
          return;
        }
        double c = g(j - 1);
        for (int i = 2; i < j; ++i) c += F(j - 1, i - 1) * lam[i];
        const double h = F(j - 1, j - 1) * std::pow(R, -static_cast<double>(j) / n);
        const double P = L->period[j - 1];
        std::int64_t a = static_cast<std::int64_t>(std::ceil(P * (c - h) - tol));
        std::int64_t b = static_cast<std::int64_t>(std::floor(P * (c + h) + tol));
        for (std::int64_t e = a; e <= b; ++e) {
          eta[j - 1] = e;
          lam[j] = (e / P - c) / F(j - 1, j - 1);
          rec(j + 1);
        }
      };
      rec(2);
    }
  }
  return L;
}

// grid with power-of-two sides holding `factor` times the lattice spread
inline Grid make_field_grid(const FieldLattice& L, int factor = 2) {
  Grid g;
  g.n = L.n;
  g.box = L.period;
  g.sides.resize(L.n);
  for (int a = 0; a < L.n; ++a) g.sides[a] = pow2_at_least(factor * (L.hi[a] - L.lo[a] + 1));
  return g;
}

inline void check_nyquist(const FieldLattice& L, const Grid& g) {
  if (g.n != L.n) throw std::invalid_argument("grid/lattice dimension mismatch");
  for (int a = 0; a < L.n; ++a) {
    if (std::abs(g.box[a] - L.period[a]) > 1e-9 * L.period[a]) throw std::invalid_argument("grid box does not match lattice period");
    if (g.sides[a] < L.hi[a] - L.lo[a] + 1)
      throw std::invalid_argument("grid too coarse for partition on axis " + std::to_string(a));
  }
}

struct DiscreteField {
  std::shared_ptr<const FieldLattice> lattice;
  Grid grid;
  std::vector<std::vector<cplx>> coeffs;  // aligned with lattice->points

  int n() const { return lattice->n; }
  std::int64_t block_count() const { return lattice->block_count(); }
  bool block_nonzero(std::int64_t b) const {
    for (const auto& c : coeffs[b])
      if (c != cplx(0.0)) return true;
    return false;
  }
  double coefficient_energy() const {
    double s = 0.0;
    for (const auto& b : coeffs)
      for (const auto& c : b) s += std::norm(c);
    return s;
  }
  // L2 norm squared over the torus
  double l2_sq() const { return grid.volume() * coefficient_energy(); }
};

inline DiscreteField zero_field(std::shared_ptr<const FieldLattice> L, const Grid& g) {
  check_nyquist(*L, g);
  DiscreteField f;
  f.lattice = std::move(L);
  f.grid = g;
  f.coeffs.resize(f.lattice->block_count());
  for (std::int64_t b = 0; b < f.lattice->block_count(); ++b) f.coeffs[b].assign(f.lattice->points_in(b), cplx(0.0));
  return f;
}

// deposit block coefficients onto a grid spectrum (indices mod sides)
inline void deposit(const DiscreteField& f, std::int64_t b, CField& spec, const std::vector<cplx>* coeffs = nullptr) {
  const auto& L = *f.lattice;
  const auto& c = coeffs ? *coeffs : f.coeffs[b];
  std::vector<std::int64_t> idx(L.n);
  for (std::int64_t k = 0; k < L.points_in(b); ++k) {
    if (c[k] == cplx(0.0)) continue;
    const std::int64_t* e = L.point(b, k);
    for (int a = 0; a < L.n; ++a) idx[a] = e[a];
    spec[f.grid.flat(idx)] += c[k];
  }
}

inline CField samples_of_blocks(const DiscreteField& f, const std::vector<std::int64_t>& blocks) {
  CField s(f.grid.size(), cplx(0.0));
  for (auto b : blocks) deposit(f, b, s);
  fft_backward(s, f.grid.sides);
  return s;
}

inline CField block_samples(const DiscreteField& f, std::int64_t b) { return samples_of_blocks(f, {b}); }

inline CField field_samples(const DiscreteField& f) {
  CField s(f.grid.size(), cplx(0.0));
  for (std::int64_t b = 0; b < f.block_count(); ++b) deposit(f, b, s);
  fft_backward(s, f.grid.sides);
  return s;
}

// samples of a coarse block at scale r
inline CField coarse_samples(const DiscreteField& f, double r, std::int64_t j) {
  const auto& L = *f.lattice;
  std::int64_t per = L.M / L.coarse_count(r);
  std::vector<std::int64_t> bl;
  for (std::int64_t b = j * per; b < (j + 1) * per; ++b) bl.push_back(b);
  return samples_of_blocks(f, bl);
}

enum class Profile { RandomPhase, Focusing, SingleBlock, SparsePackets };

inline Profile parse_profile(const std::string& s) {
  if (s == "random" || s == "random-phase") return Profile::RandomPhase;
  if (s == "focusing" || s == "focus") return Profile::Focusing;
  if (s == "single" || s == "single-block") return Profile::SingleBlock;
  if (s == "packets" || s == "sparse-packets") return Profile::SparsePackets;
  throw std::invalid_argument("unknown profile '" + s + "'");
}

inline std::string profile_name(Profile p) {
  switch (p) {
    case Profile::RandomPhase: return "random-phase";
    case Profile::Focusing: return "focusing";
    case Profile::SingleBlock: return "single-block";
    default: return "sparse-packets";
  }
}

struct ProfileSpec {
  Profile kind = Profile::RandomPhase;
  std::int64_t block = 0;  // for SingleBlock
  int packets = 1;         // per block, for SparsePackets
  bool normalize = false;  // rescale each block to unit sup norm
};

// uniform double in [0,1) from the raw 64-bit stream; stable across standard libraries
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline cplx unit_phase(double turns) { return std::polar(1.0, 2.0 * M_PI * turns); }

inline double sup_abs(const CField& s) {
  double m = 0.0;
  for (const auto& v : s) m = std::max(m, std::abs(v));
  return m;
}

inline DiscreteField synthesize(std::shared_ptr<const FieldLattice> L, const Grid& g, const ProfileSpec& spec,
                                std::uint64_t seed) {
  DiscreteField f = zero_field(std::move(L), g);
  const auto& lat = *f.lattice;
  std::mt19937_64 rng(seed);
  for (std::int64_t b = 0; b < lat.block_count(); ++b) {
    auto& c = f.coeffs[b];
    switch (spec.kind) {
      case Profile::RandomPhase:
        for (auto& v : c) v = unit_phase(unit_uniform(rng));
        break;
      case Profile::Focusing:
        for (auto& v : c) v = 1.0;
        break;
      case Profile::SingleBlock:
        if (spec.block < 0 || spec.block >= lat.block_count()) throw std::out_of_range("single-block profile: block out of range");
        if (b == spec.block)
          for (auto& v : c) v = unit_phase(unit_uniform(rng));
        break;
      case Profile::SparsePackets:
        if (spec.packets < 1) throw std::invalid_argument("sparse-packets profile needs at least one packet per block");
        for (int p = 0; p < spec.packets; ++p) {
          std::vector<double> y0(lat.n);
          for (auto& y : y0) y = unit_uniform(rng);
          cplx amp = unit_phase(unit_uniform(rng));
          for (std::int64_t k = 0; k < lat.points_in(b); ++k) {
            const std::int64_t* e = lat.point(b, k);
            double ph = 0.0;
            for (int a = 0; a < lat.n; ++a) ph -= static_cast<double>(e[a]) * y0[a];
            c[k] += amp * unit_phase(ph - std::floor(ph));
          }
        }
        break;
    }
  }
  if (spec.normalize) {
    for (std::int64_t b = 0; b < lat.block_count(); ++b) {
      if (!f.block_nonzero(b)) continue;
      double m = sup_abs(block_samples(f, b));
      if (m > 0.0)
        for (auto& v : f.coeffs[b]) v /= m;
    }
  }
  return f;
}

inline DiscreteField restrict_blocks(const DiscreteField& f, const std::vector<std::int64_t>& blocks) {
  DiscreteField out = f;
  std::vector<char> keep(f.block_count(), 0);
  for (auto b : blocks) {
    if (b < 0 || b >= f.block_count()) throw std::out_of_range("restrict: block id not in partition");
    keep[b] = 1;
  }
  for (std::int64_t b = 0; b < f.block_count(); ++b)
    if (!keep[b]) std::fill(out.coeffs[b].begin(), out.coeffs[b].end(), cplx(0.0));
  return out;
}

// restriction to coarse blocks at scale r (each a union of fine blocks)
inline DiscreteField restrict_coarse(const DiscreteField& f, double r, const std::vector<std::int64_t>& coarse) {
  const auto& L = *f.lattice;
  std::int64_t mr = L.coarse_count(r);
  std::int64_t per = L.M / mr;
  std::vector<std::int64_t> bl;
  for (auto j : coarse) {
    if (j < 0 || j >= mr) throw std::out_of_range("restrict: coarse block out of range");
    for (std::int64_t b = j * per; b < (j + 1) * per; ++b) bl.push_back(b);
  }
  return restrict_blocks(f, bl);
}

// ---- serialization ----

namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  // host is little-endian on every supported target; assert at runtime
  const std::uint16_t probe = 1;
  if (*reinterpret_cast<const unsigned char*>(&probe) != 1) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw std::runtime_error("field container truncated");
  const std::uint16_t probe = 1;
  if (*reinterpret_cast<const unsigned char*>(&probe) != 1) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}
}  // namespace detail

inline constexpr char kFieldMagic[8] = {'M', 'C', 'S', 'Q', 'F', 'L', 'D', '1'};

inline void save_field(const DiscreteField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  const auto& L = *f.lattice;
  os.write(kFieldMagic, 8);
  detail::put_le<std::int32_t>(os, L.n);
  detail::put_le<std::int32_t>(os, L.oversample);
  detail::put_le<double>(os, L.R);
  for (int a = 0; a < L.n; ++a) detail::put_le<std::int32_t>(os, f.grid.sides[a]);
  for (int a = 0; a < L.n; ++a) detail::put_le<double>(os, f.grid.box[a]);
  std::int64_t nonzero = 0;
  for (std::int64_t b = 0; b < f.block_count(); ++b) nonzero += f.block_nonzero(b);
  detail::put_le<std::int64_t>(os, nonzero);
  for (std::int64_t b = 0; b < f.block_count(); ++b) {
    if (!f.block_nonzero(b)) continue;
    detail::put_le<std::int64_t>(os, b);
    detail::put_le<std::int64_t>(os, L.points_in(b));
    for (const auto& c : f.coeffs[b]) {
      detail::put_le<float>(os, static_cast<float>(c.real()));
      detail::put_le<float>(os, static_cast<float>(c.imag()));
    }
  }
}

inline DiscreteField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kFieldMagic, 8) != 0) throw std::runtime_error("not a field container: " + path);
  int n = detail::get_le<std::int32_t>(is);
  int c = detail::get_le<std::int32_t>(is);
  double R = detail::get_le<double>(is);
  Grid g;
  g.n = n;
  g.sides.resize(n);
  g.box.resize(n);
  for (int a = 0; a < n; ++a) g.sides[a] = detail::get_le<std::int32_t>(is);
  for (int a = 0; a < n; ++a) g.box[a] = detail::get_le<double>(is);
  DiscreteField f = zero_field(make_field_lattice(n, R, c), g);
  std::int64_t cnt = detail::get_le<std::int64_t>(is);
  for (std::int64_t i = 0; i < cnt; ++i) {
    std::int64_t b = detail::get_le<std::int64_t>(is);
    std::int64_t m = detail::get_le<std::int64_t>(is);
    if (b < 0 || b >= f.block_count() || m != f.lattice->points_in(b)) throw std::runtime_error("field container: block mismatch");
    for (std::int64_t k = 0; k < m; ++k) {
      float re = detail::get_le<float>(is);
      float im = detail::get_le<float>(is);
      f.coeffs[b][k] = cplx(re, im);
    }
  }
  return f;
}

// CSV of the first two axes, remaining axes at index 0
inline void export_slice_csv(const DiscreteField& f, const std::string& path) {
  CField s = field_samples(f);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "i,j,x1,x2,re,im,abs\n";
  const Grid& g = f.grid;
  int n1 = g.sides[0], n2 = g.n > 1 ? g.sides[1] : 1;
  std::vector<std::int64_t> idx(g.n, 0);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      idx[0] = i;
      if (g.n > 1) idx[1] = j;
      const cplx v = s[g.flat(idx)];
      os << i << ',' << j << ',' << i * g.spacing(0) << ',' << (g.n > 1 ? j * g.spacing(1) : 0.0) << ',' << v.real() << ','
         << v.imag() << ',' << std::abs(v) << '\n';
    }
}

// ---- dual tilings ----

// Tiles of the dual box of a block at scale r: in lattice coordinates y = x / period,
// u = B y with B an integer upper-triangular matrix; tiles are unit cells of u modulo B Z^n.
struct TileSystem {
  int n = 0;
  double r = 1.0;
  std::int64_t coarse_index = 0;
  std::vector<std::int64_t> B;  // row-major n x n
  std::int64_t count = 0;

  std::int64_t at(int i, int j) const { return B[i * n + j]; }
  // canonical representative with 0 <= m_i < B_ii
  void reduce(std::vector<std::int64_t>& m) const {
    for (int i = n - 1; i >= 0; --i) {
      std::int64_t d = at(i, i);
      std::int64_t q = m[i] >= 0 ? m[i] / d : -((-m[i] + d - 1) / d);
      if (q != 0)
        for (int k = 0; k <= i; ++k) m[k] -= q * at(k, i);
    }
  }
  std::int64_t id(std::vector<std::int64_t> m) const {
    reduce(m);
    std::int64_t v = 0;
    for (int i = 0; i < n; ++i) v = v * at(i, i) + m[i];
    return v;
  }
  std::vector<std::int64_t> tile(std::int64_t id) const {
    std::vector<std::int64_t> m(n);
    for (int i = n - 1; i >= 0; --i) {
      m[i] = id % at(i, i);
      id /= at(i, i);
    }
    return m;
  }
  void to_u(const std::vector<double>& y, std::vector<double>& u) const {
    u.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) u[i] += static_cast<double>(at(i, j)) * y[j];
  }
};

inline TileSystem make_tiles(const FieldLattice& L, double r, std::int64_t coarse_index) {
  std::int64_t mr = L.coarse_count(r);
  if (coarse_index < 0 || coarse_index >= mr) throw std::out_of_range("tile system: block out of range");
  const std::int64_t D = L.M / mr;
  TileSystem t;
  t.n = L.n;
  t.r = r;
  t.coarse_index = coarse_index;
  t.B.assign(L.n * L.n, 0);
  t.count = 1;
  for (int i = 1; i <= L.n; ++i) {
    for (int j = i; j <= L.n; ++j) {
      double v = L.oversample * factorial(j) / factorial(j - i) * std::pow(static_cast<double>(coarse_index), j - i) *
                 std::pow(static_cast<double>(D), j);
      t.B[(i - 1) * L.n + (j - 1)] = static_cast<std::int64_t>(std::llround(v));
    }
    t.count *= t.at(i - 1, i - 1);
  }
  return t;
}

// One-dimensional partition-of-unity profile: indicator of [-1/2,1/2] smoothed by
// |phi^|^2 with phi the mollifier supported in [-1/4,1/4].
class WindowProfile {
 public:
  static const WindowProfile& get() {
    static WindowProfile w;
    return w;
  }
  double operator()(double s) const {
    s = std::abs(s);
    double u = s / ds_;
    std::size_t i = static_cast<std::size_t>(u);
    if (i + 1 >= table_.size()) return 0.0;
    double t = u - i;
    return (1.0 - t) * table_[i] + t * table_[i + 1];
  }
  double reach() const { return ds_ * (table_.size() - 2); }
  // autocorrelation of the mollifier, normalized to 1 at 0; supported in |nu| <= 1/2
  static double spectrum(double nu) {
    nu = std::abs(nu);
    if (nu >= 0.5) return 0.0;
    std::vector<double> x, w;
    detail::composite_gauss(-0.25, 0.25, 16, 16, x, w);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double a = mollifier(4.0 * std::abs(x[i]));
      num += w[i] * a * mollifier(4.0 * std::abs(x[i] + nu));
      den += w[i] * a * a;
    }
    return num / den;
  }

 private:
  WindowProfile() {
    std::vector<double> x, w;
    detail::composite_gauss(0.0, 0.5, 32, 16, x, w);
    std::vector<double> spec(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double sinc = std::sin(M_PI * x[i]) / (M_PI * x[i]);
      spec[i] = spectrum(x[i]) * sinc;
    }
    const double smax = 16.0;
    table_.resize(static_cast<std::size_t>(smax / ds_) + 2);
    for (std::size_t k = 0; k < table_.size(); ++k) {
      double s = k * ds_;
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * spec[i] * std::cos(2.0 * M_PI * s * x[i]);
      table_[k] = 2.0 * acc;
    }
  }
  double ds_ = 1.0 / 256.0;
  std::vector<double> table_;
};

inline constexpr int kWindowReach = 3;

// Visit (grid point, tile, window weight) triples. Windows are truncated to `reach`
// tiles per axis and renormalized so they sum to one at every grid point.
template <class Fn>
void for_each_window(const TileSystem& ts, const Grid& g, int reach, Fn&& fn) {
  const WindowProfile& prof = WindowProfile::get();
  const int n = ts.n;
  const int span = 2 * reach + 1;
  std::int64_t combos = 1;
  for (int a = 0; a < n; ++a) combos *= span;
  std::vector<double> y(n), u;
  std::vector<std::int64_t> m(n), m0(n);
  std::vector<std::vector<double>> axis_w(n, std::vector<double>(span));
  std::vector<std::int64_t> ids(combos);
  std::vector<double> ws(combos);
  for (std::int64_t p = 0; p < g.size(); ++p) {
    auto idx = g.unflat(p);
    for (int a = 0; a < n; ++a) y[a] = static_cast<double>(idx[a]) / g.sides[a];
    ts.to_u(y, u);
    for (int a = 0; a < n; ++a) {
      m0[a] = static_cast<std::int64_t>(std::llround(u[a]));
      for (int o = 0; o < span; ++o) axis_w[a][o] = prof(u[a] - static_cast<double>(m0[a] + o - reach));
    }
    double total = 0.0;
    for (std::int64_t c = 0; c < combos; ++c) {
      std::int64_t rem = c;
      double w = 1.0;
      for (int a = n - 1; a >= 0; --a) {
        int o = static_cast<int>(rem % span);
        rem /= span;
        m[a] = m0[a] + o - reach;
        w *= axis_w[a][o];
      }
      ids[c] = ts.id(m);
      ws[c] = w;
      total += w;
    }
    for (std::int64_t c = 0; c < combos; ++c)
      if (ws[c] > 0.0) fn(p, ids[c], ws[c] / total);
  }
}

// tile containing each grid point (nearest unit cell)
inline std::vector<std::int64_t> tile_of_points(const TileSystem& ts, const Grid& g) {
  std::vector<std::int64_t> out(g.size());
  std::vector<double> y(ts.n), u;
  std::vector<std::int64_t> m(ts.n);
  for (std::int64_t p = 0; p < g.size(); ++p) {
    auto idx = g.unflat(p);
    for (int a = 0; a < ts.n; ++a) y[a] = static_cast<double>(idx[a]) / g.sides[a];
    ts.to_u(y, u);
    for (int a = 0; a < ts.n; ++a) m[a] = static_cast<std::int64_t>(std::llround(u[a]));
    out[p] = ts.id(m);
  }
  return out;
}

// sup over the grid of window^{1/2} |f| for every tile
inline RField tile_sup(const TileSystem& ts, const Grid& g, const CField& f, int reach = kWindowReach) {
  RField sup(ts.count, 0.0);
  for_each_window(ts, g, reach, [&](std::int64_t p, std::int64_t t, double w) {
    double v = std::sqrt(w) * std::abs(f[p]);
    if (v > sup[t]) sup[t] = v;
  });
  return sup;
}

// sum of the windows of the selected tiles
inline RField window_sum(const TileSystem& ts, const Grid& g, const std::vector<char>& selected, int reach = kWindowReach) {
  RField s(g.size(), 0.0);
  for_each_window(ts, g, reach, [&](std::int64_t p, std::int64_t t, double w) {
    if (selected[t]) s[p] += w;
  });
  return s;
}

struct WavePacket {
  std::int64_t block = 0;
  std::int64_t tile_id = 0;
  std::vector<std::int64_t> tile;
  double amplitude = 0.0;  // sup |psi_T f|
  double mass = 0.0;       // integral of |psi_T f|^2
  CField samples;          // psi_T f on the grid (empty unless kept)
};

inline std::vector<WavePacket> wave_packet_decompose(const DiscreteField& f, std::int64_t b, bool keep_samples = true,
                                                     int reach = kWindowReach) {
  const auto& L = *f.lattice;
  if (b < 0 || b >= L.block_count()) throw std::out_of_range("wave packets: block out of range");
  TileSystem ts = make_tiles(L, L.R, b);
  CField s = block_samples(f, b);
  std::vector<WavePacket> out(ts.count);
  for (std::int64_t t = 0; t < ts.count; ++t) {
    out[t].block = b;
    out[t].tile_id = t;
    out[t].tile = ts.tile(t);
    if (keep_samples) out[t].samples.assign(f.grid.size(), cplx(0.0));
  }
  for_each_window(ts, f.grid, reach, [&](std::int64_t p, std::int64_t t, double w) {
    cplx v = w * s[p];
    if (keep_samples) out[t].samples[p] += v;
  });
  if (keep_samples) {
    const double cell = f.grid.cell_volume();
    for (auto& pk : out) {
      for (const auto& v : pk.samples) {
        pk.amplitude = std::max(pk.amplitude, std::abs(v));
        pk.mass += std::norm(v) * cell;
      }
    }
  } else {
    const double cell = f.grid.cell_volume();
    std::int64_t last = -1;
    std::vector<std::pair<std::int64_t, double>> acc;
    auto flush = [&]() {
      if (last < 0) return;
      std::sort(acc.begin(), acc.end());
      for (std::size_t i = 0; i < acc.size();) {
        std::size_t j = i;
        double w = 0.0;
        while (j < acc.size() && acc[j].first == acc[i].first) w += acc[j++].second;
        double v = w * std::abs(s[last]);
        auto& pk = out[acc[i].first];
        pk.amplitude = std::max(pk.amplitude, v);
        pk.mass += v * v * cell;
        i = j;
      }
      acc.clear();
    };
    for_each_window(ts, f.grid, reach, [&](std::int64_t p, std::int64_t t, double w) {
      if (p != last) {
        flush();
        last = p;
      }
      acc.emplace_back(t, w);
    });
    flush();
  }
  return out;
}

// membership of a lattice point in the block dilated about its center
inline bool in_dilated_block(const FieldLattice& L, std::int64_t b, const std::int64_t* eta, double factor) {
  SlabBox sb = slab_box(make_block(L.n, L.R, b));
  Vec lam = sb.frame.triangularView<Eigen::Lower>().solve(L.frequency(eta) - sb.center);
  for (int i = 0; i < L.n; ++i)
    if (std::abs(lam(i)) > factor * sb.half_widths(i) * (1.0 + 1e-9)) return false;
  return true;
}

// fraction of spectral mass of grid samples outside the dilated block
inline double spectral_leakage(const DiscreteField& f, std::int64_t b, const CField& samples, double factor = 3.0) {
  const auto& L = *f.lattice;
  const Grid& g = f.grid;
  CField S = samples;
  fft_forward(S, g.sides);
  SlabBox sb = slab_box(make_block(L.n, L.R, b));
  double total = 0.0, outside = 0.0;
  std::vector<std::int64_t> e(L.n);
  // choose the alias of each grid frequency nearest the block center
  Vec c_eta(L.n);
  for (int a = 0; a < L.n; ++a) c_eta(a) = sb.center(a) * L.period[a];
  for (std::int64_t p = 0; p < g.size(); ++p) {
    double m = std::norm(S[p]);
    if (m == 0.0) continue;
    total += m;
    auto idx = g.unflat(p);
    for (int a = 0; a < L.n; ++a) {
      double k = std::round((c_eta(a) - idx[a]) / g.sides[a]);
      e[a] = idx[a] + static_cast<std::int64_t>(k) * g.sides[a];
    }
    Vec lam = sb.frame.triangularView<Eigen::Lower>().solve(L.frequency(e.data()) - sb.center);
    bool in = true;
    for (int i = 0; i < L.n; ++i)
      if (std::abs(lam(i)) > factor * sb.half_widths(i) * (1.0 + 1e-9)) in = false;
    if (!in) outside += m;
  }
  return total > 0.0 ? outside / total : 0.0;
}

// (|f_b|^2 * omega_b) on the grid
inline RField smoothed_square(const DiscreteField& f, std::int64_t b, double kappa, const CField* samples = nullptr) {
  CField s = samples ? *samples : block_samples(f, b);
  RField sq(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) sq[i] = std::norm(s[i]);
  WeightSpec w = omega_block(make_block(f.n(), f.lattice->R, b), kappa);
  RField K = sample_weight(f.grid, w);
  return circular_convolve(f.grid, sq, K);
}

struct LocallyConstantReport {
  double ratio = 0.0;
  std::int64_t tiles = 0;
  std::int64_t worst_tile = -1;
};

inline LocallyConstantReport locally_constant_check(const DiscreteField& f, std::int64_t b, double kappa) {
  LocallyConstantReport rep;
  if (!f.block_nonzero(b)) return rep;
  const auto& L = *f.lattice;
  TileSystem ts = make_tiles(L, L.R, b);
  CField s = block_samples(f, b);
  RField conv = smoothed_square(f, b, kappa, &s);
  auto tile = tile_of_points(ts, f.grid);
  RField sup(ts.count, 0.0), low(ts.count, INFINITY);
  for (std::int64_t p = 0; p < f.grid.size(); ++p) {
    sup[tile[p]] = std::max(sup[tile[p]], std::norm(s[p]));
    low[tile[p]] = std::min(low[tile[p]], conv[p]);
  }
  for (std::int64_t t = 0; t < ts.count; ++t) {
    if (!std::isfinite(low[t])) continue;
    ++rep.tiles;
    double q = low[t] > 0.0 ? sup[t] / low[t] : INFINITY;
    if (q > rep.ratio) {
      rep.ratio = q;
      rep.worst_tile = t;
    }
  }
  return rep;
}

}  // namespace mcsq
