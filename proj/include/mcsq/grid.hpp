#pragma once
// Periodic anisotropic grids and FFTW-backed transforms.
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsq {

using cplx = std::complex<double>;
using CField = std::vector<cplx>;
using RField = std::vector<double>;

struct Grid {
  int n = 0;
  std::vector<int> sides;    // samples per axis
  std::vector<double> box;   // physical period per axis

  std::int64_t size() const {
    std::int64_t s = 1;
    for (int v : sides) s *= v;
    return s;
  }
  double volume() const {
    double v = 1.0;
    for (double b : box) v *= b;
    return v;
  }
  double cell_volume() const { return volume() / static_cast<double>(size()); }
  double spacing(int a) const { return box[a] / sides[a]; }

  void validate() const {
    if (n < 1 || static_cast<int>(sides.size()) != n || static_cast<int>(box.size()) != n)
      throw std::invalid_argument("grid: dimension mismatch");
    for (int a = 0; a < n; ++a)
      if (sides[a] < 1 || !(box[a] > 0.0)) throw std::invalid_argument("grid: nonpositive side or box");
  }

  // row-major, last axis fastest
  std::int64_t flat(const std::vector<std::int64_t>& idx) const {
    std::int64_t f = 0;
    for (int a = 0; a < n; ++a) {
      std::int64_t i = idx[a] % sides[a];
      if (i < 0) i += sides[a];
      f = f * sides[a] + i;
    }
    return f;
  }
  std::vector<std::int64_t> unflat(std::int64_t f) const {
    std::vector<std::int64_t> idx(n);
    for (int a = n - 1; a >= 0; --a) {
      idx[a] = f % sides[a];
      f /= sides[a];
    }
    return idx;
  }
  // physical coordinate of a sample, in [0, box)
  std::vector<double> position(std::int64_t f) const {
    auto idx = unflat(f);
    std::vector<double> x(n);
    for (int a = 0; a < n; ++a) x[a] = idx[a] * spacing(a);
    return x;
  }
  // nearest periodic image of a displacement
  std::vector<double> wrap(std::vector<double> d) const {
    for (int a = 0; a < n; ++a) d[a] -= box[a] * std::round(d[a] / box[a]);
    return d;
  }
  // signed frequency index for a grid slot
  std::int64_t signed_freq(int a, std::int64_t i) const { return i <= sides[a] / 2 ? i : i - sides[a]; }
};

// smallest integer >= m of the form 2^a 3^b 5^c
inline int smooth_size(std::int64_t m) {
  if (m < 1) m = 1;
  for (std::int64_t s = m;; ++s) {
    std::int64_t t = s;
    for (int p : {2, 3, 5})
      while (t % p == 0) t /= p;
    if (t == 1) return static_cast<int>(s);
  }
}

inline int pow2_at_least(std::int64_t m) {
  int s = 1;
  while (s < m) s <<= 1;
  return s;
}

class FFTPlanner {
 public:
  static FFTPlanner& instance() {
    static FFTPlanner p;
    return p;
  }
  // in-place transform; sign = FFTW_FORWARD or FFTW_BACKWARD, unnormalized
  void execute(CField& data, const std::vector<int>& dims, int sign) {
    std::int64_t total = 1;
    for (int d : dims) total *= d;
    if (static_cast<std::int64_t>(data.size()) != total) throw std::invalid_argument("fft: size mismatch");
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(dims, sign);
    auto it = plans_.find(key);
    fftw_complex* ptr = reinterpret_cast<fftw_complex*>(data.data());
    if (it == plans_.end()) {
      CField scratch(total);
      fftw_complex* sp = reinterpret_cast<fftw_complex*>(scratch.data());
      fftw_plan p = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), sp, sp, sign, FFTW_ESTIMATE);
      if (!p) throw std::runtime_error("fftw: plan creation failed");
      it = plans_.emplace(key, p).first;
    }
    fftw_execute_dft(it->second, ptr, ptr);
  }
  ~FFTPlanner() {
    for (auto& kv : plans_) fftw_destroy_plan(kv.second);
  }

 private:
  FFTPlanner() = default;
  std::mutex mu_;
  std::map<std::pair<std::vector<int>, int>, fftw_plan> plans_;
};

inline void fft_forward(CField& data, const std::vector<int>& dims) { FFTPlanner::instance().execute(data, dims, FFTW_FORWARD); }
inline void fft_backward(CField& data, const std::vector<int>& dims) { FFTPlanner::instance().execute(data, dims, FFTW_BACKWARD); }

inline CField to_complex(const RField& r) {
  CField c(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) c[i] = r[i];
  return c;
}

// (u * v)(x) = integral of u(x - z) v(z) dz on the torus
inline RField circular_convolve(const Grid& g, const RField& u, const RField& v) {
  CField U = to_complex(u), V = to_complex(v);
  fft_forward(U, g.sides);
  fft_forward(V, g.sides);
  for (std::size_t i = 0; i < U.size(); ++i) U[i] *= V[i];
  fft_backward(U, g.sides);
  RField out(u.size());
  const double s = g.cell_volume() / static_cast<double>(g.size());
  for (std::size_t i = 0; i < U.size(); ++i) out[i] = U[i].real() * s;
  return out;
}

// convolution with a kernel whose transform is already known
inline RField convolve_with_spectrum(const Grid& g, const RField& u, const CField& kernel_hat) {
  CField U = to_complex(u);
  fft_forward(U, g.sides);
  for (std::size_t i = 0; i < U.size(); ++i) U[i] *= kernel_hat[i];
  fft_backward(U, g.sides);
  RField out(u.size());
  const double s = g.cell_volume() / static_cast<double>(g.size());
  for (std::size_t i = 0; i < U.size(); ++i) out[i] = U[i].real() * s;
  return out;
}

inline CField spectrum(const RField& u, const Grid& g) {
  CField U = to_complex(u);
  fft_forward(U, g.sides);
  return U;
}

inline double grid_integral(const Grid& g, const RField& u) {
  double s = 0.0;
  for (double v : u) s += v;
  return s * g.cell_volume();
}

inline double grid_max(const RField& u) {
  double m = 0.0;
  for (double v : u) m = std::max(m, v);
  return m;
}

}  // namespace mcsq
