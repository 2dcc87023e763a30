#pragma once
// Exponent sequences for moment-curve square function estimates.
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsq {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr Rational() = default;
  constexpr Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) {
    if (den == 0) throw std::domain_error("rational with zero denominator");
    if (den < 0) { num = -num; den = -den; }
    std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  friend Rational operator*(Rational a, Rational b) { return {a.num * b.num, a.den * b.den}; }
  friend Rational operator/(Rational a, Rational b) {
    if (b.num == 0) throw std::domain_error("rational division by zero");
    return {a.num * b.den, a.den * b.num};
  }
  friend Rational operator+(Rational a, Rational b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  friend Rational operator-(Rational a, Rational b) { return {a.num * b.den - b.num * a.den, a.den * b.den}; }
  friend bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }
  friend bool operator<(Rational a, Rational b) { return a.num * b.den < b.num * a.den; }
  friend bool operator<=(Rational a, Rational b) { return !(b < a); }
  friend bool operator>(Rational a, Rational b) { return b < a; }
  friend bool operator>=(Rational a, Rational b) { return !(a < b); }
};

// n(n+1)/2 + 1; n = 0 gives 1.
inline std::int64_t critical_exponent_int(int n) {
  if (n < 0) throw std::domain_error("critical_exponent: n must be nonnegative");
  return static_cast<std::int64_t>(n) * (n + 1) / 2 + 1;
}

inline Rational critical_exponent(int n) {
  if (n < 1) throw std::domain_error("critical_exponent: n must be positive");
  return Rational(critical_exponent_int(n));
}

inline std::int64_t even_exponent(int n) {
  if (n < 1) throw std::domain_error("even_exponent: n must be positive");
  if (n == 1) return 2;
  std::int64_t tri = static_cast<std::int64_t>(n) * (n + 1) / 2;
  int r = n % 4;
  return (r == 1 || r == 2) ? tri + 1 : tri;
}

// smallest l >= 2 with 1 <= p / p~_{l-1} <= 2, scanning l up to bound
inline int next_even_index(Rational p, int bound = 100000) {
  if (p < Rational(2)) throw std::domain_error("next_even_index: p must be at least 2");
  for (int l = 2; l <= bound; ++l) {
    Rational q = p / Rational(even_exponent(l - 1));
    if (Rational(1) <= q && q <= Rational(2)) return l;
    if (q < Rational(1)) break;
  }
  throw std::out_of_range("next_even_index: no admissible l for p = " + p.str() +
                          " below bound " + std::to_string(bound));
}

struct ExponentTable {
  int n_max = 0;
  std::vector<Rational> p;            // p[i] = p_{i+1}
  std::vector<std::int64_t> p_tilde;  // p_tilde[i] = p~_{i+1}
};

inline ExponentTable make_exponent_table(int n_max) {
  if (n_max < 1) throw std::domain_error("exponent table needs n_max >= 1");
  ExponentTable t;
  t.n_max = n_max;
  for (int n = 1; n <= n_max; ++n) {
    t.p.push_back(critical_exponent(n));
    t.p_tilde.push_back(even_exponent(n));
  }
  return t;
}

struct PropertyCheck {
  int property = 0;
  int n = 0;
  int k = 0;
  bool pass = true;
  std::string detail;
};

struct PpropsReport {
  int n_max = 0;
  std::int64_t checked[4] = {0, 0, 0, 0};
  std::int64_t failed[4] = {0, 0, 0, 0};
  std::vector<PropertyCheck> entries;  // failures always; all checks when verbose

  bool all_pass() const { return failed[0] + failed[1] + failed[2] + failed[3] == 0; }
  bool property_pass(int i) const { return failed[i - 1] == 0; }
};

inline PpropsReport verify_pprops(int n_max, bool verbose = false) {
  if (n_max < 2) throw std::domain_error("verify_pprops: n_max must be at least 2");
  PpropsReport rep;
  rep.n_max = n_max;
  auto record = [&](int prop, int n, int k, bool ok, std::string detail) {
    ++rep.checked[prop - 1];
    if (!ok) ++rep.failed[prop - 1];
    if (!ok || verbose) rep.entries.push_back({prop, n, k, ok, std::move(detail)});
  };
  for (int n = 2; n <= n_max; ++n) {
    Rational pn = critical_exponent(n);
    Rational pt(even_exponent(n));
    Rational pt_prev(even_exponent(n - 1));
    record(1, n, 0, Rational(2) <= pt && pt <= pn, "p~=" + pt.str() + " p=" + pn.str());
    if (n < n_max) {
      Rational pt_next(even_exponent(n + 1));
      record(2, n, 0, pt <= pt_next, "p~_n=" + pt.str() + " p~_n+1=" + pt_next.str());
    }
    record(3, n, 0, pt / pt_prev <= Rational(2), "ratio=" + (pt / pt_prev).str());
  }
  for (int n = 1; n <= n_max; ++n) {
    Rational pn = critical_exponent(n);
    for (int k = 1; k <= n; ++k) {
      Rational q = pn / Rational(even_exponent(k));
      bool ok = !(q > Rational(2)) || q <= Rational(critical_exponent_int(n - k));
      record(4, n, k, ok, "p_n/p~_k=" + q.str() + " p_{n-k}=" + std::to_string(critical_exponent_int(n - k)));
    }
  }
  return rep;
}

}  // namespace mcsq
