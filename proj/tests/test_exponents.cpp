#include <gtest/gtest.h>

#include "mcsq/exponents.hpp"

using namespace mcsq;

TEST(CriticalExponent, KnownValues) {
  EXPECT_EQ(critical_exponent(2), Rational(4));
  EXPECT_EQ(critical_exponent(3), Rational(7));
  EXPECT_EQ(critical_exponent(4), Rational(11));
  EXPECT_EQ(critical_exponent(1), Rational(2));
  EXPECT_THROW(critical_exponent(0), std::domain_error);
}

TEST(EvenExponent, KnownValues) {
  EXPECT_EQ(even_exponent(1), 2);
  EXPECT_EQ(even_exponent(2), 4);
  EXPECT_EQ(even_exponent(3), 6);
  EXPECT_EQ(even_exponent(4), 10);
  EXPECT_THROW(even_exponent(0), std::domain_error);
}

TEST(EvenExponent, TableInvariants) {
  ExponentTable t = make_exponent_table(200);
  ASSERT_EQ(t.p.size(), 200u);
  for (int n = 1; n <= 200; ++n) {
    std::int64_t pt = t.p_tilde[n - 1];
    EXPECT_EQ(pt % 2, 0) << n;
    EXPECT_GE(pt, 2);
    EXPECT_LE(Rational(pt), t.p[n - 1]) << n;
    if (n > 1) {
      EXPECT_LE(t.p_tilde[n - 2], pt);
      EXPECT_LE(Rational(pt, t.p_tilde[n - 2]), Rational(2));
    }
  }
}

TEST(NextEvenIndex, KnownValues) {
  EXPECT_EQ(next_even_index(Rational(11)), 4);
  EXPECT_EQ(next_even_index(Rational(4)), 2);
  EXPECT_EQ(next_even_index(Rational(2)), 2);
  EXPECT_THROW(next_even_index(Rational(3, 2)), std::domain_error);
}

TEST(NextEvenIndex, BoundExhaustion) {
  // p = 12 needs l = 4 (12/6 = 2); a bound of 3 stops short
  EXPECT_EQ(next_even_index(Rational(12)), 4);
  EXPECT_THROW(next_even_index(Rational(12), 3), std::out_of_range);
}

TEST(NextEvenIndex, MonotoneInP) {
  const int n_max = 30;
  int prev = 0;
  for (Rational p(2); p <= critical_exponent(n_max); p = p + Rational(1, 4)) {
    int l = next_even_index(p);
    EXPECT_GE(l, prev) << p.str();
    prev = l;
  }
}

TEST(Pprops, SmallTablePasses) {
  PpropsReport r = verify_pprops(4, true);
  EXPECT_TRUE(r.all_pass());
  for (int i = 1; i <= 4; ++i) EXPECT_TRUE(r.property_pass(i));
  EXPECT_THROW(verify_pprops(1), std::domain_error);
}

TEST(Pprops, Exhaustive200) {
  PpropsReport r = verify_pprops(200);
  EXPECT_TRUE(r.all_pass());
  EXPECT_TRUE(r.entries.empty());
  EXPECT_EQ(r.checked[3], 200 * 201 / 2);
}

TEST(Pprops, PropertyFourWitness) {
  Rational q = critical_exponent(4) / Rational(even_exponent(1));
  EXPECT_EQ(q, Rational(11, 2));
  EXPECT_TRUE(q > Rational(2));
  EXPECT_TRUE(q <= critical_exponent(3));
  PpropsReport r = verify_pprops(4, true);
  bool seen = false;
  for (const auto& e : r.entries)
    if (e.property == 4 && e.n == 4 && e.k == 1) {
      seen = true;
      EXPECT_TRUE(e.pass);
    }
  EXPECT_TRUE(seen);
}

TEST(Rational, ExactBoundaries) {
  EXPECT_EQ(Rational(4) / Rational(2), Rational(2));
  EXPECT_TRUE(Rational(4) / Rational(2) <= Rational(2));
  EXPECT_EQ(Rational(6, -4), Rational(-3, 2));
  EXPECT_EQ(Rational(7, 2).str(), "7/2");
  EXPECT_THROW(Rational(1, 0), std::domain_error);
}
