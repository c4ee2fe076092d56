#include "mddp/poly.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

namespace mddp {
namespace {

Polynomial RandomPolynomial(int nvars, int degree, std::mt19937& gen, double density = 0.6) {
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  std::bernoulli_distribution keep(density);
  MonomialBasis basis(nvars, degree);
  Polynomial::TermMap terms;
  for (const auto& m : basis.monomials()) {
    if (keep(gen)) terms[m] = coeff(gen);
  }
  return Polynomial(nvars, terms);
}

std::vector<double> RandomPoint(int nvars, std::mt19937& gen) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<double> pt(nvars);
  for (auto& v : pt) v = u(gen);
  return pt;
}

// Evaluates term by term with std::pow, sharing nothing with Evaluate.
double NaiveEval(const Polynomial& p, const std::vector<double>& pt) {
  long double sum = 0.0;
  for (const auto& [m, c] : p.terms()) {
    long double prod = c;
    for (int i = 0; i < m.nvars(); ++i) prod *= std::pow(static_cast<long double>(pt[i]), m[i]);
    sum += prod;
  }
  return static_cast<double>(sum);
}

double RelErr(double a, double b, double scale) {
  return std::abs(a - b) / std::max(1.0, scale);
}

Polynomial X(int n, int i) { return Polynomial::Variable(n, i); }

TEST(MonomialTest, GradedOrderSmallBasis) {
  MonomialBasis basis(2, 2);
  ASSERT_EQ(basis.size(), 6u);
  const std::vector<std::vector<int>> expected = {{0, 0}, {1, 0}, {0, 1},
                                                  {2, 0}, {1, 1}, {0, 2}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(basis[i].exponents(), expected[i]) << i;
  }
}

TEST(MonomialTest, CountMatchesEnumeration) {
  for (int n = 1; n <= 4; ++n) {
    for (int d = 0; d <= 5; ++d) {
      // Brute force over the exponent cube.
      std::size_t count = 0;
      std::vector<int> e(n, 0);
      while (true) {
        int s = 0;
        for (int v : e) s += v;
        if (s <= d) ++count;
        int k = 0;
        while (k < n && ++e[k] > d) e[k++] = 0;
        if (k == n) break;
      }
      EXPECT_EQ(MonomialCount(n, d), count) << n << " " << d;
    }
  }
}

TEST(MonomialTest, IndexBijection) {
  for (int n = 1; n <= 10; ++n) {
    const std::size_t total = MonomialCount(n, n <= 6 ? 8 : 5);
    for (std::size_t idx = 0; idx < total; ++idx) {
      const Monomial m = MonomialAt(n, idx);
      ASSERT_EQ(MonomialIndex(m), idx);
    }
  }
  // Sampled check at the full degree range for ten variables.
  std::mt19937 gen(3);
  std::uniform_int_distribution<std::size_t> pick(0, MonomialCount(10, 8) - 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t idx = pick(gen);
    const Monomial m = MonomialAt(10, idx);
    EXPECT_LE(m.degree(), 8);
    EXPECT_EQ(MonomialIndex(m), idx);
  }
}

TEST(MonomialTest, IndexAgreesWithSortedOrder) {
  MonomialBasis basis(3, 4);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    EXPECT_EQ(MonomialIndex(basis[i]), i);
    if (i > 0) {
      EXPECT_TRUE(GradedLexLess()(basis[i - 1], basis[i]));
    }
  }
  EXPECT_THROW(basis.IndexOf(Monomial(std::vector<int>{5, 0, 0})), std::out_of_range);
}

TEST(PolynomialTest, AddExamples) {
  const Polynomial x = X(1, 0);
  EXPECT_TRUE((x + (-x)).is_zero());
  const Polynomial p = x * x + 1.0;
  const Polynomial q = 2.0 * x;
  const Polynomial r = p + q;
  EXPECT_EQ(r.terms().size(), 3u);
  EXPECT_DOUBLE_EQ(r.coefficient(Monomial(std::vector<int>{2})), 1.0);
  EXPECT_DOUBLE_EQ(r.coefficient(Monomial(std::vector<int>{1})), 2.0);
  EXPECT_DOUBLE_EQ(r.coefficient(Monomial(std::vector<int>{0})), 1.0);
}

TEST(PolynomialTest, MulExamples) {
  const Polynomial x = X(1, 0);
  const Polynomial r = (x + 1.0) * (x - 1.0);
  EXPECT_EQ(r.terms().size(), 2u);
  EXPECT_DOUBLE_EQ(r.coefficient(Monomial(std::vector<int>{2})), 1.0);
  EXPECT_DOUBLE_EQ(r.coefficient(Monomial(std::vector<int>{0})), -1.0);
  EXPECT_TRUE((r * Polynomial(1)).is_zero());
  EXPECT_EQ(Polynomial(1).degree(), 0);
}

TEST(PolynomialTest, MismatchedSpacesThrow) {
  EXPECT_THROW(X(1, 0) + X(2, 0), std::invalid_argument);
  EXPECT_THROW(X(1, 0) * X(2, 0), std::invalid_argument);
  const std::vector<double> pt = {1.0, 2.0};
  EXPECT_THROW(X(1, 0).Evaluate(pt), std::invalid_argument);
  const std::vector<Polynomial> subs = {X(1, 0), X(1, 0)};
  EXPECT_THROW(Compose(X(1, 0), subs), std::invalid_argument);
}

TEST(PolynomialTest, NoStoredZeros) {
  const Polynomial x = X(2, 0), u = X(2, 1);
  const Polynomial p = (x + u) * (x - u) + u * u;
  for (const auto& [m, c] : p.terms()) EXPECT_NE(c, 0.0);
  EXPECT_EQ(p.terms().size(), 1u);
}

TEST(PolynomialTest, RingOperationsMatchPointEvaluation) {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Polynomial p = RandomPolynomial(3, 4, gen);
    const Polynomial q = RandomPolynomial(3, 4, gen);
    const Polynomial sum = p + q;
    const Polynomial prod = p * q;
    const Polynomial pq = p * q, qp = q * p;
    EXPECT_LE(MaxCoefficientDifference(pq, qp), 1e-12);
    const Polynomial r = RandomPolynomial(3, 2, gen);
    EXPECT_LE(MaxCoefficientDifference(p * (q + r), p * q + p * r), 1e-12);
    for (int k = 0; k < 100; ++k) {
      const auto pt = RandomPoint(3, gen);
      const double vp = NaiveEval(p, pt), vq = NaiveEval(q, pt);
      EXPECT_LE(RelErr(sum.Evaluate(pt), vp + vq, std::abs(vp) + std::abs(vq)), 1e-10);
      EXPECT_LE(RelErr(prod.Evaluate(pt), vp * vq, std::abs(vp * vq)), 1e-10);
    }
  }
}

TEST(PolynomialTest, EvaluateExamples) {
  EXPECT_DOUBLE_EQ(Polynomial::Constant(2, 5.0).Evaluate(std::vector<double>{3.0, -1.0}), 5.0);
  const Polynomial x = X(2, 0), u = X(2, 1);
  const Polynomial p = x * x + 2.0 * x * u + u * u;
  EXPECT_DOUBLE_EQ(p.Evaluate(std::vector<double>{1.0, 2.0}), 9.0);
}

TEST(PolynomialTest, EvaluateDegreeSixAgainstNaive) {
  std::mt19937 gen(5);
  const Polynomial p = RandomPolynomial(3, 6, gen, 0.8);
  for (int k = 0; k < 100; ++k) {
    const auto pt = RandomPoint(3, gen);
    const double oracle = NaiveEval(p, pt);
    EXPECT_LE(std::abs(p.Evaluate(pt) - oracle), 1e-10 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(PolynomialTest, ComposeExamples) {
  const Polynomial x1 = X(1, 0);
  const std::vector<Polynomial> id = {x1};
  EXPECT_LE(MaxCoefficientDifference(Compose(x1, id), x1), 0.0);

  const Polynomial x = X(2, 0), u = X(2, 1);
  const std::vector<Polynomial> subs = {x + u};
  const Polynomial r = Compose(x1 * x1, subs);
  EXPECT_LE(MaxCoefficientDifference(r, x * x + 2.0 * x * u + u * u), 1e-15);
}

TEST(PolynomialTest, ComposeIdentityIsExact) {
  std::mt19937 gen(8);
  const Polynomial p = RandomPolynomial(3, 5, gen);
  const std::vector<Polynomial> id = {X(3, 0), X(3, 1), X(3, 2)};
  EXPECT_EQ(MaxCoefficientDifference(Compose(p, id), p), 0.0);
}

TEST(PolynomialTest, ComposeStorageDynamics) {
  // Variables (x, u_in, u_out); COP a(x) = 3 + 0.1 x.
  const int n = 3;
  const Polynomial x = X(n, 0), u_in = X(n, 1), u_out = X(n, 2);
  const Polynomial a = 3.0 + 0.1 * x;
  const double gain = 730.0 / 14805.0;
  const Polynomial f = x + gain * (0.621 * (x - 12.0) - a * u_out + u_in);
  const std::vector<Polynomial> subs = {f};
  const Polynomial x1 = X(1, 0);
  std::mt19937 gen(2);
  std::uniform_real_distribution<double> temp(0.0, 12.0), flow(0.0, 100.0);
  for (const Polynomial& p : {x1, x1 * x1 * 0.5 - 3.0 * x1 + 1.0}) {
    const Polynomial composed = Compose(p, subs);
    EXPECT_LE(composed.degree(), p.degree() * f.degree());
    for (int k = 0; k < 100; ++k) {
      const std::vector<double> pt = {temp(gen), flow(gen), flow(gen)};
      const double fx = f.Evaluate(pt);
      const double oracle = NaiveEval(p, {fx});
      EXPECT_LE(std::abs(composed.Evaluate(pt) - oracle), 1e-10 * std::max(1.0, std::abs(oracle)));
    }
  }
}

TEST(PolynomialTest, RandomComposeMatchesPointEvaluation) {
  std::mt19937 gen(17);
  const Polynomial p = RandomPolynomial(2, 3, gen);
  const std::vector<Polynomial> subs = {RandomPolynomial(3, 2, gen), RandomPolynomial(3, 2, gen)};
  const Polynomial composed = Compose(p, subs);
  for (int k = 0; k < 100; ++k) {
    const auto pt = RandomPoint(3, gen);
    const double oracle = NaiveEval(p, {subs[0].Evaluate(pt), subs[1].Evaluate(pt)});
    EXPECT_LE(RelErr(composed.Evaluate(pt), oracle, std::abs(oracle)), 1e-10);
  }
}

TEST(PolynomialTest, AffineChangeOfVariables) {
  const Polynomial x = X(1, 0);
  const std::vector<double> one = {1.0}, zero = {0.0}, twelve = {12.0};
  EXPECT_EQ(MaxCoefficientDifference(AffineChangeOfVariables(x * x + 3.0, one, zero), x * x + 3.0),
            0.0);
  EXPECT_LE(MaxCoefficientDifference(AffineChangeOfVariables(x, twelve, zero), 12.0 * x), 0.0);
  EXPECT_THROW(AffineChangeOfVariables(x, zero, zero), std::invalid_argument);

  std::mt19937 gen(23);
  const Polynomial p = RandomPolynomial(3, 4, gen);
  const std::vector<double> scale = {12.0, 100.0, 0.5}, shift = {-1.0, 3.0, 2.0};
  std::vector<double> inv_scale(3), inv_shift(3);
  for (int i = 0; i < 3; ++i) {
    inv_scale[i] = 1.0 / scale[i];
    inv_shift[i] = -shift[i] / scale[i];
  }
  const Polynomial q = AffineChangeOfVariables(p, scale, shift);
  const Polynomial back = AffineChangeOfVariables(q, inv_scale, inv_shift);
  EXPECT_LE(MaxCoefficientDifference(back, p), 1e-10);
  for (int k = 0; k < 20; ++k) {
    const auto pt = RandomPoint(3, gen);
    std::vector<double> mapped(3);
    for (int i = 0; i < 3; ++i) mapped[i] = scale[i] * pt[i] + shift[i];
    const double oracle = NaiveEval(p, mapped);
    EXPECT_LE(RelErr(q.Evaluate(pt), oracle, std::abs(oracle)), 1e-10);
  }
}

TEST(PolynomialTest, CoefficientsRoundTrip) {
  std::mt19937 gen(4);
  const Polynomial p = RandomPolynomial(2, 3, gen);
  MonomialBasis basis(2, 3);
  const auto coeffs = p.Coefficients(basis);
  EXPECT_EQ(MaxCoefficientDifference(Polynomial::FromCoefficients(basis, coeffs), p), 0.0);
  MonomialBasis small(2, 1);
  EXPECT_THROW(p.Coefficients(small), std::out_of_range);
}

TEST(PolynomialTest, EmbedMovesVariables) {
  const Polynomial p = X(2, 0) * X(2, 1) * X(2, 1);
  const std::vector<int> map = {2, 0};
  const Polynomial e = Embed(p, 3, map);
  EXPECT_DOUBLE_EQ(e.coefficient(Monomial(std::vector<int>{2, 0, 1})), 1.0);
}

TEST(IntervalBoundTest, EnclosesSampledValues) {
  std::mt19937 gen(31);
  const std::vector<Interval> box = {{-2.0, 1.0}, {0.5, 3.0}};
  std::uniform_real_distribution<double> u0(-2.0, 1.0), u1(0.5, 3.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Polynomial p = RandomPolynomial(2, 4, gen);
    const Interval bound = Bound(p, box);
    for (int k = 0; k < 500; ++k) {
      const double v = p.Evaluate(std::vector<double>{u0(gen), u1(gen)});
      EXPECT_GE(v, bound.lo - 1e-12);
      EXPECT_LE(v, bound.hi + 1e-12);
    }
  }
  // Even powers over a sign-changing interval start at zero.
  const Polynomial x = X(1, 0);
  const std::vector<Interval> sym = {{-2.0, 2.0}};
  const Interval sq = Bound(x * x, sym);
  EXPECT_DOUBLE_EQ(sq.lo, 0.0);
  EXPECT_DOUBLE_EQ(sq.hi, 4.0);
}

}  // namespace
}  // namespace mddp
