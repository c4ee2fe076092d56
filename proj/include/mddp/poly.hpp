#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mddp {

/// Exponent vector over a positional variable space. Variable names live in
/// model metadata only.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(int nvars);
  explicit Monomial(std::vector<int> exponents);

  /// x_i^power in an nvars-dimensional space.
  static Monomial Variable(int nvars, int i, int power = 1);

  int nvars() const { return static_cast<int>(exponents_.size()); }
  int degree() const { return degree_; }
  int operator[](int i) const { return exponents_[i]; }
  const std::vector<int>& exponents() const { return exponents_; }

  Monomial operator*(const Monomial& other) const;
  bool operator==(const Monomial& other) const {
    return exponents_ == other.exponents_;
  }

  std::string ToString() const;

 private:
  std::vector<int> exponents_;
  int degree_ = 0;
};

/// Graded order: lower total degree first; within one degree the monomial
/// with the larger leading exponent comes first, so the basis reads
/// 1, x1, ..., xn, x1^2, x1 x2, ..., xn^2, ...
struct GradedLexLess {
  bool operator()(const Monomial& a, const Monomial& b) const;
};

/// Number of monomials in nvars variables with total degree <= max_degree.
std::size_t MonomialCount(int nvars, int max_degree);

/// Position of `m` in the graded order. Independent of any degree cap.
std::size_t MonomialIndex(const Monomial& m);

/// Inverse of MonomialIndex.
Monomial MonomialAt(int nvars, std::size_t index);

/// All monomials of degree <= max_degree, in graded order.
class MonomialBasis {
 public:
  MonomialBasis() = default;
  MonomialBasis(int nvars, int max_degree);

  int nvars() const { return nvars_; }
  int max_degree() const { return max_degree_; }
  std::size_t size() const { return monomials_.size(); }
  const Monomial& operator[](std::size_t i) const { return monomials_[i]; }
  const std::vector<Monomial>& monomials() const { return monomials_; }

  /// Throws std::out_of_range if the monomial is not in the basis.
  std::size_t IndexOf(const Monomial& m) const;
  bool Contains(const Monomial& m) const;

 private:
  int nvars_ = 0;
  int max_degree_ = -1;
  std::vector<Monomial> monomials_;
};

/// Sparse multivariate polynomial with double coefficients. Terms whose
/// magnitude falls to kDropThreshold or below are removed after arithmetic.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, double, GradedLexLess>;
  static constexpr double kDropThreshold = 1e-14;

  explicit Polynomial(int nvars = 0) : nvars_(nvars) {}
  Polynomial(int nvars, TermMap terms);

  static Polynomial Constant(int nvars, double value);
  static Polynomial Variable(int nvars, int i);
  static Polynomial FromMonomial(const Monomial& m, double coefficient = 1.0);
  /// Coefficients listed in graded order of `basis`.
  static Polynomial FromCoefficients(const MonomialBasis& basis,
                                     std::span<const double> coefficients);

  int nvars() const { return nvars_; }
  int degree() const;
  bool is_zero() const { return terms_.empty(); }
  const TermMap& terms() const { return terms_; }
  double coefficient(const Monomial& m) const;

  /// Dense coefficient vector over `basis`; throws if a term lies outside.
  std::vector<double> Coefficients(const MonomialBasis& basis) const;

  double Evaluate(std::span<const double> point) const;
  Polynomial Pow(int power) const;

  Polynomial operator-() const;
  Polynomial& operator+=(const Polynomial& other);
  Polynomial& operator-=(const Polynomial& other);
  Polynomial& operator*=(double scalar);

  std::string ToString() const;

 private:
  void AddTermUnchecked(const Monomial& m, double c);
  void Prune();

  int nvars_ = 0;
  TermMap terms_;
};

Polynomial Add(const Polynomial& p, const Polynomial& q);
Polynomial Mul(const Polynomial& p, const Polynomial& q);
Polynomial operator+(const Polynomial& p, const Polynomial& q);
Polynomial operator-(const Polynomial& p, const Polynomial& q);
Polynomial operator*(const Polynomial& p, const Polynomial& q);
Polynomial operator*(double s, const Polynomial& p);
Polynomial operator*(const Polynomial& p, double s);
Polynomial operator+(const Polynomial& p, double s);
Polynomial operator-(const Polynomial& p, double s);
Polynomial operator+(double s, const Polynomial& p);
Polynomial operator-(double s, const Polynomial& p);

/// p(subs_1(z), ..., subs_n(z)); every substitution shares one variable space.
Polynomial Compose(const Polynomial& p, std::span<const Polynomial> subs);

/// Returns q with q(x~) = p(scale .* x~ + shift).
Polynomial AffineChangeOfVariables(const Polynomial& p,
                                   std::span<const double> scale,
                                   std::span<const double> shift);

/// Re-indexes p into a space of `nvars` variables: variable i of p becomes
/// variable var_map[i].
Polynomial Embed(const Polynomial& p, int nvars, std::span<const int> var_map);

/// Maximum coefficient-wise absolute difference.
double MaxCoefficientDifference(const Polynomial& p, const Polynomial& q);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double MaxAbs() const;
};

/// Natural interval enclosure of p over a box (term-wise interval arithmetic).
Interval Bound(const Polynomial& p, std::span<const Interval> box);

}  // namespace mddp
