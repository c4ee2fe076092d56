#include "mddp/poly.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mddp {

namespace {

std::size_t Binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;
  }
  return result;
}

// Monomials of exact degree d in m variables.
std::size_t CountExact(int m, int d) {
  if (d < 0) return 0;
  if (m == 0) return d == 0 ? 1 : 0;
  return Binomial(static_cast<std::size_t>(d + m - 1),
                  static_cast<std::size_t>(m - 1));
}

void CheckSameSpace(const Polynomial& p, const Polynomial& q) {
  if (p.nvars() != q.nvars()) {
    throw std::invalid_argument("polynomials live in different variable spaces (" +
                                std::to_string(p.nvars()) + " vs " +
                                std::to_string(q.nvars()) + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------- Monomial

Monomial::Monomial(int nvars) : exponents_(nvars, 0) {
  if (nvars < 0) throw std::invalid_argument("negative variable count");
}

Monomial::Monomial(std::vector<int> exponents)
    : exponents_(std::move(exponents)) {
  for (int e : exponents_) {
    if (e < 0) throw std::invalid_argument("negative exponent in monomial");
    degree_ += e;
  }
}

Monomial Monomial::Variable(int nvars, int i, int power) {
  if (i < 0 || i >= nvars) throw std::invalid_argument("variable index out of range");
  std::vector<int> e(nvars, 0);
  e[i] = power;
  return Monomial(std::move(e));
}

Monomial Monomial::operator*(const Monomial& other) const {
  if (nvars() != other.nvars()) {
    throw std::invalid_argument("monomials live in different variable spaces");
  }
  Monomial out = *this;
  for (int i = 0; i < nvars(); ++i) out.exponents_[i] += other.exponents_[i];
  out.degree_ += other.degree_;
  return out;
}

std::string Monomial::ToString() const {
  if (degree_ == 0) return "1";
  std::ostringstream os;
  bool first = true;
  for (int i = 0; i < nvars(); ++i) {
    if (exponents_[i] == 0) continue;
    if (!first) os << "*";
    os << "x" << i;
    if (exponents_[i] > 1) os << "^" << exponents_[i];
    first = false;
  }
  return os.str();
}

bool GradedLexLess::operator()(const Monomial& a, const Monomial& b) const {
  if (a.degree() != b.degree()) return a.degree() < b.degree();
  const int n = std::min(a.nvars(), b.nvars());
  for (int i = 0; i < n; ++i) {
    if (a[i] != b[i]) return a[i] > b[i];
  }
  return a.nvars() < b.nvars();
}

std::size_t MonomialCount(int nvars, int max_degree) {
  if (max_degree < 0) return 0;
  return Binomial(static_cast<std::size_t>(nvars + max_degree),
                  static_cast<std::size_t>(max_degree));
}

std::size_t MonomialIndex(const Monomial& m) {
  const int n = m.nvars();
  const int d = m.degree();
  std::size_t index = MonomialCount(n, d - 1);
  int remaining = d;
  for (int i = 0; i + 1 < n; ++i) {
    const int tail = n - i - 1;
    for (int j = remaining; j > m[i]; --j) index += CountExact(tail, remaining - j);
    remaining -= m[i];
  }
  return index;
}

Monomial MonomialAt(int nvars, std::size_t index) {
  int d = 0;
  while (MonomialCount(nvars, d) <= index) {
    ++d;
    if (nvars == 0) throw std::out_of_range("index beyond the constant monomial");
  }
  std::size_t rank = index - MonomialCount(nvars, d - 1);
  std::vector<int> e(nvars, 0);
  int remaining = d;
  for (int i = 0; i + 1 < nvars; ++i) {
    const int tail = nvars - i - 1;
    for (int j = remaining; j >= 0; --j) {
      const std::size_t block = CountExact(tail, remaining - j);
      if (rank < block) {
        e[i] = j;
        break;
      }
      rank -= block;
    }
    remaining -= e[i];
  }
  if (nvars > 0) e[nvars - 1] = remaining;
  return Monomial(std::move(e));
}

// ----------------------------------------------------------- MonomialBasis

MonomialBasis::MonomialBasis(int nvars, int max_degree)
    : nvars_(nvars), max_degree_(max_degree) {
  const std::size_t n = MonomialCount(nvars, max_degree);
  monomials_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) monomials_.push_back(MonomialAt(nvars, i));
}

bool MonomialBasis::Contains(const Monomial& m) const {
  return m.nvars() == nvars_ && m.degree() <= max_degree_;
}

std::size_t MonomialBasis::IndexOf(const Monomial& m) const {
  if (!Contains(m)) {
    throw std::out_of_range("monomial " + m.ToString() + " not in basis of degree " +
                            std::to_string(max_degree_));
  }
  return MonomialIndex(m);
}

// -------------------------------------------------------------- Polynomial

Polynomial::Polynomial(int nvars, TermMap terms)
    : nvars_(nvars), terms_(std::move(terms)) {
  for (const auto& [m, c] : terms_) {
    if (m.nvars() != nvars_) {
      throw std::invalid_argument("term outside the polynomial's variable space");
    }
  }
  Prune();
}

Polynomial Polynomial::Constant(int nvars, double value) {
  Polynomial p(nvars);
  p.AddTermUnchecked(Monomial(nvars), value);
  p.Prune();
  return p;
}

Polynomial Polynomial::Variable(int nvars, int i) {
  return FromMonomial(Monomial::Variable(nvars, i));
}

Polynomial Polynomial::FromMonomial(const Monomial& m, double coefficient) {
  Polynomial p(m.nvars());
  p.AddTermUnchecked(m, coefficient);
  p.Prune();
  return p;
}

Polynomial Polynomial::FromCoefficients(const MonomialBasis& basis,
                                        std::span<const double> coefficients) {
  if (coefficients.size() != basis.size()) {
    throw std::invalid_argument("coefficient count does not match basis size");
  }
  Polynomial p(basis.nvars());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    if (coefficients[i] != 0.0) p.AddTermUnchecked(basis[i], coefficients[i]);
  }
  p.Prune();
  return p;
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
  return d;
}

double Polynomial::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

std::vector<double> Polynomial::Coefficients(const MonomialBasis& basis) const {
  if (basis.nvars() != nvars_) {
    throw std::invalid_argument("basis and polynomial variable spaces differ");
  }
  std::vector<double> out(basis.size(), 0.0);
  for (const auto& [m, c] : terms_) out[basis.IndexOf(m)] = c;
  return out;
}

double Polynomial::Evaluate(std::span<const double> point) const {
  if (static_cast<int>(point.size()) != nvars_) {
    throw std::invalid_argument("evaluation point has dimension " +
                                std::to_string(point.size()) + ", expected " +
                                std::to_string(nvars_));
  }
  double sum = 0.0;
  for (const auto& [m, c] : terms_) {
    double term = c;
    for (int i = 0; i < nvars_; ++i) {
      for (int e = 0; e < m[i]; ++e) term *= point[i];
    }
    sum += term;
  }
  return sum;
}

Polynomial Polynomial::Pow(int power) const {
  if (power < 0) throw std::invalid_argument("negative polynomial power");
  Polynomial result = Constant(nvars_, 1.0);
  Polynomial base = *this;
  while (power > 0) {
    if (power & 1) result = Mul(result, base);
    power >>= 1;
    if (power > 0) base = Mul(base, base);
  }
  return result;
}

Polynomial Polynomial::operator-() const {
  Polynomial out = *this;
  for (auto& [m, c] : out.terms_) c = -c;
  return out;
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  CheckSameSpace(*this, other);
  for (const auto& [m, c] : other.terms_) AddTermUnchecked(m, c);
  Prune();
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& other) {
  CheckSameSpace(*this, other);
  for (const auto& [m, c] : other.terms_) AddTermUnchecked(m, -c);
  Prune();
  return *this;
}

Polynomial& Polynomial::operator*=(double scalar) {
  for (auto& [m, c] : terms_) c *= scalar;
  Prune();
  return *this;
}

std::string Polynomial::ToString() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& [m, c] : terms_) {
    if (!first) os << " + ";
    os << c;
    if (m.degree() > 0) os << "*" << m.ToString();
    first = false;
  }
  return os.str();
}

void Polynomial::AddTermUnchecked(const Monomial& m, double c) {
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) it->second += c;
}

void Polynomial::Prune() {
  std::erase_if(terms_, [](const auto& kv) {
    return std::abs(kv.second) <= kDropThreshold;
  });
}

// ------------------------------------------------------------ free functions

Polynomial Add(const Polynomial& p, const Polynomial& q) {
  Polynomial out = p;
  out += q;
  return out;
}

Polynomial Mul(const Polynomial& p, const Polynomial& q) {
  CheckSameSpace(p, q);
  Polynomial::TermMap terms;
  for (const auto& [mp, cp] : p.terms()) {
    for (const auto& [mq, cq] : q.terms()) {
      auto [it, inserted] = terms.try_emplace(mp * mq, cp * cq);
      if (!inserted) it->second += cp * cq;
    }
  }
  return Polynomial(p.nvars(), std::move(terms));
}

Polynomial operator+(const Polynomial& p, const Polynomial& q) { return Add(p, q); }
Polynomial operator-(const Polynomial& p, const Polynomial& q) {
  Polynomial out = p;
  out -= q;
  return out;
}
Polynomial operator*(const Polynomial& p, const Polynomial& q) { return Mul(p, q); }
Polynomial operator*(double s, const Polynomial& p) {
  Polynomial out = p;
  out *= s;
  return out;
}
Polynomial operator*(const Polynomial& p, double s) { return s * p; }
Polynomial operator+(const Polynomial& p, double s) {
  return p + Polynomial::Constant(p.nvars(), s);
}
Polynomial operator-(const Polynomial& p, double s) {
  return p - Polynomial::Constant(p.nvars(), s);
}

Polynomial operator+(double s, const Polynomial& p) { return p + s; }

Polynomial operator-(double s, const Polynomial& p) {
  return Polynomial::Constant(p.nvars(), s) - p;
}

Polynomial Compose(const Polynomial& p, std::span<const Polynomial> subs) {
  if (static_cast<int>(subs.size()) != p.nvars()) {
    throw std::invalid_argument("compose needs one substitution per variable (" +
                                std::to_string(p.nvars()) + "), got " +
                                std::to_string(subs.size()));
  }
  if (subs.empty()) return p;
  const int m = subs.front().nvars();
  for (const auto& s : subs) {
    if (s.nvars() != m) {
      throw std::invalid_argument("substitutions live in different variable spaces");
    }
  }
  // powers[i][e] = subs[i]^e, filled lazily up to the exponents used.
  std::vector<std::vector<Polynomial>> powers(subs.size());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    powers[i].push_back(Polynomial::Constant(m, 1.0));
  }
  auto power = [&](std::size_t i, int e) -> const Polynomial& {
    while (static_cast<int>(powers[i].size()) <= e) {
      powers[i].push_back(Mul(powers[i].back(), subs[i]));
    }
    return powers[i][e];
  };
  Polynomial result(m);
  for (const auto& [mono, c] : p.terms()) {
    Polynomial term = Polynomial::Constant(m, c);
    for (int i = 0; i < p.nvars(); ++i) {
      if (mono[i] > 0) term = Mul(term, power(i, mono[i]));
    }
    result += term;
  }
  return result;
}

Polynomial AffineChangeOfVariables(const Polynomial& p,
                                   std::span<const double> scale,
                                   std::span<const double> shift) {
  const int n = p.nvars();
  if (static_cast<int>(scale.size()) != n || static_cast<int>(shift.size()) != n) {
    throw std::invalid_argument("scale/shift length must equal the variable count");
  }
  std::vector<Polynomial> subs;
  subs.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (scale[i] == 0.0) {
      throw std::invalid_argument("zero scale for variable " + std::to_string(i));
    }
    subs.push_back(scale[i] * Polynomial::Variable(n, i) + shift[i]);
  }
  return Compose(p, subs);
}

Polynomial Embed(const Polynomial& p, int nvars, std::span<const int> var_map) {
  if (static_cast<int>(var_map.size()) != p.nvars()) {
    throw std::invalid_argument("variable map length must equal the variable count");
  }
  Polynomial::TermMap terms;
  for (const auto& [m, c] : p.terms()) {
    std::vector<int> e(nvars, 0);
    for (int i = 0; i < p.nvars(); ++i) {
      if (var_map[i] < 0 || var_map[i] >= nvars) {
        throw std::invalid_argument("variable map target out of range");
      }
      e[var_map[i]] += m[i];
    }
    auto [it, inserted] = terms.try_emplace(Monomial(std::move(e)), c);
    if (!inserted) it->second += c;
  }
  return Polynomial(nvars, std::move(terms));
}

double MaxCoefficientDifference(const Polynomial& p, const Polynomial& q) {
  CheckSameSpace(p, q);
  double worst = 0.0;
  for (const auto& [m, c] : p.terms()) {
    worst = std::max(worst, std::abs(c - q.coefficient(m)));
  }
  for (const auto& [m, c] : q.terms()) {
    if (p.coefficient(m) == 0.0) worst = std::max(worst, std::abs(c));
  }
  return worst;
}

double Interval::MaxAbs() const { return std::max(std::abs(lo), std::abs(hi)); }

namespace {

Interval Times(Interval a, Interval b) {
  const double c[4] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
  return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
}

Interval PowInterval(Interval a, int e) {
  if (e == 0) return {1.0, 1.0};
  const double lo = std::pow(a.lo, e);
  const double hi = std::pow(a.hi, e);
  if (e % 2 == 0 && a.lo <= 0.0 && a.hi >= 0.0) return {0.0, std::max(lo, hi)};
  return {std::min(lo, hi), std::max(lo, hi)};
}

}  // namespace

Interval Bound(const Polynomial& p, std::span<const Interval> box) {
  if (static_cast<int>(box.size()) != p.nvars()) {
    throw std::invalid_argument("box dimension does not match polynomial");
  }
  Interval total{0.0, 0.0};
  for (const auto& [m, c] : p.terms()) {
    Interval term{c, c};
    for (int i = 0; i < p.nvars(); ++i) {
      if (m[i] > 0) term = Times(term, PowInterval(box[i], m[i]));
    }
    total.lo += term.lo;
    total.hi += term.hi;
  }
  return total;
}

}  // namespace mddp
