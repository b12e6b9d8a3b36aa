#pragma once

// Sparse multivariate polynomials whose coefficients are affine functions of
// a decision vector theta. This is the representation used to assemble the
// contraction polynomial and the Gram-matrix coefficient matching rows.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stabid/error.hpp"

namespace stabid {

/// Product of variables raised to positive powers; the empty product is 1.
/// Stored as (variable, exponent) pairs sorted by variable with no zero
/// exponents.
class Monomial {
 public:
  using Factor = std::pair<int, int>;

  Monomial() = default;

  /// Single variable raised to `exponent` (exponent 0 gives the constant 1).
  static Monomial var(int variable, int exponent = 1) {
    Monomial m;
    if (variable < 0 || exponent < 0) throw Error("Monomial: negative index or exponent");
    if (exponent > 0) m.factors_.emplace_back(variable, exponent);
    return m;
  }

  /// From a dense exponent vector; entry i is the power of variable first_var + i.
  static Monomial from_exponents(const std::vector<int>& exps, int first_var = 0) {
    Monomial m;
    for (std::size_t i = 0; i < exps.size(); ++i) {
      if (exps[i] < 0) throw Error("Monomial: negative exponent");
      if (exps[i] > 0) m.factors_.emplace_back(first_var + static_cast<int>(i), exps[i]);
    }
    return m;
  }

  static Monomial from_factors(std::vector<Factor> f) {
    std::sort(f.begin(), f.end());
    Monomial m;
    for (const auto& [v, e] : f) {
      if (v < 0 || e < 0) throw Error("Monomial: negative index or exponent");
      if (e == 0) continue;
      if (!m.factors_.empty() && m.factors_.back().first == v)
        m.factors_.back().second += e;
      else
        m.factors_.emplace_back(v, e);
    }
    return m;
  }

  const std::vector<Factor>& factors() const { return factors_; }
  bool is_constant() const { return factors_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& f : factors_) d += f.second;
    return d;
  }

  int exponent(int variable) const {
    for (const auto& [v, e] : factors_)
      if (v == variable) return e;
    return 0;
  }

  /// Sum of exponents over variables in [lo, hi).
  int degree_in(int lo, int hi) const {
    int d = 0;
    for (const auto& [v, e] : factors_)
      if (v >= lo && v < hi) d += e;
    return d;
  }

  int max_variable() const { return factors_.empty() ? -1 : factors_.back().first; }

  /// Part of the monomial restricted to variables in [lo, hi).
  Monomial restrict_to(int lo, int hi) const {
    Monomial m;
    for (const auto& f : factors_)
      if (f.first >= lo && f.first < hi) m.factors_.push_back(f);
    return m;
  }

  friend Monomial operator*(const Monomial& a, const Monomial& b) {
    Monomial m;
    auto i = a.factors_.begin();
    auto j = b.factors_.begin();
    while (i != a.factors_.end() || j != b.factors_.end()) {
      if (j == b.factors_.end() || (i != a.factors_.end() && i->first < j->first)) {
        m.factors_.push_back(*i++);
      } else if (i == a.factors_.end() || j->first < i->first) {
        m.factors_.push_back(*j++);
      } else {
        m.factors_.emplace_back(i->first, i->second + j->second);
        ++i;
        ++j;
      }
    }
    return m;
  }

  /// Graded lexicographic order: lower total degree first; within a degree
  /// the larger exponent on the lowest-indexed variable comes first, so
  /// 1 < x1 < x2 < x1^2 < x1x2 < x2^2.
  friend std::strong_ordering operator<=>(const Monomial& a, const Monomial& b) {
    const int da = a.degree(), db = b.degree();
    if (da != db) return da <=> db;
    auto i = a.factors_.begin();
    auto j = b.factors_.begin();
    while (i != a.factors_.end() && j != b.factors_.end()) {
      if (i->first != j->first) {
        // the monomial owning the lower variable has the larger exponent there
        return i->first < j->first ? std::strong_ordering::less : std::strong_ordering::greater;
      }
      if (i->second != j->second) return j->second <=> i->second;
      ++i;
      ++j;
    }
    if (i == a.factors_.end() && j == b.factors_.end()) return std::strong_ordering::equal;
    // equal degree forces both to end together
    return i == a.factors_.end() ? std::strong_ordering::greater : std::strong_ordering::less;
  }
  friend bool operator==(const Monomial& a, const Monomial& b) { return a.factors_ == b.factors_; }

  /// Value at a point (point[v] is the value of variable v).
  template <typename V>
  double eval(const V& point) const {
    double r = 1.0;
    for (const auto& [v, e] : factors_) {
      const double x = point[v];
      double p = x;
      for (int k = 1; k < e; ++k) p *= x;
      r *= p;
    }
    return r;
  }

  std::string str(const std::vector<std::string>& names = {}) const {
    if (factors_.empty()) return "1";
    std::ostringstream os;
    bool first = true;
    for (const auto& [v, e] : factors_) {
      if (!first) os << "*";
      first = false;
      if (static_cast<std::size_t>(v) < names.size())
        os << names[v];
      else
        os << "z" << v;
      if (e > 1) os << "^" << e;
    }
    return os.str();
  }

 private:
  std::vector<Factor> factors_;
};

inline std::ostream& operator<<(std::ostream& os, const Monomial& m) { return os << m.str(); }

/// c(theta) = constant + sum_i weight_i * theta(i). Exact zero weights are
/// never stored.
struct AffineCoeff {
  std::map<int, double> linear;
  double constant = 0.0;

  static AffineCoeff from_constant(double c) { return AffineCoeff{{}, c}; }
  static AffineCoeff from_param(int index, double weight = 1.0) {
    AffineCoeff a;
    if (weight != 0.0) a.linear.emplace(index, weight);
    return a;
  }

  bool is_zero() const { return linear.empty() && constant == 0.0; }
  bool is_constant() const { return linear.empty(); }

  AffineCoeff& operator+=(const AffineCoeff& o) {
    constant += o.constant;
    for (const auto& [k, w] : o.linear) {
      auto it = linear.find(k);
      if (it == linear.end()) {
        linear.emplace(k, w);
      } else {
        it->second += w;
        if (it->second == 0.0) linear.erase(it);
      }
    }
    return *this;
  }
  AffineCoeff& operator*=(double s) {
    if (s == 0.0) {
      linear.clear();
      constant = 0.0;
      return *this;
    }
    constant *= s;
    for (auto& kv : linear) kv.second *= s;
    return *this;
  }
  friend AffineCoeff operator+(AffineCoeff a, const AffineCoeff& b) { return a += b; }
  friend AffineCoeff operator*(double s, AffineCoeff a) { return a *= s; }
  friend AffineCoeff operator-(AffineCoeff a, const AffineCoeff& b) { return a += (-1.0) * b; }
  friend bool operator==(const AffineCoeff&, const AffineCoeff&) = default;

  int max_index() const { return linear.empty() ? -1 : linear.rbegin()->first; }

  template <typename V>
  double eval(const V& theta) const {
    double r = constant;
    for (const auto& [k, w] : linear) r += w * theta[k];
    return r;
  }
};

/// Canonical sparse polynomial: no term has an identically-zero coefficient.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, AffineCoeff>;

  Polynomial() = default;

  static Polynomial constant(double c) {
    Polynomial p;
    p.add_term(Monomial{}, AffineCoeff::from_constant(c));
    return p;
  }
  static Polynomial monomial(const Monomial& m, double c = 1.0) {
    Polynomial p;
    p.add_term(m, AffineCoeff::from_constant(c));
    return p;
  }
  /// weight * theta(index) * m
  static Polynomial parameter(int index, const Monomial& m = {}, double weight = 1.0) {
    Polynomial p;
    p.add_term(m, AffineCoeff::from_param(index, weight));
    return p;
  }

  void add_term(const Monomial& m, const AffineCoeff& c) {
    auto it = terms_.find(m);
    if (it == terms_.end()) {
      if (!c.is_zero()) terms_.emplace(m, c);
      return;
    }
    it->second += c;
    if (it->second.is_zero()) terms_.erase(it);
  }

  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }

  /// True if no coefficient depends on theta.
  bool is_theta_free() const {
    for (const auto& kv : terms_)
      if (!kv.second.is_constant()) return false;
    return true;
  }

  AffineCoeff coeff(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? AffineCoeff{} : it->second;
  }

  int max_variable() const {
    int v = -1;
    for (const auto& kv : terms_) v = std::max(v, kv.first.max_variable());
    return v;
  }
  int max_theta_index() const {
    int k = -1;
    for (const auto& kv : terms_) k = std::max(k, kv.second.max_index());
    return k;
  }

  Polynomial& operator+=(const Polynomial& o) {
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    for (const auto& [m, c] : o.terms_) add_term(m, (-1.0) * c);
    return *this;
  }
  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& kv : terms_) kv.second *= s;
    return *this;
  }
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend bool operator==(const Polynomial& a, const Polynomial& b) { return a.terms_ == b.terms_; }

  std::string str(const std::vector<std::string>& var_names = {}) const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [m, c] : terms_) {
      if (!first) os << " + ";
      first = false;
      os << "(";
      bool any = false;
      if (c.constant != 0.0 || c.linear.empty()) {
        os << c.constant;
        any = true;
      }
      for (const auto& [k, w] : c.linear) {
        os << (any ? " + " : "") << w << "*th" << k;
        any = true;
      }
      os << ")";
      if (!m.is_constant()) os << "*" << m.str(var_names);
    }
    return os.str();
  }

 private:
  TermMap terms_;
};

inline std::ostream& operator<<(std::ostream& os, const Polynomial& p) { return os << p.str(); }

/// All monomials in variables first_var .. first_var+n_vars-1 of total degree
/// at most `degree`, in graded-lex order. Count is C(n_vars+degree, degree).
inline std::vector<Monomial> monomials_up_to(int n_vars, int degree, int first_var = 0) {
  if (n_vars < 1 || degree < 0) throw Error("monomials_up_to: need n_vars >= 1, degree >= 0");
  std::vector<Monomial> out;
  std::vector<int> exps(static_cast<std::size_t>(n_vars), 0);
  // Exponent vectors of exact degree d, largest exponent on the first variable first.
  auto rec = [&](auto&& self, int var, int remaining) -> void {
    if (var == n_vars - 1) {
      exps[static_cast<std::size_t>(var)] = remaining;
      out.push_back(Monomial::from_exponents(exps, first_var));
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      exps[static_cast<std::size_t>(var)] = e;
      self(self, var + 1, remaining - e);
    }
    exps[static_cast<std::size_t>(var)] = 0;
  };
  for (int d = 0; d <= degree; ++d) rec(rec, 0, d);
  return out;
}

/// Product of two polynomials where at least one side is theta-free, so the
/// result stays affine in theta.
inline Polynomial poly_mul(const Polynomial& p, const Polynomial& q) {
  const bool p_const = p.is_theta_free();
  const bool q_const = q.is_theta_free();
  if (!p_const && !q_const) throw NotAffine("poly_mul: both factors depend on theta");
  const Polynomial& c = p_const ? p : q;
  const Polynomial& a = p_const ? q : p;
  Polynomial r;
  for (const auto& [mc, cc] : c.terms()) {
    for (const auto& [ma, ca] : a.terms()) r.add_term(mc * ma, cc.constant * ca);
  }
  return r;
}

/// Formal partial derivative with respect to variable `var`.
inline Polynomial poly_partial(const Polynomial& p, int var) {
  Polynomial r;
  for (const auto& [m, c] : p.terms()) {
    const int e = m.exponent(var);
    if (e == 0) continue;
    std::vector<Monomial::Factor> f;
    for (const auto& fac : m.factors()) {
      if (fac.first == var) {
        if (fac.second > 1) f.emplace_back(var, fac.second - 1);
      } else {
        f.push_back(fac);
      }
    }
    r.add_term(Monomial::from_factors(std::move(f)), static_cast<double>(e) * c);
  }
  return r;
}

/// Substitute theta into the coefficients and evaluate at `point`.
inline double poly_eval(const Polynomial& p, const Eigen::Ref<const Eigen::VectorXd>& theta,
                        const Eigen::Ref<const Eigen::VectorXd>& point) {
  if (p.max_theta_index() >= theta.size())
    throw DimensionMismatch("poly_eval: theta shorter than referenced parameter index");
  if (p.max_variable() >= point.size())
    throw DimensionMismatch("poly_eval: point shorter than referenced variable index");
  double s = 0.0;
  for (const auto& [m, c] : p.terms()) s += c.eval(theta) * m.eval(point);
  return s;
}

/// One linear equation sum_k coeffs[k].second * theta(coeffs[k].first) = rhs.
struct LinearRow {
  Monomial monomial;
  std::vector<std::pair<int, double>> coeffs;
  double rhs = 0.0;
};

/// Coefficient matching lhs(theta) == rhs(theta), one row per monomial of the
/// union of supports in graded-lex order. Rows that reduce to 0 = 0 are dropped.
inline std::vector<LinearRow> coeff_match(const Polynomial& lhs, const Polynomial& rhs) {
  const Polynomial diff = lhs - rhs;
  std::vector<LinearRow> rows;
  rows.reserve(diff.size());
  for (const auto& [m, c] : diff.terms()) {
    LinearRow r;
    r.monomial = m;
    for (const auto& kv : c.linear) r.coeffs.push_back(kv);
    r.rhs = -c.constant;
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Support of lhs and rhs together (the monomials coeff_match ranges over).
inline std::vector<Monomial> union_support(const Polynomial& a, const Polynomial& b) {
  std::vector<Monomial> out;
  auto i = a.terms().begin();
  auto j = b.terms().begin();
  while (i != a.terms().end() || j != b.terms().end()) {
    if (j == b.terms().end() || (i != a.terms().end() && i->first < j->first)) {
      out.push_back((i++)->first);
    } else if (i == a.terms().end() || j->first < i->first) {
      out.push_back((j++)->first);
    } else {
      out.push_back(i->first);
      ++i;
      ++j;
    }
  }
  return out;
}

}  // namespace stabid
