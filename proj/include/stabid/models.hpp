#pragma once

// Implicit polynomial state-space models
//   e(x_{t+1}) = f(x_t, u_t),   y_t = g(x_t, u_t)
// with every coefficient either a free parameter (an entry of rho) or fixed.
// Variables are indexed x_1..x_nx, u_1..u_nu (then v for the contraction
// polynomial, see stability.hpp).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stabid/error.hpp"
#include "stabid/linalg.hpp"
#include "stabid/polyalg.hpp"

namespace stabid {

enum class Fn : int { e = 0, f = 1, g = 2 };

inline const char* fn_name(Fn fn) {
  switch (fn) {
    case Fn::e: return "e";
    case Fn::f: return "f";
    case Fn::g: return "g";
  }
  return "?";
}

/// Degrees of a standard structure. Every polynomial contains all monomials
/// up to its degree; e never carries a constant.
struct StructureSpec {
  int n_x = 1, n_u = 1, n_y = 1;
  int deg_e = 1, deg_fx = 1, deg_fu = 1, deg_g = 1;
  bool separable_f = true;  ///< f_i = f_i^x(x) + f_i^u(u)
  bool constants = true;    ///< constant terms in f and g
  friend bool operator==(const StructureSpec&, const StructureSpec&) = default;
};

/// Layout of a model family: per-function monomial tables and the frozen
/// (function, coordinate, monomial) -> rho-index map.
class ModelStructure {
 public:
  struct Param {
    Fn fn;
    int coord;
    int mono;  ///< index into monomials(fn)
  };
  struct FixedTerm {
    int coord;
    int mono;
    double coeff;
  };
  /// Per-coordinate list of (monomial, coefficient) used by custom().
  using FixedList = std::vector<std::vector<std::pair<Monomial, double>>>;
  using BasisList = std::vector<std::vector<Monomial>>;

  ModelStructure() = default;

  static ModelStructure standard(const StructureSpec& s) {
    check_dims(s.n_x, s.n_u, s.n_y);
    if (s.deg_e < 1 || s.deg_fx < 0 || s.deg_fu < 0 || s.deg_g < 0)
      throw Error("ModelStructure: invalid degrees");
    const int nx = s.n_x, nu = s.n_u;
    std::vector<Monomial> be;
    for (const auto& m : monomials_up_to(nx, s.deg_e, 0))
      if (!m.is_constant()) be.push_back(m);

    std::vector<Monomial> bf;
    if (s.separable_f) {
      for (const auto& m : monomials_up_to(nx, s.deg_fx, 0))
        if (s.constants || !m.is_constant()) bf.push_back(m);
      if (nu > 0 && s.deg_fu > 0)
        for (const auto& m : monomials_up_to(nu, s.deg_fu, nx))
          if (!m.is_constant()) bf.push_back(m);
    } else {
      const int top = s.deg_fx + s.deg_fu;
      const auto all = nu > 0 ? monomials_up_to(nx + nu, top, 0) : monomials_up_to(nx, s.deg_fx, 0);
      for (const auto& m : all) {
        if (m.degree_in(0, nx) > s.deg_fx || m.degree_in(nx, nx + nu) > s.deg_fu) continue;
        if (!s.constants && m.is_constant()) continue;
        bf.push_back(m);
      }
    }

    std::vector<Monomial> bg;
    for (const auto& m : monomials_up_to(nx + nu, s.deg_g, 0))
      if (s.constants || !m.is_constant()) bg.push_back(m);

    ModelStructure ms = custom(s.n_x, s.n_u, s.n_y, BasisList(static_cast<std::size_t>(nx), be),
                               BasisList(static_cast<std::size_t>(nx), bf),
                               BasisList(static_cast<std::size_t>(s.n_y), bg));
    ms.spec_ = s;
    return ms;
  }

  /// E x+ = F x + K u, y = C x + D u with rho = [vec(E); vec(F); vec(K); vec(C); vec(D)].
  static ModelStructure linear(int n_x, int n_u, int n_y) {
    StructureSpec s{n_x, n_u, n_y, 1, 1, 1, 1, true, false};
    return standard(s);
  }

  /// Arbitrary per-coordinate bases plus fixed (non-parametrized) terms.
  /// Parameters are laid out function-major (e, f, g); within a function by
  /// basis position, then coordinate, so uniform bases give vec() ordering.
  static ModelStructure custom(int n_x, int n_u, int n_y, const BasisList& basis_e,
                               const BasisList& basis_f, const BasisList& basis_g,
                               const FixedList& fixed_e = {}, const FixedList& fixed_f = {},
                               const FixedList& fixed_g = {}) {
    check_dims(n_x, n_u, n_y);
    ModelStructure ms;
    ms.n_x_ = n_x;
    ms.n_u_ = n_u;
    ms.n_y_ = n_y;
    const std::array<const BasisList*, 3> bases{&basis_e, &basis_f, &basis_g};
    const std::array<const FixedList*, 3> fixed{&fixed_e, &fixed_f, &fixed_g};
    for (int k = 0; k < 3; ++k) {
      const Fn fn = static_cast<Fn>(k);
      const int ncoord = fn == Fn::g ? n_y : n_x;
      const BasisList& b = *bases[static_cast<std::size_t>(k)];
      if (static_cast<int>(b.size()) != ncoord)
        throw DimensionMismatch(std::string("ModelStructure: basis list size for ") + fn_name(fn));
      std::size_t longest = 0;
      for (const auto& lst : b) longest = std::max(longest, lst.size());
      for (std::size_t pos = 0; pos < longest; ++pos) {
        for (int c = 0; c < ncoord; ++c) {
          const auto& lst = b[static_cast<std::size_t>(c)];
          if (pos >= lst.size()) continue;
          ms.check_monomial(fn, lst[pos]);
          const int mi = ms.intern(fn, lst[pos]);
          const Key key{fn, c, mi};
          if (ms.layout_.count(key)) throw Error("ModelStructure: duplicate monomial in basis");
          ms.layout_.emplace(key, static_cast<int>(ms.params_.size()));
          ms.params_.push_back(Param{fn, c, mi});
        }
      }
      const FixedList& fl = *fixed[static_cast<std::size_t>(k)];
      if (!fl.empty() && static_cast<int>(fl.size()) != ncoord)
        throw DimensionMismatch(std::string("ModelStructure: fixed list size for ") + fn_name(fn));
      for (int c = 0; c < static_cast<int>(fl.size()); ++c) {
        for (const auto& [m, coef] : fl[static_cast<std::size_t>(c)]) {
          ms.check_monomial(fn, m);
          ms.fixed_[static_cast<std::size_t>(k)].push_back(FixedTerm{c, ms.intern(fn, m), coef});
        }
      }
    }
    return ms;
  }

  int n_x() const { return n_x_; }
  int n_u() const { return n_u_; }
  int n_y() const { return n_y_; }
  int n_rho() const { return static_cast<int>(params_.size()); }
  int n_coords(Fn fn) const { return fn == Fn::g ? n_y_ : n_x_; }

  const std::vector<Monomial>& monomials(Fn fn) const { return monos_[idx(fn)]; }
  const std::vector<Param>& params() const { return params_; }
  const std::vector<FixedTerm>& fixed_terms(Fn fn) const { return fixed_[idx(fn)]; }
  const std::optional<StructureSpec>& spec() const { return spec_; }

  /// rho-index of (fn, coord, monomial), or -1 if that coefficient is not free.
  int index(Fn fn, int coord, const Monomial& m) const {
    const auto& tbl = monos_[idx(fn)];
    auto it = std::find(tbl.begin(), tbl.end(), m);
    if (it == tbl.end()) return -1;
    auto l = layout_.find(Key{fn, coord, static_cast<int>(it - tbl.begin())});
    return l == layout_.end() ? -1 : l->second;
  }

  /// Plain linear structure without constants: the LTI special case.
  bool is_lti() const {
    return spec_ && spec_->deg_e == 1 && spec_->deg_fx == 1 && spec_->deg_fu == 1 &&
           spec_->deg_g == 1 && !spec_->constants && spec_->separable_f;
  }

  /// Stable 64-bit fingerprint of the layout (FNV-1a over the parameter map).
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::int64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
        h *= 1099511628211ULL;
      }
    };
    mix(n_x_);
    mix(n_u_);
    mix(n_y_);
    for (int k = 0; k < 3; ++k) {
      for (const auto& m : monos_[static_cast<std::size_t>(k)]) {
        for (const auto& [v, e] : m.factors()) {
          mix(v);
          mix(e);
        }
        mix(-1);
      }
      for (const auto& ft : fixed_[static_cast<std::size_t>(k)]) {
        mix(ft.coord);
        mix(ft.mono);
        std::int64_t bits;
        std::memcpy(&bits, &ft.coeff, sizeof bits);
        mix(bits);
      }
    }
    for (const auto& p : params_) {
      mix(static_cast<int>(p.fn));
      mix(p.coord);
      mix(p.mono);
    }
    return h;
  }

  /// Coordinate `coord` of function `fn` as a theta-affine polynomial in (x, u);
  /// parameter indices are offset by rho_offset.
  Polynomial polynomial(Fn fn, int coord, int rho_offset = 0) const {
    Polynomial p;
    const auto& tbl = monomials(fn);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Param& q = params_[i];
      if (q.fn == fn && q.coord == coord)
        p.add_term(tbl[static_cast<std::size_t>(q.mono)],
                   AffineCoeff::from_param(rho_offset + static_cast<int>(i)));
    }
    for (const auto& ft : fixed_terms(fn))
      if (ft.coord == coord)
        p.add_term(tbl[static_cast<std::size_t>(ft.mono)], AffineCoeff::from_constant(ft.coeff));
    return p;
  }

 private:
  struct Key {
    Fn fn;
    int coord;
    int mono;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  static void check_dims(int nx, int nu, int ny) {
    if (nx < 1 || nu < 0 || ny < 1) throw Error("ModelStructure: need n_x >= 1, n_u >= 0, n_y >= 1");
  }
  static std::size_t idx(Fn fn) { return static_cast<std::size_t>(fn); }

  void check_monomial(Fn fn, const Monomial& m) const {
    const int limit = fn == Fn::e ? n_x_ : n_x_ + n_u_;
    if (m.max_variable() >= limit)
      throw Error(std::string("ModelStructure: monomial uses undeclared variable in ") + fn_name(fn));
  }

  int intern(Fn fn, const Monomial& m) {
    auto& tbl = monos_[idx(fn)];
    auto it = std::find(tbl.begin(), tbl.end(), m);
    if (it != tbl.end()) return static_cast<int>(it - tbl.begin());
    tbl.push_back(m);
    return static_cast<int>(tbl.size()) - 1;
  }

  int n_x_ = 0, n_u_ = 0, n_y_ = 0;
  std::array<std::vector<Monomial>, 3> monos_;
  std::array<std::vector<FixedTerm>, 3> fixed_;
  std::vector<Param> params_;
  std::map<Key, int> layout_;
  std::optional<StructureSpec> spec_;
};

/// Input/output record with optional surrogate states. Rows are time steps.
struct Dataset {
  Mat u;                 ///< T x n_u
  Mat y;                 ///< T x n_y
  std::optional<Mat> x;  ///< T x n_x surrogate states
  double sample_time = 1.0;

  Eigen::Index T() const { return y.rows(); }
  bool has_states() const { return x.has_value(); }

  void validate() const {
    if (y.rows() < 2) throw Error("Dataset: need T >= 2");
    if (u.rows() != y.rows()) throw DimensionMismatch("Dataset: u and y row counts differ");
    if (x && x->rows() != y.rows()) throw DimensionMismatch("Dataset: state row count differs from T");
  }

  const Mat& states() const {
    if (!x) throw MissingStates("dataset has no surrogate states");
    return *x;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix_mat = [&h](const Mat& m) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          std::uint64_t bits;
          const double v = m(i, j);
          std::memcpy(&bits, &v, sizeof bits);
          for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 1099511628211ULL;
          }
        }
      h ^= static_cast<std::uint64_t>(m.rows() * 131 + m.cols());
      h *= 1099511628211ULL;
    };
    mix_mat(u);
    mix_mat(y);
    if (x) mix_mat(*x);
    return h;
  }
};

/// Equation errors at the surrogate states.
struct Residuals {
  Mat eps;  ///< (T-1) x n_x, eps_t = f(x_t,u_t) - e(x_{t+1})
  Mat eta;  ///< T x n_y,     eta_t = g(x_t,u_t) - y_t
};

// --- monomial tables -------------------------------------------------------

/// Values of a monomial list at z = (x, u).
inline Vec monomial_values(const std::vector<Monomial>& monos, const Vec& z) {
  Vec v(static_cast<Eigen::Index>(monos.size()));
  for (std::size_t k = 0; k < monos.size(); ++k) v(static_cast<Eigen::Index>(k)) = monos[k].eval(z);
  return v;
}

/// Gradients with respect to x (first n_x variables): row k is d m_k / dx.
inline Mat monomial_x_gradients(const std::vector<Monomial>& monos, const Vec& z, int n_x) {
  Mat g = Mat::Zero(static_cast<Eigen::Index>(monos.size()), n_x);
  for (std::size_t k = 0; k < monos.size(); ++k) {
    const auto& fac = monos[k].factors();
    for (std::size_t a = 0; a < fac.size(); ++a) {
      const int var = fac[a].first;
      if (var >= n_x) continue;
      double d = fac[a].second;
      for (int p = 1; p < fac[a].second; ++p) d *= z(var);
      for (std::size_t b = 0; b < fac.size(); ++b) {
        if (b == a) continue;
        double pw = 1.0;
        for (int p = 0; p < fac[b].second; ++p) pw *= z(fac[b].first);
        d *= pw;
      }
      g(static_cast<Eigen::Index>(k), var) = d;
    }
  }
  return g;
}

inline Vec stack_xu(const Vec& x, const Vec& u) {
  Vec z(x.size() + u.size());
  z << x, u;
  return z;
}

struct EFG {
  Vec e, f, g;
};

struct Jacobians {
  Mat E, F, G;
};

namespace detail {

inline void check_rho(const ModelStructure& ms, const Vec& rho) {
  if (rho.size() != ms.n_rho()) throw DimensionMismatch("rho size does not match structure");
}

inline void check_xu(const ModelStructure& ms, const Vec& x, const Vec& u) {
  if (x.size() != ms.n_x() || u.size() != ms.n_u())
    throw DimensionMismatch("state/input size does not match structure");
}

/// sum over coordinates of coefficient * column, for one function.
inline Vec combine_values(const ModelStructure& ms, Fn fn, const Vec& rho, const Vec& vals) {
  Vec out = Vec::Zero(ms.n_coords(fn));
  const auto& ps = ms.params();
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].fn == fn) out(ps[i].coord) += rho(static_cast<Eigen::Index>(i)) * vals(ps[i].mono);
  for (const auto& ft : ms.fixed_terms(fn)) out(ft.coord) += ft.coeff * vals(ft.mono);
  return out;
}

inline Mat combine_gradients(const ModelStructure& ms, Fn fn, const Vec& rho, const Mat& grads) {
  Mat out = Mat::Zero(ms.n_coords(fn), ms.n_x());
  const auto& ps = ms.params();
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].fn == fn) out.row(ps[i].coord) += rho(static_cast<Eigen::Index>(i)) * grads.row(ps[i].mono);
  for (const auto& ft : ms.fixed_terms(fn)) out.row(ft.coord) += ft.coeff * grads.row(ft.mono);
  return out;
}

}  // namespace detail

inline Vec eval_fn(const ModelStructure& ms, Fn fn, const Vec& rho, const Vec& z) {
  return detail::combine_values(ms, fn, rho, monomial_values(ms.monomials(fn), z));
}

inline EFG eval_efg(const ModelStructure& ms, const Vec& rho, const Vec& x, const Vec& u) {
  detail::check_rho(ms, rho);
  detail::check_xu(ms, x, u);
  const Vec z = stack_xu(x, u);
  return EFG{eval_fn(ms, Fn::e, rho, z), eval_fn(ms, Fn::f, rho, z), eval_fn(ms, Fn::g, rho, z)};
}

/// Exact Jacobians with respect to x: E = de/dx, F = df/dx, G = dg/dx.
inline Jacobians jacobians(const ModelStructure& ms, const Vec& rho, const Vec& x, const Vec& u) {
  detail::check_rho(ms, rho);
  detail::check_xu(ms, x, u);
  const Vec z = stack_xu(x, u);
  Jacobians j;
  for (Fn fn : {Fn::e, Fn::f, Fn::g}) {
    Mat m = detail::combine_gradients(ms, fn, rho, monomial_x_gradients(ms.monomials(fn), z, ms.n_x()));
    if (fn == Fn::e) j.E = std::move(m);
    else if (fn == Fn::f) j.F = std::move(m);
    else j.G = std::move(m);
  }
  return j;
}

struct RootOptions {
  double root_tol = 1e-9;  ///< on ||e(s) - b||_inf
  int max_root_iters = 100;
};

/// Solves e(s) = b by damped Newton with residual-halving line search.
inline Vec implicit_step(const ModelStructure& ms, const Vec& rho, const Vec& b,
                         const std::optional<Vec>& start = std::nullopt,
                         const RootOptions& opts = {}) {
  detail::check_rho(ms, rho);
  if (b.size() != ms.n_x()) throw DimensionMismatch("implicit_step: target size");
  const int nx = ms.n_x();
  const Vec u0 = Vec::Zero(ms.n_u());
  Vec s = start ? *start : Vec::Zero(nx);
  auto residual = [&](const Vec& x) {
    return Vec(eval_fn(ms, Fn::e, rho, stack_xu(x, u0)) - b);
  };
  // Absolute tolerance, scaled up only when |b| > 1 so that large targets
  // are not held to an accuracy below rounding.
  const double tol = opts.root_tol * std::max(1.0, b.lpNorm<Eigen::Infinity>());
  Vec r = residual(s);
  for (int it = 0; it < opts.max_root_iters; ++it) {
    if (!r.allFinite()) break;
    if (r.lpNorm<Eigen::Infinity>() <= tol) return s;
    const Mat e_jac = detail::combine_gradients(
        ms, Fn::e, rho, monomial_x_gradients(ms.monomials(Fn::e), stack_xu(s, u0), nx));
    Eigen::PartialPivLU<Mat> lu(e_jac);
    const Vec d = -lu.solve(r);
    if (!d.allFinite()) break;
    const double r0 = r.norm();
    double alpha = 1.0;
    bool moved = false;
    for (int h = 0; h < 60; ++h, alpha *= 0.5) {
      Vec trial = s + alpha * d;
      Vec rt = residual(trial);
      if (rt.allFinite() && rt.norm() < r0) {
        s = std::move(trial);
        r = std::move(rt);
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (r.allFinite() && r.lpNorm<Eigen::Infinity>() <= tol) return s;
  throw NoConvergence("implicit_step: e(s) = b not solved to tolerance");
}

struct Trajectory {
  Mat x;  ///< T x n_x
  Mat y;  ///< T x n_y
};

struct SimulateOptions {
  RootOptions root;
  double divergence_bound = std::numeric_limits<double>::infinity();  ///< on ||x_t||_inf
};

/// Open-loop simulation x_{t+1} = e^{-1}(f(x_t,u_t)), y_t = g(x_t,u_t).
inline Trajectory simulate(const ModelStructure& ms, const Vec& rho, const Vec& x1, const Mat& u,
                           const SimulateOptions& opts = {}) {
  detail::check_rho(ms, rho);
  if (x1.size() != ms.n_x() || u.cols() != ms.n_u())
    throw DimensionMismatch("simulate: initial state or input width");
  const Eigen::Index T = u.rows();
  Trajectory tr{Mat(T, ms.n_x()), Mat(T, ms.n_y())};
  Vec x = x1;
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > opts.divergence_bound)
      throw SimulationFailure("simulate: state diverged", static_cast<long>(t));
    const Vec ut = u.row(t).transpose();
    const Vec z = stack_xu(x, ut);
    tr.x.row(t) = x.transpose();
    tr.y.row(t) = eval_fn(ms, Fn::g, rho, z).transpose();
    if (t + 1 == T) break;
    const Vec b = eval_fn(ms, Fn::f, rho, z);
    try {
      x = implicit_step(ms, rho, b, x, opts.root);
    } catch (const NoConvergence& e) {
      throw SimulationFailure(std::string("simulate: ") + e.what(), static_cast<long>(t + 1));
    }
  }
  return tr;
}

inline Residuals residuals(const ModelStructure& ms, const Vec& rho, const Dataset& data) {
  detail::check_rho(ms, rho);
  data.validate();
  const Mat& xs = data.states();
  if (xs.cols() != ms.n_x() || data.u.cols() != ms.n_u() || data.y.cols() != ms.n_y())
    throw DimensionMismatch("residuals: dataset widths do not match structure");
  const Eigen::Index T = data.T();
  Residuals r{Mat(T - 1, ms.n_x()), Mat(T, ms.n_y())};
  for (Eigen::Index t = 0; t < T; ++t) {
    const Vec z = stack_xu(xs.row(t).transpose(), data.u.row(t).transpose());
    r.eta.row(t) = (eval_fn(ms, Fn::g, rho, z) - data.y.row(t).transpose()).transpose();
    if (t + 1 < T) {
      const Vec zn = stack_xu(xs.row(t + 1).transpose(), data.u.row(t + 1).transpose());
      r.eps.row(t) = (eval_fn(ms, Fn::f, rho, z) - eval_fn(ms, Fn::e, rho, zn)).transpose();
    }
  }
  return r;
}

/// J0 = sum_t |G_t D_t + eta_t|^2 with D_1 = 0, E_{t+1} D_{t+1} = F_t D_t + eps_t.
inline double linearized_sim_error(const ModelStructure& ms, const Vec& rho, const Dataset& data) {
  const Residuals r = residuals(ms, rho, data);
  const Mat& xs = data.states();
  const Eigen::Index T = data.T();
  Vec delta = Vec::Zero(ms.n_x());
  double j0 = 0.0;
  Jacobians jac = jacobians(ms, rho, xs.row(0).transpose(), data.u.row(0).transpose());
  for (Eigen::Index t = 0; t < T; ++t) {
    j0 += (jac.G * delta + r.eta.row(t).transpose()).squaredNorm();
    if (t + 1 == T) break;
    Jacobians next = jacobians(ms, rho, xs.row(t + 1).transpose(), data.u.row(t + 1).transpose());
    Eigen::PartialPivLU<Mat> lu(next.E);
    if (!(lu.rcond() > 1e-14)) throw SingularJacobian("linearized_sim_error: E_t singular", static_cast<long>(t + 1));
    delta = lu.solve(jac.F * delta + r.eps.row(t).transpose());
    jac = std::move(next);
  }
  return j0;
}

/// Simulation error J = sum_t |y_t - g(x_t, u_t)|^2 along the trajectory from x1
/// (default: the first surrogate state if present, else 0).
inline double sim_error(const ModelStructure& ms, const Vec& rho, const Dataset& data,
                        const std::optional<Vec>& x1 = std::nullopt,
                        const SimulateOptions& opts = {}) {
  data.validate();
  Vec start = x1 ? *x1 : (data.x ? Vec(data.x->row(0).transpose()) : Vec::Zero(ms.n_x()));
  const Trajectory tr = simulate(ms, rho, start, data.u, opts);
  if (tr.y.cols() != data.y.cols()) throw DimensionMismatch("sim_error: output width");
  return (data.y - tr.y).squaredNorm();
}

/// Matrices of the linear implicit model E x+ = F x + K u, y = C x + D u.
struct LtiMatrices {
  Mat E, F, K, C, D;

  int n_x() const { return static_cast<int>(E.rows()); }
  int n_u() const { return static_cast<int>(K.cols()); }
  int n_y() const { return static_cast<int>(C.rows()); }

  /// rho = [vec(E); vec(F); vec(K); vec(C); vec(D)] for ModelStructure::linear.
  Vec to_rho() const {
    Vec r(E.size() + F.size() + K.size() + C.size() + D.size());
    Eigen::Index o = 0;
    for (const Mat* m : {&E, &F, &K, &C, &D}) {
      r.segment(o, m->size()) = Eigen::Map<const Vec>(m->data(), m->size());
      o += m->size();
    }
    return r;
  }

  static LtiMatrices from_rho(const Vec& rho, int n_x, int n_u, int n_y) {
    const Eigen::Index need = static_cast<Eigen::Index>(n_x) * (2 * n_x + n_u + n_y) +
                              static_cast<Eigen::Index>(n_y) * n_u;
    if (rho.size() < need) throw DimensionMismatch("LtiMatrices::from_rho: rho too short");
    LtiMatrices m;
    Eigen::Index o = 0;
    auto take = [&](Mat& dst, int rows, int cols) {
      dst = Eigen::Map<const Mat>(rho.data() + o, rows, cols);
      o += static_cast<Eigen::Index>(rows) * cols;
    };
    take(m.E, n_x, n_x);
    take(m.F, n_x, n_x);
    take(m.K, n_x, n_u);
    take(m.C, n_y, n_x);
    take(m.D, n_y, n_u);
    return m;
  }

  /// Explicit form x+ = A x + B u.
  Mat A() const { return E.partialPivLu().solve(F); }
  Mat B() const { return E.partialPivLu().solve(K); }
};

inline double spectral_radius(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(a, false);
  if (es.info() != Eigen::Success) throw NoConvergence("spectral_radius: eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace stabid
