#pragma once

// Newton machinery shared by the barrier solver: modified-Hessian search
// direction, backtracking line search, and the theta -> nu chain rule.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "stabid/constraints.hpp"
#include "stabid/error.hpp"
#include "stabid/linalg.hpp"

namespace stabid {

struct SolverOptions {
  double tau0 = 1e4;
  double beta = 10.0;
  double delta_f = 1e-10;
  double delta_g = 1e-10;
  double delta_J = 1e-11;
  long maxit = 10000;
  double tau_min = 1e-9;
  double c1 = 1e-4;
  double c2 = 0.9;
  double backtrack = 0.5;
  int max_backtracks = 60;
  double hess_mod_floor = 1e-12;
  std::optional<double> time_budget;  ///< seconds, off by default
  double feas_margin = 1e-6;          ///< phase-I target for lambda_min(S)
  double radius = 1e4;                ///< domain bound |theta|_2 < radius (keeps centering bounded)

  void check() const {
    if (!(tau0 > 0) || !(beta > 1) || !(delta_f > 0) || !(delta_g > 0) || !(delta_J > 0) ||
        maxit < 1 || !(tau_min > 0) || !(c1 > 0 && c1 < c2 && c2 < 1) ||
        !(backtrack > 0 && backtrack < 1) || max_backtracks < 1 || !(hess_mod_floor > 0) ||
        !(feas_margin > 0) || !(radius > 0))
      throw Error("SolverOptions: invalid value");
  }
};

struct NewtonDirection {
  Vec d;
  double delta = 0.0;  ///< regularization that made the factorization succeed
};

/// Solves (H + delta I) d = -g with delta the first of {0, floor, 10 floor, ...}
/// for which Cholesky succeeds with every pivot >= floor.
inline NewtonDirection newton_direction(const Mat& h, const Vec& g, double floor = 1e-12) {
  if (h.rows() != h.cols() || h.rows() != g.size()) throw DimensionMismatch("newton_direction: shapes");
  const Eigen::Index n = g.size();
  NewtonDirection out;
  if (n == 0) {
    out.d = Vec(0);
    return out;
  }
  double delta = 0.0;
  for (int attempt = 0; attempt < 400; ++attempt) {
    Mat m = h;
    if (delta > 0) m.diagonal().array() += delta;
    const SymFactor f = sym_factor(m);
    if (f.success && f.min_pivot >= floor) {
      out.d = -f.llt.solve(g);
      out.delta = delta;
      if (out.d.allFinite()) return out;
    }
    delta = delta == 0.0 ? floor : 10.0 * delta;
    if (!std::isfinite(delta)) break;
  }
  throw NoConvergence("newton_direction: Hessian modification did not produce a factorization");
}

/// Value and directional derivative of the line function at a trial step.
/// An out-of-domain trial reports value = +inf.
struct LinePoint {
  double f = std::numeric_limits<double>::infinity();
  double df = 0.0;
};

struct LineSearchResult {
  double alpha = 0.0;
  LinePoint point;
  bool curvature = false;  ///< strong descent + curvature (Wolfe) held
  int trials = 0;
};

/// Backtracks alpha = 1, b, b^2, ... until Armijo holds. For a convex line
/// function the derivative is nondecreasing, so when the first Armijo point
/// misses the curvature condition every smaller step misses it too; the
/// search then returns that point (Armijo-only relaxation). With
/// convex = false the search keeps looking for a Wolfe point before relaxing.
inline LineSearchResult wolfe_backtrack(const std::function<LinePoint(double)>& line, double f0,
                                        double g0, const SolverOptions& opts, bool convex = true) {
  if (!(g0 < 0)) throw LineSearchFailed("wolfe_backtrack: not a descent direction");
  std::optional<LineSearchResult> first_armijo;
  double alpha = 1.0;
  LineSearchResult r;
  for (int i = 0; i <= opts.max_backtracks; ++i, alpha *= opts.backtrack) {
    LinePoint p = line(alpha);
    ++r.trials;
    const bool armijo = std::isfinite(p.f) && p.f <= f0 + opts.c1 * alpha * g0;
    if (armijo) {
      const bool curv = p.df >= opts.c2 * g0;
      if (curv || convex) {
        r.alpha = alpha;
        r.point = p;
        r.curvature = curv;
        if (curv || !first_armijo) return r;
      }
      if (!first_armijo) {
        first_armijo = LineSearchResult{alpha, p, false, 0};
      }
    }
  }
  if (first_armijo) {
    first_armijo->trials = r.trials;
    return *first_armijo;
  }
  throw LineSearchFailed("wolfe_backtrack: no step satisfies the sufficient decrease condition");
}

/// g_nu = N' g_theta, H_nu = N' H_theta N. When the Hessian only covers the
/// theta rows [offset, offset + H.rows()), only those rows of N are used.
inline Vec chain_gradient(const Mat& n_e, const Vec& g_theta) {
  if (g_theta.size() != n_e.rows()) throw DimensionMismatch("chain_to_nu: gradient length");
  return n_e.transpose() * g_theta;
}

inline Mat chain_hessian(const Mat& n_e, const Mat& h_block, Eigen::Index offset = 0) {
  if (offset < 0 || offset + h_block.rows() > n_e.rows() || h_block.rows() != h_block.cols())
    throw DimensionMismatch("chain_to_nu: Hessian block");
  const auto nb = n_e.middleRows(offset, h_block.rows());
  const Mat hn = h_block * nb;
  Mat out(nb.cols(), nb.cols());
  out.triangularView<Eigen::Lower>() = nb.transpose() * hn;
  out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
  return out;
}

inline std::pair<Vec, Mat> chain_to_nu(const ConstraintSystem& cs, const Vec& g_theta, const Mat& h_theta) {
  return {chain_gradient(cs.N_e, g_theta), chain_hessian(cs.N_e, h_theta, 0)};
}

}  // namespace stabid
