#pragma once

// Path-following log-det barrier method over nu, theta(nu) = theta0 + N_e nu:
// for tau = tau0, tau0/beta, ... minimize f_tau = J(theta(nu)) + tau phi(nu)
// by damped Newton until the objective stops changing.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "stabid/barrier.hpp"
#include "stabid/constraints.hpp"
#include "stabid/error.hpp"
#include "stabid/linalg.hpp"
#include "stabid/newton.hpp"

namespace stabid {

/// Objective value with gradient over theta and the Hessian restricted to the
/// theta rows/cols [hess_offset, hess_offset + hess.rows()); zero elsewhere.
struct OracleResult {
  double value = 0.0;
  Vec grad;
  Mat hess;
  Eigen::Index hess_offset = 0;
};

struct ObjectiveOracle {
  /// order 0: value; 1: + gradient; 2: + Hessian.
  std::function<OracleResult(const Vec& theta, int order)> eval;
  bool convex = true;
};

/// Zero objective (pure barrier: the analytic center).
inline ObjectiveOracle zero_oracle(int n_theta) {
  return ObjectiveOracle{[n_theta](const Vec&, int order) {
                           OracleResult r;
                           if (order >= 1) r.grad = Vec::Zero(n_theta);
                           if (order >= 2) r.hess = Mat::Zero(0, 0);
                           return r;
                         },
                         true};
}

struct SolveReport {
  Vec theta;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<double> objective_trace;  ///< objective after each outer iteration
  std::vector<double> tau_trace;
  std::vector<int> newton_steps;            ///< per outer iteration
  std::vector<double> step_wall_times_us;   ///< per Newton step
  std::vector<std::string> inner_exits;     ///< why each inner loop stopped
  double final_margin = 0.0;
  std::string termination;
  bool tau_min_reached = false;
  double hess_mod_max = 0.0;  ///< largest Hessian regularization used
  SolverOptions options;

  int total_newton_steps() const {
    int s = 0;
    for (int k : newton_steps) s += k;
    return s;
  }
  double mean_step_us() const {
    if (step_wall_times_us.empty()) return 0.0;
    double s = 0.0;
    for (double v : step_wall_times_us) s += v;
    return s / static_cast<double>(step_wall_times_us.size());
  }
};

namespace detail {

/// -log(R^2 - |theta|^2) over nu, theta = theta0 + N nu with N orthonormal.
/// Without it, scaling (e, f, P, Q) jointly drives -logdet S to -inf.
inline void add_ball(const Vec& theta, const Mat& n_e, double r2, int order, double& phi, Vec* g, Mat* h) {
  const double s = r2 - theta.squaredNorm();
  if (!(s > 0)) throw NotInDomain("theta outside the radius bound");
  phi -= std::log(s);
  if (order < 1) return;
  const Vec nt = n_e.transpose() * theta;
  *g += (2.0 / s) * nt;
  if (order < 2) return;
  h->diagonal().array() += 2.0 / s;
  h->noalias() += (4.0 / (s * s)) * nt * nt.transpose();
}

/// Smooth convex function of nu with an implicit domain.
struct PathEval {
  double obj = 0.0;
  double bar = 0.0;
  Vec g_obj, g_bar;
  Mat h_obj, h_bar;
};

struct PathProblem {
  Eigen::Index n = 0;
  /// Throws NotInDomain outside the barrier domain.
  std::function<PathEval(const Vec& nu, int order)> eval;
};

struct PathState {
  Vec nu;
  double tau = 0.0;
  double obj = 0.0;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Inner Newton loop for one tau. Returns number of Newton steps; `stop`
/// (optional) is checked after every accepted step and ends the loop early.
inline int center(const PathProblem& prob, PathState& st, const SolverOptions& opts,
                  SolveReport& rep, Clock::time_point t_start, std::string& exit_reason,
                  const std::function<bool(const Vec&, double)>& stop = {}) {
  const double tau = st.tau;
  PathEval cur = prob.eval(st.nu, 2);
  st.obj = cur.obj;
  double f_cur = cur.obj + tau * cur.bar;
  int steps = 0;
  for (long k = 0; k < opts.maxit; ++k) {
    if (opts.time_budget && seconds_since(t_start) > *opts.time_budget)
      throw TimeBudgetExceeded("solve: time budget exceeded");
    const auto t_step = Clock::now();
    const Vec g = cur.g_obj + tau * cur.g_bar;
    if (g.size() == 0 || g.lpNorm<Eigen::Infinity>() < opts.delta_g) {
      exit_reason = "gradient";
      return steps;
    }
    Mat h = tau * cur.h_bar;
    if (cur.h_obj.size()) h += cur.h_obj;
    const NewtonDirection nd = newton_direction(h, g, opts.hess_mod_floor);
    rep.hess_mod_max = std::max(rep.hess_mod_max, nd.delta);
    const double g0 = g.dot(nd.d);
    auto line = [&](double alpha) {
      LinePoint lp;
      try {
        PathEval e = prob.eval(st.nu + alpha * nd.d, 1);
        lp.f = e.obj + tau * e.bar;
        lp.df = (e.g_obj + tau * e.g_bar).dot(nd.d);
        if (!std::isfinite(lp.f)) lp.f = std::numeric_limits<double>::infinity();
      } catch (const NotInDomain&) {
      } catch (const NotDefinite&) {
      } catch (const SingularJacobian&) {
      }
      return lp;
    };
    LineSearchResult ls;
    try {
      if (!(g0 < 0)) throw LineSearchFailed("non-descent direction");
      ls = wolfe_backtrack(line, f_cur, g0, opts, true);
    } catch (const LineSearchFailed&) {
      // Rounding floor: the predicted decrease is below what f can resolve.
      const double resolvable = 1e3 * std::numeric_limits<double>::epsilon() *
                                (std::abs(cur.obj) + tau * std::abs(cur.bar) + 1.0);
      if (-g0 <= resolvable) {
        exit_reason = "stagnation";
        return steps;
      }
      throw;
    }
    const Vec step = ls.alpha * nd.d;
    st.nu += step;
    ++steps;
    const double f_new = ls.point.f;
    cur = prob.eval(st.nu, 2);
    st.obj = cur.obj;
    rep.step_wall_times_us.push_back(
        std::chrono::duration<double, std::micro>(Clock::now() - t_step).count());
    const double df = std::abs(f_new - f_cur);
    f_cur = cur.obj + tau * cur.bar;
    if (stop && stop(st.nu, st.obj)) {
      exit_reason = "early_exit";
      return steps;
    }
    if (df < opts.delta_f) {
      exit_reason = "objective";
      return steps;
    }
    if ((cur.g_obj + tau * cur.g_bar).lpNorm<Eigen::Infinity>() < opts.delta_g) {
      exit_reason = "gradient";
      return steps;
    }
    if (step.lpNorm<Eigen::Infinity>() < opts.delta_f) {
      exit_reason = "step";
      return steps;
    }
  }
  exit_reason = "maxit";
  return steps;
}

/// Outer loop of the path-following method. `stop` ends the whole run.
inline void follow_path(const PathProblem& prob, PathState& st, const SolverOptions& opts,
                        SolveReport& rep, const std::function<bool(const Vec&, double)>& stop = {}) {
  const auto t_start = Clock::now();
  st.tau = opts.tau0;
  rep.initial_objective = prob.eval(st.nu, 0).obj;
  double prev = rep.initial_objective;
  for (;;) {
    std::string why;
    const int steps = center(prob, st, opts, rep, t_start, why, stop);
    rep.newton_steps.push_back(steps);
    rep.objective_trace.push_back(st.obj);
    rep.tau_trace.push_back(st.tau);
    rep.inner_exits.push_back(why);
    if (why == "early_exit") {
      rep.termination = "early_exit";
      break;
    }
    if (std::abs(st.obj - prev) < opts.delta_J) {
      rep.termination = "objective_converged";
      break;
    }
    prev = st.obj;
    st.tau /= opts.beta;
    if (st.tau < opts.tau_min) {
      rep.tau_min_reached = true;
      rep.termination = "tau_min";
      break;
    }
  }
  rep.final_objective = st.obj;
  rep.options = opts;
}

}  // namespace detail

/// Minimizes oracle(theta) over the interior of the constraint set, starting
/// from a strictly feasible theta_init (normally a phase-I output).
inline SolveReport solve(const ObjectiveOracle& oracle, const ConstraintSystem& cs,
                         const FeasiblePoint& init, const SolverOptions& opts = {}) {
  opts.check();
  if (init.theta.size() != cs.n_theta()) throw DimensionMismatch("solve: initial theta size");
  const Membership m0 = membership(cs, init.theta);
  if (!(m0.margin > 0) || m0.eq_residual > 1e-8)
    throw NotInDomain("solve: initial point is not strictly feasible");
  const Vec theta0 = init.theta;
  const Mat s_base = cs.S(theta0);
  const double r2 = opts.radius * opts.radius;
  if (!(theta0.squaredNorm() < r2)) throw NotInDomain("solve: initial point outside the radius bound");

  detail::PathProblem prob;
  prob.n = cs.n_nu();
  prob.eval = [&](const Vec& nu, int order) {
    detail::PathEval e;
    BarrierEval b = barrier_affine(cs.S_shift(s_base, nu), cs.B_nu, order);
    const Vec theta = cs.theta_of(theta0, nu);
    detail::add_ball(theta, cs.N_e, r2, order, b.phi, &b.grad, &b.hess);
    e.bar = b.phi;
    const OracleResult o = oracle.eval(theta, order);
    e.obj = o.value;
    if (order >= 1) {
      e.g_bar = b.grad;
      e.g_obj = chain_gradient(cs.N_e, o.grad);
    }
    if (order >= 2) {
      e.h_bar = b.hess;
      e.h_obj = o.hess.size() ? chain_hessian(cs.N_e, o.hess, o.hess_offset)
                              : Mat::Zero(prob.n, prob.n);
    }
    return e;
  };

  detail::PathState st;
  st.nu = Vec::Zero(prob.n);
  SolveReport rep;
  detail::follow_path(prob, st, opts, rep);
  rep.theta = cs.theta_of(theta0, st.nu);
  rep.final_margin = membership(cs, rep.theta).margin;
  return rep;
}

/// Finds theta with A_e theta = b_e and lambda_min(S(theta)) >= feas_margin by
/// minimizing t - tau logdet(S(theta* + N_e nu) + t I) along the barrier path,
/// stopping as soon as t < -feas_margin.
inline FeasiblePoint phase_one(const ConstraintSystem& cs, const SolverOptions& opts = {}) {
  opts.check();
  const int n_S = cs.n_S;
  const Vec& theta0 = cs.theta_star;
  const Mat s_base = cs.S(theta0);
  // Already strictly feasible: nothing to do.
  const double lam0 = lambda_min(s_base);
  const double r2 = opts.radius * opts.radius;
  if (!(theta0.squaredNorm() < r2)) throw Infeasible("phase_one: min-norm equality solution outside the radius bound");
  if (lam0 >= opts.feas_margin && cs.equality_residual(theta0) <= 1e-8) return FeasiblePoint{theta0, lam0, 0};

  const Eigen::Index n = cs.n_nu();
  Mat cols(static_cast<Eigen::Index>(n_S) * n_S, n + 1);
  cols.leftCols(n) = cs.B_nu;
  Mat eye = Mat::Identity(n_S, n_S);
  cols.col(n) = Eigen::Map<const Vec>(eye.data(), n_S * n_S);

  detail::PathProblem prob;
  prob.n = n + 1;
  prob.eval = [&](const Vec& y, int order) {
    detail::PathEval e;
    const Vec nu = y.head(n);
    const double t = y(n);
    Mat s = cs.S_shift(s_base, nu);
    s.diagonal().array() += t;
    BarrierEval b = barrier_affine(s, cols, order);
    Vec gb;
    Mat hb;
    if (order >= 1) gb = Vec::Zero(n);
    if (order >= 2) hb = Mat::Zero(n, n);
    detail::add_ball(cs.theta_of(theta0, nu), cs.N_e, r2, order, b.phi, &gb, &hb);
    if (order >= 1) b.grad.head(n) += gb;
    if (order >= 2) b.hess.topLeftCorner(n, n) += hb;
    e.bar = b.phi;
    e.obj = t;
    if (order >= 1) {
      e.g_bar = b.grad;
      e.g_obj = Vec::Zero(n + 1);
      e.g_obj(n) = 1.0;
    }
    if (order >= 2) e.h_bar = b.hess;
    return e;
  };

  detail::PathState st;
  st.nu = Vec::Zero(n + 1);
  st.nu(n) = std::max(0.0, -lam0) + 1.0;
  SolveReport rep;
  const double target = -opts.feas_margin;
  SolverOptions po = opts;
  auto stop = [&](const Vec&, double t) { return t < target; };
  try {
    detail::follow_path(prob, st, po, rep, stop);
  } catch (const LineSearchFailed& e) {
    throw Infeasible(std::string("phase_one: ") + e.what());
  }
  if (!(st.obj < target))
    throw Infeasible("phase_one: no strictly feasible point found (t = " + std::to_string(st.obj) + ")");
  FeasiblePoint fp;
  fp.theta = cs.theta_of(theta0, st.nu.head(n));
  fp.margin = lambda_min(cs.S(fp.theta));
  fp.newton_steps = rep.total_newton_steps();
  if (!(fp.margin >= opts.feas_margin)) {
    // t < -margin guarantees S + tI > 0, i.e. lambda_min(S) > -t; guard rounding.
    if (!(fp.margin > 0)) throw Infeasible("phase_one: certificate lost to rounding");
  }
  return fp;
}

}  // namespace stabid
