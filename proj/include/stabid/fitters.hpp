#pragma once

// End-to-end fitting: Lagrangian relaxation (lr), equation error (ee), and the
// weighted equation-error stable subspace fit; plus validation by simulation.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "stabid/constraints.hpp"
#include "stabid/error.hpp"
#include "stabid/ipm.hpp"
#include "stabid/lagrangian.hpp"
#include "stabid/linalg.hpp"
#include "stabid/models.hpp"
#include "stabid/stability.hpp"

namespace stabid {

/// A fitted model: structure, coefficients and the stability certificate.
struct Model {
  ModelStructure structure;
  Vec rho;
  Mat P;  ///< contraction metric (empty for ee)
  double mu = 0.0;
  std::string method;
};

enum class Method { lr, ee, stable_subspace };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::lr: return "lr";
    case Method::ee: return "ee";
    case Method::stable_subspace: return "stable-subspace";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "lr") return Method::lr;
  if (s == "ee") return Method::ee;
  if (s == "stable-subspace") return Method::stable_subspace;
  throw Error("unknown method '" + s + "' (expected lr, ee or stable-subspace)");
}

struct FitOptions {
  double mu = 1e-3;
  std::optional<double> mu_wp;  ///< ee well-posedness margin; defaults to mu
  SolverOptions solver;
};

struct ValidationResult {
  double nse = 0.0;  ///< normalized simulation error
  bool diverged = false;
  long fail_index = -1;
  std::string message;
};

struct FitResult {
  Model model;
  Vec theta;
  SolveReport report;
  FeasiblePoint start;
  std::shared_ptr<const ConstraintSystem> constraints;
  double objective = 0.0;  ///< final value of the fitted objective
  ValidationResult training;
  double phase_one_seconds = 0.0;
  double solve_seconds = 0.0;
};

/// Normalized simulation error sum|y~ - y|^2 / sum|y~|^2. The simulation starts
/// from x1, else the first surrogate state, else zero. Divergence (state norm
/// above 1e8 or a root-solver failure) is reported as +inf.
inline ValidationResult validate(const Model& model, const Dataset& data,
                                 const std::optional<Vec>& x1 = std::nullopt) {
  data.validate();
  const ModelStructure& ms = model.structure;
  if (data.u.cols() != ms.n_u() || data.y.cols() != ms.n_y())
    throw DimensionMismatch("validate: dataset widths do not match the model");
  if (data.x && data.x->cols() != ms.n_x()) throw DimensionMismatch("validate: state width");
  const double den = data.y.squaredNorm();
  if (!(den > 0)) throw Error("validate: measured outputs are identically zero");
  const Vec start = x1 ? *x1 : (data.x ? Vec(data.x->row(0).transpose()) : Vec::Zero(ms.n_x()));
  ValidationResult v;
  SimulateOptions so;
  so.divergence_bound = 1e8;
  try {
    const Trajectory tr = simulate(ms, model.rho, start, data.u, so);
    v.nse = (data.y - tr.y).squaredNorm() / den;
    if (!std::isfinite(v.nse)) {
      v.nse = std::numeric_limits<double>::infinity();
      v.diverged = true;
      v.message = "non-finite output";
    }
  } catch (const SimulationFailure& e) {
    v.nse = std::numeric_limits<double>::infinity();
    v.diverged = true;
    v.fail_index = e.time_index();
    v.message = e.what();
  }
  return v;
}

/// Residual vector r(rho) = Phi rho + r0 stacking eta_t (t = 1..T) then
/// eps_t (t = 1..T-1); exact because residuals are affine in rho.
struct EquationErrorQuadratic {
  Mat phi;
  Vec r0;
  Mat hess;  ///< 2 Phi'Phi

  double value(const Vec& rho) const { return (phi * rho + r0).squaredNorm(); }
  Vec grad(const Vec& rho) const { return 2.0 * phi.transpose() * (phi * rho + r0); }
};

inline EquationErrorQuadratic ee_quadratic(const ModelStructure& ms, const DataTables& tb) {
  const int T = tb.T, nx = ms.n_x(), ny = ms.n_y();
  const Eigen::Index n_eta = static_cast<Eigen::Index>(T) * ny;
  const Eigen::Index rows = n_eta + static_cast<Eigen::Index>(T - 1) * nx;
  EquationErrorQuadratic q;
  q.phi = Mat::Zero(rows, ms.n_rho());
  q.r0 = Vec::Zero(rows);
  auto add = [&](Fn fn, int c, int k, double w, auto&& sink) {
    const Mat& v = tb.fn[static_cast<std::size_t>(fn)].vals;
    if (fn == Fn::g) {
      for (int t = 0; t < T; ++t) sink(static_cast<Eigen::Index>(t) * ny + c, w * v(k, t));
    } else if (fn == Fn::f) {
      for (int t = 0; t + 1 < T; ++t) sink(n_eta + static_cast<Eigen::Index>(t) * nx + c, w * v(k, t));
    } else {
      for (int t = 0; t + 1 < T; ++t) sink(n_eta + static_cast<Eigen::Index>(t) * nx + c, -w * v(k, t + 1));
    }
  };
  const auto& ps = ms.params();
  for (int i = 0; i < ms.n_rho(); ++i) {
    const auto& p = ps[static_cast<std::size_t>(i)];
    add(p.fn, p.coord, p.mono, 1.0, [&](Eigen::Index r, double x) { q.phi(r, i) += x; });
  }
  for (Fn fn : {Fn::e, Fn::f, Fn::g})
    for (const auto& ft : ms.fixed_terms(fn))
      add(fn, ft.coord, ft.mono, ft.coeff, [&](Eigen::Index r, double x) { q.r0(r) += x; });
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < ny; ++c) q.r0(static_cast<Eigen::Index>(t) * ny + c) -= tb.y(c, t);
  q.hess = 2.0 * q.phi.transpose() * q.phi;
  return q;
}

/// Lagrangian-relaxation objective over theta (zero outside the rho block).
inline ObjectiveOracle lr_oracle(const ModelStructure& ms, std::shared_ptr<const DataTables> tables,
                                 int n_theta) {
  return ObjectiveOracle{[ms, tables, n_theta](const Vec& theta, int order) {
                           const LiftedData ld = assemble_lifted(ms, theta, tables);
                           ObjectiveEval ev = evaluate(ms, ld, order, n_theta);
                           OracleResult r;
                           r.value = ev.value;
                           if (order >= 1) r.grad = std::move(ev.grad);
                           if (order >= 2) r.hess = std::move(ev.hess);
                           return r;
                         },
                         true};
}

inline ObjectiveOracle ee_oracle(std::shared_ptr<const EquationErrorQuadratic> q, int n_rho, int n_theta) {
  return ObjectiveOracle{[q, n_rho, n_theta](const Vec& theta, int order) {
                           const Vec rho = theta.head(n_rho);
                           const Vec res = q->phi * rho + q->r0;
                           OracleResult r;
                           r.value = res.squaredNorm();
                           if (order >= 1) {
                             r.grad = Vec::Zero(n_theta);
                             r.grad.head(n_rho) = 2.0 * q->phi.transpose() * res;
                           }
                           if (order >= 2) r.hess = q->hess;
                           return r;
                         },
                         true};
}

namespace detail {

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline FitResult run_fit(const ObjectiveOracle& oracle, std::shared_ptr<const ConstraintSystem> cs,
                         const SolverOptions& opts) {
  FitResult fr;
  fr.constraints = cs;
  auto t0 = std::chrono::steady_clock::now();
  fr.start = phase_one(*cs, opts);
  fr.phase_one_seconds = elapsed(t0);
  t0 = std::chrono::steady_clock::now();
  fr.report = solve(oracle, *cs, fr.start, opts);
  fr.solve_seconds = elapsed(t0);
  fr.theta = fr.report.theta;
  fr.objective = fr.report.final_objective;
  return fr;
}

inline void require_states(const Dataset& data, const char* who) {
  data.validate();
  if (!data.has_states()) throw MissingStates(std::string(who) + ": dataset has no surrogate states");
}

}  // namespace detail

/// Minimizes the Lagrangian-relaxation bound over the stable model set
/// (exact LMI for linear structures, SOS contraction otherwise).
inline FitResult fit_lr(const ModelStructure& ms, const Dataset& data, const FitOptions& opts = {}) {
  detail::require_states(data, "fit_lr");
  auto cs = std::make_shared<const ConstraintSystem>(assemble_for(ms, opts.mu));
  auto tables = default_table_cache().get(ms, data);
  FitResult fr = detail::run_fit(lr_oracle(ms, tables, cs->n_theta()), cs, opts.solver);
  fr.model = Model{ms, cs->layout.rho(fr.theta), cs->layout.P(fr.theta), opts.mu, "lr"};
  fr.training = validate(fr.model, data);
  return fr;
}

/// Equation-error fit subject to the well-posedness constraint
/// E(x) + E(x)' - mu_wp I in SOS.
inline FitResult fit_ee(const ModelStructure& ms, const Dataset& data, const FitOptions& opts = {}) {
  detail::require_states(data, "fit_ee");
  const double mu_wp = opts.mu_wp.value_or(opts.mu);
  auto cs = std::make_shared<const ConstraintSystem>(assemble_wellposed(ms, mu_wp));
  auto tables = default_table_cache().get(ms, data);
  auto q = std::make_shared<const EquationErrorQuadratic>(ee_quadratic(ms, *tables));
  FitResult fr = detail::run_fit(ee_oracle(q, ms.n_rho(), cs->n_theta()), cs, opts.solver);
  fr.model = Model{ms, cs->layout.rho(fr.theta), Mat(), mu_wp, "ee"};
  fr.training = validate(fr.model, data);
  return fr;
}

/// Linear model from equation error weighted by P:
/// sum |y - Cx - Du|^2 + |P x+ - A x - B u|^2 s.t. [[P - mu I, A], [A', P]] >= 0,
/// returned in implicit form E = P, F = A, K = B.
inline FitResult fit_stable_subspace(const Dataset& data, int n_x, const FitOptions& opts = {}) {
  detail::require_states(data, "fit_stable_subspace");
  if (data.states().cols() != n_x) throw DimensionMismatch("fit_stable_subspace: state width");
  const ModelStructure ms = ModelStructure::linear(n_x, static_cast<int>(data.u.cols()),
                                                   static_cast<int>(data.y.cols()));
  auto cs = std::make_shared<const ConstraintSystem>(
      assemble_stable_subspace(ms.n_x(), ms.n_u(), ms.n_y(), opts.mu));
  auto tables = default_table_cache().get(ms, data);
  auto q = std::make_shared<const EquationErrorQuadratic>(ee_quadratic(ms, *tables));
  FitResult fr = detail::run_fit(ee_oracle(q, ms.n_rho(), cs->n_theta()), cs, opts.solver);
  fr.model = Model{ms, cs->layout.rho(fr.theta), cs->layout.P(fr.theta), opts.mu, "stable-subspace"};
  fr.training = validate(fr.model, data);
  return fr;
}

inline FitResult fit(Method m, const ModelStructure& ms, const Dataset& data, const FitOptions& opts = {}) {
  switch (m) {
    case Method::lr: return fit_lr(ms, data, opts);
    case Method::ee: return fit_ee(ms, data, opts);
    case Method::stable_subspace:
      if (!ms.is_lti()) throw Error("stable-subspace fitting needs a linear structure");
      return fit_stable_subspace(data, ms.n_x(), opts);
  }
  throw Error("fit: unknown method");
}

struct ContractionSample {
  double min_value = std::numeric_limits<double>::infinity();
  double worst_ratio = -std::numeric_limits<double>::infinity();  ///< max of -p(z)/tol
  int samples = 0;
  bool pass = true;
};

/// Samples p(z) at uniform z in [-box, box]^{n_z}; passes when every value is
/// at least -1e-9 (1 + |z|^4 |theta|).
inline ContractionSample sample_contraction(const ConstraintSystem& cs, const Vec& theta, int n_z,
                                            int samples = 10000, std::uint64_t seed = 1,
                                            double box = 2.0) {
  if (cs.kind != ConstraintKind::sos) throw Error("sample_contraction: constraint system is not SOS");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-box, box);
  ContractionSample out;
  const double tn = theta.norm();
  Vec z(n_z);
  for (int k = 0; k < samples; ++k) {
    for (int i = 0; i < n_z; ++i) z(i) = ud(rng);
    const double v = poly_eval(cs.p, theta, z);
    const double z2 = z.squaredNorm();
    const double tol = 1e-9 * (1.0 + z2 * z2 * tn);
    out.min_value = std::min(out.min_value, v);
    out.worst_ratio = std::max(out.worst_ratio, -v / tol);
    if (v < -tol) out.pass = false;
  }
  out.samples = samples;
  return out;
}

}  // namespace stabid
