#pragma once

// Scaling benchmark: one LR fit per (T, seed) on mass-spring-damper data, and
// the least-squares slope of log(step time) against log(T).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "stabid/datagen.hpp"
#include "stabid/error.hpp"
#include "stabid/fitters.hpp"
#include "stabid/models.hpp"

namespace stabid {

struct BenchTrial {
  int T = 0;
  std::uint64_t seed = 0;
  int newton_steps = 0;       ///< path-following steps of the main solve
  int phase_one_steps = 0;
  double mean_step_us = 0.0;  ///< mean wall time per main-solve Newton step
  double total_s = 0.0;       ///< phase-I plus solve
  double final_objective = 0.0;
};

/// The nonlinear benchmark structure: n_x states, (deg_e, deg_fx, deg_g) with
/// f affine in u, separable, with constants.
inline StructureSpec bench_structure(int n_x = 4, int deg_e = 3, int deg_fx = 3, int deg_g = 1) {
  return StructureSpec{n_x, 1, 1, deg_e, deg_fx, 1, deg_g, true, true};
}

inline BenchTrial bench_trial(const StructureSpec& spec, int T, std::uint64_t seed,
                              const FitOptions& opts = {}) {
  if (spec.n_x != 4 || spec.n_u != 1 || spec.n_y != 1)
    throw Error("bench_trial: the mass-spring-damper data has n_x = 4, n_u = n_y = 1");
  MsdParams p;
  p.samples = T;
  const MsdRun run = simulate_msd(p, InputSpec{}, seed);
  const ModelStructure ms = ModelStructure::standard(spec);
  const FitResult fr = fit_lr(ms, run.data, opts);
  BenchTrial b;
  b.T = T;
  b.seed = seed;
  b.newton_steps = fr.report.total_newton_steps();
  b.phase_one_steps = fr.start.newton_steps;
  b.mean_step_us = fr.report.mean_step_us();
  b.total_s = fr.phase_one_seconds + fr.solve_seconds;
  b.final_objective = fr.objective;
  return b;
}

/// Slope of the least-squares line through (log x, log y).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("loglog_slope: need matching samples, at least 2");
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Mat a(n, 2);
  Vec b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(x[static_cast<std::size_t>(i)] > 0) || !(y[static_cast<std::size_t>(i)] > 0))
      throw Error("loglog_slope: values must be positive");
    a(i, 0) = std::log(x[static_cast<std::size_t>(i)]);
    a(i, 1) = 1.0;
    b(i) = std::log(y[static_cast<std::size_t>(i)]);
  }
  return a.colPivHouseholderQr().solve(b)(0);
}

struct BenchSummary {
  std::vector<int> Ts;
  std::vector<double> mean_step_us;     ///< per T, averaged over seeds
  std::vector<double> mean_newton_steps;
  double slope = 0.0;
  double newton_ratio = 0.0;            ///< max / min of mean_newton_steps
};

inline BenchSummary summarize(const std::vector<BenchTrial>& trials) {
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_t;
  for (const auto& t : trials) {
    by_t[t.T].first.push_back(t.mean_step_us);
    by_t[t.T].second.push_back(static_cast<double>(t.newton_steps));
  }
  if (by_t.size() < 3) throw Error("summarize: need at least 3 distinct T values");
  BenchSummary s;
  std::vector<double> xs;
  for (const auto& [T, v] : by_t) {
    double a = 0.0, c = 0.0;
    for (double e : v.first) a += e;
    for (double e : v.second) c += e;
    s.Ts.push_back(T);
    s.mean_step_us.push_back(a / static_cast<double>(v.first.size()));
    s.mean_newton_steps.push_back(c / static_cast<double>(v.second.size()));
    xs.push_back(static_cast<double>(T));
  }
  s.slope = loglog_slope(xs, s.mean_step_us);
  const auto [lo, hi] = std::minmax_element(s.mean_newton_steps.begin(), s.mean_newton_steps.end());
  s.newton_ratio = *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace stabid
