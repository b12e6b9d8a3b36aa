#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stabid.hpp"

namespace testutil {

using namespace stabid;

/// Scalar implicit model e = r1 x + r2 x^3, f = r3 x + u, g = x.
inline ModelStructure example1() {
  const Monomial x = Monomial::var(0), u = Monomial::var(1);
  return ModelStructure::custom(1, 1, 1, {{x, Monomial::var(0, 3)}}, {{x}}, {{}}, {}, {{{u, 1.0}}},
                                {{{x, 1.0}}});
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double rel_err(const Mat& a, const Mat& b) {
  const double s = std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
  return (a - b).cwiseAbs().maxCoeff() / s;
}

inline Vec randn(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

inline Mat randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

/// Random dataset with states for a structure (inputs, outputs, states ~ N(0, s^2)).
inline Dataset random_dataset(const ModelStructure& ms, int T, std::mt19937_64& rng, double s = 0.5) {
  Dataset d;
  d.u = randn(T, ms.n_u(), rng, s);
  d.y = randn(T, ms.n_y(), rng, s);
  d.x = randn(T, ms.n_x(), rng, s);
  return d;
}

/// A point in the interior of the constraint set: phase-I output plus a
/// shrunk random nullspace step that keeps S positive definite.
inline Vec interior_point(const ConstraintSystem& cs, const FeasiblePoint& fp, std::mt19937_64& rng) {
  Vec step = cs.N_e * randn(cs.n_nu(), rng);
  for (double a = 1.0; a > 1e-12; a *= 0.5) {
    const Vec th = fp.theta + a * step;
    if (membership(cs, th).margin > 1e-6) return th;
  }
  return fp.theta;
}

}  // namespace testutil
