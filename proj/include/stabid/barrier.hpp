#pragma once

// Log-det barrier phi = -logdet S for an affine S(y) = S_c + sum_j y_j B_j.
//
// With S = L L' and K_j = L^{-1} B_j L^{-T}:
//   dphi/dy_j        = -tr(S^{-1} B_j)         = -tr(K_j)
//   d2phi/dy_i dy_j  = tr(S^{-1} B_i S^{-1} B_j) = <K_i, K_j>
// which is the blockwise Z(:,j)Z(:,i)' operator sandwiched by the columns B_j.

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "stabid/constraints.hpp"
#include "stabid/error.hpp"
#include "stabid/linalg.hpp"

namespace stabid {

struct BarrierEval {
  double phi = std::numeric_limits<double>::infinity();
  Vec grad;
  Mat hess;
};

/// order 0: phi only; 1: + gradient; 2: + Hessian. `cols` holds vec(B_j).
/// Throws NotInDomain when S is not positive definite.
inline BarrierEval barrier_affine(const Mat& s, const Mat& cols, int order = 2) {
  const Eigen::Index n = s.rows();
  if (cols.rows() != n * n) throw DimensionMismatch("barrier: column length must be n_S^2");
  BarrierEval out;
  if (!s.allFinite()) throw NotInDomain("barrier: S has non-finite entries");
  const SymFactor f = sym_factor(s);
  if (!f.success) throw NotInDomain("barrier: S(theta) is not positive definite");
  out.phi = -logdet(f);
  if (order < 1) return out;
  const auto l = f.llt.matrixL();
  const Eigen::Index m = cols.cols();
  if (order < 2) {
    Mat z = Mat::Identity(n, n);
    f.llt.solveInPlace(z);
    out.grad = -(cols.transpose() * Eigen::Map<const Vec>(z.data(), n * n));
    return out;
  }
  // All K_j at once: X = L^{-1} [B_1 .. B_m]; K_j = L^{-1} X_j' (B_j symmetric).
  Mat x = Eigen::Map<const Mat>(cols.data(), n, n * m);
  l.solveInPlace(x);
  for (Eigen::Index j = 0; j < m; ++j) x.middleCols(j * n, n).transposeInPlace();
  l.solveInPlace(x);
  // <K_i, K_j> over the symmetric half-vectorization (off-diagonals scaled by sqrt 2).
  const Eigen::Index nh = n * (n + 1) / 2;
  const double r2 = std::sqrt(2.0);
  Mat kc(nh, m);
  out.grad.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto kj = x.middleCols(j * n, n);
    double tr = 0.0;
    Eigen::Index r = 0;
    for (Eigen::Index q = 0; q < n; ++q) {
      for (Eigen::Index p = 0; p < q; ++p) kc(r++, j) = r2 * 0.5 * (kj(p, q) + kj(q, p));
      kc(r++, j) = kj(q, q);
      tr += kj(q, q);
    }
    out.grad(j) = -tr;
  }
  out.hess = Mat::Zero(m, m);
  out.hess.selfadjointView<Eigen::Lower>().rankUpdate(kc.transpose());
  out.hess.triangularView<Eigen::StrictlyUpper>() = out.hess.transpose();
  return out;
}

/// Barrier over the full theta vector (gradient/Hessian in theta coordinates).
inline BarrierEval barrier_eval(const ConstraintSystem& cs, const Vec& theta, int order = 2) {
  return barrier_affine(cs.S(theta), cs.A_s_dense(), order);
}

}  // namespace stabid
