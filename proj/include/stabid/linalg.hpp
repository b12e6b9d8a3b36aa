#pragma once

// Dense kernels shared by the solver modules. Everything here is a thin
// contract layer over Eigen so that callers get margins and pivot logs
// instead of bare success flags.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "stabid/error.hpp"

namespace stabid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Cholesky factorization M = L L' of a symmetric matrix with its pivot log
/// (pivot_i = L_ii^2). A failed factorization keeps the index of the first
/// nonpositive pivot.
struct SymFactor {
  Eigen::LLT<Mat> llt;
  Vec pivots;
  bool success = false;
  double min_pivot = -std::numeric_limits<double>::infinity();
  long failed_at = -1;
};

inline SymFactor sym_factor(const Mat& m) {
  SymFactor f;
  f.llt.compute(m);
  if (f.llt.info() != Eigen::Success) {
    f.success = false;
    // Eigen stops at the first nonpositive pivot; locate it for diagnostics.
    const Mat& l = f.llt.matrixLLT();
    long k = 0;
    for (; k < l.rows(); ++k) {
      if (!(l(k, k) > 0.0) || !std::isfinite(l(k, k))) break;
    }
    f.failed_at = k;
    return f;
  }
  const Mat& l = f.llt.matrixLLT();
  f.pivots = l.diagonal().array().square();
  f.min_pivot = f.pivots.size() ? f.pivots.minCoeff()
                                : std::numeric_limits<double>::infinity();
  f.success = std::isfinite(f.min_pivot) && f.min_pivot > 0.0;
  return f;
}

/// Solves M x = rhs for a successful factorization (one or many columns).
template <typename Rhs>
Mat sym_solve(const SymFactor& f, const Eigen::MatrixBase<Rhs>& rhs) {
  if (!f.success) throw NotDefinite("sym_solve on failed factorization", f.failed_at);
  return f.llt.solve(rhs);
}

inline double logdet(const SymFactor& f) {
  if (!f.success) throw NotDefinite("logdet of non-definite matrix", f.failed_at);
  const Mat& l = f.llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

/// Smallest and largest eigenvalue of a symmetric matrix (tridiagonalization
/// followed by implicit QR; deterministic).
inline std::pair<double, double> eig_extremes(const Mat& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("eig_extremes: matrix not square");
  if (m.rows() == 0) return {std::numeric_limits<double>::infinity(),
                             -std::numeric_limits<double>::infinity()};
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NoConvergence("eig_extremes: eigensolver failed");
  const Vec& ev = es.eigenvalues();
  return {ev(0), ev(ev.size() - 1)};
}

inline double lambda_min(const Mat& m) { return eig_extremes(m).first; }
inline double lambda_max(const Mat& m) { return eig_extremes(m).second; }

/// Rank-revealing decomposition of A used for equality elimination.
struct NullspaceResult {
  Mat basis;          ///< orthonormal columns spanning null(A)
  Vec particular;     ///< min-norm least-squares solution of A x = b (if b given)
  double residual = 0.0;  ///< ||A x - b||_inf for the particular solution
  long rank = 0;
  double sigma_max = 0.0;  ///< largest QR pivot magnitude (scale for rel_tol)
};

/// Orthonormal nullspace of A plus the min-norm solution of A x = b, from a
/// column-pivoted QR of A' (A' Pi = Q R). Pivots below rel_tol * |R_00| count
/// as zero. Eigen 3.4's divide-and-conquer SVD returned wrong factors on some
/// sparse coefficient-matching matrices, so no SVD here.
inline NullspaceResult nullspace_solve(const Mat& a, const Vec& b, double rel_tol = 1e-10) {
  const Eigen::Index n = a.cols();
  NullspaceResult r;
  if (a.rows() == 0) {
    r.basis = Mat::Identity(n, n);
    r.particular = Vec::Zero(n);
    return r;
  }
  if (b.size() != a.rows()) throw DimensionMismatch("nullspace_solve: rhs size");
  Eigen::ColPivHouseholderQR<Mat> qr(a.transpose());
  const Mat& R = qr.matrixQR();
  const Eigen::Index k = std::min(n, a.rows());
  r.sigma_max = k ? std::abs(R(0, 0)) : 0.0;
  const double tol = rel_tol * r.sigma_max;
  long rank = 0;
  while (rank < k && std::abs(R(rank, rank)) > tol) ++rank;
  r.rank = rank;
  const Mat q = qr.householderQ() * Mat::Identity(n, n);
  r.basis = q.rightCols(n - rank);
  // A = Pi R' Q': solve R11' y = (Pi' b)_{1:rank}, x = Q1 y.
  const Vec pb = qr.colsPermutation().transpose() * b;
  Vec y = pb.head(rank);
  R.topLeftCorner(rank, rank).transpose().triangularView<Eigen::Lower>().solveInPlace(y);
  r.particular = q.leftCols(rank) * y;
  r.residual = rank == 0 && b.size() ? b.cwiseAbs().maxCoeff()
                                     : (a * r.particular - b).cwiseAbs().maxCoeff();
  return r;
}

inline Mat nullspace_basis(const Mat& a, double rel_tol = 1e-10) {
  return nullspace_solve(a, Vec::Zero(a.rows()), rel_tol).basis;
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace stabid
