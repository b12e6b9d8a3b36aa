#pragma once

// The feasible set Theta = { theta : S(theta) = mat(A_s theta + s0) >= 0, A_e theta = b_e }
// and the equality elimination theta(nu) = theta* + N_e nu.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "stabid/error.hpp"
#include "stabid/linalg.hpp"
#include "stabid/polyalg.hpp"

namespace stabid {

/// Index of entry (i, j) of a symmetric matrix in its s2v vector
/// (upper triangle stacked column by column).
inline int s2v_index(int i, int j) {
  if (i > j) std::swap(i, j);
  return j * (j + 1) / 2 + i;
}

inline Vec s2v(const Mat& m) {
  const int n = static_cast<int>(m.rows());
  Vec v(n * (n + 1) / 2);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) v(s2v_index(i, j)) = m(i, j);
  return v;
}

inline Mat v2s(const Vec& v, int n) {
  if (v.size() != n * (n + 1) / 2) throw DimensionMismatch("v2s: length is not n(n+1)/2");
  Mat m(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) m(i, j) = m(j, i) = v(s2v_index(i, j));
  return m;
}

/// theta = [rho; s2v(P); s2v(Q)].
struct ThetaLayout {
  int n_rho = 0;
  int n_p = 0;      ///< dimension of P (0 when there is no metric)
  int n_omega = 0;  ///< dimension of Q (0 in LTI mode)

  int n_P() const { return n_p * (n_p + 1) / 2; }
  int n_Q() const { return n_omega * (n_omega + 1) / 2; }
  int off_P() const { return n_rho; }
  int off_Q() const { return n_rho + n_P(); }
  int n_theta() const { return n_rho + n_P() + n_Q(); }
  int P_index(int i, int j) const { return off_P() + s2v_index(i, j); }
  int Q_index(int k, int l) const { return off_Q() + s2v_index(k, l); }

  Vec rho(const Vec& theta) const { return theta.head(n_rho); }
  Mat P(const Vec& theta) const { return v2s(theta.segment(off_P(), n_P()), n_p); }
  Mat Q(const Vec& theta) const { return v2s(theta.segment(off_Q(), n_Q()), n_omega); }
};

/// One contribution of a theta coordinate to S: w is added at (p, q) and,
/// when p != q, also at (q, p).
struct SEntry {
  int p;
  int q;
  double w;
};

enum class ConstraintKind { sos, lti, custom };

struct ConstraintSystem {
  ConstraintKind kind = ConstraintKind::custom;
  ThetaLayout layout;
  double mu = 0.0;
  int n_S = 0;
  std::vector<std::vector<SEntry>> A_s;  ///< per theta index
  Mat s0;                                ///< constant part of S
  Mat A_e;                               ///< rows x n_theta (may have 0 rows)
  Vec b_e;
  std::vector<Monomial> eq_monomials;  ///< monomial behind each equality row (sos)
  std::vector<Monomial> omega;         ///< Gram basis (sos)
  Polynomial p;                        ///< certified polynomial (sos)

  // filled by finalize()
  Mat N_e;         ///< orthonormal nullspace basis of A_e
  Vec theta_star;  ///< min-norm solution of A_e theta = b_e
  Mat B_nu;        ///< column j = vec(dS / d nu_j), n_S^2 x n_nu
  long eq_rank = 0;

  int n_theta() const { return layout.n_theta(); }
  int n_nu() const { return static_cast<int>(N_e.cols()); }

  void add_s(int theta_index, int p, int q, double w) {
    if (p > q) std::swap(p, q);
    A_s[static_cast<std::size_t>(theta_index)].push_back(SEntry{p, q, w});
  }

  Mat S(const Vec& theta) const {
    if (theta.size() != n_theta()) throw DimensionMismatch("S: theta size");
    Mat s = s0;
    for (int a = 0; a < n_theta(); ++a) {
      const double t = theta(a);
      if (t == 0.0) continue;
      for (const auto& e : A_s[static_cast<std::size_t>(a)]) {
        s(e.p, e.q) += e.w * t;
        if (e.p != e.q) s(e.q, e.p) += e.w * t;
      }
    }
    return s;
  }

  /// Dense column matrix of the linear part: column a = vec(S_a).
  Mat A_s_dense() const {
    Mat a = Mat::Zero(static_cast<Eigen::Index>(n_S) * n_S, n_theta());
    for (int k = 0; k < n_theta(); ++k)
      for (const auto& e : A_s[static_cast<std::size_t>(k)]) {
        a(e.p + e.q * n_S, k) += e.w;
        if (e.p != e.q) a(e.q + e.p * n_S, k) += e.w;
      }
    return a;
  }

  double equality_residual(const Vec& theta) const {
    if (A_e.rows() == 0) return 0.0;
    return (A_e * theta - b_e).cwiseAbs().maxCoeff();
  }

  Vec theta_of(const Vec& base, const Vec& nu) const { return base + N_e * nu; }

  /// S(base + N_e nu) given S(base).
  Mat S_shift(const Mat& s_base, const Vec& nu) const {
    Vec flat = B_nu * nu;
    return s_base + Eigen::Map<const Mat>(flat.data(), n_S, n_S);
  }
};

/// Computes N_e, theta*, B_nu. Throws InfeasibleEqualities when A_e theta = b_e
/// has no solution.
inline void finalize(ConstraintSystem& cs, double rank_tol = 1e-10) {
  const int n = cs.n_theta();
  if (static_cast<int>(cs.A_s.size()) != n) throw DimensionMismatch("finalize: A_s column count");
  if (cs.s0.rows() != cs.n_S || cs.s0.cols() != cs.n_S) throw DimensionMismatch("finalize: s0 shape");
  if (cs.A_e.rows() > 0 && cs.A_e.cols() != n) throw DimensionMismatch("finalize: A_e width");
  if (cs.A_e.rows() == 0) cs.A_e.resize(0, n);
  if (cs.b_e.size() != cs.A_e.rows()) throw DimensionMismatch("finalize: b_e length");
  const NullspaceResult ns = nullspace_solve(cs.A_e, cs.b_e, rank_tol);
  const double scale = 1.0 + (cs.b_e.size() ? cs.b_e.cwiseAbs().maxCoeff() : 0.0);
  if (ns.residual > 1e-8 * scale)
    throw InfeasibleEqualities("equality constraints A_e theta = b_e are inconsistent (residual " +
                               std::to_string(ns.residual) + ")");
  cs.N_e = ns.basis;
  cs.theta_star = ns.particular;
  cs.eq_rank = ns.rank;
  cs.B_nu = cs.A_s_dense() * cs.N_e;
}

struct Membership {
  bool is_member = false;
  double margin = 0.0;  ///< lambda_min(S(theta))
  double eq_residual = 0.0;
};

inline Membership membership(const ConstraintSystem& cs, const Vec& theta) {
  if (theta.size() != cs.n_theta()) throw DimensionMismatch("membership: theta size");
  Membership m;
  m.eq_residual = cs.equality_residual(theta);
  const Mat s = cs.S(theta);
  m.margin = s.allFinite() ? lambda_min(s) : -std::numeric_limits<double>::infinity();
  m.is_member = m.eq_residual <= 1e-8 && m.margin >= 0.0;
  return m;
}

/// Strictly feasible point returned by phase-I.
struct FeasiblePoint {
  Vec theta;
  double margin = 0.0;
  int newton_steps = 0;
};

}  // namespace stabid
