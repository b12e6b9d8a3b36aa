#pragma once

// The convex set of contracting models: the SOS relaxation of
//   M(rho,P,x,u) = [E+E'-P-mu I, F', G'; F, P, 0; G, 0, I] >= 0  for all x, u
// and the exact LMI for LTI structures.

#include <Eigen/Dense>

#include <algorithm>
#include <set>
#include <vector>

#include "stabid/constraints.hpp"
#include "stabid/error.hpp"
#include "stabid/models.hpp"
#include "stabid/polyalg.hpp"

namespace stabid {

/// Variable numbering of z = (x, u, v).
struct ZLayout {
  int n_x, n_u, n_v;
  int v_first() const { return n_x + n_u; }
  int n_z() const { return n_x + n_u + n_v; }
};

inline ZLayout z_layout(const ModelStructure& ms) { return ZLayout{ms.n_x(), ms.n_u(), 2 * ms.n_x() + ms.n_y()}; }

namespace detail {

/// v_a' X v_b as a polynomial when X is a matrix of polynomials.
inline Polynomial bilinear(const std::vector<std::vector<Polynomial>>& x, int va, int vb) {
  Polynomial out;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      if (x[i][j].is_zero()) continue;
      const Monomial vv = Monomial::var(va + static_cast<int>(i)) * Monomial::var(vb + static_cast<int>(j));
      out += poly_mul(Polynomial::monomial(vv), x[i][j]);
    }
  return out;
}

/// Jacobian d fn / dx as a matrix of polynomials in (x, u).
inline std::vector<std::vector<Polynomial>> jacobian_poly(const ModelStructure& ms, Fn fn) {
  std::vector<std::vector<Polynomial>> j(static_cast<std::size_t>(ms.n_coords(fn)));
  for (int c = 0; c < ms.n_coords(fn); ++c) {
    const Polynomial pc = ms.polynomial(fn, c);
    for (int k = 0; k < ms.n_x(); ++k) j[static_cast<std::size_t>(c)].push_back(poly_partial(pc, k));
  }
  return j;
}

}  // namespace detail

/// p(z) = v' M v with theta = [rho; s2v(P)] indices (rho first, then P).
inline Polynomial build_contraction_poly(const ModelStructure& ms, double mu) {
  if (!(mu > 0)) throw Error("build_contraction_poly: mu must be positive");
  const int nx = ms.n_x(), ny = ms.n_y();
  const ZLayout zl = z_layout(ms);
  const int v1 = zl.v_first(), v2 = v1 + nx, v3 = v2 + nx;
  const int off_p = ms.n_rho();
  const auto ej = detail::jacobian_poly(ms, Fn::e);
  const auto fj = detail::jacobian_poly(ms, Fn::f);
  const auto gj = detail::jacobian_poly(ms, Fn::g);

  Polynomial p;
  // v1'(E + E')v1 = 2 v1'E v1
  p += 2.0 * detail::bilinear(ej, v1, v1);
  // 2 v2'F v1 + 2 v3'G v1
  p += 2.0 * detail::bilinear(fj, v2, v1);
  p += 2.0 * detail::bilinear(gj, v3, v1);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) {
      const AffineCoeff pij = AffineCoeff::from_param(off_p + s2v_index(i, j));
      // -v1'P v1 + v2'P v2
      p.add_term(Monomial::var(v1 + i) * Monomial::var(v1 + j), -1.0 * pij);
      p.add_term(Monomial::var(v2 + i) * Monomial::var(v2 + j), pij);
    }
  for (int i = 0; i < nx; ++i) p.add_term(Monomial::var(v1 + i, 2), AffineCoeff::from_constant(-mu));
  for (int i = 0; i < ny; ++i) p.add_term(Monomial::var(v3 + i, 2), AffineCoeff::from_constant(1.0));
  return p;
}

/// Gram bases for a polynomial that is a quadratic form in v = (z_{v_first}, ..).
/// Unpruned basis: v_i times every (x,u)-monomial up to half the largest
/// (x,u)-degree that multiplies v_i in p.
inline std::vector<Monomial> basis_candidates(const Polynomial& p, int v_first, int n_v) {
  std::vector<int> dmax(static_cast<std::size_t>(n_v), -1);
  for (const auto& [m, c] : p.terms()) {
    if (m.degree_in(v_first, v_first + n_v) != 2)
      throw Error("select_basis: polynomial is not a quadratic form in v");
    const int dxu = m.degree_in(0, v_first);
    for (const auto& [var, e] : m.factors())
      if (var >= v_first) {
        auto& d = dmax[static_cast<std::size_t>(var - v_first)];
        d = std::max(d, dxu);
      }
  }
  std::vector<Monomial> cand;
  for (int i = 0; i < n_v; ++i) {
    const int d = dmax[static_cast<std::size_t>(i)];
    if (d < 0) continue;
    const Monomial vi = Monomial::var(v_first + i);
    if (v_first == 0) {
      cand.push_back(vi);
      continue;
    }
    for (const auto& m : monomials_up_to(v_first, (d + 1) / 2, 0)) cand.push_back(vi * m);
  }
  return cand;
}

/// Candidates pruned by diagonal consistency: a monomial whose square is
/// neither in supp(p) nor a product of two other retained monomials would get
/// a zero diagonal Gram entry, forcing its whole row to zero; drop it and repeat.
inline std::vector<Monomial> select_basis(const Polynomial& p, int v_first, int n_v) {
  std::set<Monomial> supp;
  for (const auto& [m, c] : p.terms()) supp.insert(m);
  const std::vector<Monomial> cand = basis_candidates(p, v_first, n_v);
  std::vector<bool> keep(cand.size(), true);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k = 0; k < cand.size(); ++k) {
      if (!keep[k]) continue;
      const Monomial sq = cand[k] * cand[k];
      if (supp.count(sq)) continue;
      bool paired = false;
      for (std::size_t l = 0; l < cand.size() && !paired; ++l) {
        if (!keep[l]) continue;
        for (std::size_t m = l; m < cand.size(); ++m) {
          if (!keep[m] || (l == k && m == k)) continue;
          if (cand[l] * cand[m] == sq) {
            paired = true;
            break;
          }
        }
      }
      if (!paired) {
        keep[k] = false;
        changed = true;
      }
    }
  }
  std::vector<Monomial> omega;
  for (std::size_t k = 0; k < cand.size(); ++k)
    if (keep[k]) omega.push_back(cand[k]);
  // Group by v variable, higher (x,u)-degree first.
  std::stable_sort(omega.begin(), omega.end(), [v_first](const Monomial& a, const Monomial& b) {
    const int va = a.max_variable(), vb = b.max_variable();
    if (va != vb) return va < vb;
    const int da = a.degree_in(0, v_first), db = b.degree_in(0, v_first);
    if (da != db) return da > db;
    return a < b;
  });
  return omega;
}

inline std::vector<Monomial> select_basis(const Polynomial& p, const ModelStructure& ms) {
  const ZLayout zl = z_layout(ms);
  return select_basis(p, zl.v_first(), zl.n_v);
}

/// Gram form omega' Q omega with Q entries at theta indices layout.Q_index;
/// off-diagonal entries enter with weight 2.
inline Polynomial gram_polynomial(const std::vector<Monomial>& omega, const ThetaLayout& layout) {
  Polynomial g;
  const int n = static_cast<int>(omega.size());
  for (int k = 0; k < n; ++k)
    for (int l = k; l < n; ++l)
      g.add_term(omega[static_cast<std::size_t>(k)] * omega[static_cast<std::size_t>(l)],
                 AffineCoeff::from_param(layout.Q_index(k, l), k == l ? 1.0 : 2.0));
  return g;
}

/// SOS system for a given polynomial p over theta = [rho; s2v(P); s2v(Q)].
inline ConstraintSystem assemble_gram_system(const Polynomial& p, int v_first, int n_v, int n_rho,
                                             int n_p, double mu, std::vector<Monomial> omega = {}) {
  ConstraintSystem cs;
  cs.kind = ConstraintKind::sos;
  cs.mu = mu;
  cs.p = p;
  cs.omega = omega.empty() ? select_basis(p, v_first, n_v) : std::move(omega);
  cs.layout = ThetaLayout{n_rho, n_p, static_cast<int>(cs.omega.size())};
  const int n = cs.layout.n_theta();
  if (p.max_theta_index() >= cs.layout.off_Q()) throw Error("assemble_gram_system: p references Q block");
  const std::vector<LinearRow> rows = coeff_match(gram_polynomial(cs.omega, cs.layout), p);
  cs.A_e = Mat::Zero(static_cast<Eigen::Index>(rows.size()), n);
  cs.b_e = Vec(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& [idx, w] : rows[r].coeffs) cs.A_e(static_cast<Eigen::Index>(r), idx) = w;
    cs.b_e(static_cast<Eigen::Index>(r)) = rows[r].rhs;
    cs.eq_monomials.push_back(rows[r].monomial);
  }
  cs.n_S = cs.layout.n_omega;
  cs.s0 = Mat::Zero(cs.n_S, cs.n_S);
  cs.A_s.assign(static_cast<std::size_t>(n), {});
  for (int k = 0; k < cs.n_S; ++k)
    for (int l = k; l < cs.n_S; ++l) cs.add_s(cs.layout.Q_index(k, l), k, l, 1.0);
  finalize(cs);
  return cs;
}

/// SOS relaxation of the contraction condition.
inline ConstraintSystem assemble_sos(const ModelStructure& ms, double mu) {
  const Polynomial p = build_contraction_poly(ms, mu);
  const ZLayout zl = z_layout(ms);
  return assemble_gram_system(p, zl.v_first(), zl.n_v, ms.n_rho(), ms.n_x(), mu);
}

/// Exact LMI for E x+ = F x + K u, y = C x + D u:
///   S = [E+E'-P-mu I, F', C'; F, P, 0; C, 0, I].
inline ConstraintSystem assemble_lti(int n_x, int n_u, int n_y, double mu) {
  if (!(mu > 0)) throw Error("assemble_lti: mu must be positive");
  const ModelStructure ms = ModelStructure::linear(n_x, n_u, n_y);
  ConstraintSystem cs;
  cs.kind = ConstraintKind::lti;
  cs.mu = mu;
  cs.layout = ThetaLayout{ms.n_rho(), n_x, 0};
  cs.n_S = 2 * n_x + n_y;
  const int n = cs.layout.n_theta();
  cs.A_s.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n_x; ++i)
    for (int j = 0; j < n_x; ++j) {
      const Monomial xj = Monomial::var(j);
      // E_ij enters (i,j) through E and (j,i) through E'.
      cs.add_s(ms.index(Fn::e, i, xj), i, j, i == j ? 2.0 : 1.0);
      cs.add_s(ms.index(Fn::f, i, xj), n_x + i, j, 1.0);
    }
  for (int i = 0; i < n_y; ++i)
    for (int j = 0; j < n_x; ++j) cs.add_s(ms.index(Fn::g, i, Monomial::var(j)), 2 * n_x + i, j, 1.0);
  for (int j = 0; j < n_x; ++j)
    for (int i = 0; i <= j; ++i) {
      const int pi = cs.layout.P_index(i, j);
      cs.add_s(pi, i, j, -1.0);
      cs.add_s(pi, n_x + i, n_x + j, 1.0);
    }
  cs.s0 = Mat::Zero(cs.n_S, cs.n_S);
  for (int i = 0; i < n_x; ++i) cs.s0(i, i) = -mu;
  for (int i = 0; i < n_y; ++i) cs.s0(2 * n_x + i, 2 * n_x + i) = 1.0;
  cs.A_e = Mat::Zero(0, n);
  cs.b_e = Vec(0);
  finalize(cs);
  return cs;
}

/// The constraint system used by fit_lr for a structure.
inline ConstraintSystem assemble_for(const ModelStructure& ms, double mu) {
  return ms.is_lti() ? assemble_lti(ms.n_x(), ms.n_u(), ms.n_y(), mu) : assemble_sos(ms, mu);
}

/// Well-posedness set: v'(E(x) + E(x)' - mu I)v in SOS, theta = [rho; s2v(Q)].
inline ConstraintSystem assemble_wellposed(const ModelStructure& ms, double mu) {
  if (!(mu > 0)) throw Error("assemble_wellposed: mu must be positive");
  const int nx = ms.n_x();
  const int v1 = nx + ms.n_u();
  const auto ej = detail::jacobian_poly(ms, Fn::e);
  Polynomial p = 2.0 * detail::bilinear(ej, v1, v1);
  for (int i = 0; i < nx; ++i) p.add_term(Monomial::var(v1 + i, 2), AffineCoeff::from_constant(-mu));
  return assemble_gram_system(p, v1, nx, ms.n_rho(), 0, mu);
}

/// [P - mu I, A; A', P] >= 0 over the linear structure theta = [rho; s2v(P)],
/// with the E block tied to P by equalities (implicit form E = P, F = A, K = B).
inline ConstraintSystem assemble_stable_subspace(int n_x, int n_u, int n_y, double mu) {
  if (!(mu > 0)) throw Error("assemble_stable_subspace: mu must be positive");
  const ModelStructure ms = ModelStructure::linear(n_x, n_u, n_y);
  ConstraintSystem cs;
  cs.kind = ConstraintKind::custom;
  cs.mu = mu;
  cs.layout = ThetaLayout{ms.n_rho(), n_x, 0};
  cs.n_S = 2 * n_x;
  const int n = cs.layout.n_theta();
  cs.A_s.assign(static_cast<std::size_t>(n), {});
  for (int j = 0; j < n_x; ++j)
    for (int i = 0; i <= j; ++i) {
      const int pi = cs.layout.P_index(i, j);
      cs.add_s(pi, i, j, 1.0);
      cs.add_s(pi, n_x + i, n_x + j, 1.0);
    }
  // Upper-right block A: entry (i, n_x + j) = A_ij.
  for (int i = 0; i < n_x; ++i)
    for (int j = 0; j < n_x; ++j) cs.add_s(ms.index(Fn::f, i, Monomial::var(j)), i, n_x + j, 1.0);
  cs.s0 = Mat::Zero(cs.n_S, cs.n_S);
  for (int i = 0; i < n_x; ++i) cs.s0(i, i) = -mu;
  cs.A_e = Mat::Zero(n_x * n_x, n);
  cs.b_e = Vec::Zero(n_x * n_x);
  int r = 0;
  for (int i = 0; i < n_x; ++i)
    for (int j = 0; j < n_x; ++j, ++r) {
      cs.A_e(r, ms.index(Fn::e, i, Monomial::var(j))) = 1.0;
      cs.A_e(r, cs.layout.P_index(i, j)) = -1.0;
    }
  finalize(cs);
  return cs;
}

}  // namespace stabid
