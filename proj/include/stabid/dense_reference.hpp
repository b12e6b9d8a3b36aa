#pragma once

// Dense O(T^3) evaluation of J_lambda for testing. Builds the lifted matrices
// explicitly from jacobians()/residuals() and differentiates them by exact
// unit-vector differences (all blocks are affine in rho).

#include <Eigen/Dense>

#include <vector>

#include "stabid/error.hpp"
#include "stabid/lagrangian.hpp"
#include "stabid/linalg.hpp"
#include "stabid/models.hpp"

namespace stabid {

struct DenseLifted {
  Mat F;    ///< T n_x square, block lower bidiagonal
  Mat G;    ///< T n_y x T n_x
  Vec eta;  ///< T n_y
  Vec eps;  ///< T n_x (first block zero)
};

inline DenseLifted dense_lifted(const ModelStructure& ms, const Vec& rho, const Dataset& data) {
  const int nx = ms.n_x(), ny = ms.n_y();
  const int T = static_cast<int>(data.T());
  const Mat& xs = data.states();
  DenseLifted d;
  d.F = Mat::Zero(T * nx, T * nx);
  d.G = Mat::Zero(T * ny, T * nx);
  d.eta.resize(T * ny);
  d.eps = Vec::Zero(T * nx);
  const Residuals res = residuals(ms, rho, data);
  for (int t = 0; t < T; ++t) {
    const Jacobians j = jacobians(ms, rho, xs.row(t).transpose(), data.u.row(t).transpose());
    d.F.block(t * nx, t * nx, nx, nx) = j.E;
    if (t + 1 < T) d.F.block((t + 1) * nx, t * nx, nx, nx) = -j.F;
    d.G.block(t * ny, t * nx, ny, nx) = j.G;
    d.eta.segment(t * ny, ny) = res.eta.row(t).transpose();
    if (t > 0) d.eps.segment(t * nx, nx) = res.eps.row(t - 1).transpose();
  }
  return d;
}

/// Same contract as evaluate(); T is limited to keep the dense matrices small.
inline ObjectiveEval dense_reference_eval(const ModelStructure& ms, const Vec& theta, const Dataset& data,
                                          int order = 2) {
  if (data.T() > 200) throw Error("dense_reference_eval: T > 200");
  const int nrho = ms.n_rho();
  const Vec rho = theta.head(nrho);
  const DenseLifted L = dense_lifted(ms, rho, data);
  const Mat W = L.G.transpose() * L.G - L.F - L.F.transpose();
  const Vec w = -L.G.transpose() * L.eta - L.eps;
  Eigen::LLT<Mat> negw(-W);
  if (negw.info() != Eigen::Success) throw NotDefinite("dense_reference_eval: W not negative definite");
  ObjectiveEval out;
  out.delta = -negw.solve(w);
  const Vec& d = out.delta;
  out.kkt_residual = (W * d - w).cwiseAbs().maxCoeff();
  const Vec r = L.G * d + L.eta;
  out.value = r.squaredNorm() - 2.0 * d.dot(L.F * d - L.eps);
  if (order < 1) return out;

  std::vector<DenseLifted> dl;
  dl.reserve(static_cast<std::size_t>(nrho));
  const DenseLifted L0 = dense_lifted(ms, Vec::Zero(nrho), data);
  for (int i = 0; i < nrho; ++i) {
    const DenseLifted Li = dense_lifted(ms, Vec::Unit(nrho, i), data);
    dl.push_back(DenseLifted{Li.F - L0.F, Li.G - L0.G, Li.eta - L0.eta, Li.eps - L0.eps});
  }
  out.grad = Vec::Zero(theta.size());
  for (int i = 0; i < nrho; ++i) {
    const DenseLifted& Di = dl[static_cast<std::size_t>(i)];
    out.grad(i) = 2.0 * r.dot(Di.G * d + Di.eta) - 2.0 * d.dot(Di.F * d - Di.eps);
  }
  if (order < 2) return out;

  // d2J/dtheta_i dtheta_j = 2 a_j'a_i + b_i' dDelta_j,
  // dDelta_j = W^{-1}(w_j - W_j Delta),  b_i = d2J / dDelta dtheta_i.
  Mat a(L.G.rows(), nrho), b(d.size(), nrho), dD(d.size(), nrho);
  for (int i = 0; i < nrho; ++i) {
    const DenseLifted& Di = dl[static_cast<std::size_t>(i)];
    a.col(i) = Di.G * d + Di.eta;
    const Mat Wi = Di.G.transpose() * L.G + L.G.transpose() * Di.G - Di.F - Di.F.transpose();
    const Vec wi = -Di.G.transpose() * L.eta - L.G.transpose() * Di.eta - Di.eps;
    b.col(i) = 2.0 * Wi * d + 2.0 * (Di.G.transpose() * L.eta + L.G.transpose() * Di.eta + Di.eps);
    dD.col(i) = -negw.solve(Vec(wi - Wi * d));
  }
  out.hess = symmetrize(2.0 * a.transpose() * a + b.transpose() * dD);
  return out;
}

}  // namespace stabid
