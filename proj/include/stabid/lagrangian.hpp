#pragma once

// J_lambda(theta) = sup_Delta |G Delta + eta|^2 - 2 Delta'(F Delta - eps)
// with the lifted block operators
//   G = blkdiag(G_t),  F = [E_1; -F_1 E_2; -F_2 E_3; ...],  eps = [0; eps_1; ...].
// The maximizer solves W Delta = w with W = G'G - F - F' (block tridiagonal,
// negative definite for stable models) and w = -G'eta - eps. Everything below
// costs O(T) per evaluation.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "stabid/error.hpp"
#include "stabid/linalg.hpp"
#include "stabid/models.hpp"

namespace stabid {

/// Monomial values and x-gradients at every data point (theta-independent).
struct FnTable {
  Mat vals;   ///< n_mono x T
  Mat grads;  ///< n_mono x (T n_x); block t holds d m_k / dx at t
};

struct DataTables {
  int T = 0, n_x = 0, n_u = 0, n_y = 0;
  std::array<FnTable, 3> fn;
  Mat y;  ///< n_y x T
};

inline std::shared_ptr<const DataTables> build_tables(const ModelStructure& ms, const Dataset& data) {
  data.validate();
  const Mat& xs = data.states();
  if (xs.cols() != ms.n_x() || data.u.cols() != ms.n_u() || data.y.cols() != ms.n_y())
    throw DimensionMismatch("build_tables: dataset widths do not match structure");
  auto tb = std::make_shared<DataTables>();
  const int T = static_cast<int>(data.T());
  const int nx = ms.n_x();
  tb->T = T;
  tb->n_x = nx;
  tb->n_u = ms.n_u();
  tb->n_y = ms.n_y();
  tb->y = data.y.transpose();
  for (int k = 0; k < 3; ++k) {
    const auto& monos = ms.monomials(static_cast<Fn>(k));
    FnTable& ft = tb->fn[static_cast<std::size_t>(k)];
    const auto nm = static_cast<Eigen::Index>(monos.size());
    ft.vals.resize(nm, T);
    ft.grads.resize(nm, static_cast<Eigen::Index>(T) * nx);
    for (int t = 0; t < T; ++t) {
      const Vec z = stack_xu(xs.row(t).transpose(), data.u.row(t).transpose());
      ft.vals.col(t) = monomial_values(monos, z);
      ft.grads.middleCols(static_cast<Eigen::Index>(t) * nx, nx) = monomial_x_gradients(monos, z, nx);
    }
  }
  return tb;
}

/// Tables keyed by (structure hash, dataset hash).
class TableCache {
 public:
  std::shared_ptr<const DataTables> get(const ModelStructure& ms, const Dataset& data) {
    const auto key = std::make_pair(ms.hash(), data.hash());
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = map_.find(key);
      if (it != map_.end()) return it->second;
    }
    auto tb = build_tables(ms, data);
    std::lock_guard<std::mutex> lk(mu_);
    if (map_.size() >= capacity_) map_.clear();
    map_.emplace(key, tb);
    return tb;
  }
  void clear() {
    std::lock_guard<std::mutex> lk(mu_);
    map_.clear();
  }

 private:
  std::mutex mu_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::shared_ptr<const DataTables>> map_;
  std::size_t capacity_ = 16;
};

inline TableCache& default_table_cache() {
  static TableCache cache;
  return cache;
}

/// Per-time-step blocks at the surrogate states for one rho.
struct LiftedData {
  std::shared_ptr<const DataTables> tables;
  int T = 0, n_x = 0, n_y = 0;
  Vec rho;
  Mat E;    ///< n_x x T n_x
  Mat F;    ///< n_x x T n_x
  Mat G;    ///< n_y x T n_x
  Mat eps;  ///< n_x x T, lifted: column 0 is zero, column t = eps_{t} (1-based t)
  Mat eta;  ///< n_y x T

  auto E_t(int t) const { return E.middleCols(static_cast<Eigen::Index>(t) * n_x, n_x); }
  auto F_t(int t) const { return F.middleCols(static_cast<Eigen::Index>(t) * n_x, n_x); }
  auto G_t(int t) const { return G.middleCols(static_cast<Eigen::Index>(t) * n_x, n_x); }
};

namespace detail {

/// Coefficient matrix R (n_coords x n_mono) of one function: fn(z) = R m(z).
inline Mat coefficient_matrix(const ModelStructure& ms, Fn fn, const Vec& rho) {
  Mat r = Mat::Zero(ms.n_coords(fn), static_cast<Eigen::Index>(ms.monomials(fn).size()));
  const auto& ps = ms.params();
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].fn == fn) r(ps[i].coord, ps[i].mono) += rho(static_cast<Eigen::Index>(i));
  for (const auto& ft : ms.fixed_terms(fn)) r(ft.coord, ft.mono) += ft.coeff;
  return r;
}

}  // namespace detail

inline LiftedData assemble_lifted(const ModelStructure& ms, const Vec& rho,
                                  std::shared_ptr<const DataTables> tables) {
  if (rho.size() < ms.n_rho()) throw DimensionMismatch("assemble_lifted: rho too short");
  const Vec r = rho.head(ms.n_rho());
  LiftedData ld;
  ld.tables = std::move(tables);
  const DataTables& tb = *ld.tables;
  ld.T = tb.T;
  ld.n_x = tb.n_x;
  ld.n_y = tb.n_y;
  ld.rho = r;
  const Mat re = detail::coefficient_matrix(ms, Fn::e, r);
  const Mat rf = detail::coefficient_matrix(ms, Fn::f, r);
  const Mat rg = detail::coefficient_matrix(ms, Fn::g, r);
  const auto& te = tb.fn[0];
  const auto& tf = tb.fn[1];
  const auto& tg = tb.fn[2];
  ld.E = re * te.grads;
  ld.F = rf * tf.grads;
  ld.G = rg * tg.grads;
  const Mat ev = re * te.vals;
  const Mat fv = rf * tf.vals;
  ld.eta = rg * tg.vals - tb.y;
  ld.eps = Mat::Zero(tb.n_x, tb.T);
  if (tb.T > 1) ld.eps.rightCols(tb.T - 1) = fv.leftCols(tb.T - 1) - ev.rightCols(tb.T - 1);
  return ld;
}

inline LiftedData assemble_lifted(const ModelStructure& ms, const Vec& theta, const Dataset& data) {
  return assemble_lifted(ms, theta, default_table_cache().get(ms, data));
}

/// Symmetric block-tridiagonal matrix: diag blocks and sub-diagonal blocks
/// (block (t+1, t) = sub_t; block (t, t+1) = sub_t').
struct BlockTridiagonal {
  int n = 0;  ///< block size
  int T = 0;
  Mat diag;  ///< n x T n
  Mat sub;   ///< n x (T-1) n

  auto diag_t(int t) const { return diag.middleCols(static_cast<Eigen::Index>(t) * n, n); }
  auto sub_t(int t) const { return sub.middleCols(static_cast<Eigen::Index>(t) * n, n); }

  Mat multiply(const Mat& x) const {
    if (x.rows() != static_cast<Eigen::Index>(T) * n) throw DimensionMismatch("BlockTridiagonal: rhs rows");
    Mat y(x.rows(), x.cols());
    for (int t = 0; t < T; ++t) {
      auto yt = y.middleRows(static_cast<Eigen::Index>(t) * n, n);
      yt.noalias() = diag_t(t) * x.middleRows(static_cast<Eigen::Index>(t) * n, n);
      if (t > 0) yt.noalias() += sub_t(t - 1) * x.middleRows(static_cast<Eigen::Index>(t - 1) * n, n);
      if (t + 1 < T)
        yt.noalias() += sub_t(t).transpose() * x.middleRows(static_cast<Eigen::Index>(t + 1) * n, n);
    }
    return y;
  }

  Mat dense() const {
    const Eigen::Index N = static_cast<Eigen::Index>(T) * n;
    Mat d = Mat::Zero(N, N);
    for (int t = 0; t < T; ++t) {
      d.block(t * n, t * n, n, n) = diag_t(t);
      if (t + 1 < T) {
        d.block((t + 1) * n, t * n, n, n) = sub_t(t);
        d.block(t * n, (t + 1) * n, n, n) = sub_t(t).transpose();
      }
    }
    return d;
  }
};

/// W blocks and w: diag_t = G_t'G_t - E_t - E_t', sub_t = F_t, w_t = -G_t'eta_t - eps_t.
inline std::pair<BlockTridiagonal, Vec> build_W_w(const LiftedData& ld) {
  const int n = ld.n_x, T = ld.T;
  BlockTridiagonal w;
  w.n = n;
  w.T = T;
  w.diag.resize(n, static_cast<Eigen::Index>(T) * n);
  w.sub.resize(n, static_cast<Eigen::Index>(std::max(T - 1, 0)) * n);
  Vec rhs(static_cast<Eigen::Index>(T) * n);
  for (int t = 0; t < T; ++t) {
    const auto e = ld.E_t(t);
    const auto g = ld.G_t(t);
    w.diag.middleCols(static_cast<Eigen::Index>(t) * n, n) = g.transpose() * g - e - e.transpose();
    if (t + 1 < T) w.sub.middleCols(static_cast<Eigen::Index>(t) * n, n) = ld.F_t(t);
    rhs.segment(static_cast<Eigen::Index>(t) * n, n) = -g.transpose() * ld.eta.col(t) - ld.eps.col(t);
  }
  return {std::move(w), std::move(rhs)};
}

/// Block Cholesky of -W = L L' (block Thomas elimination).
struct BlockFactor {
  int n = 0, T = 0;
  Mat ldiag;  ///< n x T n lower-triangular pivot factors
  Mat lsub;   ///< n x (T-1) n, block (t+1, t) of L
};

inline BlockFactor block_thomas_factor(const BlockTridiagonal& w) {
  const int n = w.n, T = w.T;
  BlockFactor f;
  f.n = n;
  f.T = T;
  f.ldiag = Mat::Zero(n, static_cast<Eigen::Index>(T) * n);
  f.lsub.resize(n, static_cast<Eigen::Index>(std::max(T - 1, 0)) * n);
  Mat piv(n, n);
  Eigen::LLT<Mat> llt(n);
  for (int t = 0; t < T; ++t) {
    piv = -w.diag_t(t);
    if (t > 0) {
      const auto ls = f.lsub.middleCols(static_cast<Eigen::Index>(t - 1) * n, n);
      piv.noalias() -= ls * ls.transpose();
    }
    llt.compute(piv);
    if (llt.info() != Eigen::Success || !piv.allFinite())
      throw NotDefinite("block_thomas_factor: -W pivot block not positive definite", t);
    Mat l = llt.matrixL();
    if (!(l.diagonal().minCoeff() > 0.0))
      throw NotDefinite("block_thomas_factor: -W pivot block not positive definite", t);
    f.ldiag.middleCols(static_cast<Eigen::Index>(t) * n, n) = l;
    if (t + 1 < T) {
      // L_{t+1,t} = (-sub_t) L_tt^{-T}  <=>  L_tt L_{t+1,t}' = -sub_t'
      Mat x = -w.sub_t(t).transpose();
      l.triangularView<Eigen::Lower>().solveInPlace(x);
      f.lsub.middleCols(static_cast<Eigen::Index>(t) * n, n) = x.transpose();
    }
  }
  return f;
}

/// Forward half: Y = L^{-1} B.
inline Mat forward_solve(const BlockFactor& f, const Mat& rhs) {
  const int n = f.n;
  if (rhs.rows() != static_cast<Eigen::Index>(f.T) * n) throw DimensionMismatch("solve_W: rhs rows");
  Mat y = rhs;
  for (int t = 0; t < f.T; ++t) {
    auto yt = y.middleRows(static_cast<Eigen::Index>(t) * n, n);
    if (t > 0)
      yt.noalias() -= f.lsub.middleCols(static_cast<Eigen::Index>(t - 1) * n, n) *
                      y.middleRows(static_cast<Eigen::Index>(t - 1) * n, n);
    f.ldiag.middleCols(static_cast<Eigen::Index>(t) * n, n).triangularView<Eigen::Lower>().solveInPlace(yt);
  }
  return y;
}

/// X = W^{-1} B (one or many columns).
inline Mat solve_W(const BlockFactor& f, const Mat& rhs) {
  const int n = f.n;
  Mat x = forward_solve(f, rhs);
  for (int t = f.T - 1; t >= 0; --t) {
    auto xt = x.middleRows(static_cast<Eigen::Index>(t) * n, n);
    if (t + 1 < f.T)
      xt.noalias() -= f.lsub.middleCols(static_cast<Eigen::Index>(t) * n, n).transpose() *
                      x.middleRows(static_cast<Eigen::Index>(t + 1) * n, n);
    f.ldiag.middleCols(static_cast<Eigen::Index>(t) * n, n)
        .triangularView<Eigen::Lower>()
        .transpose()
        .solveInPlace(xt);
  }
  return -x;  // -W = L L'
}

struct ObjectiveEval {
  double value = 0.0;
  Vec delta;        ///< Delta*, T n_x
  Vec grad;         ///< over theta (zero outside the rho block)
  Mat hess;         ///< rho x rho block
  double kkt_residual = 0.0;
};

/// value (order 0), + gradient (1), + Hessian (2). theta_size sets the length of
/// the returned gradient (defaults to n_rho).
inline ObjectiveEval evaluate(const ModelStructure& ms, const LiftedData& ld, int order = 2,
                              Eigen::Index theta_size = -1) {
  const int nx = ld.n_x, ny = ld.n_y, T = ld.T;
  const int nrho = ms.n_rho();
  const DataTables& tb = *ld.tables;
  auto [W, w] = build_W_w(ld);
  const BlockFactor fac = block_thomas_factor(W);
  ObjectiveEval out;
  out.delta = solve_W(fac, w);
  const Vec& d = out.delta;
  out.kkt_residual = (W.multiply(d) - w).cwiseAbs().maxCoeff();
  const Eigen::Map<const Mat> dm(d.data(), nx, T);

  // r_t = G_t Delta_t + eta_t;   s_t = E_t Delta_t - F_{t-1} Delta_{t-1} - eps_t
  Mat r(ny, T);
  double lin = 0.0;
  for (int t = 0; t < T; ++t) {
    r.col(t) = ld.G_t(t) * dm.col(t) + ld.eta.col(t);
    Vec s = ld.E_t(t) * dm.col(t) - ld.eps.col(t);
    if (t > 0) s -= ld.F_t(t - 1) * dm.col(t - 1);
    lin += dm.col(t).dot(s);
  }
  out.value = r.squaredNorm() - 2.0 * lin;
  if (order < 1) return out;

  // gd(k, t) = grad m_k(t) . Delta_t
  auto grad_dot = [&](const FnTable& ft) {
    Mat gd(ft.vals.rows(), T);
    for (int t = 0; t < T; ++t)
      gd.col(t).noalias() = ft.grads.middleCols(static_cast<Eigen::Index>(t) * nx, nx) * dm.col(t);
    return gd;
  };
  const FnTable& te = tb.fn[0];
  const FnTable& tf = tb.fn[1];
  const FnTable& tg = tb.fn[2];
  Mat ue = grad_dot(te) + te.vals;
  ue.col(0) -= te.vals.col(0);
  const Mat uf = grad_dot(tf) + tf.vals;
  const Mat ug = grad_dot(tg) + tg.vals;

  const Mat ge = dm * ue.transpose();
  const Mat gf = T > 1 ? Mat(dm.rightCols(T - 1) * uf.leftCols(T - 1).transpose())
                       : Mat(Mat::Zero(nx, uf.rows()));
  const Mat gg = r * ug.transpose();
  out.grad = Vec::Zero(theta_size < 0 ? nrho : theta_size);
  const auto& ps = ms.params();
  for (int i = 0; i < nrho; ++i) {
    const auto& p = ps[static_cast<std::size_t>(i)];
    switch (p.fn) {
      case Fn::e: out.grad(i) = -2.0 * ge(p.coord, p.mono); break;
      case Fn::f: out.grad(i) = 2.0 * gf(p.coord, p.mono); break;
      case Fn::g: out.grad(i) = 2.0 * gg(p.coord, p.mono); break;
    }
  }
  if (order < 2) return out;

  // H = 2 A'A - 2 C' W^{-1} C, with a_i = G_i Delta + eta_i and
  // c_i = q_i + F_i'Delta - G_i'r - G'a_i  (= -1/2 d^2 J / dDelta dtheta_i).
  const Eigen::Index N = static_cast<Eigen::Index>(T) * nx;
  Mat c = Mat::Zero(N, nrho);
  Mat a = Mat::Zero(static_cast<Eigen::Index>(T) * ny, nrho);
  for (int i = 0; i < nrho; ++i) {
    const auto& p = ps[static_cast<std::size_t>(i)];
    auto ci = c.col(i);
    const int k = p.mono, cc = p.coord;
    switch (p.fn) {
      case Fn::e:
        for (int t = 0; t < T; ++t) {
          auto blk = ci.segment(static_cast<Eigen::Index>(t) * nx, nx);
          blk = te.grads.row(k).segment(static_cast<Eigen::Index>(t) * nx, nx).transpose() * dm(cc, t);
          blk(cc) += ue(k, t);
        }
        break;
      case Fn::f:
        for (int t = 0; t < T; ++t) {
          auto blk = ci.segment(static_cast<Eigen::Index>(t) * nx, nx);
          if (t + 1 < T)
            blk = -tf.grads.row(k).segment(static_cast<Eigen::Index>(t) * nx, nx).transpose() * dm(cc, t + 1);
          if (t > 0) blk(cc) -= uf(k, t - 1);
        }
        break;
      case Fn::g:
        for (int t = 0; t < T; ++t) {
          auto blk = ci.segment(static_cast<Eigen::Index>(t) * nx, nx);
          blk = -tg.grads.row(k).segment(static_cast<Eigen::Index>(t) * nx, nx).transpose() * r(cc, t) -
                ld.G_t(t).row(cc).transpose() * ug(k, t);
          a(static_cast<Eigen::Index>(t) * ny + cc, i) = ug(k, t);
        }
        break;
    }
  }
  const Mat dd = solve_W(fac, c);  // d Delta* / d theta_i = W^{-1} c_i
  Mat h = 2.0 * (a.transpose() * a);
  h.noalias() -= 2.0 * (c.transpose() * dd);
  out.hess = symmetrize(h);
  return out;
}

inline ObjectiveEval evaluate(const ModelStructure& ms, const Vec& theta, const Dataset& data,
                              int order = 2) {
  return evaluate(ms, assemble_lifted(ms, theta, data), order, theta.size());
}

}  // namespace stabid
