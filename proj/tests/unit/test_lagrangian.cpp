#include "helpers.hpp"

#include "stabid/dense_reference.hpp"

using namespace stabid;
using testutil::randn;
using testutil::rel_err;

namespace {

/// Scalar hand case: E = 1, F = 0.5, G = 1, eps_1 = 1, eta = 0.
std::pair<ModelStructure, Dataset> hand_case() {
  const auto ms = testutil::example1();
  Dataset d;
  d.u = Mat::Zero(2, 1);
  d.x = Mat(2, 1);
  (*d.x) << 0.0, -1.0;
  d.y = *d.x;
  return {ms, d};
}

Vec hand_rho() {
  Vec r(3);
  r << 1.0, 0.0, 0.5;
  return r;
}

struct Feasible {
  ModelStructure ms;
  ConstraintSystem cs;
  FeasiblePoint fp;
};

Feasible feasible_for(const StructureSpec& spec) {
  const auto ms = ModelStructure::standard(spec);
  ConstraintSystem cs = assemble_for(ms, 1e-3);
  const FeasiblePoint fp = phase_one(cs);
  return {ms, std::move(cs), fp};
}

}  // namespace

TEST(Lagrangian, HandCase) {
  auto [ms, d] = hand_case();
  const LiftedData ld = assemble_lifted(ms, hand_rho(), d);
  auto [W, w] = build_W_w(ld);
  Mat want(2, 2);
  want << -1, 0.5, 0.5, -1;
  EXPECT_LE((W.dense() - want).norm(), 1e-15);
  EXPECT_NEAR(w(0), 0.0, 1e-15);
  EXPECT_NEAR(w(1), -1.0, 1e-15);
  const ObjectiveEval ev = evaluate(ms, hand_rho(), d);
  EXPECT_NEAR(ev.delta(0), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(ev.delta(1), 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(ev.value, 4.0 / 3.0, 1e-14);
  const ObjectiveEval dr = dense_reference_eval(ms, hand_rho(), d);
  EXPECT_NEAR(dr.value, 4.0 / 3.0, 1e-14);
  // J0 = 1 <= 4/3.
  EXPECT_LE(linearized_sim_error(ms, hand_rho(), d), ev.value);
}

TEST(Lagrangian, SingleStepBlocks) {
  std::mt19937_64 rng(1);
  const auto ms = ModelStructure::standard(StructureSpec{2, 1, 2, 3, 2, 1, 2, true, true});
  Dataset d = testutil::random_dataset(ms, 2, rng);
  const Vec rho = randn(ms.n_rho(), rng);
  const LiftedData ld = assemble_lifted(ms, rho, d);
  auto [W, w] = build_W_w(ld);
  const Mat e = ld.E_t(0), g = ld.G_t(0);
  EXPECT_LE(rel_err(W.diag_t(0), g.transpose() * g - e - e.transpose()), 1e-15);
  EXPECT_LE(rel_err(w.head(2), -g.transpose() * ld.eta.col(0)), 1e-15);
}

TEST(Lagrangian, LinearBlocksAreConstant) {
  std::mt19937_64 rng(2);
  const auto ms = ModelStructure::linear(2, 1, 1);
  const Dataset d = testutil::random_dataset(ms, 10, rng);
  const Vec rho = randn(ms.n_rho(), rng);
  const LtiMatrices m = LtiMatrices::from_rho(rho, 2, 1, 1);
  const LiftedData ld = assemble_lifted(ms, rho, d);
  for (int t = 0; t < 10; ++t) {
    EXPECT_EQ(Mat(ld.E_t(t)), m.E);
    EXPECT_EQ(Mat(ld.F_t(t)), m.F);
    EXPECT_EQ(Mat(ld.G_t(t)), m.C);
  }
}

TEST(Lagrangian, DerivativeBlocksAreExact) {
  // Blocks are affine in rho: finite differences with any step reproduce them.
  std::mt19937_64 rng(3);
  const auto ms = ModelStructure::standard(StructureSpec{2, 1, 1, 3, 3, 1, 1, true, true});
  const Dataset d = testutil::random_dataset(ms, 8, rng);
  const Vec rho = randn(ms.n_rho(), rng);
  const LiftedData l0 = assemble_lifted(ms, rho, d);
  const LiftedData z = assemble_lifted(ms, Vec::Zero(ms.n_rho()), d);
  for (int i = 0; i < ms.n_rho(); i += 3) {
    const LiftedData l1 = assemble_lifted(ms, Vec(rho + 0.1 * Vec::Unit(ms.n_rho(), i)), d);
    const LiftedData u = assemble_lifted(ms, Vec::Unit(ms.n_rho(), i), d);
    EXPECT_LE(rel_err((l1.E - l0.E) / 0.1, u.E - z.E), 1e-8);
    EXPECT_LE(rel_err((l1.eps - l0.eps) / 0.1, u.eps - z.eps), 1e-8);
  }
}

TEST(Lagrangian, ExactModelGivesZero) {
  std::mt19937_64 rng(4);
  const auto ms = testutil::example1();
  Vec rho(3);
  rho << 1.0, 0.2, 0.5;
  const Mat u = randn(40, 1, rng, 0.3);
  const Trajectory tr = simulate(ms, rho, Vec::Zero(1), u);
  Dataset d{u, tr.y, tr.x, 1.0};
  const ObjectiveEval ev = evaluate(ms, rho, d);
  EXPECT_LE(ev.delta.norm(), 1e-8);
  EXPECT_LE(ev.value, 1e-16);
  EXPECT_LE(ev.grad.norm(), 1e-8);
}

TEST(BlockThomas, MatchesDenseAndRoundTrips) {
  std::mt19937_64 rng(5);
  Feasible f = feasible_for(StructureSpec{2, 1, 1, 3, 3, 1, 1, true, true});
  for (int k = 0; k < 5; ++k) {
    const Vec th = testutil::interior_point(f.cs, f.fp, rng);
    const Dataset d = testutil::random_dataset(f.ms, 30, rng);
    const LiftedData ld = assemble_lifted(f.ms, th, d);
    auto [W, w] = build_W_w(ld);
    const BlockFactor fac = block_thomas_factor(W);
    const Mat Wd = W.dense();
    const Mat rhs = randn(Wd.rows(), 3, rng);
    const Mat x = solve_W(fac, rhs);
    EXPECT_LE(rel_err(x, Mat(Wd.partialPivLu().solve(rhs))), 1e-10);
    const Vec v = randn(Wd.rows(), rng);
    EXPECT_LE((solve_W(fac, W.multiply(v)) - v).norm() / v.norm(), 1e-10);
    EXPECT_EQ(solve_W(fac, Mat::Zero(Wd.rows(), 1)).norm(), 0.0);
    // Batched solve equals column-by-column solves bitwise.
    for (int c = 0; c < 3; ++c) EXPECT_EQ(x.col(c), solve_W(fac, rhs.col(c)));
    EXPECT_LT(lambda_max(Wd), 0.0);
  }
}

TEST(BlockThomas, SingleBlockPivot) {
  BlockTridiagonal w;
  w.n = 2;
  w.T = 1;
  w.diag = Mat(2, 2);
  w.diag << -4, 1, 1, -3;
  w.sub = Mat(2, 0);
  const BlockFactor f = block_thomas_factor(w);
  const Mat l = f.ldiag;
  EXPECT_LE((l * l.transpose() + w.diag).norm(), 1e-14);
}

TEST(BlockThomas, UnstableModelIsNotDefinite) {
  // e = x, f = 2x, g = 0: -W is indefinite for long horizons.
  const auto ms = ModelStructure::linear(1, 1, 1);
  Vec rho = Vec::Zero(ms.n_rho());
  rho(ms.index(Fn::e, 0, Monomial::var(0))) = 1.0;
  rho(ms.index(Fn::f, 0, Monomial::var(0))) = 2.0;
  Dataset d{Mat::Zero(10, 1), Mat::Zero(10, 1), Mat::Zero(10, 1), 1.0};
  auto [W, w] = build_W_w(assemble_lifted(ms, rho, d));
  EXPECT_THROW(block_thomas_factor(W), NotDefinite);
}

TEST(Evaluate, MatchesDenseReference) {
  std::mt19937_64 rng(6);
  for (const auto& spec : {StructureSpec{2, 1, 1, 1, 1, 1, 1, true, false}, StructureSpec{2, 1, 1, 3, 3, 1, 1, true, true}}) {
    Feasible f = feasible_for(spec);
    for (int k = 0; k < 4; ++k) {
      const Vec th = testutil::interior_point(f.cs, f.fp, rng);
      const Dataset d = testutil::random_dataset(f.ms, 25, rng);
      const ObjectiveEval a = evaluate(f.ms, th, d), b = dense_reference_eval(f.ms, th, d);
      EXPECT_LE(rel_err(a.value, b.value), 1e-9);
      EXPECT_LE(rel_err(a.grad, b.grad), 1e-9);
      EXPECT_LE(rel_err(a.hess, b.hess), 1e-9);
      EXPECT_LE(rel_err(a.delta, b.delta), 1e-9);
      EXPECT_LE(a.kkt_residual, 1e-8 * (1 + a.delta.cwiseAbs().maxCoeff()));
      EXPECT_EQ(a.grad.size(), th.size());
      EXPECT_EQ(a.grad.tail(th.size() - f.ms.n_rho()).norm(), 0.0);
    }
  }
}

TEST(Evaluate, GradientAndHessianMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  Feasible f = feasible_for(StructureSpec{2, 1, 1, 3, 3, 1, 1, true, true});
  for (int k = 0; k < 3; ++k) {
    const Vec th = testutil::interior_point(f.cs, f.fp, rng);
    const Dataset d = testutil::random_dataset(f.ms, 50, rng);
    const ObjectiveEval ev = evaluate(f.ms, th, d);
    const int n = f.ms.n_rho();
    Vec fd(n);
    Mat fh(n, n);
    for (int i = 0; i < n; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(th(i)));
      Vec p = th, m = th;
      p(i) += h;
      m(i) -= h;
      const ObjectiveEval ep = evaluate(f.ms, p, d, 1), em = evaluate(f.ms, m, d, 1);
      fd(i) = (ep.value - em.value) / (2 * h);
      fh.col(i) = (ep.grad.head(n) - em.grad.head(n)) / (2 * h);
    }
    EXPECT_LE((ev.grad.head(n) - fd).norm() / std::max(1.0, fd.norm()), 1e-6);
    EXPECT_LE((ev.hess - fh).norm() / std::max(1.0, fh.norm()), 1e-4);
    EXPECT_LE((ev.hess - ev.hess.transpose()).cwiseAbs().maxCoeff(), 1e-10 * ev.hess.cwiseAbs().maxCoeff());
    const auto [lo, hi] = eig_extremes(ev.hess);
    EXPECT_GE(lo, -1e-8 * hi);
  }
}

TEST(Evaluate, UpperBoundAndConvexity) {
  std::mt19937_64 rng(8);
  Feasible f = feasible_for(StructureSpec{2, 1, 1, 3, 3, 1, 1, true, true});
  const Dataset d = testutil::random_dataset(f.ms, 40, rng);
  std::vector<Vec> pts;
  for (int k = 0; k < 10; ++k) pts.push_back(testutil::interior_point(f.cs, f.fp, rng));
  for (const Vec& th : pts) {
    const double jl = evaluate(f.ms, th, d, 0).value;
    EXPECT_GE(jl + 1e-9 * (1 + jl), linearized_sim_error(f.ms, f.cs.layout.rho(th), d));
  }
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double a = evaluate(f.ms, pts[k], d, 0).value, b = evaluate(f.ms, pts[k + 1], d, 0).value;
    for (double al : {0.25, 0.5, 0.75}) {
      const double mid = evaluate(f.ms, Vec(al * pts[k] + (1 - al) * pts[k + 1]), d, 0).value;
      EXPECT_LE(mid, al * a + (1 - al) * b + 1e-8 * (1 + std::abs(a) + std::abs(b)));
    }
  }
}

TEST(Evaluate, DoublingEtaDoublesOutputPartOfW) {
  // eta_1 = g(x_1) - y_1 = -y_1 and w_1 = -G' eta_1 (the lifted eps_0 is zero).
  auto [ms, d] = hand_case();
  d.y(0, 0) = -1.0;
  const Vec w1 = build_W_w(assemble_lifted(ms, hand_rho(), d)).second;
  d.y(0, 0) = -2.0;
  const Vec w2 = build_W_w(assemble_lifted(ms, hand_rho(), d)).second;
  EXPECT_EQ(w2(0), 2.0 * w1(0));
  EXPECT_EQ(w2(1), w1(1));
}
