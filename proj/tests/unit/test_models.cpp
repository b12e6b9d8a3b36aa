#include "helpers.hpp"

using namespace stabid;
using testutil::randn;
using testutil::rel_err;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec v1(double a) { return Vec::Constant(1, a); }

/// Stable random linear model in implicit form.
LtiMatrices random_lti_model(int nx, int nu, int ny, std::mt19937_64& rng) {
  const RandomLti r = gen_random_lti(nx, nu, ny, 0.9, rng());
  LtiMatrices m = r.sys.implicit();
  const Mat e = Mat::Identity(nx, nx) + 0.1 * randn(nx, nx, rng);
  m.E = e;
  m.F = e * m.F;
  m.K = e * m.K;
  return m;
}

}  // namespace

TEST(Structure, ParameterMapIsBijection) {
  const auto ms = ModelStructure::standard(StructureSpec{3, 2, 2, 3, 2, 1, 2, true, true});
  std::set<std::tuple<int, int, int>> seen;
  for (int i = 0; i < ms.n_rho(); ++i) {
    const auto& p = ms.params()[static_cast<std::size_t>(i)];
    EXPECT_TRUE(seen.emplace(static_cast<int>(p.fn), p.coord, p.mono).second);
    EXPECT_EQ(ms.index(p.fn, p.coord, ms.monomials(p.fn)[static_cast<std::size_t>(p.mono)]), i);
  }
}

TEST(Structure, LinearLayoutMatchesMatrices) {
  std::mt19937_64 rng(1);
  const auto ms = ModelStructure::linear(3, 2, 2);
  const LtiMatrices m = random_lti_model(3, 2, 2, rng);
  const Vec x = randn(3, rng), u = randn(2, rng);
  const EFG v = eval_efg(ms, m.to_rho(), x, u);
  EXPECT_LE(rel_err(v.e, m.E * x), 1e-14);
  EXPECT_LE(rel_err(v.f, m.F * x + m.K * u), 1e-14);
  EXPECT_LE(rel_err(v.g, m.C * x + m.D * u), 1e-14);
}

TEST(Models, Example1Evaluation) {
  const auto ms = testutil::example1();
  const EFG v = eval_efg(ms, v3(1, 1, 1), v1(2), v1(0));
  EXPECT_DOUBLE_EQ(v.e(0), 10.0);
  EXPECT_DOUBLE_EQ(v.f(0), 2.0);
  EXPECT_DOUBLE_EQ(v.g(0), 2.0);
  const auto lin = ModelStructure::linear(2, 1, 1);
  const EFG z = eval_efg(lin, Vec::Zero(lin.n_rho()), Vec::Ones(2), Vec::Ones(1));
  EXPECT_EQ(z.e.norm() + z.f.norm() + z.g.norm(), 0.0);
}

TEST(Models, Example1Jacobians) {
  const auto ms = testutil::example1();
  const Jacobians j = jacobians(ms, v3(0.7, 1.3, 0.2), v1(1), v1(0.4));
  EXPECT_DOUBLE_EQ(j.E(0, 0), 0.7 + 3 * 1.3);
  EXPECT_DOUBLE_EQ(j.G(0, 0), 1.0);
}

TEST(Models, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const auto ms = ModelStructure::standard(StructureSpec{2, 1, 2, 3, 3, 2, 2, false, true});
  for (int k = 0; k < 100; ++k) {
    const Vec rho = randn(ms.n_rho(), rng), x = randn(2, rng), u = randn(1, rng);
    const Jacobians j = jacobians(ms, rho, x, u);
    const double h = 1e-6;
    Mat fe(2, 2), ff(2, 2), fg(2, 2);
    for (int c = 0; c < 2; ++c) {
      Vec xp = x, xm = x;
      xp(c) += h;
      xm(c) -= h;
      const EFG p = eval_efg(ms, rho, xp, u), m = eval_efg(ms, rho, xm, u);
      fe.col(c) = (p.e - m.e) / (2 * h);
      ff.col(c) = (p.f - m.f) / (2 * h);
      fg.col(c) = (p.g - m.g) / (2 * h);
    }
    EXPECT_LE(rel_err(j.E, fe), 1e-6);
    EXPECT_LE(rel_err(j.F, ff), 1e-6);
    EXPECT_LE(rel_err(j.G, fg), 1e-6);
  }
}

TEST(ImplicitStep, LinearAndCubic) {
  std::mt19937_64 rng(3);
  const auto lin = ModelStructure::linear(3, 1, 1);
  const LtiMatrices m = random_lti_model(3, 1, 1, rng);
  const Vec b = randn(3, rng);
  EXPECT_LE(rel_err(implicit_step(lin, m.to_rho(), b), m.E.partialPivLu().solve(b)), 1e-12);

  const auto ms = testutil::example1();
  // x + x^3 = 1 has the single real root 0.6823278...
  const Vec s = implicit_step(ms, v3(1, 1, 0), v1(1));
  EXPECT_NEAR(s(0), 0.6823278038280193, 1e-9);
  EXPECT_LE(std::abs(s(0) + s(0) * s(0) * s(0) - 1.0), 1e-9);
}

TEST(ImplicitStep, RoundTrip) {
  std::mt19937_64 rng(4);
  // e(x) = x + a x^3 coordinatewise plus a small linear coupling keeps E + E' > 0.
  const auto ms = ModelStructure::standard(StructureSpec{2, 1, 1, 3, 1, 1, 1, true, true});
  std::uniform_real_distribution<double> ua(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Vec rho = Vec::Zero(ms.n_rho());
    for (int c = 0; c < 2; ++c) {
      rho(ms.index(Fn::e, c, Monomial::var(c))) = 1.0;
      rho(ms.index(Fn::e, c, Monomial::var(c, 3))) = ua(rng);
    }
    rho(ms.index(Fn::e, 0, Monomial::var(1))) = 0.2 * (ua(rng) - 0.5);
    const Vec x0 = randn(2, rng);
    const Vec b = eval_fn(ms, Fn::e, rho, stack_xu(x0, Vec::Zero(1)));
    EXPECT_LE((implicit_step(ms, rho, b) - x0).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Simulate, ZeroInputStaysAtRest) {
  std::mt19937_64 rng(5);
  const auto lin = ModelStructure::linear(2, 1, 1);
  const LtiMatrices m = random_lti_model(2, 1, 1, rng);
  const Trajectory tr = simulate(lin, m.to_rho(), Vec::Zero(2), Mat::Zero(20, 1));
  EXPECT_EQ(tr.x.norm(), 0.0);
  EXPECT_EQ(tr.y.norm(), 0.0);
}

TEST(Simulate, LinearMatchesRecursion) {
  std::mt19937_64 rng(6);
  const auto lin = ModelStructure::linear(3, 2, 2);
  const LtiMatrices m = random_lti_model(3, 2, 2, rng);
  const Mat u = randn(50, 2, rng);
  const Vec x1 = randn(3, rng);
  const Trajectory tr = simulate(lin, m.to_rho(), x1, u);
  Vec x = x1;
  const Mat a = m.A(), b = m.B();
  for (int t = 0; t < 50; ++t) {
    EXPECT_LE((tr.x.row(t).transpose() - x).norm(), 1e-10 * (1 + x.norm()));
    EXPECT_LE((tr.y.row(t).transpose() - (m.C * x + m.D * u.row(t).transpose())).norm(), 1e-10 * (1 + x.norm()));
    x = a * x + b * u.row(t).transpose();
  }
}

TEST(Simulate, ScalarGeometricDecay) {
  // e = x, f = 0.5 x + u, impulse input.
  const auto ms = testutil::example1();
  Mat u = Mat::Zero(10, 1);
  u(0, 0) = 1.0;
  const Trajectory tr = simulate(ms, v3(1, 0, 0.5), v1(0), u);
  for (int t = 1; t < 10; ++t) EXPECT_NEAR(tr.x(t, 0), std::pow(0.5, t - 1), 1e-12);
}

TEST(Residuals, ExactModelAndLinearity) {
  std::mt19937_64 rng(7);
  const auto ms = testutil::example1();
  const Vec rho = v3(1.0, 0.3, 0.4);
  const Mat u = randn(30, 1, rng, 0.3);
  const Trajectory tr = simulate(ms, rho, v1(0.1), u);
  Dataset d{u, tr.y, tr.x, 1.0};
  const Residuals r = residuals(ms, rho, d);
  EXPECT_LE(r.eps.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(r.eta.cwiseAbs().maxCoeff(), 0.0);

  const double delta = 0.01;
  const Residuals r2 = residuals(ms, v3(1.0, 0.3, 0.4 + delta), d);
  for (int t = 0; t + 1 < 30; ++t) EXPECT_NEAR(r2.eps(t, 0) - r.eps(t, 0), delta * tr.x(t, 0), 1e-14);

  Dataset two{Mat::Ones(2, 1), Mat::Ones(2, 1), Mat::Ones(2, 1), 1.0};
  const Residuals r3 = residuals(ms, rho, two);
  EXPECT_EQ(r3.eps.rows(), 1);
  EXPECT_EQ(r3.eta.rows(), 2);
}

TEST(Residuals, AffineInRho) {
  std::mt19937_64 rng(8);
  const auto ms = ModelStructure::standard(StructureSpec{2, 1, 1, 3, 2, 1, 2, true, true});
  const Dataset d = testutil::random_dataset(ms, 20, rng);
  const Vec a = randn(ms.n_rho(), rng), b = randn(ms.n_rho(), rng);
  const double al = 0.3;
  const Residuals ra = residuals(ms, a, d), rb = residuals(ms, b, d), rm = residuals(ms, al * a + (1 - al) * b, d);
  EXPECT_LE(rel_err(rm.eps, al * ra.eps + (1 - al) * rb.eps), 1e-12);
  EXPECT_LE(rel_err(rm.eta, al * ra.eta + (1 - al) * rb.eta), 1e-12);
}

TEST(LinearizedError, HandCaseAndZeroResiduals) {
  // E = 1, F = 0.5, G = 1; data built so that eps_1 = 1, eta = 0.
  const auto ms = testutil::example1();
  const Vec rho = v3(1.0, 0.0, 0.5);
  Dataset d;
  d.u = Mat::Zero(2, 1);
  d.x = Mat(2, 1);
  (*d.x) << 0.0, -1.0;  // eps_1 = 0.5*0 + 0 - (-1) = 1
  d.y = *d.x;           // eta = g(x) - y = 0
  EXPECT_NEAR(linearized_sim_error(ms, rho, d), 1.0, 1e-15);

  d.x = Mat::Zero(2, 1);
  d.y = Mat::Zero(2, 1);
  EXPECT_EQ(linearized_sim_error(ms, rho, d), 0.0);
}

TEST(LinearizedError, EqualsSimulationErrorForLinearModels) {
  std::mt19937_64 rng(9);
  const auto lin = ModelStructure::linear(3, 1, 2);
  for (int k = 0; k < 20; ++k) {
    const LtiMatrices m = random_lti_model(3, 1, 2, rng);
    const Dataset d = testutil::random_dataset(lin, 60, rng);
    const double j = sim_error(lin, m.to_rho(), d);
    const double j0 = linearized_sim_error(lin, m.to_rho(), d);
    EXPECT_LE(std::abs(j - j0), 1e-10 * (1 + j));
  }
}

TEST(SimError, ZeroOutputMapGivesUnitNormalizedError) {
  std::mt19937_64 rng(10);
  const auto lin = ModelStructure::linear(2, 1, 1);
  LtiMatrices m = random_lti_model(2, 1, 1, rng);
  m.C.setZero();
  m.D.setZero();
  const Dataset d = testutil::random_dataset(lin, 40, rng);
  EXPECT_NEAR(sim_error(lin, m.to_rho(), d) / d.y.squaredNorm(), 1.0, 1e-15);
}

TEST(SimError, ExactModelHasZeroError) {
  std::mt19937_64 rng(11);
  const auto lin = ModelStructure::linear(3, 1, 1);
  const LtiMatrices m = random_lti_model(3, 1, 1, rng);
  const Mat u = randn(100, 1, rng);
  const Vec x1 = randn(3, rng);
  const Trajectory tr = simulate(lin, m.to_rho(), x1, u);
  Dataset d{u, tr.y, tr.x, 1.0};
  EXPECT_LE(sim_error(lin, m.to_rho(), d, x1), 1e-16 * 100 * (1 + tr.y.squaredNorm()));
}

TEST(Dataset, Validation) {
  Dataset d{Mat::Zero(3, 1), Mat::Zero(4, 1), std::nullopt, 1.0};
  EXPECT_THROW(d.validate(), DimensionMismatch);
  Dataset e{Mat::Zero(1, 1), Mat::Zero(1, 1), std::nullopt, 1.0};
  EXPECT_THROW(e.validate(), Error);
  Dataset f{Mat::Zero(3, 1), Mat::Zero(3, 1), Mat::Zero(2, 1), 1.0};
  EXPECT_THROW(f.validate(), DimensionMismatch);
  EXPECT_THROW(Dataset{}.states(), MissingStates);
}
