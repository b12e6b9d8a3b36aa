#include "helpers.hpp"

using namespace stabid;

TEST(Spring, ForceExamples) {
  EXPECT_EQ(spring_force(0.0, 2.0), 0.0);
  EXPECT_NEAR(spring_force(0.625, 2.0), 2.0, 1e-12);
  for (double s : {0.1, 0.5, 1.0, 1.2}) EXPECT_EQ(spring_force(-s, 1.5), -spring_force(s, 1.5));
  EXPECT_THROW(spring_force(1.25, 1.0), OutOfRange);
  EXPECT_THROW(spring_force(-2.0, 1.0), OutOfRange);
}

TEST(Spring, EnergyDerivativeIsForce) {
  for (double s : {-1.0, -0.3, 0.2, 0.9}) {
    const double h = 1e-6;
    const double fd = (spring_energy(s + h, 2.0) - spring_energy(s - h, 2.0)) / (2 * h);
    EXPECT_NEAR(fd, spring_force(s, 2.0), 1e-6);
  }
}

TEST(Msd, ZeroInputNoiseOffStaysAtRest) {
  MsdParams p;
  p.noise = false;
  p.samples = 200;
  InputSpec inp;
  inp.amp_max = 0.0;
  const MsdRun r = simulate_msd(p, inp, 1);
  EXPECT_EQ(r.clean.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.data.y.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.data.states().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Msd, DefaultRunHasModerateSnr) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const MsdRun r = simulate_msd(MsdParams{}, InputSpec{}, seed);
    EXPECT_EQ(r.data.T(), 1000);
    EXPECT_GE(r.snr_db, 28.0);
    EXPECT_LE(r.snr_db, 40.0);
  }
}

TEST(Msd, HalvingTheIntegratorStepBarelyMoves) {
  MsdParams p;
  p.noise = false;
  p.samples = 300;
  const MsdRun a = simulate_msd(p, InputSpec{}, 5);
  p.rk4_step = 0.005;
  const MsdRun b = simulate_msd(p, InputSpec{}, 5);
  EXPECT_LE((a.clean - b.clean).norm() / a.clean.norm(), 1e-6);
}

TEST(Msd, DeterministicPerSeed) {
  const MsdRun a = simulate_msd(MsdParams{}, InputSpec{}, 9);
  const MsdRun b = simulate_msd(MsdParams{}, InputSpec{}, 9);
  EXPECT_EQ(a.data.y, b.data.y);
  EXPECT_EQ(a.data.u, b.data.u);
  const MsdRun c = simulate_msd(MsdParams{}, InputSpec{}, 10);
  EXPECT_NE(a.data.y, c.data.y);
}

TEST(Msd, FreeResponseEnergyIsNonIncreasing) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ud(-0.4, 0.4);
  for (int seed = 0; seed < 10; ++seed) {
    MsdParams p;
    p.samples = 300;
    p.x0 = {ud(rng), ud(rng), ud(rng), ud(rng)};
    const auto [traj, u] = integrate_msd(p, [](double) { return 0.0; });
    double prev = msd_energy(p, traj.row(0));
    for (Eigen::Index k = 1; k < traj.rows(); ++k) {
      const double e = msd_energy(p, traj.row(k));
      EXPECT_LE(e, prev * (1 + 1e-9) + 1e-14) << "seed " << seed << " step " << k;
      prev = e;
    }
  }
}

TEST(CentralDiff, Examples) {
  Vec s1(4), s2(4);
  s1 << 0, 1, 4, 9;
  s2 << 1, 1, 1, 1;
  const Mat x = central_diff_states(s1, s2, 0.5);
  ASSERT_EQ(x.cols(), 4);
  EXPECT_EQ(x.col(0), s1);
  EXPECT_EQ(x.col(1), s2);
  // Interior: (s_{t+1} - s_{t-1}) / (2 Ts); endpoints one-sided.
  EXPECT_DOUBLE_EQ(x(1, 2), 4.0);
  EXPECT_DOUBLE_EQ(x(2, 2), 8.0);
  EXPECT_DOUBLE_EQ(x(0, 2), 2.0);
  EXPECT_DOUBLE_EQ(x(3, 2), 10.0);
  EXPECT_EQ(x.col(3).cwiseAbs().maxCoeff(), 0.0);
  const Mat xp = central_diff_states(s1, s2, 0.5, true);
  EXPECT_DOUBLE_EQ(xp(1, 2), 8.0);
  EXPECT_THROW(central_diff_states(Vec(s1.head(2)), Vec(s2.head(2)), 0.5), Error);
}

TEST(CentralDiff, ExactForLinearRamps) {
  const Vec s = Vec::LinSpaced(50, 0.0, 4.9);
  const Mat x = central_diff_states(Mat(s), 0.1);
  for (Eigen::Index t = 0; t < 50; ++t) EXPECT_NEAR(x(t, 1), 1.0, 1e-12);
}

TEST(RandomLti, RadiusBelowBoundAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RandomLti r = gen_random_lti(4, 2, 2, 0.95, seed);
    EXPECT_LE(r.spectral_radius, 0.95 + 1e-12);
    EXPECT_TRUE(r.impulse_stable);
    EXPECT_EQ(r.sys.A.rows(), 4);
    EXPECT_EQ(r.sys.B.cols(), 2);
    EXPECT_EQ(r.sys.C.rows(), 2);
  }
  const RandomLti a = gen_random_lti(3, 1, 1, 0.9, 42), b = gen_random_lti(3, 1, 1, 0.9, 42);
  EXPECT_EQ(a.sys.A, b.sys.A);
  EXPECT_EQ(a.sys.D, b.sys.D);
  EXPECT_THROW(gen_random_lti(3, 1, 1, 1.0, 1), Error);
}

TEST(LtiDataset, NoiselessStatesSatisfyTheRecursion) {
  const RandomLti r = gen_random_lti(3, 1, 2, 0.9, 1);
  const LtiRun run = make_lti_dataset(r.sys, 300, std::numeric_limits<double>::infinity(), StatePolicy::oracle, 2);
  EXPECT_TRUE(std::isinf(run.snr_db));
  const Mat& x = run.data.states();
  double worst = 0.0;
  for (int t = 0; t + 1 < 300; ++t) {
    const Vec u = run.data.u.row(t).transpose();
    worst = std::max(worst, (x.row(t + 1).transpose() - r.sys.A * x.row(t).transpose() - r.sys.B * u).norm());
    worst = std::max(worst, (run.data.y.row(t).transpose() - r.sys.C * x.row(t).transpose() - r.sys.D * u).norm());
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(LtiDataset, RealizedSnrWithinOneDecibel) {
  const RandomLti r = gen_random_lti(4, 1, 1, 0.95, 3);
  for (double snr : {10.0, 20.0, 30.0}) {
    const LtiRun run = make_lti_dataset(r.sys, 4000, snr, StatePolicy::noisy_oracle, 4);
    EXPECT_NEAR(run.snr_db, snr, 1.0);
    EXPECT_GT((run.data.states() - run.x_clean).norm(), 0.0);
  }
  const LtiRun clean_states = make_lti_dataset(r.sys, 500, 20.0, StatePolicy::oracle, 4);
  EXPECT_EQ(clean_states.data.states(), clean_states.x_clean);
}
