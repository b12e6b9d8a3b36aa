#include "helpers.hpp"

using namespace stabid;
using testutil::randn;

TEST(Linalg, IdentityAndDiagonal) {
  const Mat I = Mat::Identity(4, 4);
  const SymFactor f = sym_factor(I);
  ASSERT_TRUE(f.success);
  EXPECT_NEAR(logdet(f), 0.0, 1e-15);
  const auto [lo, hi] = eig_extremes(I);
  EXPECT_DOUBLE_EQ(lo, 1.0);
  EXPECT_DOUBLE_EQ(hi, 1.0);
  EXPECT_EQ(nullspace_basis(I).cols(), 0);
  Mat d = Mat::Zero(2, 2);
  d.diagonal() << 2, 3;
  EXPECT_NEAR(logdet(sym_factor(d)), std::log(6.0), 1e-15);
}

TEST(Linalg, IndefiniteFactorFails) {
  Mat m(2, 2);
  m << 1, 2, 2, 1;
  EXPECT_FALSE(sym_factor(m).success);
}

TEST(Linalg, SolveRoundTrip) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    const Mat a = randn(6, 6, rng);
    const Mat m = a * a.transpose() + 0.1 * Mat::Identity(6, 6);
    const Vec v = randn(6, rng);
    const SymFactor f = sym_factor(m);
    ASSERT_TRUE(f.success);
    const Vec back = sym_solve(f, m * v);
    EXPECT_LE((back - v).norm() / v.norm(), 1e-10);
  }
}

TEST(Linalg, NullspaceOfWideMatrix) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 10; ++k) {
    Mat a = randn(3, 7, rng);
    a.row(2) = a.row(0) + a.row(1);  // rank 2
    const Mat n = nullspace_basis(a);
    EXPECT_EQ(n.cols(), 5);
    Eigen::JacobiSVD<Mat> svd(a);
    const double smax = svd.singularValues()(0);
    EXPECT_LE((a * n).cwiseAbs().maxCoeff(), 1e-12 * smax);
    EXPECT_LE((n.transpose() * n - Mat::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Linalg, ExtremesBracketRayleighQuotients) {
  std::mt19937_64 rng(5);
  const Mat a = randn(5, 5, rng);
  const Mat m = a + a.transpose();
  const auto [lo, hi] = eig_extremes(m);
  for (int k = 0; k < 100; ++k) {
    const Vec v = randn(5, rng);
    const double rq = v.dot(m * v) / v.squaredNorm();
    EXPECT_GE(rq, lo - 1e-12);
    EXPECT_LE(rq, hi + 1e-12);
  }
}
