#include "helpers.hpp"

using namespace stabid;
using testutil::randn;

namespace {

long binom(int n, int k) {
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Monomial x(int e = 1) { return Monomial::var(0, e); }

}  // namespace

TEST(Monomials, ConstantOnly) {
  const auto m = monomials_up_to(1, 0);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_TRUE(m[0].is_constant());
}

TEST(Monomials, TwoVarsDegreeTwoGradedLex) {
  const auto m = monomials_up_to(2, 2);
  const std::vector<Monomial> want{Monomial{},
                                   Monomial::var(0),
                                   Monomial::var(1),
                                   Monomial::var(0, 2),
                                   Monomial::var(0) * Monomial::var(1),
                                   Monomial::var(1, 2)};
  EXPECT_EQ(m, want);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LT(m[i - 1], m[i]);
}

TEST(Monomials, CountMatchesBinomial) {
  EXPECT_EQ(monomials_up_to(3, 4).size(), 35u);
  for (int n = 1; n <= 6; ++n)
    for (int d = 0; d <= 6; ++d) EXPECT_EQ(static_cast<long>(monomials_up_to(n, d).size()), binom(n + d, d));
}

TEST(Monomials, NoZeroExponentsStored) {
  const Monomial m = Monomial::from_exponents({0, 2, 0, 1});
  ASSERT_EQ(m.factors().size(), 2u);
  EXPECT_EQ(m.degree(), 3);
  EXPECT_EQ(m.exponent(0), 0);
}

TEST(PolyMul, IdentityAndShift) {
  // q = r1 x + r2 x^3
  Polynomial q = Polynomial::parameter(0, x()) + Polynomial::parameter(1, x(3));
  EXPECT_EQ(poly_mul(Polynomial::constant(1.0), q), q);
  Polynomial want = Polynomial::parameter(0, x(2)) + Polynomial::parameter(1, x(4));
  EXPECT_EQ(poly_mul(Polynomial::monomial(x()), q), want);
  const Monomial z1x = Monomial::var(2) * x();
  EXPECT_EQ(poly_mul(Polynomial::monomial(z1x), Polynomial::monomial(z1x)),
            Polynomial::monomial(Monomial::var(2, 2) * x(2)));
}

TEST(PolyMul, RejectsNonAffineProduct) {
  const Polynomial a = Polynomial::parameter(0, x());
  EXPECT_THROW(poly_mul(a, a), NotAffine);
}

TEST(PolyPartial, Examples) {
  Polynomial q = Polynomial::parameter(0, x()) + Polynomial::parameter(1, x(3));
  Polynomial want = Polynomial::parameter(0) + Polynomial::parameter(1, x(2), 3.0);
  EXPECT_EQ(poly_partial(q, 0), want);
  EXPECT_TRUE(poly_partial(Polynomial::constant(4.0), 0).is_zero());
  const Polynomial x1sq_x2 = Polynomial::monomial(Monomial::var(0, 2) * Monomial::var(1));
  EXPECT_EQ(poly_partial(x1sq_x2, 0), Polynomial::monomial(Monomial::var(0) * Monomial::var(1), 2.0));
}

TEST(PolyEval, Examples) {
  Vec th(1);
  th << 2.0;
  Vec pt(1);
  pt << 3.0;
  EXPECT_DOUBLE_EQ(poly_eval(Polynomial::parameter(0, x()), th, pt), 6.0);
  EXPECT_EQ(poly_eval(Polynomial{}, th, pt), 0.0);
}

TEST(Polynomial, CanonicalFormDropsCancelledTerms) {
  Polynomial p = Polynomial::parameter(0, x()) + Polynomial::monomial(x(2));
  p -= Polynomial::parameter(0, x());
  EXPECT_EQ(p.size(), 1u);
  EXPECT_EQ(p, Polynomial::monomial(x(2)));
}

namespace {

/// Random polynomial in 3 variables with affine coefficients over 4 parameters.
Polynomial random_poly(std::mt19937_64& rng, bool theta_free) {
  std::uniform_int_distribution<int> pick(0, 3);
  std::normal_distribution<double> nd;
  Polynomial p;
  for (const auto& m : monomials_up_to(3, 3)) {
    if (pick(rng) == 0) continue;
    AffineCoeff c = AffineCoeff::from_constant(nd(rng));
    if (!theta_free) c += AffineCoeff::from_param(pick(rng), nd(rng));
    p.add_term(m, c);
  }
  return p;
}

}  // namespace

TEST(PolyProperties, ProductEvaluatesAsProduct) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const Polynomial c = random_poly(rng, true), q = random_poly(rng, false);
    const Vec th = randn(4, rng), z = randn(3, rng);
    const double want = poly_eval(c, th, z) * poly_eval(q, th, z);
    EXPECT_LE(testutil::rel_err(poly_eval(poly_mul(c, q), th, z), want), 1e-12);
  }
}

TEST(PolyProperties, PartialMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 100; ++k) {
    const Polynomial q = random_poly(rng, false);
    const Vec th = randn(4, rng), z = randn(3, rng);
    const int var = k % 3;
    const double h = 1e-6;
    Vec zp = z, zm = z;
    zp(var) += h;
    zm(var) -= h;
    const double fd = (poly_eval(q, th, zp) - poly_eval(q, th, zm)) / (2 * h);
    EXPECT_LE(testutil::rel_err(poly_eval(poly_partial(q, var), th, z), fd), 1e-6);
  }
}

TEST(PolyProperties, CoeffMatchSolutionsMakePolynomialsEqual) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 20; ++k) {
    const Polynomial a = random_poly(rng, false), b = random_poly(rng, false);
    const auto rows = coeff_match(a, b);
    Mat A = Mat::Zero(static_cast<Eigen::Index>(rows.size()), 4);
    Vec rhs(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& [i, w] : rows[r].coeffs) A(static_cast<Eigen::Index>(r), i) = w;
      rhs(static_cast<Eigen::Index>(r)) = rows[r].rhs;
    }
    const NullspaceResult ns = nullspace_solve(A, rhs);
    const bool solvable = ns.residual <= 1e-9;
    const Vec th = ns.particular;
    bool equal_everywhere = true;
    for (int s = 0; s < 100; ++s) {
      const Vec z = randn(3, rng);
      const double pa = poly_eval(a, th, z), pb = poly_eval(b, th, z);
      if (std::abs(pa - pb) > 1e-10 * (1 + std::abs(pa))) equal_everywhere = false;
    }
    EXPECT_EQ(solvable, equal_everywhere);
  }
  EXPECT_TRUE(coeff_match(random_poly(rng, false), Polynomial{}).size() > 0);
  const Polynomial same = random_poly(rng, false);
  EXPECT_TRUE(coeff_match(same, same).empty());
}
