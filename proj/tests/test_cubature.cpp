#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "esgvi/cubature.hpp"
#include "esgvi/errors.hpp"
#include "support/poly_oracle.hpp"

namespace {

using namespace esgvi;
using poly_oracle::Expo;
using poly_oracle::Poly;

std::vector<double> sorted_nodes(const WeightedPoints& wp) {
  std::vector<double> n(wp.points.cols());
  for (int i = 0; i < wp.points.cols(); ++i) n[i] = wp.points(0, i);
  std::sort(n.begin(), n.end());
  return n;
}

TEST(UnitRule, SinglePointAndOrderOneCoincide) {
  for (const CubatureRule r : {CubatureRule::single_point(), CubatureRule::gauss_hermite(1)}) {
    EXPECT_TRUE(r.is_single_point());
    const WeightedPoints wp = unit_rule(r, 3);
    ASSERT_EQ(wp.points.cols(), 1);
    EXPECT_EQ(wp.points.col(0).norm(), 0.0);
    EXPECT_DOUBLE_EQ(wp.weights[0], 1.0);
  }
}

TEST(UnitRule, GaussHermiteHandNodes) {
  const WeightedPoints gh2 = unit_rule(CubatureRule::gauss_hermite(2), 1);
  ASSERT_EQ(gh2.points.cols(), 2);
  const auto n2 = sorted_nodes(gh2);
  EXPECT_NEAR(n2[0], -1.0, 1e-14);
  EXPECT_NEAR(n2[1], 1.0, 1e-14);
  EXPECT_NEAR(gh2.weights[0], 0.5, 1e-14);
  EXPECT_NEAR(gh2.weights[1], 0.5, 1e-14);

  const WeightedPoints gh3 = unit_rule(CubatureRule::gauss_hermite(3), 1);
  ASSERT_EQ(gh3.points.cols(), 3);
  const auto n3 = sorted_nodes(gh3);
  EXPECT_NEAR(n3[0], -std::sqrt(3.0), 1e-13);
  EXPECT_NEAR(n3[1], 0.0, 1e-13);
  EXPECT_NEAR(n3[2], std::sqrt(3.0), 1e-13);
  double w_center = 0.0, w_side = 0.0;
  for (int i = 0; i < 3; ++i)
    (std::abs(gh3.points(0, i)) < 0.5 ? w_center : w_side) += gh3.weights[i];
  EXPECT_NEAR(w_center, 2.0 / 3.0, 1e-13);
  EXPECT_NEAR(w_side, 1.0 / 3.0, 1e-13);
}

TEST(UnitRule, TensorProductCountsAndWeights) {
  const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(3), 2);
  ASSERT_EQ(wp.points.cols(), 9);
  EXPECT_NEAR(wp.weights.sum(), 1.0, 1e-13);
  // Tensor weights multiply: the all-center point carries (2/3)^2.
  double w_center = 0.0;
  for (int i = 0; i < 9; ++i)
    if (wp.points.col(i).norm() < 1e-12) w_center += wp.weights[i];
  EXPECT_NEAR(w_center, 4.0 / 9.0, 1e-13);
}

TEST(UnitRule, UnscentedMatchesKnownForms) {
  // d=1, kappa=2: points {0, +-sqrt(3)}, weights {2/3, 1/6, 1/6} — the
  // classic coincidence with third-order Gauss-Hermite.
  const WeightedPoints ut = unit_rule(CubatureRule::unscented(2.0), 1);
  ASSERT_EQ(ut.points.cols(), 3);
  const auto n = sorted_nodes(ut);
  EXPECT_NEAR(n[0], -std::sqrt(3.0), 1e-13);
  EXPECT_NEAR(n[1], 0.0, 1e-13);
  EXPECT_NEAR(n[2], std::sqrt(3.0), 1e-13);
  for (int i = 0; i < 3; ++i) {
    const double want = std::abs(ut.points(0, i)) < 0.5 ? 2.0 / 3.0 : 1.0 / 6.0;
    EXPECT_NEAR(ut.weights[i], want, 1e-13);
  }
}

TEST(UnitRule, SphericalPoints) {
  const int d = 2;
  const WeightedPoints sp = unit_rule(CubatureRule::spherical(), d);
  ASSERT_EQ(sp.points.cols(), 2 * d);
  for (int i = 0; i < sp.points.cols(); ++i) {
    EXPECT_NEAR(sp.points.col(i).norm(), std::sqrt(2.0), 1e-13);
    EXPECT_NEAR(sp.weights[i], 0.25, 1e-13);
    // Axis-aligned.
    EXPECT_NEAR(sp.points.col(i).cwiseAbs().maxCoeff(), std::sqrt(2.0), 1e-13);
  }
  EXPECT_NEAR(sp.weights.sum(), 1.0, 1e-14);
}

TEST(UnitRule, SymmetricUnderNegation) {
  for (const CubatureRule r : {CubatureRule::gauss_hermite(4), CubatureRule::spherical(),
                               CubatureRule::unscented(1.0)}) {
    for (int d = 1; d <= 3; ++d) {
      const WeightedPoints wp = unit_rule(r, d);
      for (int i = 0; i < wp.points.cols(); ++i) {
        bool found = false;
        for (int j = 0; j < wp.points.cols() && !found; ++j)
          found = (wp.points.col(j) + wp.points.col(i)).norm() < 1e-12 &&
                  std::abs(wp.weights[j] - wp.weights[i]) < 1e-12;
        EXPECT_TRUE(found) << "point " << i << " has no negated twin";
      }
    }
  }
}

TEST(UnitRule, ErrorConditions) {
  EXPECT_THROW(unit_rule(CubatureRule::unscented(-3.0), 3), InvalidKappa);
  EXPECT_THROW(unit_rule(CubatureRule::unscented(-5.0), 3), InvalidKappa);
  EXPECT_THROW(unit_rule(CubatureRule::gauss_hermite(20), 6), PointBudgetExceeded);
  EXPECT_THROW(unit_rule(CubatureRule::gauss_hermite(10), 3, 100), PointBudgetExceeded);
  EXPECT_NO_THROW(unit_rule(CubatureRule::gauss_hermite(10), 3, 1000));
}

TEST(MatrixSqrt, HandCholeskyAndJitterLadder) {
  Mat s(2, 2);
  s << 4, 2, 2, 3;
  const Mat l = matrix_sqrt(s);
  EXPECT_NEAR(l(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(l(1, 0), 1.0, 1e-14);
  EXPECT_NEAR(l(1, 1), std::sqrt(2.0), 1e-14);
  EXPECT_EQ(l(0, 1), 0.0);

  // Rank-deficient PSD succeeds through the jitter ladder.
  Mat psd(2, 2);
  psd << 1, 1, 1, 1;
  const Mat lp = matrix_sqrt(psd);
  EXPECT_LT((lp * lp.transpose() - psd).norm(), 1e-5);

  EXPECT_THROW(matrix_sqrt(-Mat::Identity(2, 2)), SqrtFailure);
}

TEST(Moments, PolynomialExactnessOnStandardNormal) {
  // gauss_hermite(M) must integrate any polynomial of total degree <= 2M-1
  // exactly; coefficients are normalized by the monomial's own second moment
  // so every term contributes at unit scale.
  std::mt19937 gen(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const int m : {2, 3, 4, 10}) {
    for (int d = 1; d <= 3; ++d) {
      const int max_deg = 2 * m - 1;
      std::uniform_int_distribution<int> deg(0, max_deg);
      for (int rep = 0; rep < 6; ++rep) {
        Poly p;
        for (int t = 0; t < 8; ++t) {
          Expo e{0, 0, 0};
          int budget = max_deg;
          for (int i = 0; i < d; ++i) {
            std::uniform_int_distribution<int> pick(0, budget);
            e[static_cast<std::size_t>(i)] = std::min(deg(gen), pick(gen));
            budget -= e[static_cast<std::size_t>(i)];
          }
          Poly sq;
          poly_oracle::add_term(sq, {2 * e[0], 2 * e[1], 2 * e[2]}, 1.0);
          const double scale = std::sqrt(poly_oracle::standard_gaussian_moment(sq));
          poly_oracle::add_term(p, e, u(gen) / scale);
        }
        const double want = poly_oracle::standard_gaussian_moment(p);
        const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(m), d);
        const Vec mu = Vec::Zero(d);
        const Mat sigma = Mat::Identity(d, d);
        const FactorMoments got = expect_moments(
            [&p](const Vec& x) { return poly_oracle::poly_eval(p, x); }, mu, sigma, wp);
        EXPECT_NEAR(got.scalar, want, 1e-10 * std::max(1.0, std::abs(want)))
            << "M=" << m << " d=" << d << " rep=" << rep;
      }
    }
  }
}

TEST(Moments, PolynomialExactnessOnGeneralGaussian) {
  // Same property against non-trivial means and covariances; the oracle
  // substitutes x = mu + L z symbolically and sums double factorials.
  std::mt19937 gen(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const int m : {3, 4}) {
    for (int d = 1; d <= 3; ++d) {
      for (int rep = 0; rep < 4; ++rep) {
        Vec mu(d);
        for (int i = 0; i < d; ++i) mu[i] = u(gen);
        Mat b(d, d);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) b(i, j) = u(gen);
        const Mat sigma = b * b.transpose() + 0.3 * Mat::Identity(d, d);

        Poly p;
        const int max_deg = 2 * m - 1;
        std::uniform_int_distribution<int> deg(0, max_deg / d);
        for (int t = 0; t < 6; ++t) {
          Expo e{0, 0, 0};
          for (int i = 0; i < d; ++i) e[static_cast<std::size_t>(i)] = deg(gen);
          poly_oracle::add_term(p, e, u(gen));
        }
        const double want = poly_oracle::gaussian_moment(p, mu, sigma);
        const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(m), d);
        const FactorMoments got = expect_moments(
            [&p](const Vec& x) { return poly_oracle::poly_eval(p, x); }, mu, sigma, wp);
        EXPECT_NEAR(got.scalar, want, 1e-9 * std::max(1.0, std::abs(want)))
            << "M=" << m << " d=" << d << " rep=" << rep;
      }
    }
  }
}

TEST(Moments, QuadraticClosedFormAndSteinIdentities) {
  // phi(x) = 1/2 x^T A x + b^T x + c against N(mu, S):
  //   E[phi]              = phi(mu) + 1/2 tr(A S)
  //   E[(x-mu) phi]       = S (A mu + b)
  //   E[(x-mu)(x-mu)^T phi] = S A S + E[phi] S
  Mat a(2, 2);
  a << 2.0, 0.4, 0.4, 1.2;
  Vec b(2);
  b << -0.3, 0.7;
  const double c = 0.25;
  Vec mu(2);
  mu << 1.0, -2.0;
  Mat s(2, 2);
  s << 0.5, 0.1, 0.1, 0.8;

  const auto phi = [&](const Vec& x) { return 0.5 * x.dot(a * x) + b.dot(x) + c; };
  const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(3), 2);
  const FactorMoments got = expect_moments(phi, mu, s, wp);

  const double want_scalar = phi(mu) + 0.5 * (a * s).trace();
  EXPECT_NEAR(got.scalar, want_scalar, 1e-12 * std::max(1.0, std::abs(want_scalar)));

  const Vec want_col = s * (a * mu + b);
  EXPECT_LT((got.column - want_col).norm(), 1e-12 * (1.0 + want_col.norm()));

  const Mat want_mat = s * a * s + want_scalar * s;
  EXPECT_LT((got.matrix - want_mat).norm(), 1e-12 * (1.0 + want_mat.norm()));
  EXPECT_TRUE(got.matrix.isApprox(got.matrix.transpose(), 1e-14));
}

TEST(Moments, ExponentialClosedForm) {
  // E[exp(a^T x)] = exp(a^T mu + a^T S a / 2); the column moment follows as
  // S a times that value.  gh:10 resolves this transcendental integrand to
  // high accuracy at these scales.
  Vec a(2);
  a << 0.3, -0.2;
  Vec mu(2);
  mu << 0.4, 1.1;
  Mat s(2, 2);
  s << 0.3, 0.05, 0.05, 0.2;
  const double want = std::exp(a.dot(mu) + 0.5 * a.dot(s * a));
  const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(10), 2);
  const FactorMoments got =
      expect_moments([&a](const Vec& x) { return std::exp(a.dot(x)); }, mu, s, wp);
  EXPECT_NEAR(got.scalar, want, 1e-8 * want);
  EXPECT_LT((got.column - s * a * want).norm(), 1e-7 * want);
}

TEST(Moments, AffineEquivarianceOfSigmaPoints) {
  // Sigmapoints of N(mu, S) are exactly mu + sqrt(S) * unit points, so any
  // integrand agrees bit-for-bit with its pulled-back form on N(0, I).
  std::mt19937 gen(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int d = 3;
  Vec mu(d);
  Mat b(d, d);
  for (int i = 0; i < d; ++i) {
    mu[i] = u(gen);
    for (int j = 0; j < d; ++j) b(i, j) = u(gen);
  }
  const Mat sigma = b * b.transpose() + 0.5 * Mat::Identity(d, d);
  const Mat l = matrix_sqrt(sigma);
  const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(4), d);
  const auto f = [](const Vec& x) { return std::sin(x[0]) + x[1] * x[1] * x[2]; };
  const FactorMoments direct = expect_moments(f, mu, sigma, wp);
  const FactorMoments pulled = expect_moments(
      [&](const Vec& z) { return f(mu + l * z); }, Vec::Zero(d), Mat::Identity(d, d), wp);
  EXPECT_DOUBLE_EQ(direct.scalar, pulled.scalar);
}

TEST(Moments, SigmaPointStructure) {
  Vec mu(2);
  mu << 3.0, -1.0;
  Mat s(2, 2);
  s << 4, 2, 2, 3;
  const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(2), 2);
  const SigmaPoints pts = make_sigma_points(mu, s, wp);
  ASSERT_EQ(pts.x.cols(), 4);
  const Mat l = matrix_sqrt(s);
  for (int i = 0; i < pts.x.cols(); ++i) {
    EXPECT_LT((pts.x.col(i) - (mu + l * wp.points.col(i))).norm(), 1e-13);
    EXPECT_LT((pts.centered.col(i) - (pts.x.col(i) - mu)).norm(), 1e-14);
  }
  EXPECT_EQ(pts.weights.size(), 4);
}

TEST(Moments, NonFiniteIntegrandIsRejected) {
  const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(3), 1);
  Vec mu(1);
  mu << 0.0;
  const Mat s = Mat::Identity(1, 1);
  // sqrt of a negative number at the off-center nodes.
  EXPECT_THROW(
      expect_moments([](const Vec& x) { return std::sqrt(x[0]); }, mu, s, wp),
      NonFiniteFactor);
}

}  // namespace
