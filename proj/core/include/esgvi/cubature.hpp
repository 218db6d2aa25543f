#pragma once

#include <cstdint>
#include <functional>

#include "esgvi/errors.hpp"
#include "esgvi/types.hpp"

namespace esgvi {

enum class RuleKind { single_point, unscented, spherical, gauss_hermite };

// Sigmapoint rule selector.  The single-point rule {xi = 0, w = 1} is the
// degenerate rule MAP modes run on; everything downstream treats MAP as just
// another cubature choice.
struct CubatureRule {
  RuleKind kind = RuleKind::gauss_hermite;
  double kappa = 0.0;  // unscented only
  int order = 3;       // gauss_hermite only

  static CubatureRule single_point() { return {RuleKind::single_point, 0.0, 1}; }
  static CubatureRule unscented(double kappa) { return {RuleKind::unscented, kappa, 0}; }
  static CubatureRule spherical() { return {RuleKind::spherical, 0.0, 0}; }
  static CubatureRule gauss_hermite(int m) { return {RuleKind::gauss_hermite, 0.0, m}; }

  bool is_single_point() const {
    return kind == RuleKind::single_point ||
           (kind == RuleKind::gauss_hermite && order == 1);
  }
};

// Unit-Gaussian sigmapoints: E[f(z)] over z ~ N(0, I_dim) is approximated by
// sum_l w_l f(points.col(l)).  Weights sum to 1; point sets are symmetric
// under negation (the single-point rule trivially so).
struct WeightedPoints {
  Mat points;   // dim x n
  Vec weights;  // n
};

// Builds the unit rule for `dim` dimensions.  Gauss-Hermite uses the
// M^dim tensor product (first dimension varies slowest); throws
// PointBudgetExceeded when M^dim exceeds `budget`, InvalidKappa when
// dim + kappa <= 0.
WeightedPoints unit_rule(const CubatureRule& rule, int dim,
                         std::int64_t budget = 1'000'000);

// Lower-triangular S^(1/2) via Cholesky with a deterministic jitter ladder:
// on failure retries with tau*I, tau = 1e-12 * tr(S)/dim escalating tenfold
// up to 1e-6 * tr(S)/dim, then throws SqrtFailure.
Mat matrix_sqrt(const Mat& s);

// The three factor-level moments the derivative-free updates consume.
struct FactorMoments {
  double scalar = 0.0;  // E[phi]
  Vec column;           // E[(x - mu) phi]
  Mat matrix;           // E[(x - mu)(x - mu)^T phi], symmetrized
};

// Sigmapoints of N(mu, Sigma): x_l = mu + sqrt(Sigma) xi_l.
struct SigmaPoints {
  Mat x;        // dim x n
  Mat centered; // x - mu
  Vec weights;
};
SigmaPoints make_sigma_points(const Vec& mu, const Mat& sigma, const WeightedPoints& unit);

// Weighted moments of phi against the sigmapoints.  Throws NonFiniteFactor
// when phi produces NaN/inf at any point.
FactorMoments expect_moments(const std::function<double(const Vec&)>& phi,
                             const SigmaPoints& pts);
FactorMoments expect_moments(const std::function<double(const Vec&)>& phi, const Vec& mu,
                             const Mat& sigma, const WeightedPoints& unit);

}  // namespace esgvi
