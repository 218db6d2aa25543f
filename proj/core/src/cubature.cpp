#include "esgvi/cubature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>

namespace esgvi {
namespace {

// Probabilists' Gauss-Hermite nodes/weights by Golub-Welsch on the symmetric
// tridiagonal Jacobi matrix (zero diagonal, off-diagonal sqrt(i)).  Weights
// are the squared first eigenvector components (total mass 1).  Nodes are
// symmetrized in +/- pairs so the returned set is exactly negation-symmetric.
std::pair<Vec, Vec> gauss_hermite_1d_uncached(int m) {
  if (m == 1) {
    Vec x(1), w(1);
    x[0] = 0.0;
    w[0] = 1.0;
    return {x, w};
  }
  Mat jac = Mat::Zero(m, m);
  for (int i = 1; i < m; ++i) {
    const double b = std::sqrt(static_cast<double>(i));
    jac(i, i - 1) = b;
    jac(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(jac);
  Vec x = es.eigenvalues();  // ascending
  Vec w(m);
  for (int i = 0; i < m; ++i) {
    const double v = es.eigenvectors()(0, i);
    w[i] = v * v;
  }
  for (int i = 0; i < m / 2; ++i) {
    const int j = m - 1 - i;
    const double mag = 0.5 * (std::abs(x[i]) + std::abs(x[j]));
    x[i] = -mag;
    x[j] = mag;
    const double wm = 0.5 * (w[i] + w[j]);
    w[i] = wm;
    w[j] = wm;
  }
  if (m % 2 == 1) x[m / 2] = 0.0;
  return {x, w};
}

const std::pair<Vec, Vec>& gauss_hermite_1d(int m) {
  static std::mutex mu;
  static std::map<int, std::pair<Vec, Vec>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(m);
  if (it == cache.end()) it = cache.emplace(m, gauss_hermite_1d_uncached(m)).first;
  return it->second;
}

}  // namespace

WeightedPoints unit_rule(const CubatureRule& rule, int dim, std::int64_t budget) {
  if (dim <= 0) throw DimensionMismatch("unit_rule: dim must be positive");
  WeightedPoints out;
  switch (rule.kind) {
    case RuleKind::single_point: {
      out.points = Mat::Zero(dim, 1);
      out.weights = Vec::Ones(1);
      return out;
    }
    case RuleKind::spherical: {
      const int n = 2 * dim;
      out.points = Mat::Zero(dim, n);
      out.weights = Vec::Constant(n, 1.0 / n);
      const double r = std::sqrt(static_cast<double>(dim));
      for (int i = 0; i < dim; ++i) {
        out.points(i, i) = r;
        out.points(i, dim + i) = -r;
      }
      return out;
    }
    case RuleKind::unscented: {
      if (dim + rule.kappa <= 0.0)
        throw InvalidKappa("unscented rule needs dim + kappa > 0, got kappa = " +
                           std::to_string(rule.kappa));
      const int n = 2 * dim + 1;
      out.points = Mat::Zero(dim, n);
      out.weights = Vec::Constant(n, 1.0 / (2.0 * (dim + rule.kappa)));
      out.weights[0] = rule.kappa / (dim + rule.kappa);
      const double r = std::sqrt(dim + rule.kappa);
      for (int i = 0; i < dim; ++i) {
        out.points(i, 1 + i) = r;
        out.points(i, 1 + dim + i) = -r;
      }
      return out;
    }
    case RuleKind::gauss_hermite: {
      const int m = rule.order;
      if (m < 1) throw ConfigError("gauss_hermite order must be >= 1");
      std::int64_t n = 1;
      for (int i = 0; i < dim; ++i) {
        n *= m;
        if (n > budget)
          throw PointBudgetExceeded("gauss_hermite " + std::to_string(m) + "^" +
                                    std::to_string(dim) + " exceeds point budget " +
                                    std::to_string(budget));
      }
      const auto& [x1, w1] = gauss_hermite_1d(m);
      out.points.resize(dim, n);
      out.weights = Vec::Ones(n);
      // Tensor product, first dimension varying slowest.
      std::int64_t repeat = n;
      for (int d = 0; d < dim; ++d) {
        repeat /= m;
        for (std::int64_t c = 0; c < n; ++c) {
          const int idx = static_cast<int>((c / repeat) % m);
          out.points(d, c) = x1[idx];
          out.weights[c] *= w1[idx];
        }
      }
      return out;
    }
  }
  throw ConfigError("unit_rule: unknown rule kind");
}

Mat matrix_sqrt(const Mat& s) {
  if (s.rows() != s.cols()) throw DimensionMismatch("matrix_sqrt: matrix not square");
  const int d = static_cast<int>(s.rows());
  const Mat sym = 0.5 * (s + s.transpose());
  const double scale = sym.trace() / d;
  double tau = 0.0;
  for (;;) {
    Eigen::LLT<Mat> llt(tau == 0.0 ? sym : Mat(sym + tau * Mat::Identity(d, d)));
    if (llt.info() == Eigen::Success) {
      Mat l = llt.matrixL();
      bool ok = true;
      for (int i = 0; i < d; ++i)
        if (!std::isfinite(l(i, i)) || l(i, i) <= 0.0) ok = false;
      if (ok) return l;
    }
    if (!(scale > 0.0))
      throw SqrtFailure("matrix_sqrt: non-positive trace, cannot jitter");
    if (tau == 0.0)
      tau = 1e-12 * scale;
    else
      tau *= 10.0;
    if (tau > 1e-6 * scale)
      throw SqrtFailure("matrix_sqrt: jitter ladder exhausted at tau = " +
                        std::to_string(tau));
  }
}

SigmaPoints make_sigma_points(const Vec& mu, const Mat& sigma, const WeightedPoints& unit) {
  if (mu.size() != sigma.rows() || sigma.rows() != sigma.cols() ||
      unit.points.rows() != mu.size())
    throw DimensionMismatch("make_sigma_points: inconsistent dimensions");
  SigmaPoints pts;
  const Mat l = matrix_sqrt(sigma);
  pts.centered = l * unit.points;
  pts.x = pts.centered.colwise() + mu;
  pts.weights = unit.weights;
  return pts;
}

FactorMoments expect_moments(const std::function<double(const Vec&)>& phi,
                             const SigmaPoints& pts) {
  const int dim = static_cast<int>(pts.x.rows());
  const int n = static_cast<int>(pts.x.cols());
  FactorMoments m;
  m.column = Vec::Zero(dim);
  m.matrix = Mat::Zero(dim, dim);
  Vec x(dim);
  for (int c = 0; c < n; ++c) {
    x = pts.x.col(c);
    const double v = phi(x);
    if (!std::isfinite(v))
      throw NonFiniteFactor("factor evaluated non-finite at a sigmapoint");
    const double wv = pts.weights[c] * v;
    m.scalar += wv;
    m.column.noalias() += wv * pts.centered.col(c);
    m.matrix.noalias() += wv * (pts.centered.col(c) * pts.centered.col(c).transpose());
  }
  m.matrix = 0.5 * (m.matrix + m.matrix.transpose()).eval();
  return m;
}

FactorMoments expect_moments(const std::function<double(const Vec&)>& phi, const Vec& mu,
                             const Mat& sigma, const WeightedPoints& unit) {
  return expect_moments(phi, make_sigma_points(mu, sigma, unit));
}

}  // namespace esgvi
