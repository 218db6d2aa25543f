#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "esgvi/block_layout.hpp"
#include "esgvi/errors.hpp"
#include "esgvi/pattern.hpp"
#include "esgvi/types.hpp"

namespace esgvi {

// One additive term of the negative log joint likelihood, touching an ordered
// subset of state blocks.  Evaluators take/return the concatenation of those
// blocks.  Derivatives and the error form are optional capabilities: the
// derivative-free machinery only ever calls phi().
class Factor {
 public:
  explicit Factor(std::vector<int> variables);
  virtual ~Factor() = default;

  const std::vector<int>& variables() const { return vars_; }

  virtual double phi(const Vec& x) const = 0;

  virtual bool has_derivatives() const { return false; }
  virtual Vec grad(const Vec& x) const;
  virtual Mat hess(const Vec& x) const;

  // Constant Hessian; enables exact Gaussian expectations.
  virtual bool is_quadratic() const { return false; }

  // Error form phi = 1/2 e(x)^T W^{-1} e(x).
  virtual bool has_error_form() const { return false; }
  virtual int error_dim() const;
  virtual Vec error(const Vec& x) const;
  virtual Mat error_jacobian(const Vec& x) const;
  virtual const Mat& noise_cov() const;
  virtual void set_noise_cov(const Mat& w);

 protected:
  std::vector<int> vars_;
};

using FactorPtr = std::shared_ptr<Factor>;

// Common base for factors defined by an error form.  phi/grad/hess are
// derived from e, its Jacobian, and (for non-quadratic factors) the per-row
// error Hessians, which keeps phi = 1/2 e^T W^{-1} e consistent by
// construction.
class ErrorFormFactor : public Factor {
 public:
  ErrorFormFactor(std::vector<int> variables, Mat w);

  double phi(const Vec& x) const override;
  bool has_derivatives() const override { return true; }
  Vec grad(const Vec& x) const override;
  Mat hess(const Vec& x) const override;

  bool has_error_form() const override { return true; }
  int error_dim() const override { return static_cast<int>(w_.rows()); }
  const Mat& noise_cov() const override { return w_; }
  void set_noise_cov(const Mat& w) override;

 protected:
  // Second derivative of error row i (zero for affine error maps).
  virtual Mat error_row_hessian(const Vec& x, int i) const;
  const Mat& noise_info() const { return winv_; }

 private:
  Mat w_, winv_;
};

// --- built-in factor library -------------------------------------------------

// phi = 1/2 (x - mean)^T cov^{-1} (x - mean) on one block.
FactorPtr gaussian_prior_factor(int block, Vec mean, Mat cov);

// Scalar convenience wrapper used for landmark priors.
FactorPtr landmark_prior_factor(int block, double mean, double var);

// White-noise-on-acceleration motion prior between two stacked states
// [position; velocity] of dim 2d each:
//   e = x_next - A x_prev,  A = [[I, dt I], [0, I]],
//   Q = [[dt^3/3 Qc, dt^2/2 Qc], [dt^2/2 Qc, dt Qc]].
// The block lists concatenate to x_prev / x_next (scalar-granular layouts
// pass {p, v}; block-granular layouts pass one index each).
FactorPtr constant_velocity_factor(std::vector<int> prev, std::vector<int> next, double dt,
                                   Mat qc);
FactorPtr constant_velocity_factor(int prev, int next, double dt, Mat qc);

// Stereo disparity of a landmark m seen from position p (both scalar blocks):
//   e = y - f b / (m - p),  phi = e^2 / (2 var_r),
// defined for depth m - p > eps_depth (throws NonPositiveDepth otherwise).
FactorPtr stereo_factor(int pos_block, int landmark_block, double y, double f, double b,
                        double var_r, double eps_depth = 1e-6);

// One-variable special case where the state itself is the depth: e = y - f b / x.
FactorPtr stereo_depth_factor(int block, double y, double f, double b, double var_r,
                              double eps_depth = 1e-6);

// General affine-Gaussian factor: e = H x - z, phi = 1/2 e^T cov^{-1} e.
FactorPtr linear_gaussian_factor(std::vector<int> blocks, Mat h, Vec z, Mat cov);

// Ad-hoc factor from callables; grad/hess/error hooks are optional.
class FunctionFactor : public Factor {
 public:
  FunctionFactor(std::vector<int> variables, std::function<double(const Vec&)> phi);

  FunctionFactor& with_derivatives(std::function<Vec(const Vec&)> grad,
                                   std::function<Mat(const Vec&)> hess,
                                   bool quadratic = false);
  FunctionFactor& with_error_form(std::function<Vec(const Vec&)> error,
                                  std::function<Mat(const Vec&)> error_jac, Mat w);

  double phi(const Vec& x) const override;
  bool has_derivatives() const override { return static_cast<bool>(grad_); }
  Vec grad(const Vec& x) const override;
  Mat hess(const Vec& x) const override;
  bool is_quadratic() const override { return quadratic_; }
  bool has_error_form() const override { return static_cast<bool>(error_); }
  int error_dim() const override;
  Vec error(const Vec& x) const override;
  Mat error_jacobian(const Vec& x) const override;
  const Mat& noise_cov() const override;
  void set_noise_cov(const Mat& w) override;

 private:
  std::function<double(const Vec&)> phi_;
  std::function<Vec(const Vec&)> grad_;
  std::function<Mat(const Vec&)> hess_;
  bool quadratic_ = false;
  std::function<Vec(const Vec&)> error_;
  std::function<Mat(const Vec&)> error_jac_;
  std::optional<Mat> w_;
};

// --- graph --------------------------------------------------------------------

struct FactorGraph {
  BlockLayout layout;
  std::vector<FactorPtr> factors;

  // Concatenated dim of a factor's blocks.
  int factor_dim(const Factor& f) const;
};

// Union of all factor-footprint block pairs.  Throws UnreferencedBlock when a
// block is touched by no factor, DimensionMismatch on out-of-range indices.
PrecisionPattern derived_pattern(const FactorGraph& graph);

// Concatenation of the listed blocks of a stacked vector.
Vec gather_blocks(const Vec& x, const BlockLayout& layout, const std::vector<int>& blocks);

}  // namespace esgvi
