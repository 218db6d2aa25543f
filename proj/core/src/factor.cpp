#include "esgvi/factor.hpp"

#include <cmath>
#include <set>
#include <string>

namespace esgvi {
namespace {

Mat spd_inverse(const Mat& w, const char* what) {
  if (w.rows() != w.cols() || w.rows() == 0)
    throw DimensionMismatch(std::string(what) + ": covariance not square");
  Eigen::LLT<Mat> llt(Mat(0.5 * (w + w.transpose())));
  if (llt.info() != Eigen::Success)
    throw NonSpdCovariance(std::string(what) + ": covariance is not SPD");
  return llt.solve(Mat::Identity(w.rows(), w.rows()));
}

}  // namespace

Factor::Factor(std::vector<int> variables) : vars_(std::move(variables)) {
  if (vars_.empty()) throw DimensionMismatch("factor touches no blocks");
  std::set<int> uniq(vars_.begin(), vars_.end());
  if (static_cast<int>(uniq.size()) != static_cast<int>(vars_.size()))
    throw DimensionMismatch("factor lists a block twice");
}

Vec Factor::grad(const Vec&) const {
  throw MissingDerivatives("factor has no analytic gradient");
}
Mat Factor::hess(const Vec&) const {
  throw MissingDerivatives("factor has no analytic Hessian");
}
int Factor::error_dim() const { throw MissingErrorForm("factor has no error form"); }
Vec Factor::error(const Vec&) const { throw MissingErrorForm("factor has no error form"); }
Mat Factor::error_jacobian(const Vec&) const {
  throw MissingErrorForm("factor has no error form");
}
const Mat& Factor::noise_cov() const { throw MissingErrorForm("factor has no error form"); }
void Factor::set_noise_cov(const Mat&) {
  throw MissingErrorForm("factor has no error form");
}

ErrorFormFactor::ErrorFormFactor(std::vector<int> variables, Mat w)
    : Factor(std::move(variables)) {
  set_noise_cov(w);
}

void ErrorFormFactor::set_noise_cov(const Mat& w) {
  winv_ = spd_inverse(w, "ErrorFormFactor");
  w_ = 0.5 * (w + w.transpose());
}

double ErrorFormFactor::phi(const Vec& x) const {
  const Vec e = error(x);
  return 0.5 * e.dot(winv_ * e);
}

Vec ErrorFormFactor::grad(const Vec& x) const {
  return error_jacobian(x).transpose() * (winv_ * error(x));
}

Mat ErrorFormFactor::hess(const Vec& x) const {
  const Mat j = error_jacobian(x);
  Mat h = j.transpose() * winv_ * j;
  if (!is_quadratic()) {
    const Vec we = winv_ * error(x);
    for (int i = 0; i < error_dim(); ++i)
      if (we[i] != 0.0) h += we[i] * error_row_hessian(x, i);
  }
  return h;
}

Mat ErrorFormFactor::error_row_hessian(const Vec& x, int) const {
  return Mat::Zero(x.size(), x.size());
}

// --- gaussian prior ------------------------------------------------------------

namespace {

class GaussianPriorFactor final : public ErrorFormFactor {
 public:
  GaussianPriorFactor(int block, Vec mean, Mat cov)
      : ErrorFormFactor({block}, std::move(cov)), mean_(std::move(mean)) {
    if (mean_.size() != noise_cov().rows())
      throw DimensionMismatch("gaussian_prior_factor: mean/cov dims differ");
  }
  bool is_quadratic() const override { return true; }
  Vec error(const Vec& x) const override {
    if (x.size() != mean_.size())
      throw DimensionMismatch("gaussian_prior_factor: state dim mismatch");
    return x - mean_;
  }
  Mat error_jacobian(const Vec& x) const override {
    return Mat::Identity(x.size(), x.size());
  }

 private:
  Vec mean_;
};

// --- constant velocity motion prior ---------------------------------------------

class ConstantVelocityFactor final : public ErrorFormFactor {
 public:
  ConstantVelocityFactor(std::vector<int> vars, int d, double dt, const Mat& qc)
      : ErrorFormFactor(std::move(vars), make_q(dt, qc)), d_(d) {
    a_ = Mat::Identity(2 * d_, 2 * d_);
    a_.topRightCorner(d_, d_) = dt * Mat::Identity(d_, d_);
    j_ = Mat::Zero(2 * d_, 4 * d_);
    j_.leftCols(2 * d_) = -a_;
    j_.rightCols(2 * d_) = Mat::Identity(2 * d_, 2 * d_);
  }
  bool is_quadratic() const override { return true; }
  Vec error(const Vec& x) const override {
    if (x.size() != 4 * d_)
      throw DimensionMismatch("constant_velocity_factor: state dim mismatch");
    return x.tail(2 * d_) - a_ * x.head(2 * d_);
  }
  Mat error_jacobian(const Vec&) const override { return j_; }

  static Mat make_q(double dt, const Mat& qc) {
    if (dt <= 0.0) throw InvalidTimestep("constant_velocity_factor: dt must be > 0");
    if (qc.rows() != qc.cols() || qc.rows() == 0)
      throw DimensionMismatch("constant_velocity_factor: Qc not square");
    const int d = static_cast<int>(qc.rows());
    Mat q(2 * d, 2 * d);
    q.topLeftCorner(d, d) = (dt * dt * dt / 3.0) * qc;
    q.topRightCorner(d, d) = (dt * dt / 2.0) * qc;
    q.bottomLeftCorner(d, d) = (dt * dt / 2.0) * qc;
    q.bottomRightCorner(d, d) = dt * qc;
    return q;
  }

 private:
  int d_;
  Mat a_, j_;
};

// --- stereo disparity ------------------------------------------------------------

// Shared math for e = y - f b / u with u an affine map of the state.
class StereoBase : public ErrorFormFactor {
 public:
  StereoBase(std::vector<int> vars, Vec u_coeff, double y, double fb, double var_r,
             double eps_depth)
      : ErrorFormFactor(std::move(vars), Mat::Constant(1, 1, var_r)),
        u_coeff_(std::move(u_coeff)),
        y_(y),
        fb_(fb),
        eps_(eps_depth) {}

  Vec error(const Vec& x) const override {
    return Vec::Constant(1, y_ - fb_ / depth(x));
  }
  Mat error_jacobian(const Vec& x) const override {
    const double u = depth(x);
    return (fb_ / (u * u)) * u_coeff_.transpose();
  }

 protected:
  Mat error_row_hessian(const Vec& x, int) const override {
    const double u = depth(x);
    return (-2.0 * fb_ / (u * u * u)) * (u_coeff_ * u_coeff_.transpose());
  }
  double depth(const Vec& x) const {
    if (x.size() != u_coeff_.size())
      throw DimensionMismatch("stereo factor: state dim mismatch");
    const double u = u_coeff_.dot(x);
    if (!(u > eps_))
      throw NonPositiveDepth("stereo factor: depth " + std::to_string(u) +
                             " at or behind the camera");
    return u;
  }

 private:
  Vec u_coeff_;  // u = u_coeff . x
  double y_, fb_, eps_;
};

class StereoFactor final : public StereoBase {
 public:
  StereoFactor(int pos, int lm, double y, double f, double b, double var_r, double eps)
      : StereoBase({pos, lm}, (Vec(2) << -1.0, 1.0).finished(), y, f * b, var_r, eps) {}
};

class StereoDepthFactor final : public StereoBase {
 public:
  StereoDepthFactor(int block, double y, double f, double b, double var_r, double eps)
      : StereoBase({block}, Vec::Ones(1), y, f * b, var_r, eps) {}
};

// --- affine-Gaussian -------------------------------------------------------------

class LinearGaussianFactor final : public ErrorFormFactor {
 public:
  LinearGaussianFactor(std::vector<int> blocks, Mat h, Vec z, Mat cov)
      : ErrorFormFactor(std::move(blocks), std::move(cov)), h_(std::move(h)), z_(std::move(z)) {
    if (h_.rows() != z_.size() || h_.rows() != noise_cov().rows())
      throw DimensionMismatch("linear_gaussian_factor: H/z/cov dims differ");
  }
  bool is_quadratic() const override { return true; }
  Vec error(const Vec& x) const override {
    if (x.size() != h_.cols())
      throw DimensionMismatch("linear_gaussian_factor: state dim mismatch");
    return h_ * x - z_;
  }
  Mat error_jacobian(const Vec&) const override { return h_; }

 private:
  Mat h_;
  Vec z_;
};

}  // namespace

FactorPtr gaussian_prior_factor(int block, Vec mean, Mat cov) {
  return std::make_shared<GaussianPriorFactor>(block, std::move(mean), std::move(cov));
}

FactorPtr landmark_prior_factor(int block, double mean, double var) {
  return gaussian_prior_factor(block, Vec::Constant(1, mean), Mat::Constant(1, 1, var));
}

FactorPtr constant_velocity_factor(std::vector<int> prev, std::vector<int> next, double dt,
                                   Mat qc) {
  std::vector<int> vars = prev;
  vars.insert(vars.end(), next.begin(), next.end());
  return std::make_shared<ConstantVelocityFactor>(std::move(vars),
                                                  static_cast<int>(qc.rows()), dt, qc);
}

FactorPtr constant_velocity_factor(int prev, int next, double dt, Mat qc) {
  return constant_velocity_factor(std::vector<int>{prev}, std::vector<int>{next}, dt,
                                  std::move(qc));
}

FactorPtr stereo_factor(int pos_block, int landmark_block, double y, double f, double b,
                        double var_r, double eps_depth) {
  return std::make_shared<StereoFactor>(pos_block, landmark_block, y, f, b, var_r,
                                        eps_depth);
}

FactorPtr stereo_depth_factor(int block, double y, double f, double b, double var_r,
                              double eps_depth) {
  return std::make_shared<StereoDepthFactor>(block, y, f, b, var_r, eps_depth);
}

FactorPtr linear_gaussian_factor(std::vector<int> blocks, Mat h, Vec z, Mat cov) {
  return std::make_shared<LinearGaussianFactor>(std::move(blocks), std::move(h),
                                                std::move(z), std::move(cov));
}

// --- FunctionFactor ---------------------------------------------------------------

FunctionFactor::FunctionFactor(std::vector<int> variables,
                               std::function<double(const Vec&)> phi)
    : Factor(std::move(variables)), phi_(std::move(phi)) {}

FunctionFactor& FunctionFactor::with_derivatives(std::function<Vec(const Vec&)> grad,
                                                 std::function<Mat(const Vec&)> hess,
                                                 bool quadratic) {
  grad_ = std::move(grad);
  hess_ = std::move(hess);
  quadratic_ = quadratic;
  return *this;
}

FunctionFactor& FunctionFactor::with_error_form(std::function<Vec(const Vec&)> error,
                                                std::function<Mat(const Vec&)> error_jac,
                                                Mat w) {
  error_ = std::move(error);
  error_jac_ = std::move(error_jac);
  spd_inverse(w, "FunctionFactor");  // validate
  w_ = 0.5 * (w + w.transpose()).eval();
  return *this;
}

double FunctionFactor::phi(const Vec& x) const { return phi_(x); }
Vec FunctionFactor::grad(const Vec& x) const {
  if (!grad_) return Factor::grad(x);
  return grad_(x);
}
Mat FunctionFactor::hess(const Vec& x) const {
  if (!hess_) return Factor::hess(x);
  return hess_(x);
}
int FunctionFactor::error_dim() const {
  if (!w_) return Factor::error_dim();
  return static_cast<int>(w_->rows());
}
Vec FunctionFactor::error(const Vec& x) const {
  if (!error_) return Factor::error(x);
  return error_(x);
}
Mat FunctionFactor::error_jacobian(const Vec& x) const {
  if (!error_jac_) return Factor::error_jacobian(x);
  return error_jac_(x);
}
const Mat& FunctionFactor::noise_cov() const {
  if (!w_) return Factor::noise_cov();
  return *w_;
}
void FunctionFactor::set_noise_cov(const Mat& w) {
  if (!w_) {
    Factor::set_noise_cov(w);
    return;
  }
  spd_inverse(w, "FunctionFactor");
  w_ = 0.5 * (w + w.transpose()).eval();
}

// --- graph --------------------------------------------------------------------------

int FactorGraph::factor_dim(const Factor& f) const {
  int total = 0;
  for (int b : f.variables()) total += layout.dim(b);
  return total;
}

PrecisionPattern derived_pattern(const FactorGraph& graph) {
  const int nb = graph.layout.num_blocks();
  std::vector<bool> referenced(nb, false);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& f : graph.factors) {
    const auto& vars = f->variables();
    for (std::size_t a = 0; a < vars.size(); ++a) {
      if (vars[a] < 0 || vars[a] >= nb)
        throw DimensionMismatch("derived_pattern: factor block index out of range");
      referenced[vars[a]] = true;
      for (std::size_t b = 0; b <= a; ++b) pairs.emplace_back(vars[a], vars[b]);
    }
  }
  for (int b = 0; b < nb; ++b)
    if (!referenced[b])
      throw UnreferencedBlock("block " + std::to_string(b) + " appears in no factor");
  return PrecisionPattern(graph.layout, pairs);
}

Vec gather_blocks(const Vec& x, const BlockLayout& layout, const std::vector<int>& blocks) {
  if (x.size() != layout.total_dim())
    throw DimensionMismatch("gather_blocks: vector length does not match the layout");
  int dim = 0;
  for (int b : blocks) dim += layout.dim(b);
  Vec out(dim);
  int off = 0;
  for (int b : blocks) {
    out.segment(off, layout.dim(b)) = x.segment(layout.offset(b), layout.dim(b));
    off += layout.dim(b);
  }
  return out;
}

}  // namespace esgvi
