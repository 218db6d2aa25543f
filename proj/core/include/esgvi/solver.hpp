#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "esgvi/cubature.hpp"
#include "esgvi/factor.hpp"
#include "esgvi/takahashi.hpp"

namespace esgvi {

// How the per-factor expectations are evaluated.  The two map modes are the
// degenerate single-point members of the same family; gn modes replace the
// expected Hessian by the Gauss-Newton surrogate built from the error form.
enum class ModeKind { map_newton, map_gn, esgvi_deriv, esgvi_deriv_free, esgvi_gn };

struct SolverMode {
  ModeKind kind = ModeKind::esgvi_deriv;
  CubatureRule rule = CubatureRule::gauss_hermite(3);

  bool is_map() const { return kind == ModeKind::map_newton || kind == ModeKind::map_gn; }
  bool uses_gn() const { return kind == ModeKind::map_gn || kind == ModeKind::esgvi_gn; }
  // Map modes collapse every expectation to the mean.
  CubatureRule effective_rule() const {
    return is_map() ? CubatureRule::single_point() : rule;
  }
};

struct SolverConfig {
  SolverMode mode;
  double step_shrink = 0.95;     // backtracking base; proposals use shrink^B
  int max_backtracks = 100;
  double rel_tol = 1e-8;         // relative loss-change convergence threshold
  double abs_tol = 1e-12;
  int max_iters = 50;
  std::int64_t point_budget = 1'000'000;  // cap on sigmapoints per factor
  int dense_cap = 50;                     // cap for the dense loss-derivative helper
};

// Mean and block-sparse precision of the variational Gaussian, with lazily
// cached factorization and partial covariance.  A fully-cached estimate is
// immutable and shareable; the caches are built on first use (which is when
// an SPD violation surfaces as NotPositiveDefinite).
class GaussianEstimate {
 public:
  GaussianEstimate(Vec mean, BlockSparseSym precision);
  GaussianEstimate(Vec mean, BlockSparseSym precision,
                   std::shared_ptr<const FactorizePlan> plan);

  const BlockLayout& layout() const { return precision_.pattern().layout(); }
  const Vec& mean() const { return mean_; }
  const BlockSparseSym& precision() const { return precision_; }
  const std::shared_ptr<const FactorizePlan>& plan() const { return plan_; }

  // Cached LDL^T of the precision; throws NotPositiveDefinite when invalid.
  const LdlFactors& factors() const;
  // Cached covariance blocks on the fill pattern.
  const PartialCovariance& covariance() const;
  bool caches_built() const { return ldl_.has_value() && cov_.has_value(); }

  double log_det_precision() const { return factors().log_det(); }

  // Mean / covariance of the marginal over an ordered block subset.
  Vec sub_mean(const std::vector<int>& blocks) const;
  Mat marginal(const std::vector<int>& blocks) const;

 private:
  Vec mean_;
  BlockSparseSym precision_;
  std::shared_ptr<const FactorizePlan> plan_;
  mutable std::optional<LdlFactors> ldl_;
  mutable std::optional<PartialCovariance> cov_;
};

struct Marginal {
  Vec mean;
  Mat cov;
};

// Marginal of the estimate over the given blocks (projection of the mean and
// of the partial covariance).
Marginal extract_marginal(const GaussianEstimate& est, const std::vector<int>& blocks);

// One assembled update system: the candidate new precision (expected Hessian
// or its Gauss-Newton surrogate, on the estimate's pattern) and the
// already-negated right-hand side, so the mean step solves precision * dmu = rhs.
struct AssembledSystem {
  BlockSparseSym precision;
  Vec rhs;
};

// Newton-style assembly.  Per factor, the expected gradient/Hessian are
// evaluated per the mode: analytic derivatives at sigmapoints (esgvi_deriv),
// phi-only moments pushed through the marginal precision (esgvi_deriv_free),
// or derivatives at the mean (map modes and constant-Hessian factors, where
// the Gaussian expectation is exact).
AssembledSystem assemble_newton_system(const FactorGraph& graph, const GaussianEstimate& est,
                                       const SolverMode& mode,
                                       std::int64_t point_budget = 1'000'000);

// Gauss-Newton assembly from the error form: Ebar = E[e (x-mu)^T] Sigma_kk^-1
// (the expected error Jacobian; evaluated analytically at the mean for the
// single-point rule and for affine errors), contributing Ebar^T W^-1 Ebar and
// -Ebar^T W^-1 E[e].
AssembledSystem assemble_gn_system(const FactorGraph& graph, const GaussianEstimate& est,
                                   const CubatureRule& rule,
                                   std::int64_t point_budget = 1'000'000);

// Variational loss V(q) = sum_k E[phi_k] + 1/2 ln|Sigma^-1|.  Expectations
// follow the mode's rule (map modes: value at the mean); constant-Hessian
// factors use the exact closed form phi(mu) + 1/2 tr(H Sigma_kk) whenever the
// rule is not single-point.
double evaluate_loss(const FactorGraph& graph, const GaussianEstimate& est,
                     const SolverConfig& config);

// Mode-independent loss for comparing estimates produced by different modes:
// closed-form expectations for constant-Hessian factors, high-order
// Gauss-Hermite for the rest, entropy included.
double evaluate_loss_reference(const FactorGraph& graph, const GaussianEstimate& est,
                               int gh_order = 10, std::int64_t point_budget = 1'000'000);

struct IterationRecord {
  int iter = 0;
  double loss = 0.0;        // decision objective after this iteration
  double step_scale = 0.0;  // shrink^B actually applied (0 when rejected)
  double dmu_norm = 0.0;
  bool accepted = false;
};

enum class SolveStatus { converged, max_iterations, backtrack_exhausted };
const char* to_string(SolveStatus s);

struct SolveResult {
  GaussianEstimate estimate;
  std::vector<IterationRecord> history;
  SolveStatus status = SolveStatus::max_iterations;
  double final_loss = 0.0;  // decision objective at the returned estimate
  int gn_fallbacks = 0;     // Newton iterations rescued by the gn surrogate

  bool converged() const { return status == SolveStatus::converged; }
};

// The full update loop: assemble, factorize (falling back to the gn surrogate
// once if the Newton system is indefinite), solve for dmu, then backtrack mu
// and the precision jointly by shrink^B until the decision objective stops
// increasing (slack 1e-12 * (1 + |V|)).  The decision objective is V(q) for
// esgvi modes and the single-point expectation alone for map modes (whose
// entropy term would otherwise forbid the classic Newton-on-phi step).
// Throws DivergedIndefinite when no proposal factorizes; returns a result
// flagged backtrack_exhausted when proposals factorize but the objective
// cannot be decreased.
SolveResult iterate_to_convergence(const FactorGraph& graph, GaussianEstimate init,
                                   const SolverConfig& config);

// Dense small-problem derivatives of V(q), computed purely from per-factor
// phi-moments (no analytic factor derivatives), as an independent route to
// the update equations:
//   mean_grad        = dV/dmu^T
//   expected_hessian = d2V/dmu^T dmu = scatter of per-factor Stein Hessians
//   precision_grad   = dV/dSigma^-1 = -1/2 Sigma H Sigma + 1/2 Sigma
struct DenseLossGradients {
  double loss = 0.0;
  Vec mean_grad;
  Mat expected_hessian;
  Mat precision_grad;
};
DenseLossGradients loss_gradients_dense(const FactorGraph& graph, const GaussianEstimate& est,
                                        const CubatureRule& rule,
                                        const SolverConfig& config = {});

// M-step of the noise-covariance EM: W = (1/K) sum_k E_{q_k}[e_k e_k^T] over
// the listed factors (all sharing one error dimension), evaluated by
// cubature.  The result is symmetrized and nudged SPD by a jitter ladder;
// throws DegenerateW when it stays rank-deficient.
Mat em_update_measurement_cov(const FactorGraph& graph, const GaussianEstimate& est,
                              const std::vector<int>& factor_indices,
                              const CubatureRule& rule,
                              std::int64_t point_budget = 1'000'000);

}  // namespace esgvi
