#include "esgvi/solver.hpp"

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Cholesky>

namespace esgvi {
namespace {

// Acceptance slack for the backtracking comparison: tiny objective increases
// within floating-point noise are treated as ties.
constexpr double kAcceptSlack = 1e-12;

void scatter_vec(Vec& g, const BlockLayout& layout, const std::vector<int>& blocks,
                 const Vec& local) {
  int off = 0;
  for (int b : blocks) {
    g.segment(layout.offset(b), layout.dim(b)) += local.segment(off, layout.dim(b));
    off += layout.dim(b);
  }
}

void scatter_dense(Mat& h, const BlockLayout& layout, const std::vector<int>& blocks,
                   const Mat& local) {
  int roff = 0;
  for (int br : blocks) {
    int coff = 0;
    for (int bc : blocks) {
      h.block(layout.offset(br), layout.offset(bc), layout.dim(br), layout.dim(bc)) +=
          local.block(roff, coff, layout.dim(br), layout.dim(bc));
      coff += layout.dim(bc);
    }
    roff += layout.dim(br);
  }
}

Eigen::LLT<Mat> llt_or_throw(const Mat& s, const char* what) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(what);
  return llt;
}

void check_graph_estimate(const FactorGraph& graph, const GaussianEstimate& est) {
  if (!(graph.layout == est.layout()))
    throw DimensionMismatch("graph and estimate use different block layouts");
}

void check_config(const SolverConfig& c) {
  if (!(c.step_shrink > 0.0 && c.step_shrink < 1.0))
    throw ConfigError("step_shrink must lie in (0, 1)");
  if (!(c.rel_tol > 0.0) || !(c.abs_tol > 0.0)) throw ConfigError("tolerances must be positive");
  if (c.max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (c.max_backtracks < 0) throw ConfigError("max_backtracks must be non-negative");
  if (c.point_budget < 1) throw ConfigError("point_budget must be at least 1");
  if (c.dense_cap < 1) throw ConfigError("dense_cap must be at least 1");
}

// E[phi] for one factor under the given rule.  `sigma` may be null for the
// single-point rule.  Constant-Hessian factors use the exact closed form
// E[phi] = phi(mu) + 1/2 tr(H Sigma) whenever the rule integrates.
double expected_phi_value(const Factor& f, const Vec& mu_k, const Mat* sigma,
                          const CubatureRule& rule, std::int64_t budget) {
  if (rule.is_single_point()) {
    const double v = f.phi(mu_k);
    if (!std::isfinite(v)) throw NonFiniteFactor("factor value non-finite at the mean");
    return v;
  }
  if (f.is_quadratic()) {
    const double v = f.phi(mu_k) + 0.5 * f.hess(mu_k).cwiseProduct(*sigma).sum();
    if (!std::isfinite(v)) throw NonFiniteFactor("closed-form factor expectation non-finite");
    return v;
  }
  const WeightedPoints unit = unit_rule(rule, static_cast<int>(mu_k.size()), budget);
  const SigmaPoints pts = make_sigma_points(mu_k, *sigma, unit);
  double s = 0.0;
  for (int l = 0; l < pts.weights.size(); ++l) {
    const Vec x = pts.x.col(l);
    const double v = f.phi(x);
    if (!std::isfinite(v)) throw NonFiniteFactor("factor value non-finite at a sigmapoint");
    s += pts.weights[l] * v;
  }
  return s;
}

// Sum of expected factor values; adds the entropy term when asked.  This is
// both the public loss (entropy always on) and the iteration's decision
// objective (entropy off for map modes, whose classic Newton-on-phi step the
// entropy term would veto).
double loss_value(const FactorGraph& graph, const GaussianEstimate& est, const SolverMode& mode,
                  std::int64_t budget, bool with_entropy) {
  const CubatureRule rule = mode.effective_rule();
  const bool need_sigma = !rule.is_single_point();
  double s = 0.0;
  for (const FactorPtr& f : graph.factors) {
    const Vec mu_k = gather_blocks(est.mean(), graph.layout, f->variables());
    if (need_sigma) {
      const Mat sigma = est.marginal(f->variables());
      s += expected_phi_value(*f, mu_k, &sigma, rule, budget);
    } else {
      s += expected_phi_value(*f, mu_k, nullptr, rule, budget);
    }
  }
  if (with_entropy) s += 0.5 * est.log_det_precision();
  return s;
}

double decision_objective(const FactorGraph& graph, const GaussianEstimate& est,
                          const SolverConfig& config) {
  return loss_value(graph, est, config.mode, config.point_budget, !config.mode.is_map());
}

}  // namespace

// --- GaussianEstimate ---------------------------------------------------------

GaussianEstimate::GaussianEstimate(Vec mean, BlockSparseSym precision)
    : mean_(std::move(mean)), precision_(std::move(precision)) {
  if (!precision_.pattern_ptr()) throw DimensionMismatch("estimate needs a precision pattern");
  if (mean_.size() != precision_.pattern().layout().total_dim())
    throw DimensionMismatch("mean length does not match the layout dimension");
  plan_ = make_factorize_plan(precision_.pattern_ptr());
}

GaussianEstimate::GaussianEstimate(Vec mean, BlockSparseSym precision,
                                   std::shared_ptr<const FactorizePlan> plan)
    : mean_(std::move(mean)), precision_(std::move(precision)), plan_(std::move(plan)) {
  if (!precision_.pattern_ptr()) throw DimensionMismatch("estimate needs a precision pattern");
  if (mean_.size() != precision_.pattern().layout().total_dim())
    throw DimensionMismatch("mean length does not match the layout dimension");
  if (!plan_) {
    plan_ = make_factorize_plan(precision_.pattern_ptr());
  } else if (!(*plan_->input == precision_.pattern())) {
    throw PatternViolation("factorize plan was built for a different pattern");
  }
}

const LdlFactors& GaussianEstimate::factors() const {
  if (!ldl_) ldl_ = ldl_factorize(precision_, plan_);
  return *ldl_;
}

const PartialCovariance& GaussianEstimate::covariance() const {
  if (!cov_) cov_ = takahashi_partial_inverse(factors());
  return *cov_;
}

Vec GaussianEstimate::sub_mean(const std::vector<int>& blocks) const {
  return gather_blocks(mean_, layout(), blocks);
}

Mat GaussianEstimate::marginal(const std::vector<int>& blocks) const {
  return covariance().marginal(blocks);
}

Marginal extract_marginal(const GaussianEstimate& est, const std::vector<int>& blocks) {
  return Marginal{est.sub_mean(blocks), est.marginal(blocks)};
}

// --- system assembly ----------------------------------------------------------

AssembledSystem assemble_newton_system(const FactorGraph& graph, const GaussianEstimate& est,
                                       const SolverMode& mode, std::int64_t point_budget) {
  check_graph_estimate(graph, est);
  const BlockLayout& layout = graph.layout;
  const CubatureRule rule = mode.effective_rule();
  AssembledSystem sys{BlockSparseSym(est.precision().pattern_ptr()),
                      Vec::Zero(layout.total_dim())};
  Vec grad_sum = Vec::Zero(layout.total_dim());
  for (std::size_t fi = 0; fi < graph.factors.size(); ++fi) {
    const Factor& f = *graph.factors[fi];
    const std::vector<int>& vars = f.variables();
    const Vec mu_k = gather_blocks(est.mean(), layout, vars);
    const int dk = static_cast<int>(mu_k.size());
    Vec g;
    Mat h;
    if (rule.is_single_point() || f.is_quadratic()) {
      // Exact for constant-Hessian factors (grad is affine, hess constant).
      g = f.grad(mu_k);
      h = f.hess(mu_k);
    } else if (mode.kind == ModeKind::esgvi_deriv) {
      const Mat sigma = est.marginal(vars);
      const SigmaPoints pts = make_sigma_points(mu_k, sigma, unit_rule(rule, dk, point_budget));
      g = Vec::Zero(dk);
      h = Mat::Zero(dk, dk);
      for (int l = 0; l < pts.weights.size(); ++l) {
        const Vec x = pts.x.col(l);
        g += pts.weights[l] * f.grad(x);
        h += pts.weights[l] * f.hess(x);
      }
    } else {
      // Derivative-free: phi-only moments pushed through the marginal
      // precision, E[dphi] = S^-1 c and E[d2phi] = S^-1 M S^-1 - E[phi] S^-1.
      const Mat sigma = est.marginal(vars);
      const FactorMoments m = expect_moments([&f](const Vec& x) { return f.phi(x); }, mu_k,
                                             sigma, unit_rule(rule, dk, point_budget));
      const Eigen::LLT<Mat> llt = llt_or_throw(sigma, "factor marginal covariance is not SPD");
      const Mat sigma_inv = llt.solve(Mat::Identity(dk, dk));
      g = llt.solve(m.column);
      h = sigma_inv * m.matrix * sigma_inv - m.scalar * sigma_inv;
    }
    h = (0.5 * (h + h.transpose())).eval();
    if (!g.allFinite() || !h.allFinite())
      throw NonFiniteFactor("factor " + std::to_string(fi) + " produced non-finite derivatives");
    scatter_vec(grad_sum, layout, vars, g);
    scatter_add(sys.precision, vars, h);
  }
  sys.rhs = -grad_sum;
  return sys;
}

AssembledSystem assemble_gn_system(const FactorGraph& graph, const GaussianEstimate& est,
                                   const CubatureRule& rule, std::int64_t point_budget) {
  check_graph_estimate(graph, est);
  const BlockLayout& layout = graph.layout;
  AssembledSystem sys{BlockSparseSym(est.precision().pattern_ptr()),
                      Vec::Zero(layout.total_dim())};
  Vec grad_sum = Vec::Zero(layout.total_dim());
  for (std::size_t fi = 0; fi < graph.factors.size(); ++fi) {
    const Factor& f = *graph.factors[fi];
    const std::vector<int>& vars = f.variables();
    const Vec mu_k = gather_blocks(est.mean(), layout, vars);
    const int dk = static_cast<int>(mu_k.size());
    const int ed = f.error_dim();  // throws MissingErrorForm when absent
    Vec ebar;
    Mat ejac;
    if (rule.is_single_point() || f.is_quadratic()) {
      // Affine errors: the statistical Jacobian collapses to the analytic one.
      ebar = f.error(mu_k);
      ejac = f.error_jacobian(mu_k);
    } else {
      const Mat sigma = est.marginal(vars);
      const SigmaPoints pts = make_sigma_points(mu_k, sigma, unit_rule(rule, dk, point_budget));
      ebar = Vec::Zero(ed);
      Mat exm = Mat::Zero(ed, dk);
      for (int l = 0; l < pts.weights.size(); ++l) {
        const Vec x = pts.x.col(l);
        const Vec e = f.error(x);
        if (!e.allFinite()) throw NonFiniteFactor("factor error non-finite at a sigmapoint");
        ebar += pts.weights[l] * e;
        exm += pts.weights[l] * e * pts.centered.col(l).transpose();
      }
      const Eigen::LLT<Mat> llt = llt_or_throw(sigma, "factor marginal covariance is not SPD");
      ejac = llt.solve(exm.transpose()).transpose();  // E[e (x-mu)^T] Sigma^-1
    }
    const Eigen::LLT<Mat> lltw(f.noise_cov());
    if (lltw.info() != Eigen::Success)
      throw NonSpdCovariance("factor " + std::to_string(fi) + " noise covariance is not SPD");
    const Mat winv_ejac = lltw.solve(ejac);
    Mat h = ejac.transpose() * winv_ejac;
    h = (0.5 * (h + h.transpose())).eval();
    const Vec g = winv_ejac.transpose() * ebar;
    if (!g.allFinite() || !h.allFinite())
      throw NonFiniteFactor("factor " + std::to_string(fi) + " produced non-finite terms");
    scatter_vec(grad_sum, layout, vars, g);
    scatter_add(sys.precision, vars, h);
  }
  sys.rhs = -grad_sum;
  return sys;
}

// --- loss -----------------------------------------------------------------------

double evaluate_loss(const FactorGraph& graph, const GaussianEstimate& est,
                     const SolverConfig& config) {
  check_graph_estimate(graph, est);
  return loss_value(graph, est, config.mode, config.point_budget, /*with_entropy=*/true);
}

double evaluate_loss_reference(const FactorGraph& graph, const GaussianEstimate& est,
                               int gh_order, std::int64_t point_budget) {
  check_graph_estimate(graph, est);
  SolverMode ref{ModeKind::esgvi_deriv_free, CubatureRule::gauss_hermite(gh_order)};
  return loss_value(graph, est, ref, point_budget, /*with_entropy=*/true);
}

// --- iteration --------------------------------------------------------------------

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::backtrack_exhausted: return "backtrack_exhausted";
  }
  return "unknown";
}

SolveResult iterate_to_convergence(const FactorGraph& graph, GaussianEstimate init,
                                   const SolverConfig& config) {
  check_config(config);
  check_graph_estimate(graph, init);
  init.factors();  // surface a non-SPD initial precision immediately
  SolveResult out{std::move(init), {}, SolveStatus::converged, 0.0, 0};
  double v_cur = decision_objective(graph, out.estimate, config);
  if (!std::isfinite(v_cur)) throw NonFiniteFactor("loss non-finite at the initial estimate");

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    AssembledSystem sys =
        config.mode.uses_gn()
            ? assemble_gn_system(graph, out.estimate, config.mode.effective_rule(),
                                 config.point_budget)
            : assemble_newton_system(graph, out.estimate, config.mode, config.point_budget);
    std::optional<LdlFactors> sys_ldl;
    try {
      sys_ldl = ldl_factorize(sys.precision, out.estimate.plan());
    } catch (const NotPositiveDefinite&) {
      if (config.mode.uses_gn())
        throw DivergedIndefinite("gn system indefinite at iteration " + std::to_string(iter));
      try {
        sys = assemble_gn_system(graph, out.estimate, config.mode.effective_rule(),
                                 config.point_budget);
        sys_ldl = ldl_factorize(sys.precision, out.estimate.plan());
        ++out.gn_fallbacks;
      } catch (const Error&) {
        throw DivergedIndefinite("newton system indefinite and gn fallback failed at iteration " +
                                 std::to_string(iter));
      }
    }

    const Vec dmu = sys_ldl->solve(sys.rhs);
    const double dmu_norm = dmu.norm();
    BlockSparseSym dprec = sys.precision;
    dprec.add_scaled(out.estimate.precision(), -1.0);

    bool accepted = false;
    bool all_not_pd = true;
    double v_new = v_cur;
    double scale_used = 0.0;
    double s = 1.0;
    for (int b = 0; b <= config.max_backtracks; ++b, s *= config.step_shrink) {
      Vec mean_prop = out.estimate.mean() + s * dmu;
      BlockSparseSym prec_prop = out.estimate.precision();
      prec_prop.add_scaled(dprec, s);
      GaussianEstimate prop(std::move(mean_prop), std::move(prec_prop), out.estimate.plan());
      double v_prop;
      try {
        v_prop = decision_objective(graph, prop, config);
        all_not_pd = false;
      } catch (const NotPositiveDefinite&) {
        continue;
      } catch (const NonFiniteFactor&) {
        all_not_pd = false;
        continue;
      }
      if (!(v_prop <= v_cur + kAcceptSlack * (1.0 + std::abs(v_cur)))) continue;
      accepted = true;
      v_new = v_prop;
      scale_used = s;
      out.estimate = std::move(prop);
      break;
    }

    out.history.push_back({iter, accepted ? v_new : v_cur, scale_used, dmu_norm, accepted});
    if (!accepted) {
      if (all_not_pd)
        throw DivergedIndefinite("no backtracking proposal factorized at iteration " +
                                 std::to_string(iter));
      out.status = SolveStatus::backtrack_exhausted;
      out.final_loss = v_cur;
      return out;
    }
    const double dv = std::abs(v_new - v_cur);
    v_cur = v_new;
    if (dv < config.abs_tol || dv < config.rel_tol * std::abs(v_cur)) {
      out.status = SolveStatus::converged;
      break;
    }
  }
  out.final_loss = v_cur;
  return out;
}

// --- dense loss derivatives -------------------------------------------------------

DenseLossGradients loss_gradients_dense(const FactorGraph& graph, const GaussianEstimate& est,
                                        const CubatureRule& rule, const SolverConfig& config) {
  check_graph_estimate(graph, est);
  const BlockLayout& layout = graph.layout;
  const int n = layout.total_dim();
  if (n > config.dense_cap)
    throw DenseCapExceeded("state dimension " + std::to_string(n) + " exceeds dense cap " +
                           std::to_string(config.dense_cap));
  if (rule.is_single_point())
    throw ConfigError("loss gradients need a non-degenerate cubature rule");

  const Mat p_dense = est.precision().to_dense();
  const Eigen::LLT<Mat> llt = llt_or_throw(p_dense, "precision is not positive definite");
  Mat sigma_dense = llt.solve(Mat::Identity(n, n));
  sigma_dense = (0.5 * (sigma_dense + sigma_dense.transpose())).eval();

  double ephi = 0.0;
  Vec grad = Vec::Zero(n);
  Mat hess = Mat::Zero(n, n);
  for (const FactorPtr& f : graph.factors) {
    const std::vector<int>& vars = f->variables();
    const Vec mu_k = gather_blocks(est.mean(), layout, vars);
    const int dk = static_cast<int>(mu_k.size());
    Mat sigma_kk(dk, dk);
    {
      int roff = 0;
      for (int br : vars) {
        int coff = 0;
        for (int bc : vars) {
          sigma_kk.block(roff, coff, layout.dim(br), layout.dim(bc)) = sigma_dense.block(
              layout.offset(br), layout.offset(bc), layout.dim(br), layout.dim(bc));
          coff += layout.dim(bc);
        }
        roff += layout.dim(br);
      }
    }
    const FactorMoments m =
        expect_moments([&f](const Vec& x) { return f->phi(x); }, mu_k, sigma_kk,
                       unit_rule(rule, dk, config.point_budget));
    const Eigen::LLT<Mat> llts = llt_or_throw(sigma_kk, "factor marginal covariance is not SPD");
    const Mat sigma_inv = llts.solve(Mat::Identity(dk, dk));
    Mat h_k = sigma_inv * m.matrix * sigma_inv - m.scalar * sigma_inv;
    h_k = (0.5 * (h_k + h_k.transpose())).eval();
    ephi += m.scalar;
    scatter_vec(grad, layout, vars, llts.solve(m.column));
    scatter_dense(hess, layout, vars, h_k);
  }
  hess = (0.5 * (hess + hess.transpose())).eval();

  DenseLossGradients out;
  out.loss = ephi + 0.5 * est.log_det_precision();
  out.mean_grad = grad;
  out.expected_hessian = hess;
  Mat pg = -0.5 * sigma_dense * hess * sigma_dense + 0.5 * sigma_dense;
  out.precision_grad = (0.5 * (pg + pg.transpose())).eval();
  return out;
}

// --- EM noise update ----------------------------------------------------------------

Mat em_update_measurement_cov(const FactorGraph& graph, const GaussianEstimate& est,
                              const std::vector<int>& factor_indices, const CubatureRule& rule,
                              std::int64_t point_budget) {
  check_graph_estimate(graph, est);
  if (factor_indices.empty()) throw ConfigError("em update needs at least one factor");
  int ed = -1;
  Mat acc;
  for (int idx : factor_indices) {
    if (idx < 0 || idx >= static_cast<int>(graph.factors.size()))
      throw ConfigError("em factor index out of range: " + std::to_string(idx));
    const Factor& f = *graph.factors[idx];
    const int d = f.error_dim();  // throws MissingErrorForm when absent
    if (ed < 0) {
      ed = d;
      acc = Mat::Zero(ed, ed);
    } else if (d != ed) {
      throw DimensionMismatch("em factors must share one error dimension");
    }
    const std::vector<int>& vars = f.variables();
    const Vec mu_k = gather_blocks(est.mean(), graph.layout, vars);
    if (rule.is_single_point()) {
      const Vec e = f.error(mu_k);
      if (!e.allFinite()) throw NonFiniteFactor("factor error non-finite at the mean");
      acc += e * e.transpose();
    } else {
      const Mat sigma = est.marginal(vars);
      const SigmaPoints pts = make_sigma_points(
          mu_k, sigma, unit_rule(rule, static_cast<int>(mu_k.size()), point_budget));
      for (int l = 0; l < pts.weights.size(); ++l) {
        const Vec x = pts.x.col(l);
        const Vec e = f.error(x);
        if (!e.allFinite()) throw NonFiniteFactor("factor error non-finite at a sigmapoint");
        acc += pts.weights[l] * e * e.transpose();
      }
    }
  }
  acc /= static_cast<double>(factor_indices.size());
  acc = (0.5 * (acc + acc.transpose())).eval();

  // SPD repair ladder, then give up: too few factors to identify W.
  const double tr = acc.trace();
  if (std::isfinite(tr) && tr >= 0.0) {
    double tau = tr > 0.0 ? 1e-12 * tr / ed : 1e-12;
    for (int attempt = 0; attempt < 8; ++attempt, tau *= 10.0) {
      const Mat cand =
          attempt == 0 ? acc : (acc + tau * Mat::Identity(ed, ed)).eval();
      if (Eigen::LLT<Mat>(cand).info() == Eigen::Success) return cand;
    }
  }
  throw DegenerateW("em covariance update is rank-deficient beyond jitter");
}

}  // namespace esgvi
