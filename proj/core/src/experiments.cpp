#include "esgvi/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>

#include <Eigen/Cholesky>

namespace esgvi {
namespace {

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs fn(0..n-1), possibly on a small worker pool.  Work is pulled from an
// atomic counter; determinism is the caller's job (per-trial RNG streams and
// trial-indexed result slots).
void for_each_trial(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::min(resolve_threads(threads), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct TrialOutcome {
  bool ok = false;
  TrialMetrics m;
};

void run_mode_trial(const FactorGraph& graph, const GaussianEstimate& init,
                    const SolverConfig& cfg, const Vec& truth, const StateGroups& groups,
                    int trial, TrialOutcome& out) {
  try {
    const SolveResult res = iterate_to_convergence(graph, init, cfg);
    out.m = compute_metrics(truth, res.estimate, groups);
    out.m.trial = trial;
    out.m.iterations = static_cast<int>(res.history.size());
    out.m.converged = res.converged();
    out.m.final_loss = evaluate_loss_reference(graph, res.estimate);
    out.ok = true;
  } catch (const Error&) {
    out.ok = false;
    out.m.trial = trial;
  }
}

void merge_outcomes(ExperimentResult& out, const std::vector<SolverMode>& modes,
                    const std::vector<std::vector<TrialOutcome>>& outcomes) {
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    ModeRunResult r;
    r.mode = modes[mi];
    for (const TrialOutcome& o : outcomes[mi]) {
      if (o.ok) {
        r.trials.push_back(o.m);
      } else {
        ++r.failures;
        r.failed_trials.push_back(o.m.trial);
      }
    }
    out.per_mode.push_back(std::move(r));
  }
}

// Initial precision shared by the experiments: the constant Hessians of the
// prior-role factors (everything before the measurement factors) assembled on
// the full pattern.
BlockSparseSym prior_only_precision(const FactorGraph& graph, int num_prior_factors,
                                    const Vec& prior_mean,
                                    const std::shared_ptr<const PrecisionPattern>& pattern) {
  BlockSparseSym prec(pattern);
  for (int i = 0; i < num_prior_factors; ++i) {
    const Factor& f = *graph.factors[i];
    const Vec mu_k = gather_blocks(prior_mean, graph.layout, f.variables());
    scatter_add(prec, f.variables(), f.hess(mu_k));
  }
  return prec;
}

void validate_slam_params(const StereoSlamParams& p) {
  if (p.steps < 1) throw ConfigError("stereo slam needs at least one step");
  if (!(p.dt > 0.0) || !(p.qc > 0.0) || !(p.var_pos > 0.0) || !(p.var_vel > 0.0) ||
      !(p.var_landmark > 0.0) || !(p.var_r > 0.0) || !(p.f > 0.0) || !(p.b > 0.0))
    throw ConfigError("stereo slam parameters must be positive");
  // Prior-mean depths from both observing positions must clear the floor.
  const double nearest = p.landmark_offset + std::min(0.0, p.dt * p.init_vel);
  if (!(nearest > p.depth_min))
    throw GeometryInfeasible("landmark offset violates the depth floor at the prior mean");
}

int slam_landmark_block(const StereoSlamParams& p, int l) { return 2 * (p.steps + 1) + l - 1; }

double slam_prior_position(const StereoSlamParams& p, int k) {
  return p.init_pos + k * p.dt * p.init_vel;
}

}  // namespace

// --- metrics ---------------------------------------------------------------------------

TrialMetrics compute_metrics(const Vec& truth, const GaussianEstimate& est,
                             const StateGroups& groups) {
  const int n = est.layout().total_dim();
  if (truth.size() != n) throw DimensionMismatch("metrics: truth length does not match state");
  if (groups.names.size() != groups.scalars.size())
    throw DimensionMismatch("metrics: group names and index lists differ in count");
  std::vector<char> seen(n, 0);
  int covered = 0;
  for (const auto& g : groups.scalars) {
    for (int s : g) {
      if (s < 0 || s >= n || seen[s])
        throw DimensionMismatch("metrics: groups must partition the state");
      seen[s] = 1;
      ++covered;
    }
  }
  if (covered != n) throw DimensionMismatch("metrics: groups must partition the state");

  TrialMetrics m;
  const Vec err = est.mean() - truth;
  m.bias.reserve(groups.scalars.size());
  m.mse.reserve(groups.scalars.size());
  for (const auto& g : groups.scalars) {
    double s = 0.0, s2 = 0.0;
    for (int idx : g) {
      s += err[idx];
      s2 += err[idx] * err[idx];
    }
    const double inv = g.empty() ? 0.0 : 1.0 / static_cast<double>(g.size());
    m.bias.push_back(s * inv);
    m.mse.push_back(s2 * inv);
  }
  m.nees = quadratic_form(est.precision(), Vec(truth - est.mean()));
  return m;
}

Aggregate aggregate_values(std::vector<double> values) {
  Aggregate a;
  a.n = static_cast<int>(values.size());
  if (values.empty()) return a;
  double s = 0.0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  auto quantile = [&values](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
  };
  a.median = quantile(0.5);
  a.q25 = quantile(0.25);
  a.q75 = quantile(0.75);
  a.lo = values.front();
  a.hi = values.back();
  return a;
}

// --- 1-D stereo ---------------------------------------------------------------------------

FactorGraph make_stereo_1d_graph(const Stereo1DParams& p, double y) {
  FactorGraph g;
  g.layout = BlockLayout({1});
  g.factors.push_back(
      gaussian_prior_factor(0, Vec::Constant(1, p.mu_p), Mat::Constant(1, 1, p.var_p)));
  g.factors.push_back(stereo_depth_factor(0, y, p.f, p.b, p.var_r));
  return g;
}

Stereo1DTrial draw_stereo_1d_trial(const Stereo1DParams& p, RngStream& rng) {
  Stereo1DTrial t;
  const double sp = std::sqrt(p.var_p);
  t.x_true = p.mu_p + sp * rng.normal();
  while (std::abs(t.x_true - p.mu_p) > p.truncate_sigmas * sp) {
    ++t.redraws;
    t.x_true = p.mu_p + sp * rng.normal();
  }
  t.y = p.f * p.b / t.x_true + std::sqrt(p.var_r) * rng.normal();
  return t;
}

ExperimentResult run_stereo_1d_trials(const Stereo1DParams& p, int n_trials, std::uint64_t seed,
                                      const std::vector<SolverMode>& modes,
                                      const SolverConfig& base, int threads) {
  if (n_trials < 1) throw ConfigError("n_trials must be at least 1");
  if (modes.empty()) throw ConfigError("at least one mode is required");
  ExperimentResult out;
  out.n_trials = n_trials;
  out.groups = StateGroups{{"depth"}, {{0}}};

  const FactorGraph tmpl = make_stereo_1d_graph(p, 0.0);
  const auto pattern = std::make_shared<const PrecisionPattern>(derived_pattern(tmpl));
  const auto plan = make_factorize_plan(pattern);
  const Vec prior_mean = Vec::Constant(1, p.mu_p);
  const BlockSparseSym prior_prec = prior_only_precision(tmpl, 1, prior_mean, pattern);

  std::vector<std::vector<TrialOutcome>> outcomes(
      modes.size(), std::vector<TrialOutcome>(static_cast<std::size_t>(n_trials)));
  std::vector<std::int64_t> redraws(static_cast<std::size_t>(n_trials), 0);

  for_each_trial(n_trials, threads, [&](int t) {
    RngStream rng = RngStream::for_trial(seed, static_cast<std::uint64_t>(t));
    const Stereo1DTrial d = draw_stereo_1d_trial(p, rng);
    redraws[static_cast<std::size_t>(t)] = d.redraws;
    const FactorGraph graph = make_stereo_1d_graph(p, d.y);
    const Vec truth = Vec::Constant(1, d.x_true);
    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
      SolverConfig cfg = base;
      cfg.mode = modes[mi];
      GaussianEstimate init(prior_mean, prior_prec, plan);
      run_mode_trial(graph, init, cfg, truth, out.groups, t,
                     outcomes[mi][static_cast<std::size_t>(t)]);
    }
  });

  for (std::int64_t r : redraws) out.redraws += r;
  merge_outcomes(out, modes, outcomes);
  return out;
}

// --- 1-D stereo localization over a trajectory -------------------------------------------

BlockLayout stereo_slam_layout(const StereoSlamParams& p) {
  validate_slam_params(p);
  return BlockLayout(std::vector<int>(static_cast<std::size_t>(3 * p.steps + 2), 1));
}

StateGroups stereo_slam_groups(const StereoSlamParams& p) {
  validate_slam_params(p);
  StateGroups g;
  g.names = {"position", "velocity", "landmark"};
  g.scalars.resize(3);
  for (int k = 0; k <= p.steps; ++k) {
    g.scalars[0].push_back(2 * k);
    g.scalars[1].push_back(2 * k + 1);
  }
  for (int l = 1; l <= p.steps; ++l) g.scalars[2].push_back(slam_landmark_block(p, l));
  return g;
}

Vec stereo_slam_prior_mean(const StereoSlamParams& p) {
  validate_slam_params(p);
  Vec mu(3 * p.steps + 2);
  for (int k = 0; k <= p.steps; ++k) {
    mu[2 * k] = slam_prior_position(p, k);
    mu[2 * k + 1] = p.init_vel;
  }
  for (int l = 1; l <= p.steps; ++l)
    mu[slam_landmark_block(p, l)] = slam_prior_position(p, l) + p.landmark_offset;
  return mu;
}

FactorGraph make_stereo_slam_graph(const StereoSlamParams& p, const Vec& disparities) {
  validate_slam_params(p);
  const int K = p.steps;
  if (disparities.size() != 2 * K)
    throw DimensionMismatch("expected " + std::to_string(2 * K) + " measurements");
  FactorGraph g;
  g.layout = stereo_slam_layout(p);

  Mat cov0 = Mat::Zero(2, 2);
  cov0(0, 0) = p.var_pos;
  cov0(1, 1) = p.var_vel;
  Vec x0(2);
  x0 << p.init_pos, p.init_vel;
  g.factors.push_back(linear_gaussian_factor({0, 1}, Mat::Identity(2, 2), x0, cov0));

  const Mat qc1 = Mat::Constant(1, 1, p.qc);
  for (int k = 0; k < K; ++k)
    g.factors.push_back(constant_velocity_factor({2 * k, 2 * k + 1}, {2 * k + 2, 2 * k + 3},
                                                 p.dt, qc1));
  for (int l = 1; l <= K; ++l)
    g.factors.push_back(landmark_prior_factor(
        slam_landmark_block(p, l), slam_prior_position(p, l) + p.landmark_offset,
        p.var_landmark));

  const Mat range_h = (Mat(1, 2) << -1.0, 1.0).finished();
  const Mat range_cov = Mat::Constant(1, 1, p.var_r);
  for (int l = 1; l <= K; ++l) {
    const int lm = slam_landmark_block(p, l);
    for (int side = 0; side < 2; ++side) {
      const int pos = 2 * (l - 1 + side);
      const double y = disparities[2 * (l - 1) + side];
      if (p.linear_range) {
        g.factors.push_back(
            linear_gaussian_factor({pos, lm}, range_h, Vec::Constant(1, y), range_cov));
      } else {
        g.factors.push_back(stereo_factor(pos, lm, y, p.f, p.b, p.var_r));
      }
    }
  }
  return g;
}

StereoSlamTrial draw_stereo_slam_trial(const StereoSlamParams& p, RngStream& rng) {
  validate_slam_params(p);
  const int K = p.steps;
  // Rejection sampling for the latent state.  A single landmark draw can be
  // nearly unsatisfiable when the trajectory drifts far above the landmark
  // prior mean (prior position variance grows cubically along the chain), so
  // landmark attempts are capped and a stuck landmark restarts the whole
  // trial draw: the latent distribution is the joint prior conditioned on all
  // measured depths clearing the floor.
  constexpr int kMaxLandmarkAttempts = 100;
  constexpr int kMaxTrialAttempts = 10000;
  StereoSlamTrial t;
  t.truth = Vec(3 * K + 2);

  Mat q(2, 2);
  q << p.dt * p.dt * p.dt / 3.0, p.dt * p.dt / 2.0, p.dt * p.dt / 2.0, p.dt;
  q *= p.qc;
  const Mat lq = Eigen::LLT<Mat>(q).matrixL();
  const double sm = std::sqrt(p.var_landmark);

  for (int attempt = 0; attempt < kMaxTrialAttempts; ++attempt) {
    t.truth[0] = p.init_pos + std::sqrt(p.var_pos) * rng.normal();
    t.truth[1] = p.init_vel + std::sqrt(p.var_vel) * rng.normal();
    for (int k = 1; k <= K; ++k) {
      const double pp = t.truth[2 * (k - 1)], pv = t.truth[2 * (k - 1) + 1];
      const double n1 = rng.normal(), n2 = rng.normal();
      t.truth[2 * k] = pp + p.dt * pv + lq(0, 0) * n1;
      t.truth[2 * k + 1] = pv + lq(1, 0) * n1 + lq(1, 1) * n2;
    }
    bool feasible = true;
    for (int l = 1; l <= K && feasible; ++l) {
      const double mean_m = slam_prior_position(p, l) + p.landmark_offset;
      int attempts = 0;
      for (;;) {
        const double m = mean_m + sm * rng.normal();
        if (m - t.truth[2 * (l - 1)] >= p.depth_min && m - t.truth[2 * l] >= p.depth_min) {
          t.truth[slam_landmark_block(p, l)] = m;
          break;
        }
        ++t.redraws;
        if (++attempts >= kMaxLandmarkAttempts) {
          feasible = false;
          break;
        }
      }
    }
    if (!feasible) continue;

    const double sr = std::sqrt(p.var_r);
    t.disparities = Vec(2 * K);
    for (int l = 1; l <= K; ++l) {
      for (int side = 0; side < 2; ++side) {
        const double depth = t.truth[slam_landmark_block(p, l)] - t.truth[2 * (l - 1 + side)];
        const double noiseless = p.linear_range ? depth : p.f * p.b / depth;
        t.disparities[2 * (l - 1) + side] = noiseless + sr * rng.normal();
      }
    }
    return t;
  }
  throw GeometryInfeasible("no trajectory draw satisfied the depth floor");
}

ExperimentResult run_stereo_slam_trials(const StereoSlamParams& p, int n_trials,
                                        std::uint64_t seed,
                                        const std::vector<SolverMode>& modes,
                                        const SolverConfig& base, int threads) {
  if (n_trials < 1) throw ConfigError("n_trials must be at least 1");
  if (modes.empty()) throw ConfigError("at least one mode is required");
  validate_slam_params(p);
  bool any_expectation_mode = false;
  for (const SolverMode& m : modes) any_expectation_mode |= !m.is_map();
  ExperimentResult out;
  out.n_trials = n_trials;
  out.groups = stereo_slam_groups(p);

  const int K = p.steps;
  const FactorGraph tmpl = make_stereo_slam_graph(p, Vec::Zero(2 * K));
  const auto pattern = std::make_shared<const PrecisionPattern>(derived_pattern(tmpl));
  const auto plan = make_factorize_plan(pattern);
  const Vec prior_mean = stereo_slam_prior_mean(p);
  const int num_prior_factors = 2 * K + 1;
  const BlockSparseSym prior_prec =
      prior_only_precision(tmpl, num_prior_factors, prior_mean, pattern);

  std::vector<std::vector<TrialOutcome>> outcomes(
      modes.size(), std::vector<TrialOutcome>(static_cast<std::size_t>(n_trials)));
  std::vector<std::int64_t> redraws(static_cast<std::size_t>(n_trials), 0);

  for_each_trial(n_trials, threads, [&](int t) {
    RngStream rng = RngStream::for_trial(seed, static_cast<std::uint64_t>(t));
    const StereoSlamTrial d = draw_stereo_slam_trial(p, rng);
    redraws[static_cast<std::size_t>(t)] = d.redraws;
    const FactorGraph graph = make_stereo_slam_graph(p, d.disparities);

    // The prior marginals are wide (position variance grows cubically along
    // the chain), so sigma points straddle the stereo domain when expectation
    // modes start from the raw prior.  Those modes therefore warm-start from a
    // converged MAP Gauss-Newton fit, whose tight marginals keep every
    // evaluation point at a valid depth.  One warm start is shared by all
    // expectation modes of a trial; MAP modes run from the prior directly.
    std::optional<GaussianEstimate> warm;
    bool warm_failed = false;
    if (any_expectation_mode) {
      try {
        SolverConfig warm_cfg = base;
        warm_cfg.mode = SolverMode{ModeKind::map_gn, CubatureRule::single_point()};
        warm = iterate_to_convergence(graph, GaussianEstimate(prior_mean, prior_prec, plan),
                                      warm_cfg)
                   .estimate;
      } catch (const Error&) {
        warm_failed = true;
      }
    }

    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
      SolverConfig cfg = base;
      cfg.mode = modes[mi];
      TrialOutcome& slot = outcomes[mi][static_cast<std::size_t>(t)];
      if (cfg.mode.is_map()) {
        GaussianEstimate init(prior_mean, prior_prec, plan);
        run_mode_trial(graph, init, cfg, d.truth, out.groups, t, slot);
      } else if (warm_failed) {
        slot.ok = false;
        slot.m.trial = t;
      } else {
        run_mode_trial(graph, *warm, cfg, d.truth, out.groups, t, slot);
      }
    }
  });

  for (std::int64_t r : redraws) out.redraws += r;
  merge_outcomes(out, modes, outcomes);
  return out;
}

// --- linear recovery check -----------------------------------------------------------------

RtsCheckResult linear_rts_check(int steps, std::uint64_t seed, double tol) {
  if (steps < 2) throw ConfigError("linear check needs at least two states");
  const int nb = steps;      // one dim-4 block per state: [px, py, vx, vy]
  const int n = 4 * nb;
  const double dt = 0.1;
  const Mat qc = Mat::Identity(2, 2);
  Mat cov0 = Mat::Zero(4, 4);
  cov0.topLeftCorner(2, 2) = Mat::Identity(2, 2);
  cov0.bottomRightCorner(2, 2) = 0.5 * Mat::Identity(2, 2);
  const Mat r_cov = 0.25 * Mat::Identity(2, 2);
  Vec x0(4);
  x0 << 0.0, 0.0, 1.0, 0.5;

  Mat a_cv = Mat::Identity(4, 4);
  a_cv(0, 2) = dt;
  a_cv(1, 3) = dt;
  Mat q_dt(4, 4);
  q_dt.topLeftCorner(2, 2) = dt * dt * dt / 3.0 * qc;
  q_dt.topRightCorner(2, 2) = dt * dt / 2.0 * qc;
  q_dt.bottomLeftCorner(2, 2) = dt * dt / 2.0 * qc;
  q_dt.bottomRightCorner(2, 2) = dt * qc;
  Mat c_meas = Mat::Zero(2, 4);
  c_meas(0, 0) = 1.0;
  c_meas(1, 1) = 1.0;

  // Latent rollout and position measurements.
  RngStream rng(seed);
  const Mat lq = Eigen::LLT<Mat>(q_dt).matrixL();
  const Mat l0 = Eigen::LLT<Mat>(cov0).matrixL();
  const Mat lr = Eigen::LLT<Mat>(r_cov).matrixL();
  auto draw = [&rng](int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    return v;
  };
  Mat truth(4, nb);
  truth.col(0) = x0 + l0 * draw(4);
  for (int k = 1; k < nb; ++k) truth.col(k) = a_cv * truth.col(k - 1) + lq * draw(4);
  Mat z(2, nb);
  for (int k = 0; k < nb; ++k) z.col(k) = c_meas * truth.col(k) + lr * draw(2);

  // Sparse route: graph + prior init, one ESGVI solve.
  FactorGraph graph;
  graph.layout = BlockLayout(std::vector<int>(static_cast<std::size_t>(nb), 4));
  graph.factors.push_back(gaussian_prior_factor(0, x0, cov0));
  for (int k = 1; k < nb; ++k) graph.factors.push_back(constant_velocity_factor(k - 1, k, dt, qc));
  for (int k = 0; k < nb; ++k)
    graph.factors.push_back(linear_gaussian_factor({k}, c_meas, z.col(k), r_cov));

  const auto pattern = std::make_shared<const PrecisionPattern>(derived_pattern(graph));
  Vec prior_mean(n);
  prior_mean.segment(0, 4) = x0;
  for (int k = 1; k < nb; ++k)
    prior_mean.segment(4 * k, 4) = a_cv * prior_mean.segment(4 * (k - 1), 4);
  const BlockSparseSym prior_prec = prior_only_precision(graph, nb, prior_mean, pattern);

  SolverConfig cfg;
  cfg.mode = SolverMode{ModeKind::esgvi_deriv, CubatureRule::gauss_hermite(3)};
  const SolveResult res =
      iterate_to_convergence(graph, GaussianEstimate(prior_mean, prior_prec), cfg);

  // Dense oracle: precision and information vector in the lifted
  // inverse-transition form, solved with dense linear algebra only.
  Mat a_inv = Mat::Identity(n, n);
  for (int k = 1; k < nb; ++k) a_inv.block(4 * k, 4 * (k - 1), 4, 4) = -a_cv;
  Mat q_lift_inv = Mat::Zero(n, n);
  q_lift_inv.topLeftCorner(4, 4) = cov0.inverse();
  for (int k = 1; k < nb; ++k) q_lift_inv.block(4 * k, 4 * k, 4, 4) = q_dt.inverse();
  Mat c_lift = Mat::Zero(2 * nb, n);
  Vec z_all(2 * nb);
  for (int k = 0; k < nb; ++k) {
    c_lift.block(2 * k, 4 * k, 2, 4) = c_meas;
    z_all.segment(2 * k, 2) = z.col(k);
  }
  const Mat r_lift_inv =
      Eigen::VectorXd::Constant(2 * nb, 1.0 / r_cov(0, 0)).asDiagonal().toDenseMatrix();
  const Mat p_dense =
      a_inv.transpose() * q_lift_inv * a_inv + c_lift.transpose() * r_lift_inv * c_lift;
  Vec u = Vec::Zero(n);
  u.segment(0, 4) = x0;
  const Vec b = a_inv.transpose() * (q_lift_inv * u) + c_lift.transpose() * (r_lift_inv * z_all);
  const Vec mu_dense = p_dense.ldlt().solve(b);
  const Mat sigma_dense = p_dense.ldlt().solve(Mat::Identity(n, n));

  RtsCheckResult out;
  out.iterations = static_cast<int>(res.history.size());
  out.one_full_step = !res.history.empty() && res.history.front().accepted &&
                      res.history.front().step_scale == 1.0;
  out.mean_residual = (res.estimate.mean() - mu_dense).norm() / std::max(1.0, mu_dense.norm());
  out.precision_residual =
      (res.estimate.precision().to_dense() - p_dense).norm() / p_dense.norm();

  const PartialCovariance& pc = res.estimate.covariance();
  const PrecisionPattern& fill = pc.pattern();
  const BlockLayout& lay = fill.layout();
  double cov_res = 0.0;
  for (int e = 0; e < fill.num_entries(); ++e) {
    const int i = fill.entry_row(e), j = fill.entry_col(e);
    const Mat ref = sigma_dense.block(lay.offset(i), lay.offset(j), lay.dim(i), lay.dim(j));
    const double denom = std::max(1.0, ref.norm());
    cov_res = std::max(cov_res, (Mat(pc.block(e)) - ref).norm() / denom);
  }
  out.covariance_residual = cov_res;
  out.pass = res.converged() && out.one_full_step && out.mean_residual <= tol &&
             out.precision_residual <= tol && out.covariance_residual <= tol;
  return out;
}

}  // namespace esgvi
