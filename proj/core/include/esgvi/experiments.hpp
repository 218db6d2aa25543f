#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esgvi/rng.hpp"
#include "esgvi/solver.hpp"

namespace esgvi {

// --- problem definitions -------------------------------------------------------

// One-variable stereo range estimation: Gaussian prior on the landmark depth
// plus a single inverse-depth disparity measurement.
struct Stereo1DParams {
  double mu_p = 20.0;   // prior mean [m]
  double var_p = 9.0;   // prior variance [m^2]
  double f = 400.0;     // focal length [px]
  double b = 0.1;       // baseline [m]
  double var_r = 0.09;  // disparity noise variance [px^2]
  double truncate_sigmas = 4.0;  // latent draws are redrawn outside this band
};

// 1-D stereo localization: K+1 [position; velocity] states on a
// white-noise-on-acceleration prior, K landmark depths, and two disparity
// measurements per landmark (from the two consecutive positions preceding
// and at its index).  Scalar-granular block ordering:
// p_0, v_0, ..., p_K, v_K, m_1, ..., m_K.
struct StereoSlamParams {
  int steps = 99;               // K: motion steps == landmarks
  double dt = 0.1;              // [s]
  double qc = 1.0;              // power-spectral density of the motion prior
  double var_pos = 1.0;         // initial position prior variance [m^2]
  double var_vel = 0.1;         // initial velocity prior variance [(m/s)^2]
  double var_landmark = 9.0;    // landmark prior variance [m^2]
  double landmark_offset = 15.0;  // prior landmark depth ahead of the trajectory [m]
  double depth_min = 1.0;       // latent redraw floor on m - p [m]
  double init_pos = 0.0;        // prior mean position [m]
  double init_vel = 1.0;        // prior mean velocity [m/s]
  double f = 400.0;
  double b = 0.1;
  double var_r = 0.09;
  bool linear_range = false;    // replace disparity factors by linear range factors
};

// --- metrics ---------------------------------------------------------------------

// Named partition of the scalar state indices.
struct StateGroups {
  std::vector<std::string> names;
  std::vector<std::vector<int>> scalars;  // per group, scalar state indices
};

// Per-trial evaluation record.  bias/mse are per group, in group order;
// final_loss is filled by the experiment driver with the mode-independent
// reference loss so modes can be compared per trial.
struct TrialMetrics {
  int trial = 0;
  int iterations = 0;
  bool converged = false;
  double final_loss = 0.0;
  double nees = 0.0;          // (truth - mean)^T precision (truth - mean)
  std::vector<double> bias;   // mean (estimate - truth) per group
  std::vector<double> mse;    // mean squared error per group
};

// Fills nees/bias/mse (iterations/final_loss/converged are the driver's job).
TrialMetrics compute_metrics(const Vec& truth, const GaussianEstimate& est,
                             const StateGroups& groups);

// Order statistics of one metric across trials.
struct Aggregate {
  int n = 0;
  double mean = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
Aggregate aggregate_values(std::vector<double> values);

// --- experiment drivers -------------------------------------------------------------

struct ModeRunResult {
  SolverMode mode;
  std::vector<TrialMetrics> trials;  // successfully solved trials, trial order
  int failures = 0;                  // trials lost to solver exceptions
  std::vector<int> failed_trials;
};

struct ExperimentResult {
  int n_trials = 0;
  StateGroups groups;
  std::vector<ModeRunResult> per_mode;
  std::int64_t redraws = 0;  // latent draws rejected by truncation/depth rules
};

// Graph builders (factor order: priors first, then measurements) and the
// latent/measurement simulation, exposed for structural tests and the CLI.
FactorGraph make_stereo_1d_graph(const Stereo1DParams& p, double y);

struct Stereo1DTrial {
  double x_true = 0.0;
  double y = 0.0;
  std::int64_t redraws = 0;
};
Stereo1DTrial draw_stereo_1d_trial(const Stereo1DParams& p, RngStream& rng);

BlockLayout stereo_slam_layout(const StereoSlamParams& p);
StateGroups stereo_slam_groups(const StereoSlamParams& p);
Vec stereo_slam_prior_mean(const StereoSlamParams& p);
// Factor order: x0 prior, K motion, K landmark priors, then 2K measurements
// (for each landmark: from the previous position, then from its own).
FactorGraph make_stereo_slam_graph(const StereoSlamParams& p, const Vec& disparities);

struct StereoSlamTrial {
  Vec truth;
  Vec disparities;  // 2K, same order as make_stereo_slam_graph expects
  std::int64_t redraws = 0;
};
StereoSlamTrial draw_stereo_slam_trial(const StereoSlamParams& p, RngStream& rng);

// Runs n_trials seeded trials of each mode on identical draws.  threads = 0
// picks the hardware count; results are bit-identical for any thread count
// because trial t always uses RngStream::for_trial(seed, t) and rows are
// merged in trial order.
ExperimentResult run_stereo_1d_trials(const Stereo1DParams& p, int n_trials, std::uint64_t seed,
                                      const std::vector<SolverMode>& modes,
                                      const SolverConfig& base = {}, int threads = 0);
ExperimentResult run_stereo_slam_trials(const StereoSlamParams& p, int n_trials,
                                        std::uint64_t seed,
                                        const std::vector<SolverMode>& modes,
                                        const SolverConfig& base = {}, int threads = 0);

// --- linear recovery check ------------------------------------------------------------

// Planar constant-velocity chain with position measurements, solved by the
// sparse machinery and compared against an independently assembled dense
// batch solution (lifted inverse-transition form) and dense inverse
// covariance blocks.
struct RtsCheckResult {
  bool pass = false;
  bool one_full_step = false;    // first iteration accepted with step scale 1
  int iterations = 0;
  double mean_residual = 0.0;       // max relative mean deviation
  double precision_residual = 0.0;  // max relative precision deviation
  double covariance_residual = 0.0; // Takahashi blocks vs dense inverse
};
RtsCheckResult linear_rts_check(int steps, std::uint64_t seed, double tol = 1e-9);

}  // namespace esgvi
