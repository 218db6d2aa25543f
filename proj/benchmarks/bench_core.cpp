// Microbenchmarks for the hot paths: sparse factorization, the selected
// inverse, system assembly in each mode, moment evaluation, and a full
// nonlinear solve.  The localization problem at its published size (99 steps,
// 299 scalar blocks) is the reference workload for the sparse kernels.

#include <benchmark/benchmark.h>

#include <memory>

#include "esgvi/cubature.hpp"
#include "esgvi/experiments.hpp"
#include "esgvi/factor.hpp"
#include "esgvi/ldl.hpp"
#include "esgvi/rng.hpp"
#include "esgvi/solver.hpp"
#include "esgvi/takahashi.hpp"

namespace {

using namespace esgvi;

struct SlamFixture {
  StereoSlamParams params;
  FactorGraph graph;
  std::shared_ptr<const PrecisionPattern> pattern;
  std::shared_ptr<const FactorizePlan> plan;
  GaussianEstimate estimate;

  static const SlamFixture& instance() {
    static const SlamFixture f;
    return f;
  }

 private:
  SlamFixture() : estimate(make()) {}

  GaussianEstimate make() {
    RngStream rng = RngStream::for_trial(7, 0);
    const StereoSlamTrial trial = draw_stereo_slam_trial(params, rng);
    graph = make_stereo_slam_graph(params, trial.disparities);
    pattern = std::make_shared<const PrecisionPattern>(derived_pattern(graph));
    plan = make_factorize_plan(pattern);

    const Vec mean0 = stereo_slam_prior_mean(params);
    BlockSparseSym prec0(pattern);
    prec0.set_zero();
    for (int f = 0; f < 1 + 2 * params.steps; ++f) {
      const Vec xl = gather_blocks(mean0, graph.layout, graph.factors[f]->variables());
      scatter_add(prec0, graph.factors[f]->variables(), graph.factors[f]->hess(xl));
    }
    SolverConfig cfg;
    cfg.mode = SolverMode{ModeKind::map_gn, CubatureRule::single_point()};
    return iterate_to_convergence(graph, GaussianEstimate(mean0, prec0, plan), cfg).estimate;
  }
};

void BM_LdlFactorize(benchmark::State& state) {
  const SlamFixture& f = SlamFixture::instance();
  const BlockSparseSym& prec = f.estimate.precision();
  for (auto _ : state) {
    LdlFactors ldl = ldl_factorize(prec, f.plan);
    benchmark::DoNotOptimize(ldl.log_det());
  }
}
BENCHMARK(BM_LdlFactorize)->Unit(benchmark::kMicrosecond);

void BM_TakahashiPartialInverse(benchmark::State& state) {
  const SlamFixture& f = SlamFixture::instance();
  const LdlFactors ldl = ldl_factorize(f.estimate.precision(), f.plan);
  for (auto _ : state) {
    PartialCovariance cov = takahashi_partial_inverse(ldl);
    benchmark::DoNotOptimize(cov.block(0));
  }
}
BENCHMARK(BM_TakahashiPartialInverse)->Unit(benchmark::kMicrosecond);

void BM_AssembleNewtonDeriv(benchmark::State& state) {
  const SlamFixture& f = SlamFixture::instance();
  const SolverMode mode{ModeKind::esgvi_deriv,
                        CubatureRule::gauss_hermite(static_cast<int>(state.range(0)))};
  for (auto _ : state) {
    AssembledSystem sys = assemble_newton_system(f.graph, f.estimate, mode);
    benchmark::DoNotOptimize(sys.rhs.norm());
  }
}
BENCHMARK(BM_AssembleNewtonDeriv)->Arg(1)->Arg(3)->Unit(benchmark::kMicrosecond);

void BM_AssembleNewtonDerivFree(benchmark::State& state) {
  const SlamFixture& f = SlamFixture::instance();
  const SolverMode mode{ModeKind::esgvi_deriv_free,
                        CubatureRule::gauss_hermite(static_cast<int>(state.range(0)))};
  for (auto _ : state) {
    AssembledSystem sys = assemble_newton_system(f.graph, f.estimate, mode);
    benchmark::DoNotOptimize(sys.rhs.norm());
  }
}
BENCHMARK(BM_AssembleNewtonDerivFree)->Arg(3)->Unit(benchmark::kMicrosecond);

void BM_MomentEvaluation(benchmark::State& state) {
  const FactorPtr f = stereo_depth_factor(0, 2.1, 400.0, 0.1, 0.09);
  Vec mu(1);
  mu << 20.0;
  Mat sigma(1, 1);
  sigma << 4.0;
  const WeightedPoints wp = unit_rule(CubatureRule::gauss_hermite(10), 1);
  for (auto _ : state) {
    const FactorMoments m =
        expect_moments([&](const Vec& x) { return f->phi(x); }, mu, sigma, wp);
    benchmark::DoNotOptimize(m.matrix(0, 0));
  }
}
BENCHMARK(BM_MomentEvaluation)->Unit(benchmark::kMicrosecond);

void BM_FullSolveStereo1D(benchmark::State& state) {
  const Stereo1DParams p;
  RngStream rng = RngStream::for_trial(11, 0);
  const Stereo1DTrial t = draw_stereo_1d_trial(p, rng);
  const FactorGraph g = make_stereo_1d_graph(p, t.y);
  const auto pattern = std::make_shared<const PrecisionPattern>(derived_pattern(g));
  Vec mu(1);
  mu << p.mu_p;
  BlockSparseSym prec(pattern);
  prec.set_zero();
  prec.block_at(0, 0)(0, 0) = 1.0 / p.var_p;
  SolverConfig cfg;
  cfg.mode = SolverMode{ModeKind::esgvi_deriv_free, CubatureRule::gauss_hermite(10)};
  for (auto _ : state) {
    SolveResult res = iterate_to_convergence(g, GaussianEstimate(mu, prec), cfg);
    benchmark::DoNotOptimize(res.final_loss);
  }
}
BENCHMARK(BM_FullSolveStereo1D)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
