#include "cli_lib.hpp"

#include <chrono>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"

#include "esgvi/errors.hpp"
#include "esgvi/experiments.hpp"
#include "esgvi/graph_json.hpp"
#include "esgvi/ldl.hpp"

namespace esgvi::cli {
namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
}

long long parse_integer(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  }
}

bool parse_boolean(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": expected true/false/1/0, got '" + s + "'");
}

// Keyed access to the --set / "overrides" map with unknown-key detection.
class Overrides {
 public:
  explicit Overrides(const std::map<std::string, std::string>& kv) : kv_(kv) {}

  double number(const std::string& key, double def) {
    const auto it = find(key);
    return it ? parse_number("overrides." + key, *it) : def;
  }
  int integer(const std::string& key, int def) {
    const auto it = find(key);
    if (!it) return def;
    const long long v = parse_integer("overrides." + key, *it);
    if (v < INT_MIN || v > INT_MAX) throw ConfigError("overrides." + key + ": out of range");
    return static_cast<int>(v);
  }
  std::int64_t integer64(const std::string& key, std::int64_t def) {
    const auto it = find(key);
    return it ? parse_integer("overrides." + key, *it) : def;
  }
  bool boolean(const std::string& key, bool def) {
    const auto it = find(key);
    return it ? parse_boolean("overrides." + key, *it) : def;
  }
  std::string str(const std::string& key, const std::string& def) {
    const auto it = find(key);
    return it ? *it : def;
  }
  void finish() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw ConfigError("overrides." + k + ": unknown parameter");
  }

 private:
  const std::string* find(const std::string& key) {
    used_.insert(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? nullptr : &it->second;
  }
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> used_;
};

SolverConfig solver_overrides(Overrides& ov) {
  SolverConfig c;
  c.max_iters = ov.integer("max_iters", c.max_iters);
  c.max_backtracks = ov.integer("max_backtracks", c.max_backtracks);
  c.step_shrink = ov.number("step_shrink", c.step_shrink);
  c.rel_tol = ov.number("rel_tol", c.rel_tol);
  c.abs_tol = ov.number("abs_tol", c.abs_tol);
  c.point_budget = ov.integer64("point_budget", c.point_budget);
  return c;
}

int env_threads() {
  const char* s = std::getenv("ESGVI_THREADS");
  if (!s || !*s) return 0;
  const long long v = parse_integer("ESGVI_THREADS", s);
  if (v < 0) throw ConfigError("ESGVI_THREADS: must be >= 0");
  return static_cast<int>(v);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects files written by a run so a failing run can clean up after itself.
class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ConfigError("output_dir: cannot create '" + dir + "': " + ec.message());
  }
  void write_text(const std::string& name, const std::string& content) {
    const std::filesystem::path p = dir_ / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot open output file " + p.string());
    os << content;
    os.close();
    if (!os) throw Error("failed writing " + p.string());
    written_.push_back(p);
  }
  void remove_written() {
    for (const auto& p : written_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
    written_.clear();
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
};

json config_echo(const RunConfig& cfg) {
  return {{"command", cfg.command},   {"seed", cfg.seed},
          {"trials", cfg.trials},     {"modes", cfg.modes},
          {"rule", cfg.rule},         {"output_dir", cfg.output_dir},
          {"graph", cfg.graph},       {"overrides", cfg.overrides}};
}

void write_run_meta(OutputDir& out, const RunConfig& cfg, double wall_seconds) {
  json meta = {{"timestamp_utc", utc_timestamp()},
               {"wall_seconds", wall_seconds},
               {"threads", env_threads()},
               {"config", config_echo(cfg)}};
  out.write_text("run_meta.json", meta.dump(2) + "\n");
}

std::string trials_csv(const ExperimentResult& res, const std::vector<std::string>& mode_names) {
  std::string csv = "trial,mode,iterations,final_loss";
  for (const auto& g : res.groups.names) csv += ",bias_" + g;
  for (const auto& g : res.groups.names) csv += ",sq_err_" + g;
  csv += ",nees,failed\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t mi = 0; mi < res.per_mode.size(); ++mi) {
    const ModeRunResult& m = res.per_mode[mi];
    std::size_t si = 0, fi = 0;
    for (int t = 0; t < res.n_trials; ++t) {
      const bool failed = fi < m.failed_trials.size() && m.failed_trials[fi] == t;
      csv += std::to_string(t) + "," + mode_names[mi] + ",";
      if (failed) {
        ++fi;
        csv += "0," + fmt(nan);
        for (std::size_t g = 0; g < 2 * res.groups.names.size(); ++g) csv += "," + fmt(nan);
        csv += "," + fmt(nan) + ",1\n";
      } else {
        const TrialMetrics& tm = m.trials.at(si++);
        csv += std::to_string(tm.iterations) + "," + fmt(tm.final_loss);
        for (double b : tm.bias) csv += "," + fmt(b);
        for (double e : tm.mse) csv += "," + fmt(e);
        csv += "," + fmt(tm.nees) + ",0\n";
      }
    }
  }
  return csv;
}

json agg_json(const Aggregate& a) {
  return {{"n", a.n},     {"mean", a.mean}, {"median", a.median}, {"q25", a.q25},
          {"q75", a.q75}, {"min", a.lo},    {"max", a.hi}};
}

json mode_summary(const ModeRunResult& m, const StateGroups& groups, int n_trials) {
  std::vector<double> iters, loss, nees;
  std::vector<std::vector<double>> bias(groups.names.size()), sq(groups.names.size());
  int converged = 0;
  for (const TrialMetrics& t : m.trials) {
    iters.push_back(t.iterations);
    loss.push_back(t.final_loss);
    nees.push_back(t.nees);
    converged += t.converged ? 1 : 0;
    for (std::size_t g = 0; g < groups.names.size(); ++g) {
      bias[g].push_back(t.bias[g]);
      sq[g].push_back(t.mse[g]);
    }
  }
  json metrics = {{"iterations", agg_json(aggregate_values(iters))},
                  {"final_loss", agg_json(aggregate_values(loss))},
                  {"nees", agg_json(aggregate_values(nees))}};
  for (std::size_t g = 0; g < groups.names.size(); ++g) {
    metrics["bias_" + groups.names[g]] = agg_json(aggregate_values(bias[g]));
    metrics["sq_err_" + groups.names[g]] = agg_json(aggregate_values(sq[g]));
  }
  return {{"n", n_trials},
          {"failures", m.failures},
          {"failure_fraction", static_cast<double>(m.failures) / n_trials},
          {"converged", converged},
          {"failed_trials", m.failed_trials},
          {"metrics", metrics}};
}

int experiment_exit_code(const ExperimentResult& res) {
  std::int64_t failed = 0, total = 0;
  for (const auto& m : res.per_mode) {
    failed += m.failures;
    total += res.n_trials;
  }
  return (total > 0 && static_cast<double>(failed) / static_cast<double>(total) > 0.01) ? 1 : 0;
}

std::vector<SolverMode> resolve_modes(const RunConfig& cfg) {
  const CubatureRule rule = parse_rule(cfg.rule);
  std::vector<SolverMode> modes;
  std::set<std::string> seen;
  for (const std::string& name : cfg.modes) {
    if (!seen.insert(name).second) throw ConfigError("modes: duplicate entry '" + name + "'");
    modes.push_back(parse_mode(name, rule));
  }
  return modes;
}

Stereo1DParams exp1_params(Overrides& ov) {
  Stereo1DParams p;
  p.mu_p = ov.number("mu_p", p.mu_p);
  p.var_p = ov.number("var_p", p.var_p);
  p.f = ov.number("f", p.f);
  p.b = ov.number("b", p.b);
  p.var_r = ov.number("var_r", p.var_r);
  p.truncate_sigmas = ov.number("truncate_sigmas", p.truncate_sigmas);
  return p;
}

StereoSlamParams exp2_params(Overrides& ov) {
  StereoSlamParams p;
  p.steps = ov.integer("steps", p.steps);
  p.dt = ov.number("dt", p.dt);
  p.qc = ov.number("qc", p.qc);
  p.var_pos = ov.number("var_pos", p.var_pos);
  p.var_vel = ov.number("var_vel", p.var_vel);
  p.var_landmark = ov.number("var_landmark", p.var_landmark);
  p.landmark_offset = ov.number("landmark_offset", p.landmark_offset);
  p.depth_min = ov.number("depth_min", p.depth_min);
  p.init_pos = ov.number("init_pos", p.init_pos);
  p.init_vel = ov.number("init_vel", p.init_vel);
  p.f = ov.number("f", p.f);
  p.b = ov.number("b", p.b);
  p.var_r = ov.number("var_r", p.var_r);
  p.linear_range = ov.boolean("linear_range", p.linear_range);
  return p;
}

int run_exp1(const RunConfig& cfg, OutputDir& out) {
  Overrides ov(cfg.overrides);
  const Stereo1DParams p = exp1_params(ov);
  const SolverConfig base = solver_overrides(ov);
  ov.finish();
  const std::vector<SolverMode> modes = resolve_modes(cfg);

  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult res =
      run_stereo_1d_trials(p, cfg.trials, cfg.seed, modes, base, env_threads());
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out.write_text("trials.csv", trials_csv(res, cfg.modes));
  json summary = {{"command", cfg.command}, {"seed", cfg.seed},       {"trials", cfg.trials},
                  {"rule", cfg.rule},       {"redraws", res.redraws}, {"groups", res.groups.names}};
  json modes_json;
  for (std::size_t mi = 0; mi < modes.size(); ++mi)
    modes_json[cfg.modes[mi]] = mode_summary(res.per_mode[mi], res.groups, res.n_trials);
  summary["modes"] = modes_json;
  out.write_text("summary.json", summary.dump(2) + "\n");
  write_run_meta(out, cfg, wall);
  return experiment_exit_code(res);
}

int run_exp2(const RunConfig& cfg, OutputDir& out) {
  Overrides ov(cfg.overrides);
  const StereoSlamParams p = exp2_params(ov);
  const SolverConfig base = solver_overrides(ov);
  ov.finish();
  const std::vector<SolverMode> modes = resolve_modes(cfg);

  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult res =
      run_stereo_slam_trials(p, cfg.trials, cfg.seed, modes, base, env_threads());
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // Structural counts for the precision pattern and its fill-closed factor.
  const FactorGraph tmpl = make_stereo_slam_graph(p, Vec::Zero(2 * p.steps));
  const auto pattern = std::make_shared<const PrecisionPattern>(derived_pattern(tmpl));
  const auto plan = make_factorize_plan(pattern);
  const BlockLayout& lay = pattern->layout();
  std::int64_t nnz_lower = 0;
  for (int e = 0; e < pattern->num_entries(); ++e) {
    const int r = pattern->entry_row(e), c = pattern->entry_col(e);
    nnz_lower += (r == c) ? lay.dim(r) * (lay.dim(r) + 1) / 2 : lay.dim(r) * lay.dim(c);
  }
  const std::int64_t nnz_precision = 2 * nnz_lower - lay.total_dim();
  std::int64_t nnz_l = 0;
  for (int e = 0; e < plan->fill->num_entries(); ++e) {
    const int r = plan->fill->entry_row(e), c = plan->fill->entry_col(e);
    nnz_l += (r == c) ? lay.dim(r) * (lay.dim(r) - 1) / 2 : lay.dim(r) * lay.dim(c);
  }

  out.write_text("trials.csv", trials_csv(res, cfg.modes));
  json summary = {{"command", cfg.command},
                  {"seed", cfg.seed},
                  {"trials", cfg.trials},
                  {"rule", cfg.rule},
                  {"redraws", res.redraws},
                  {"groups", res.groups.names},
                  {"state_dim", lay.total_dim()},
                  {"nnz_precision", nnz_precision},
                  {"nnz_L", nnz_l}};
  json modes_json;
  for (std::size_t mi = 0; mi < modes.size(); ++mi)
    modes_json[cfg.modes[mi]] = mode_summary(res.per_mode[mi], res.groups, res.n_trials);
  summary["modes"] = modes_json;
  out.write_text("summary.json", summary.dump(2) + "\n");
  write_run_meta(out, cfg, wall);
  return experiment_exit_code(res);
}

int run_rts_check(const RunConfig& cfg, OutputDir& out) {
  Overrides ov(cfg.overrides);
  const int steps = ov.integer("steps", 100);
  const double tol = ov.number("tol", 1e-9);
  ov.finish();

  const auto t0 = std::chrono::steady_clock::now();
  const RtsCheckResult r = linear_rts_check(steps, cfg.seed, tol);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double max_residual =
      std::max({r.mean_residual, r.precision_residual, r.covariance_residual});
  json summary = {{"command", cfg.command},
                  {"seed", cfg.seed},
                  {"steps", steps},
                  {"tol", tol},
                  {"pass", r.pass},
                  {"max_residual", max_residual},
                  {"mean_residual", r.mean_residual},
                  {"precision_residual", r.precision_residual},
                  {"covariance_residual", r.covariance_residual},
                  {"iterations", r.iterations},
                  {"one_full_step", r.one_full_step}};
  out.write_text("summary.json", summary.dump(2) + "\n");
  write_run_meta(out, cfg, wall);
  return r.pass ? 0 : 1;
}

int run_solve(const RunConfig& cfg, OutputDir& out) {
  Overrides ov(cfg.overrides);
  const std::string graph_path = ov.str("graph", cfg.graph);
  const SolverConfig base = solver_overrides(ov);
  ov.finish();
  if (graph_path.empty())
    throw ConfigError("solve: graph path required (config key 'graph' or --set graph=PATH)");
  const std::vector<SolverMode> modes = resolve_modes(cfg);

  const GraphDescription desc = load_graph_json_file(graph_path);
  const auto pattern = std::make_shared<const PrecisionPattern>(derived_pattern(desc.graph));
  const BlockLayout& lay = desc.graph.layout;
  const int n = lay.total_dim();
  Vec mean0 = desc.init_mean.value_or(Vec::Zero(n));
  if (mean0.size() != n) throw ConfigError("init.mean: expected " + std::to_string(n) + " values");
  Vec prec_diag = desc.init_precision_diag.value_or(Vec::Ones(n));
  if (prec_diag.size() != n)
    throw ConfigError("init.precision_diag: expected " + std::to_string(n) + " values");
  for (int i = 0; i < n; ++i)
    if (!(prec_diag[i] > 0.0)) throw ConfigError("init.precision_diag: values must be positive");
  BlockSparseSym prec0(pattern);
  for (int b = 0; b < lay.num_blocks(); ++b) {
    auto blk = prec0.block_at(b, b);
    for (int i = 0; i < lay.dim(b); ++i) blk(i, i) = prec_diag[lay.offset(b) + i];
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::string iters_csv = "iter,mode,loss,step_scale,dmu_norm,accepted\n";
  std::string solution_csv = "mode,scalar,block,mean,std\n";
  json modes_json;
  int failed_modes = 0;
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    const std::string& name = cfg.modes[mi];
    SolverConfig sc = base;
    sc.mode = modes[mi];
    try {
      const SolveResult res =
          iterate_to_convergence(desc.graph, GaussianEstimate(mean0, prec0), sc);
      for (const IterationRecord& it : res.history)
        iters_csv += std::to_string(it.iter) + "," + name + "," + fmt(it.loss) + "," +
                     fmt(it.step_scale) + "," + fmt(it.dmu_norm) + "," +
                     (it.accepted ? "1" : "0") + "\n";
      for (int b = 0; b < lay.num_blocks(); ++b) {
        const Mat cov = res.estimate.marginal({b});
        for (int i = 0; i < lay.dim(b); ++i)
          solution_csv += name + "," + std::to_string(lay.offset(b) + i) + "," +
                          std::to_string(b) + "," + fmt(res.estimate.mean()[lay.offset(b) + i]) +
                          "," + fmt(std::sqrt(cov(i, i))) + "\n";
      }
      modes_json[name] = {{"status", to_string(res.status)},
                          {"converged", res.converged()},
                          {"iterations", res.history.size()},
                          {"final_loss", res.final_loss},
                          {"reference_loss", evaluate_loss_reference(desc.graph, res.estimate)},
                          {"gn_fallbacks", res.gn_fallbacks}};
    } catch (const Error& e) {
      ++failed_modes;
      modes_json[name] = {{"status", std::string("failed: ") + e.what()}, {"converged", false}};
    }
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out.write_text("iterations.csv", iters_csv);
  out.write_text("solution.csv", solution_csv);
  json summary = {{"command", cfg.command}, {"graph", graph_path},     {"seed", cfg.seed},
                  {"rule", cfg.rule},       {"state_dim", n},          {"modes", modes_json}};
  out.write_text("summary.json", summary.dump(2) + "\n");
  write_run_meta(out, cfg, wall);
  return failed_modes > 0 ? 1 : 0;
}

std::string need_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config: " + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace

CubatureRule parse_rule(const std::string& spec) {
  if (spec == "spherical") return CubatureRule::spherical();
  if (spec.rfind("gh:", 0) == 0) {
    const long long m = parse_integer("rule", spec.substr(3));
    if (m < 1 || m > 20) throw ConfigError("rule: gh order must be in [1, 20], got " + spec);
    return CubatureRule::gauss_hermite(static_cast<int>(m));
  }
  if (spec.rfind("ut:", 0) == 0)
    return CubatureRule::unscented(parse_number("rule", spec.substr(3)));
  throw ConfigError("rule: expected gh:M, spherical, or ut:kappa, got '" + spec + "'");
}

SolverMode parse_mode(const std::string& name, const CubatureRule& rule) {
  if (name == "map-newton") return {ModeKind::map_newton, CubatureRule::single_point()};
  if (name == "map-gn") return {ModeKind::map_gn, CubatureRule::single_point()};
  if (name == "esgvi-deriv") return {ModeKind::esgvi_deriv, rule};
  if (name == "esgvi-deriv-free") return {ModeKind::esgvi_deriv_free, rule};
  if (name == "esgvi-gn") return {ModeKind::esgvi_gn, rule};
  throw ConfigError("modes: unknown mode '" + name +
                    "' (expected map-newton, map-gn, esgvi-deriv, esgvi-deriv-free, esgvi-gn)");
}

RunConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"Factor-graph Gaussian variational inference experiments"};
  app.allow_extras(false);
  std::string config_path, command, modes_csv, rule, out_dir;
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--command", command, "exp1 | exp2 | rts-check | solve");
  app.add_option("--seed", seed, "RNG seed (64-bit)");
  app.add_option("--trials", trials, "number of trials");
  app.add_option("--modes", modes_csv, "comma-separated solver modes");
  app.add_option("--rule", rule, "cubature rule: gh:M | spherical | ut:kappa");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", sets, "parameter override key=value (repeatable)");

  std::vector<const char*> argv;
  argv.push_back("esgvi_cli");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::ParseError& e) {
    throw ConfigError(std::string("flags: ") + e.what());
  }

  RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("config: cannot open '" + config_path + "'");
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [k, v] : j.items()) {
      try {
        if (k == "command") {
          cfg.command = need_string(v, k);
        } else if (k == "seed") {
          if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError("config: seed must be an integer");
          cfg.seed = v.get<std::uint64_t>();
        } else if (k == "trials") {
          if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError("config: trials must be an integer");
          cfg.trials = v.get<int>();
        } else if (k == "modes") {
          if (!v.is_array()) throw ConfigError("config: modes must be an array of strings");
          cfg.modes.clear();
          for (const auto& e : v) cfg.modes.push_back(need_string(e, "modes[]"));
        } else if (k == "rule") {
          cfg.rule = need_string(v, k);
        } else if (k == "output_dir") {
          cfg.output_dir = need_string(v, k);
        } else if (k == "graph") {
          cfg.graph = need_string(v, k);
        } else if (k == "overrides") {
          if (!v.is_object()) throw ConfigError("config: overrides must be an object");
          for (const auto& [ok, ovv] : v.items()) {
            if (ovv.is_string())
              cfg.overrides[ok] = ovv.get<std::string>();
            else if (ovv.is_boolean())
              cfg.overrides[ok] = ovv.get<bool>() ? "true" : "false";
            else if (ovv.is_number())
              cfg.overrides[ok] = ovv.dump();
            else
              throw ConfigError("config: overrides." + ok + " must be a scalar");
          }
        } else {
          throw ConfigError("config: unknown key '" + k + "'");
        }
      } catch (const json::exception& e) {
        throw ConfigError("config: " + k + ": " + e.what());
      }
    }
  }

  if (app.count("--command")) cfg.command = command;
  if (app.count("--seed")) cfg.seed = seed;
  if (app.count("--trials")) cfg.trials = trials;
  if (app.count("--modes")) cfg.modes = split(modes_csv, ',');
  if (app.count("--rule")) cfg.rule = rule;
  if (app.count("--out")) cfg.output_dir = out_dir;
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set: expected key=value, got '" + s + "'");
    cfg.overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }

  if (cfg.command.empty()) throw ConfigError("config: command is required");
  if (cfg.command == "exp1") {
    if (cfg.trials == 0) cfg.trials = 50000;
    if (cfg.modes.empty()) cfg.modes = {"map-newton", "esgvi-deriv-free"};
    if (cfg.rule.empty()) cfg.rule = "gh:10";
  } else if (cfg.command == "exp2") {
    if (cfg.trials == 0) cfg.trials = 1000;
    if (cfg.modes.empty()) cfg.modes = {"map-newton", "esgvi-deriv"};
    if (cfg.rule.empty()) cfg.rule = "gh:3";
  } else if (cfg.command == "rts-check" || cfg.command == "solve") {
    if (cfg.trials == 0) cfg.trials = 1;
    if (cfg.modes.empty()) cfg.modes = {"esgvi-deriv"};
    if (cfg.rule.empty()) cfg.rule = "gh:3";
  } else {
    throw ConfigError("config: unknown command '" + cfg.command +
                      "' (expected exp1, exp2, rts-check, solve)");
  }
  if (cfg.trials < 1) throw ConfigError("config: trials must be >= 1");
  resolve_modes(cfg);  // validates modes and rule
  return cfg;
}

int run_command(const RunConfig& cfg) {
  OutputDir out(cfg.output_dir);
  try {
    if (cfg.command == "exp1") return run_exp1(cfg, out);
    if (cfg.command == "exp2") return run_exp2(cfg, out);
    if (cfg.command == "rts-check") return run_rts_check(cfg, out);
    if (cfg.command == "solve") return run_solve(cfg, out);
    throw ConfigError("config: unknown command '" + cfg.command + "'");
  } catch (...) {
    out.remove_written();
    throw;
  }
}

int cli_main(const std::vector<std::string>& args) {
  try {
    return run_command(parse_config(args));
  } catch (const HelpRequested& h) {
    std::fputs(h.text.c_str(), stdout);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace esgvi::cli
