#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tikpd/diagnostics.hpp"
#include "tikpd/dynamics.hpp"
#include "tikpd/errors.hpp"
#include "tikpd/integrator.hpp"
#include "tikpd/problem.hpp"

namespace tikpd {

using nlohmann::json;

enum class SystemKind { Tikhonov, HeAvd, ZAvd };

inline const char* to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Tikhonov: return "tikhonov";
    case SystemKind::HeAvd: return "he_avd";
    case SystemKind::ZAvd: return "z_avd";
  }
  return "tikhonov";
}

/// Problem description as it appears in config files.
struct ProblemSpec {
  enum class Kind { Example1, QpSeeded, QpExplicit };
  Kind kind = Kind::Example1;
  double m = 5.0, n = 1.0, e = 1.0;        // example1
  Eigen::Index rows = 0, cols = 0;         // seeded qp
  std::uint64_t seed = 0;
  Mat M, A;                                // explicit qp
  Vec q, b;
};

/// One fully resolved scenario: problem, system, parameters, initial state
/// and integration window.
struct ScenarioConfig {
  ProblemSpec problem;
  SystemKind system = SystemKind::Tikhonov;
  double alpha = 13.0;
  double rho = 1.0;        // tikhonov only
  double c = 3.0;          // tikhonov only
  double r = 0.5;          // tikhonov only
  double beta = 1.0;       // he_avd only
  double theta = 0.5;      // z_avd only
  Vec x0, v0, lambda0, mu0;
  IntegrationConfig integration;  // sample_times filled from `samples`
  int samples = 400;              // log-spaced points incl. both endpoints
  std::string output_prefix = "scenario";
};

struct ScenarioResult {
  ScenarioConfig config;
  StateLayout layout;
  Trajectory trajectory;
  std::vector<MetricRow> rows;
  json summary;
  bool failed = false;    // divergence or step-limit; partial outputs kept
  std::string error;
};

// ---------------------------------------------------------------------------
// CSV emission

namespace detail {

inline std::string format_17g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kMetricsCsvHeader =
    "t,gap,obj_err,feas,vel_norm,grad_dev,dist_min_norm,energy_E,"
    "energy_tilde,energy_hat";

inline std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::string out(kMetricsCsvHeader);
  out += '\n';
  for (const MetricRow& r : rows) {
    out += detail::format_17g(r.t);
    for (double v : {r.gap, r.obj_err, r.feas, r.vel_norm, r.grad_dev,
                     r.dist_min_norm, r.energy_E, r.energy_tilde, r.energy_hat}) {
      out += ',';
      out += detail::format_17g(v);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::vector<MetricRow> rows;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader)
    throw std::invalid_argument("parse_metrics_csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    double vals[10];
    for (int i = 0; i < 10; ++i) {
      if (!std::getline(ls, field, ','))
        throw std::invalid_argument("parse_metrics_csv: short row");
      vals[i] = std::stod(field);
    }
    MetricRow r;
    r.t = vals[0];
    r.gap = vals[1];
    r.obj_err = vals[2];
    r.feas = vals[3];
    r.vel_norm = vals[4];
    r.grad_dev = vals[5];
    r.dist_min_norm = vals[6];
    r.energy_E = vals[7];
    r.energy_tilde = vals[8];
    r.energy_hat = vals[9];
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Config parsing and validation

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError(path.empty() ? it.key() : path + "." + it.key(),
                        "unknown config key: " +
                            (path.empty() ? it.key() : path + "." + it.key()));
  }
}

inline double require_number(const json& obj, const std::string& key,
                             const std::string& path) {
  if (!obj.contains(key))
    throw ConfigError(path + "." + key, "missing config key: " + path + "." + key);
  if (!obj.at(key).is_number())
    throw ConfigError(path + "." + key, "config key must be a number: " + path + "." + key);
  return obj.at(key).get<double>();
}

inline Vec vec_from_json(const json& arr, const std::string& path) {
  if (!arr.is_array())
    throw ConfigError(path, "config key must be an array: " + path);
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number())
      throw ConfigError(path, "array entries must be numbers: " + path);
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  }
  return v;
}

inline Mat mat_from_json(const json& arr, const std::string& path) {
  if (!arr.is_array() || arr.empty() || !arr[0].is_array())
    throw ConfigError(path, "config key must be a nested array: " + path);
  const std::size_t rows = arr.size();
  const std::size_t cols = arr[0].size();
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!arr[i].is_array() || arr[i].size() != cols)
      throw ConfigError(path, "ragged matrix rows: " + path);
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          arr[i][j].get<double>();
  }
  return m;
}

inline json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace detail

inline ProblemSpec parse_problem_spec(const json& obj) {
  if (!obj.is_object()) throw ConfigError("problem", "problem must be an object");
  if (!obj.contains("kind"))
    throw ConfigError("problem.kind", "missing config key: problem.kind");
  const std::string kind = obj.at("kind").get<std::string>();
  ProblemSpec spec;
  if (kind == "example1") {
    detail::reject_unknown_keys(obj, {"kind", "m", "n", "e"}, "problem");
    spec.kind = ProblemSpec::Kind::Example1;
    spec.m = detail::require_number(obj, "m", "problem");
    spec.n = detail::require_number(obj, "n", "problem");
    spec.e = detail::require_number(obj, "e", "problem");
  } else if (kind == "qp") {
    if (obj.contains("rows") || obj.contains("cols") || obj.contains("seed")) {
      detail::reject_unknown_keys(obj, {"kind", "rows", "cols", "seed"}, "problem");
      spec.kind = ProblemSpec::Kind::QpSeeded;
      spec.rows = static_cast<Eigen::Index>(
          detail::require_number(obj, "rows", "problem"));
      spec.cols = static_cast<Eigen::Index>(
          detail::require_number(obj, "cols", "problem"));
      spec.seed = static_cast<std::uint64_t>(
          detail::require_number(obj, "seed", "problem"));
    } else {
      detail::reject_unknown_keys(obj, {"kind", "M", "q", "A", "b"}, "problem");
      spec.kind = ProblemSpec::Kind::QpExplicit;
      spec.M = detail::mat_from_json(obj.at("M"), "problem.M");
      spec.q = detail::vec_from_json(obj.at("q"), "problem.q");
      spec.A = detail::mat_from_json(obj.at("A"), "problem.A");
      spec.b = detail::vec_from_json(obj.at("b"), "problem.b");
    }
  } else {
    throw ConfigError("problem.kind", "unknown problem kind: " + kind);
  }
  return spec;
}

inline json problem_spec_to_json(const ProblemSpec& spec) {
  json obj;
  switch (spec.kind) {
    case ProblemSpec::Kind::Example1:
      obj["kind"] = "example1";
      obj["m"] = spec.m;
      obj["n"] = spec.n;
      obj["e"] = spec.e;
      break;
    case ProblemSpec::Kind::QpSeeded:
      obj["kind"] = "qp";
      obj["rows"] = spec.rows;
      obj["cols"] = spec.cols;
      obj["seed"] = spec.seed;
      break;
    case ProblemSpec::Kind::QpExplicit: {
      obj["kind"] = "qp";
      json M = json::array();
      for (Eigen::Index i = 0; i < spec.M.rows(); ++i)
        M.push_back(detail::vec_to_json(spec.M.row(i)));
      json A = json::array();
      for (Eigen::Index i = 0; i < spec.A.rows(); ++i)
        A.push_back(detail::vec_to_json(spec.A.row(i)));
      obj["M"] = M;
      obj["q"] = detail::vec_to_json(spec.q);
      obj["A"] = A;
      obj["b"] = detail::vec_to_json(spec.b);
      break;
    }
  }
  return obj;
}

/// The realized problem: the oracle form, the quadratic form used for
/// path/certificate computations and the reference solution.
struct BuiltProblem {
  ConstrainedProblem problem;
  QuadraticProblem qp;
  ReferenceSolution refs;
};

inline BuiltProblem build_problem(const ProblemSpec& spec) {
  BuiltProblem built;
  switch (spec.kind) {
    case ProblemSpec::Kind::Example1: {
      built.problem = make_example1(spec.m, spec.n, spec.e);
      built.qp = example1_as_qp(spec.m, spec.n, spec.e);
      // Closed form: minimal-norm solution is the origin with zero multiplier.
      built.refs.x_star = Vec::Zero(3);
      built.refs.lambda_star = Vec::Zero(1);
      built.refs.x_bar_star = Vec::Zero(3);
      built.refs.lambda_bar_star = Vec::Zero(1);
      built.refs.f_star = 0.0;
      break;
    }
    case ProblemSpec::Kind::QpSeeded:
      built.qp = make_random_qp(spec.rows, spec.cols, spec.seed);
      built.problem = built.qp.base;
      built.refs = solve_reference_qp(built.qp);
      break;
    case ProblemSpec::Kind::QpExplicit:
      built.qp = make_quadratic_problem(spec.M, spec.q, spec.A, spec.b);
      built.problem = built.qp.base;
      built.refs = solve_reference_qp(built.qp);
      break;
  }
  return built;
}

namespace detail {

inline SystemKind parse_system(const json& value) {
  const std::string name = value.get<std::string>();
  if (name == "tikhonov") return SystemKind::Tikhonov;
  if (name == "he_avd") return SystemKind::HeAvd;
  if (name == "z_avd") return SystemKind::ZAvd;
  throw ConfigError("system", "unknown system: " + name);
}

inline void parse_params(const json& obj, ScenarioConfig& cfg) {
  if (!obj.is_object()) throw ConfigError("params", "params must be an object");
  switch (cfg.system) {
    case SystemKind::Tikhonov:
      reject_unknown_keys(obj, {"alpha", "rho", "c", "r"}, "params");
      cfg.alpha = require_number(obj, "alpha", "params");
      cfg.rho = require_number(obj, "rho", "params");
      cfg.c = require_number(obj, "c", "params");
      cfg.r = require_number(obj, "r", "params");
      break;
    case SystemKind::HeAvd:
      reject_unknown_keys(obj, {"alpha", "beta"}, "params");
      cfg.alpha = require_number(obj, "alpha", "params");
      cfg.beta = require_number(obj, "beta", "params");
      break;
    case SystemKind::ZAvd:
      reject_unknown_keys(obj, {"alpha", "theta"}, "params");
      cfg.alpha = require_number(obj, "alpha", "params");
      cfg.theta = require_number(obj, "theta", "params");
      break;
  }
  if (!(cfg.alpha > 1.0))
    throw ConfigError("params.alpha", "params.alpha must be > 1");
}

inline void parse_initial(const json& obj, ScenarioConfig& cfg) {
  if (!obj.is_object()) throw ConfigError("initial", "initial must be an object");
  std::set<std::string> allowed = {"x", "v", "lambda"};
  if (cfg.system == SystemKind::ZAvd) allowed.insert("mu");
  reject_unknown_keys(obj, allowed, "initial");
  for (const char* key : {"x", "v", "lambda"})
    if (!obj.contains(key))
      throw ConfigError(std::string("initial.") + key,
                        std::string("missing config key: initial.") + key);
  cfg.x0 = vec_from_json(obj.at("x"), "initial.x");
  cfg.v0 = vec_from_json(obj.at("v"), "initial.v");
  cfg.lambda0 = vec_from_json(obj.at("lambda"), "initial.lambda");
  if (cfg.system == SystemKind::ZAvd) {
    if (!obj.contains("mu"))
      throw ConfigError("initial.mu", "missing config key: initial.mu");
    cfg.mu0 = vec_from_json(obj.at("mu"), "initial.mu");
  }
}

inline void parse_integration(const json& obj, ScenarioConfig& cfg) {
  if (!obj.is_object())
    throw ConfigError("integration", "integration must be an object");
  reject_unknown_keys(obj,
                      {"t_start", "t_end", "abs_tol", "rel_tol", "initial_step",
                       "max_steps", "samples"},
                      "integration");
  cfg.integration.t_start = require_number(obj, "t_start", "integration");
  cfg.integration.t_end = require_number(obj, "t_end", "integration");
  if (obj.contains("abs_tol"))
    cfg.integration.abs_tol = require_number(obj, "abs_tol", "integration");
  if (obj.contains("rel_tol"))
    cfg.integration.rel_tol = require_number(obj, "rel_tol", "integration");
  if (obj.contains("initial_step"))
    cfg.integration.initial_step =
        require_number(obj, "initial_step", "integration");
  if (obj.contains("max_steps"))
    cfg.integration.max_steps = static_cast<std::size_t>(
        require_number(obj, "max_steps", "integration"));
  if (obj.contains("samples"))
    cfg.samples =
        static_cast<int>(require_number(obj, "samples", "integration"));
  if (cfg.integration.t_end < cfg.integration.t_start)
    throw ConfigError("integration.t_end",
                      "integration.t_end must be >= integration.t_start");
  if (!(cfg.integration.t_start > 0.0))
    throw ConfigError("integration.t_start",
                      "integration.t_start must be > 0");
  if (cfg.samples < 1)
    throw ConfigError("integration.samples", "integration.samples must be >= 1");
}

}  // namespace detail

/// `count` log-spaced points on [a, b] including both endpoints.
inline std::vector<double> log_spaced(double a, double b, int count) {
  std::vector<double> pts;
  if (count <= 1 || a == b) {
    pts.push_back(a);
    return pts;
  }
  const double la = std::log(a), lb = std::log(b);
  for (int i = 0; i < count; ++i) {
    const double f = static_cast<double>(i) / (count - 1);
    pts.push_back(std::exp(la + f * (lb - la)));
  }
  pts.front() = a;
  pts.back() = b;
  return pts;
}

inline ScenarioConfig parse_run_config(const json& obj) {
  if (!obj.is_object()) throw ConfigError("", "config must be a JSON object");
  detail::reject_unknown_keys(
      obj, {"problem", "system", "params", "initial", "integration",
            "output_prefix"},
      "");
  for (const char* key : {"problem", "system", "params", "initial", "integration"})
    if (!obj.contains(key))
      throw ConfigError(key, std::string("missing config key: ") + key);

  ScenarioConfig cfg;
  cfg.problem = parse_problem_spec(obj.at("problem"));
  cfg.system = detail::parse_system(obj.at("system"));
  detail::parse_params(obj.at("params"), cfg);
  detail::parse_initial(obj.at("initial"), cfg);
  detail::parse_integration(obj.at("integration"), cfg);
  if (obj.contains("output_prefix"))
    cfg.output_prefix = obj.at("output_prefix").get<std::string>();
  return cfg;
}

inline json run_config_to_json(const ScenarioConfig& cfg) {
  json obj;
  obj["problem"] = problem_spec_to_json(cfg.problem);
  obj["system"] = to_string(cfg.system);
  json params;
  params["alpha"] = cfg.alpha;
  switch (cfg.system) {
    case SystemKind::Tikhonov:
      params["rho"] = cfg.rho;
      params["c"] = cfg.c;
      params["r"] = cfg.r;
      break;
    case SystemKind::HeAvd:
      params["beta"] = cfg.beta;
      break;
    case SystemKind::ZAvd:
      params["theta"] = cfg.theta;
      break;
  }
  obj["params"] = params;
  json initial;
  initial["x"] = detail::vec_to_json(cfg.x0);
  initial["v"] = detail::vec_to_json(cfg.v0);
  initial["lambda"] = detail::vec_to_json(cfg.lambda0);
  if (cfg.system == SystemKind::ZAvd) initial["mu"] = detail::vec_to_json(cfg.mu0);
  obj["initial"] = initial;
  json integ;
  integ["t_start"] = cfg.integration.t_start;
  integ["t_end"] = cfg.integration.t_end;
  integ["abs_tol"] = cfg.integration.abs_tol;
  integ["rel_tol"] = cfg.integration.rel_tol;
  if (cfg.integration.initial_step > 0.0)
    integ["initial_step"] = cfg.integration.initial_step;
  integ["max_steps"] = cfg.integration.max_steps;
  integ["samples"] = cfg.samples;
  obj["integration"] = integ;
  obj["output_prefix"] = cfg.output_prefix;
  return obj;
}

// ---------------------------------------------------------------------------
// Scenario execution

namespace detail {

/// Parameters under which metrics/energies are evaluated for each system.
/// The comparator flows carry no schedule; the second-order-dual flow has a
/// built-in unit penalty.
inline SystemParams effective_params(const ScenarioConfig& cfg) {
  SystemParams p;
  p.alpha = cfg.alpha;
  p.t0 = cfg.integration.t_start;
  switch (cfg.system) {
    case SystemKind::Tikhonov:
      p.rho = cfg.rho;
      p.schedule = TikhonovSchedule{cfg.c, cfg.r};
      break;
    case SystemKind::HeAvd:
      p.rho = 0.0;
      p.schedule = TikhonovSchedule{0.0, 1.0};
      break;
    case SystemKind::ZAvd:
      p.rho = 1.0;
      p.schedule = TikhonovSchedule{0.0, 1.0};
      break;
  }
  return p;
}

inline VectorField make_field(const ScenarioConfig& cfg,
                              const ConstrainedProblem& prob) {
  switch (cfg.system) {
    case SystemKind::Tikhonov:
      return tikhonov_field(effective_params(cfg), prob);
    case SystemKind::HeAvd:
      return he_avd_field(cfg.alpha, cfg.beta, prob);
    case SystemKind::ZAvd:
      return z_avd_field(cfg.alpha, cfg.theta, prob);
  }
  throw std::logic_error("make_field: unreachable");
}

inline double trapezoid_integral(const std::vector<double>& t,
                                 const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i)
    acc += 0.5 * (f[i] + f[i - 1]) * (t[i] - t[i - 1]);
  return acc;
}

}  // namespace detail

inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  const auto wall_start = std::chrono::steady_clock::now();
  BuiltProblem built = build_problem(cfg.problem);

  StateLayout layout{built.problem.dim_primal, built.problem.dim_dual,
                     cfg.system == SystemKind::ZAvd};
  if (cfg.x0.size() != layout.n || cfg.v0.size() != layout.n ||
      cfg.lambda0.size() != layout.m ||
      (layout.has_mu && cfg.mu0.size() != layout.m))
    throw ConfigError("initial", "initial state dimensions do not match problem");

  PrimalDualState start;
  start.x = cfg.x0;
  start.v = cfg.v0;
  start.lambda = cfg.lambda0;
  if (layout.has_mu) start.mu = cfg.mu0;
  if (!start.all_finite())
    throw ConfigError("initial", "initial state has non-finite entries");

  IntegrationConfig icfg = cfg.integration;
  const std::vector<double> grid =
      log_spaced(icfg.t_start, icfg.t_end, cfg.samples);
  icfg.sample_times.clear();
  if (grid.size() > 2)
    icfg.sample_times.assign(grid.begin() + 1, grid.end() - 1);

  ScenarioResult result;
  result.config = cfg;
  result.layout = layout;

  const VectorField field = detail::make_field(cfg, built.problem);
  try {
    result.trajectory = integrate(field, pack_state(start, layout), icfg);
  } catch (const DivergenceError& e) {
    result.trajectory = e.partial;
    result.failed = true;
    result.error = e.what();
  } catch (const StepLimitError& e) {
    result.trajectory = e.partial;
    result.failed = true;
    result.error = e.what();
  }

  const SystemParams params = detail::effective_params(cfg);
  for (std::size_t i = 0; i < result.trajectory.times.size(); ++i)
    result.rows.push_back(metrics_row(
        result.trajectory.times[i],
        unpack_state(result.trajectory.states[i], layout), built.refs, params,
        built.problem));

  // --- summary ---
  json summary;
  summary["params"] = run_config_to_json(cfg);
  if (cfg.problem.kind == ProblemSpec::Kind::QpSeeded)
    summary["params"]["b_distribution"] = "uniform[0,1)";
  summary["regime"] =
      cfg.system == SystemKind::Tikhonov
          ? to_string(classify_schedule(TikhonovSchedule{cfg.c, cfg.r}))
          : to_string(ScheduleRegime::None);

  std::vector<double> ts;
  std::map<std::string, std::vector<double>> cols;
  for (const MetricRow& r : result.rows) {
    ts.push_back(r.t);
    cols["gap"].push_back(r.gap);
    cols["obj_err"].push_back(r.obj_err);
    cols["feas"].push_back(r.feas);
    cols["vel_norm"].push_back(r.vel_norm);
    cols["grad_dev"].push_back(r.grad_dev);
    cols["dist_min_norm"].push_back(r.dist_min_norm);
  }
  const double t_end = ts.empty() ? icfg.t_end : ts.back();
  const double window_lo = std::max(icfg.t_start, t_end / 10.0);

  json slopes;
  for (const auto& [name, vals] : cols) {
    try {
      slopes[name] = rate_fit(ts, vals, window_lo, t_end);
    } catch (const InsufficientDataError&) {
      slopes[name] = nullptr;
    }
  }
  summary["slopes"] = slopes;

  json tail;
  if (!ts.empty()) {
    tail["t2_gap"] = tail_supremum(ts, cols["gap"], 2.0, window_lo, t_end);
    tail["t2_feas"] = tail_supremum(ts, cols["feas"], 2.0, window_lo, t_end);
  }
  summary["tail_sup"] = tail;

  json certs = json::object();
  if (cfg.system == SystemKind::Tikhonov && !result.trajectory.times.empty()) {
    if (params.alpha >= 3.0) {
      const CertificateReport rep =
          certificate_energy_bound(result.trajectory, layout, built.refs,
                                   params, built.problem, icfg.rel_tol);
      certs["energy_bound"] = {{"holds", rep.holds},
                               {"max_violation", rep.max_violation},
                               {"slack", rep.slack}};
    }
    if (params.schedule.c > 0.0) {
      const CertificateReport rep = certificate_viscosity(
          result.trajectory, layout, built.qp, built.refs, params);
      certs["viscosity"] = {{"holds", rep.holds},
                            {"max_violation", rep.max_violation},
                            {"slack", rep.slack}};
    }
  }
  summary["certificates"] = certs;

  if (ts.size() >= 2) {
    std::vector<double> t_gap(ts.size()), t_gd2(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      t_gap[i] = ts[i] * cols["gap"][i];
      t_gd2[i] = ts[i] * cols["grad_dev"][i] * cols["grad_dev"][i];
    }
    summary["monitoring"] = {
        {"integral_t_gap", detail::trapezoid_integral(ts, t_gap)},
        {"integral_t_grad_dev_sq", detail::trapezoid_integral(ts, t_gd2)}};
  }

  json integ;
  integ["method"] = "bogacki_shampine_32";
  integ["abs_tol"] = icfg.abs_tol;
  integ["rel_tol"] = icfg.rel_tol;
  integ["accepted_steps"] = result.trajectory.accepted_steps;
  integ["rejected_steps"] = result.trajectory.rejected_steps;
  summary["integrator"] = integ;

  if (result.failed) summary["error"] = result.error;
  summary["runtime_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                    wall_start)
          .count();
  result.summary = std::move(summary);
  return result;
}

inline ScenarioResult run_scenario(const json& config) {
  return run_scenario(parse_run_config(config));
}

// ---------------------------------------------------------------------------
// Sweeps and comparisons

struct SweepResult {
  std::vector<double> r_values;
  std::vector<ScenarioResult> runs;
  std::string table_csv;
};

/// Runs the base scenario once per r value (base must be the regularized
/// system). Per-run failures are recorded and the sweep continues.
inline SweepResult sweep_r(const ScenarioConfig& base,
                           const std::vector<double>& r_values, int jobs = 1) {
  if (base.system != SystemKind::Tikhonov)
    throw ConfigError("system", "sweep requires the tikhonov system");
  for (double r : r_values)
    if (!(r > 0.0)) throw ConfigError("r_values", "sweep r values must be > 0");

  SweepResult result;
  result.r_values = r_values;
  result.runs.resize(r_values.size());

  const auto worker = [&](std::size_t i) {
    ScenarioConfig cfg = base;
    cfg.r = r_values[i];
    cfg.output_prefix = base.output_prefix + "_r" + detail::format_17g(r_values[i]);
    try {
      result.runs[i] = run_scenario(cfg);
    } catch (const std::exception& e) {
      result.runs[i].config = cfg;
      result.runs[i].failed = true;
      result.runs[i].error = e.what();
      result.runs[i].summary = {{"error", e.what()}};
    }
  };

  if (jobs <= 1 || r_values.size() <= 1) {
    for (std::size_t i = 0; i < r_values.size(); ++i) worker(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int count = std::min<int>(jobs, static_cast<int>(r_values.size()));
    for (int k = 0; k < count; ++k)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < r_values.size();
             i = next.fetch_add(1))
          worker(i);
      });
    for (std::thread& th : pool) th.join();
  }

  std::string csv =
      "r,regime,dist_min_norm_final,obj_err_final,feas_final,gap_final\n";
  for (std::size_t i = 0; i < r_values.size(); ++i) {
    const ScenarioResult& run = result.runs[i];
    csv += detail::format_17g(r_values[i]);
    csv += ',';
    csv += run.summary.contains("regime")
               ? run.summary["regime"].get<std::string>()
               : "ERROR";
    if (!run.rows.empty()) {
      const MetricRow& last = run.rows.back();
      for (double v : {last.dist_min_norm, last.obj_err, last.feas, last.gap}) {
        csv += ',';
        csv += detail::format_17g(v);
      }
    } else {
      csv += ",,,,";
    }
    csv += '\n';
  }
  result.table_csv = std::move(csv);
  return result;
}

struct CompareResult {
  std::vector<std::string> names;
  std::vector<ScenarioResult> runs;
  std::string table_csv;
};

/// Runs each scenario on the shared problem/horizon and aligns the sampled
/// obj_err and feas columns.
inline CompareResult compare_systems(const std::vector<ScenarioConfig>& configs,
                                     const std::vector<std::string>& names) {
  if (configs.size() != names.size())
    throw std::invalid_argument("compare_systems: names/configs size mismatch");
  if (configs.empty()) throw ConfigError("runs", "compare needs at least one run");
  const json problem0 = problem_spec_to_json(configs[0].problem);
  for (const ScenarioConfig& cfg : configs) {
    if (problem_spec_to_json(cfg.problem) != problem0)
      throw ConfigError("problem", "compare runs must share the problem");
    if (cfg.integration.t_start != configs[0].integration.t_start ||
        cfg.integration.t_end != configs[0].integration.t_end ||
        cfg.samples != configs[0].samples)
      throw ConfigError("integration", "compare runs must share the horizon");
  }

  CompareResult result;
  result.names = names;
  for (const ScenarioConfig& cfg : configs) result.runs.push_back(run_scenario(cfg));

  std::string csv = "t";
  for (const std::string& name : names)
    csv += ",obj_err_" + name + ",feas_" + name;
  csv += '\n';
  const std::size_t row_count = result.runs[0].rows.size();
  for (std::size_t i = 0; i < row_count; ++i) {
    csv += detail::format_17g(result.runs[0].rows[i].t);
    for (const ScenarioResult& run : result.runs) {
      if (i < run.rows.size()) {
        csv += ',';
        csv += detail::format_17g(run.rows[i].obj_err);
        csv += ',';
        csv += detail::format_17g(run.rows[i].feas);
      } else {
        csv += ",,";
      }
    }
    csv += '\n';
  }
  result.table_csv = std::move(csv);
  return result;
}

// ---------------------------------------------------------------------------
// Presets

inline std::vector<std::string> preset_names() {
  return {"example1_slow", "example1_sweep", "example1_vs_heavd", "qp_compare"};
}

inline json preset_config(const std::string& name) {
  const json example1 = {{"kind", "example1"}, {"m", 5.0}, {"n", 1.0}, {"e", 1.0}};
  const json interval = {{"t_start", 1.0}, {"t_end", 100.0}, {"samples", 400}};
  const json ones3 = {1.0, 1.0, 1.0};

  if (name == "example1_slow") {
    return {{"problem", example1},
            {"system", "tikhonov"},
            {"params", {{"alpha", 13.0}, {"rho", 1.0}, {"c", 3.0}, {"r", 0.5}}},
            {"initial", {{"x", ones3}, {"v", ones3}, {"lambda", {1.0}}}},
            {"integration", interval},
            {"output_prefix", "example1_slow"}};
  }
  if (name == "example1_sweep") {
    json base = preset_config("example1_slow");
    base["r_values"] = {0.5, 1.0, 1.5};
    base["output_prefix"] = "example1_sweep";
    return base;
  }
  if (name == "example1_vs_heavd") {
    return {{"problem", example1},
            {"integration", interval},
            {"output_prefix", "example1_vs_heavd"},
            {"runs",
             {{{"name", "tikhonov"},
               {"system", "tikhonov"},
               {"params", {{"alpha", 13.0}, {"rho", 1.0}, {"c", 3.0}, {"r", 0.5}}},
               {"initial", {{"x", ones3}, {"v", ones3}, {"lambda", {1.0}}}}},
              {{"name", "he_avd"},
               {"system", "he_avd"},
               {"params", {{"alpha", 13.0}, {"beta", 1.0}}},
               {"initial", {{"x", ones3}, {"v", ones3}, {"lambda", {1.0}}}}}}}};
  }
  if (name == "qp_compare") {
    json ones_n = json::array();
    for (int i = 0; i < 40; ++i) ones_n.push_back(1.0);
    json ones_m = json::array();
    for (int i = 0; i < 20; ++i) ones_m.push_back(1.0);
    return {{"problem", {{"kind", "qp"}, {"rows", 20}, {"cols", 40}, {"seed", 1}}},
            {"integration", interval},
            {"output_prefix", "qp_compare"},
            {"runs",
             {{{"name", "tikhonov"},
               {"system", "tikhonov"},
               {"params", {{"alpha", 15.0}, {"rho", 1.0}, {"c", 1.0}, {"r", 3.0}}},
               {"initial", {{"x", ones_n}, {"v", ones_n}, {"lambda", ones_m}}}},
              {{"name", "z_avd"},
               {"system", "z_avd"},
               {"params", {{"alpha", 15.0}, {"theta", 0.5}}},
               {"initial",
                {{"x", ones_n}, {"v", ones_n}, {"lambda", ones_m}, {"mu", ones_m}}}}}}};
  }
  throw ConfigError("preset", "unknown preset: " + name);
}

// ---------------------------------------------------------------------------
// Sweep/compare config parsing

struct SweepConfig {
  ScenarioConfig base;
  std::vector<double> r_values;
};

inline SweepConfig parse_sweep_config(const json& obj) {
  if (!obj.is_object()) throw ConfigError("", "config must be a JSON object");
  detail::reject_unknown_keys(obj,
                              {"problem", "system", "params", "initial",
                               "integration", "output_prefix", "r_values"},
                              "");
  if (!obj.contains("r_values"))
    throw ConfigError("r_values", "missing config key: r_values");
  json run = obj;
  run.erase("r_values");
  SweepConfig cfg;
  cfg.base = parse_run_config(run);
  if (!obj.at("r_values").is_array())
    throw ConfigError("r_values", "r_values must be an array");
  for (const json& v : obj.at("r_values")) {
    if (!v.is_number()) throw ConfigError("r_values", "r_values entries must be numbers");
    cfg.r_values.push_back(v.get<double>());
  }
  return cfg;
}

struct CompareConfig {
  std::vector<ScenarioConfig> runs;
  std::vector<std::string> names;
  std::string output_prefix = "compare";
};

inline CompareConfig parse_compare_config(const json& obj) {
  if (!obj.is_object()) throw ConfigError("", "config must be a JSON object");
  detail::reject_unknown_keys(
      obj, {"problem", "integration", "runs", "output_prefix"}, "");
  for (const char* key : {"problem", "integration", "runs"})
    if (!obj.contains(key))
      throw ConfigError(key, std::string("missing config key: ") + key);
  if (!obj.at("runs").is_array() || obj.at("runs").empty())
    throw ConfigError("runs", "runs must be a non-empty array");

  CompareConfig cfg;
  if (obj.contains("output_prefix"))
    cfg.output_prefix = obj.at("output_prefix").get<std::string>();
  for (std::size_t i = 0; i < obj.at("runs").size(); ++i) {
    const json& entry = obj.at("runs")[i];
    const std::string path = "runs[" + std::to_string(i) + "]";
    if (!entry.is_object()) throw ConfigError(path, path + " must be an object");
    detail::reject_unknown_keys(entry, {"name", "system", "params", "initial"},
                                path);
    json run;
    run["problem"] = obj.at("problem");
    run["integration"] = obj.at("integration");
    for (const char* key : {"system", "params", "initial"}) {
      if (!entry.contains(key))
        throw ConfigError(path + "." + key,
                          "missing config key: " + path + "." + key);
      run[key] = entry.at(key);
    }
    std::string name = entry.contains("name")
                           ? entry.at("name").get<std::string>()
                           : std::string(to_string(detail::parse_system(
                                 entry.at("system"))));
    run["output_prefix"] = cfg.output_prefix + "_" + name;
    cfg.names.push_back(std::move(name));
    cfg.runs.push_back(parse_run_config(run));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Overrides and file output

/// Applies one dotted-path override (e.g. "params.alpha=20") onto a config
/// object. The path segments up to the leaf must already exist; unknown
/// leaves are caught by config validation afterwards.
inline void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "override must have the form KEY=VALUE");
  const std::string path = assignment.substr(0, eq);
  const std::string literal = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(literal);
  } catch (const json::parse_error&) {
    value = literal;  // bare strings need no quotes
  }

  json* node = &config;
  std::size_t pos = 0;
  std::string done;
  for (;;) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot - pos);
    if (key.empty()) throw ConfigError(path, "override path has an empty segment");
    done = done.empty() ? key : done + "." + key;
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object())
      throw ConfigError(done, "unknown config key: " + done);
    node = &(*node)[key];
    pos = dot + 1;
  }
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
}

/// Writes `<prefix>_metrics.csv` and `<prefix>_summary.json` into out_dir.
inline void write_scenario_outputs(const ScenarioResult& result,
                                   const std::filesystem::path& out_dir) {
  const std::string prefix = result.config.output_prefix;
  write_text_file(out_dir / (prefix + "_metrics.csv"), metrics_to_csv(result.rows));
  write_text_file(out_dir / (prefix + "_summary.json"),
                  result.summary.dump(2) + "\n");
}

}  // namespace tikpd
