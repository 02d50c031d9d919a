#pragma once

#include "agp/analysis.hpp"
#include "agp/common.hpp"
#include "agp/io.hpp"
#include "agp/objectives.hpp"
#include "agp/optimizer.hpp"
#include "agp/pushsum.hpp"
#include "agp/runtime.hpp"
#include "agp/schedule.hpp"
#include "agp/topology.hpp"

#include <json.hpp>

#include <filesystem>
#include <future>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agp {

// ---------------------------------------------------------------------------
// Builtin graph families.

inline ReferenceGraph make_ring_graph(int n) {
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) edges.emplace(i, (i + 1) % n);
  return build_reference_graph(n, edges);
}

inline ReferenceGraph make_complete_graph(int n) {
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) edges.emplace(i, j);
  return build_reference_graph(n, edges);
}

// Fig-1-style ring with one chord: n-ring plus the edge 3 -> 1 when n >= 3.
inline ReferenceGraph make_ring_with_chord_graph(int n) {
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) edges.emplace(i, (i + 1) % n);
  if (n >= 3) edges.emplace(2, 0);
  return build_reference_graph(n, edges);
}

inline ReferenceGraph make_erdos_renyi_graph(int n, double p, std::uint64_t seed,
                                             int max_attempts = 500) {
  Rng rng(seed);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::set<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && rng.next_unit() < p) edges.emplace(i, j);
    try {
      return build_reference_graph(n, edges);
    } catch (const NotStronglyConnected&) {
      continue;
    }
  }
  throw NotStronglyConnected("no strongly connected draw in " + std::to_string(max_attempts) +
                             " attempts (n=" + std::to_string(n) + ", p=" + std::to_string(p) +
                             ")");
}

// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // graph
  std::string graph = "ring";  // ring | ring_chord | complete | erdos_renyi | file
  int n = 4;
  double er_p = 0.5;
  std::uint64_t graph_seed = 1;
  std::string graph_file;

  // objectives
  std::string objective = "quadratic";  // quadratic | least_squares | logistic
  int d = 2;
  int samples_per_agent = 0;  // 0 = max(d, 8)
  double kappa_min = 3.0;
  double kappa_max = 37.0;
  std::uint64_t objective_seed = 7;
  int classes = 3;      // logistic
  double lambda = 1e-4;  // logistic ridge

  // schedule
  std::string schedule = "semi_synchronous";  // | uniform_random | rate_ratio
  std::vector<int> rate_ratios;
  int K = 1000;
  int tau_proc_max = 1;
  int tau_msg_max = 0;
  std::uint64_t schedule_seed = 3;

  // step-size policy
  std::string policy = "diminishing";
  double step_base = 1.0;  // B
  double theta = 0.6;
  std::vector<double> weights;  // empty = all ones
  bool enforce_step_bound = false;

  // initial point
  std::uint64_t x0_seed = 11;
  double x0_scale = 1.0;

  // backend
  std::string backend = "simulate";  // | threaded
  int local_iterations = 50;
  std::vector<double> straggler_ms;
  int tau_proc_cap = 0;
  int inbox_capacity = 1 << 16;

  std::string out_dir = "runs/out";
};

inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw FormatError("config: " + m); };
  if (c.n < 1) fail("n must be >= 1");
  if (c.d < 1) fail("d must be >= 1");
  if (c.K < 1) fail("K must be >= 1");
  if (c.graph != "ring" && c.graph != "ring_chord" && c.graph != "complete" &&
      c.graph != "erdos_renyi" && c.graph != "file")
    fail("unknown graph '" + c.graph + "'");
  if (c.graph == "file" && c.graph_file.empty()) fail("graph=file needs graph_file");
  if (c.graph == "erdos_renyi" && !(c.er_p > 0.0 && c.er_p <= 1.0)) fail("er_p must be in (0,1]");
  if (c.objective != "quadratic" && c.objective != "least_squares" && c.objective != "logistic")
    fail("unknown objective '" + c.objective + "'");
  if (!(c.kappa_min >= 1.0 && c.kappa_max >= c.kappa_min)) fail("bad condition-number range");
  if (c.objective == "logistic" && c.classes < 2) fail("logistic needs >= 2 classes");
  if (c.objective == "logistic" && !(c.lambda > 0.0)) fail("logistic needs lambda > 0");
  if (c.schedule != "semi_synchronous" && c.schedule != "uniform_random" &&
      c.schedule != "rate_ratio")
    fail("unknown schedule '" + c.schedule + "'");
  if (c.schedule == "rate_ratio" && static_cast<int>(c.rate_ratios.size()) != c.n)
    fail("rate_ratio needs one multiplier per agent");
  if (c.tau_proc_max < 1) fail("tau_proc_max must be >= 1");
  if (c.tau_msg_max < 0) fail("tau_msg_max must be >= 0");
  if (c.policy != "constant" && c.policy != "diminishing" && c.policy != "known_rates_constant" &&
      c.policy != "known_rates_diminishing")
    fail("unknown policy '" + c.policy + "'");
  if (!(c.step_base > 0.0)) fail("B must be > 0");
  const bool constant_kind = c.policy == "constant" || c.policy == "known_rates_constant";
  if (constant_kind && !(c.theta > 0.0 && c.theta < 1.0)) fail("constant policy needs theta in (0,1)");
  if (!constant_kind && !(c.theta > 0.5 && c.theta < 1.0))
    fail("diminishing policy needs theta in (0.5,1)");
  if (!c.weights.empty() && static_cast<int>(c.weights.size()) != c.n)
    fail("weights must have one entry per agent");
  for (double w : c.weights)
    if (!(w >= 1.0)) fail("weights must be >= 1");
  if (c.backend != "simulate" && c.backend != "threaded") fail("unknown backend '" + c.backend + "'");
  if (c.backend == "threaded" && c.local_iterations < 1) fail("local_iterations must be >= 1");
  if (c.backend == "threaded" &&
      (c.policy == "known_rates_constant" || c.policy == "known_rates_diminishing"))
    fail("known-rates policies need schedule foreknowledge; use the simulate backend");
  if (!c.straggler_ms.empty() && static_cast<int>(c.straggler_ms.size()) != c.n)
    fail("straggler_ms must have one entry per agent");
  if (c.out_dir.empty()) fail("out_dir must not be empty");
}

inline ReferenceGraph build_graph(const ExperimentConfig& c) {
  if (c.graph == "ring") return make_ring_graph(c.n);
  if (c.graph == "ring_chord") return make_ring_with_chord_graph(c.n);
  if (c.graph == "complete") return make_complete_graph(c.n);
  if (c.graph == "erdos_renyi") return make_erdos_renyi_graph(c.n, c.er_p, c.graph_seed);
  return parse_edge_list(io::read_file(c.graph_file), c.n);
}

inline std::vector<double> condition_targets(const ExperimentConfig& c) {
  std::vector<double> t(c.n);
  for (int i = 0; i < c.n; ++i)
    t[i] = c.n == 1 ? c.kappa_min
                    : c.kappa_min + (c.kappa_max - c.kappa_min) * i / (c.n - 1.0);
  if (c.d == 1) std::fill(t.begin(), t.end(), 1.0);
  return t;
}

inline SchedulePolicy schedule_policy(const ExperimentConfig& c) {
  if (c.schedule == "semi_synchronous") return SemiSynchronous{};
  if (c.schedule == "uniform_random") return UniformRandom{};
  return RateRatio{c.rate_ratios};
}

inline StepSizePolicy build_policy(const ExperimentConfig& c, const Schedule* s) {
  if (c.policy == "constant") return StepSizePolicy::constant(c.step_base, c.theta, c.K, c.weights);
  if (c.policy == "diminishing") return StepSizePolicy::diminishing(c.step_base, c.theta, c.weights);
  if (!s) throw FormatError("known-rates policies need the schedule");
  const StepSizeKind kind = c.policy == "known_rates_constant"
                                ? StepSizeKind::known_rates_constant
                                : StepSizeKind::known_rates_diminishing;
  return StepSizePolicy::known_rates(kind, c.step_base, c.theta, *s);
}

inline Mat initial_point(const ExperimentConfig& c, int dim) {
  Rng rng(c.x0_seed);
  Mat x0(c.n, dim);
  for (int i = 0; i < c.n; ++i)
    for (int j = 0; j < dim; ++j) x0(i, j) = c.x0_scale * rng.next_gaussian();
  return x0;
}

// ---------------------------------------------------------------------------
// Run artifacts and reports.

struct RunSummary {
  BiasReport bias;
  RateDiagnostics rate;
  double final_dist_xstar = 0.0;
  double final_dist_xstar_k = 0.0;
  double min_real_weight = 0.0;
  double max_recursion_defect = 0.0;
  double max_weight_defect = 0.0;
  int realized_K = 0;
  double replay_mismatch = -1.0;  // threaded only: |replay xbar - threaded xbar|
};

inline std::string report_csv(const RunSummary& s) {
  std::ostringstream out;
  out << "delta_K,s_bar,kappa,bias_bound,bias_actual,final_dist_xstar,final_dist_xstar_k,"
         "mean_sq_err,loglog_slope,q_hat,c_used,grad_bound,rhs_total,cert_satisfied,"
         "min_real_weight,max_recursion_defect,max_weight_defect,replay_mismatch\n";
  out << io::fmt(s.bias.delta_K) << "," << io::fmt(s.bias.s_bar) << "," << io::fmt(s.bias.kappa)
      << "," << io::fmt(s.bias.bound) << "," << io::fmt(s.bias.actual) << ","
      << io::fmt(s.final_dist_xstar) << "," << io::fmt(s.final_dist_xstar_k) << ","
      << io::fmt(s.rate.mean_sq_err) << "," << io::fmt(s.rate.loglog_slope) << ","
      << io::fmt(s.rate.certificate.q) << "," << io::fmt(s.rate.certificate.c) << ","
      << io::fmt(s.rate.certificate.grad_bound) << "," << io::fmt(s.rate.certificate.rhs_total)
      << "," << (s.rate.certificate.satisfied ? 1 : 0) << "," << io::fmt(s.min_real_weight) << ","
      << io::fmt(s.max_recursion_defect) << "," << io::fmt(s.max_weight_defect) << ","
      << io::fmt(s.replay_mismatch) << "\n";
  return out.str();
}

inline std::string report_text(const RunSummary& s, const ExperimentConfig& c) {
  std::ostringstream out;
  out << "gradient-push run report\n";
  out << "backend: " << c.backend << "  agents: " << c.n << "  K: " << s.realized_K << "\n";
  out << "schedule: " << c.schedule << "  tau_proc_max: " << c.tau_proc_max
      << "  tau_msg_max: " << c.tau_msg_max << "\n";
  out << "policy: " << c.policy << "  B: " << io::fmt(c.step_base) << "  theta: " << io::fmt(c.theta)
      << "\n\n";
  out << "asynchrony bias measure delta_K: " << io::fmt(s.bias.delta_K) << "  (range [0, sqrt 2])\n";
  out << "S_bar: " << io::fmt(s.bias.s_bar) << "  kappa: " << io::fmt(s.bias.kappa) << "\n";
  out << "minimizer-distance bound: " << io::fmt(s.bias.bound)
      << "  actual |x*_K - x*|: " << io::fmt(s.bias.actual) << "\n";
  out << "final |xbar - x*|: " << io::fmt(s.final_dist_xstar)
      << "  final |xbar - x*_K|: " << io::fmt(s.final_dist_xstar_k) << "\n";
  out << "mean squared error vs x*_K: " << io::fmt(s.rate.mean_sq_err)
      << "  prefix log-log slope: " << io::fmt(s.rate.loglog_slope) << "\n";
  if (s.rate.certificate.available) {
    out << "rate certificate: q=" << io::fmt(s.rate.certificate.q)
        << " C=" << io::fmt(s.rate.certificate.c) << " L=" << io::fmt(s.rate.certificate.grad_bound)
        << " rhs=" << io::fmt(s.rate.certificate.rhs_total)
        << "  mse <= rhs: " << (s.rate.certificate.satisfied ? "yes" : "NO") << "\n";
  }
  out << "min real push-sum weight: " << io::fmt(s.min_real_weight) << "\n";
  out << "max averaged-iterate recursion defect: " << io::fmt(s.max_recursion_defect) << "\n";
  out << "max weight-conservation defect: " << io::fmt(s.max_weight_defect) << "\n";
  if (s.replay_mismatch >= 0.0)
    out << "threaded replay |xbar| mismatch: " << io::fmt(s.replay_mismatch) << "\n";
  return out.str();
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["graph"] = c.graph;
  j["n"] = c.n;
  j["er_p"] = c.er_p;
  j["graph_seed"] = c.graph_seed;
  j["graph_file"] = c.graph_file;
  j["objective"] = c.objective;
  j["d"] = c.d;
  j["samples_per_agent"] = c.samples_per_agent;
  j["kappa_min"] = c.kappa_min;
  j["kappa_max"] = c.kappa_max;
  j["objective_seed"] = c.objective_seed;
  j["classes"] = c.classes;
  j["lambda"] = c.lambda;
  j["schedule"] = c.schedule;
  j["rate_ratios"] = c.rate_ratios;
  j["K"] = c.K;
  j["tau_proc_max"] = c.tau_proc_max;
  j["tau_msg_max"] = c.tau_msg_max;
  j["schedule_seed"] = c.schedule_seed;
  j["policy"] = c.policy;
  j["step_base"] = c.step_base;
  j["theta"] = c.theta;
  j["weights"] = c.weights;
  j["enforce_step_bound"] = c.enforce_step_bound;
  j["x0_seed"] = c.x0_seed;
  j["x0_scale"] = c.x0_scale;
  j["backend"] = c.backend;
  j["local_iterations"] = c.local_iterations;
  j["straggler_ms"] = c.straggler_ms;
  j["tau_proc_cap"] = c.tau_proc_cap;
  j["inbox_capacity"] = c.inbox_capacity;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.graph = j.value("graph", c.graph);
  c.n = j.value("n", c.n);
  c.er_p = j.value("er_p", c.er_p);
  c.graph_seed = j.value("graph_seed", c.graph_seed);
  c.graph_file = j.value("graph_file", c.graph_file);
  c.objective = j.value("objective", c.objective);
  c.d = j.value("d", c.d);
  c.samples_per_agent = j.value("samples_per_agent", c.samples_per_agent);
  c.kappa_min = j.value("kappa_min", c.kappa_min);
  c.kappa_max = j.value("kappa_max", c.kappa_max);
  c.objective_seed = j.value("objective_seed", c.objective_seed);
  c.classes = j.value("classes", c.classes);
  c.lambda = j.value("lambda", c.lambda);
  c.schedule = j.value("schedule", c.schedule);
  c.rate_ratios = j.value("rate_ratios", c.rate_ratios);
  c.K = j.value("K", c.K);
  c.tau_proc_max = j.value("tau_proc_max", c.tau_proc_max);
  c.tau_msg_max = j.value("tau_msg_max", c.tau_msg_max);
  c.schedule_seed = j.value("schedule_seed", c.schedule_seed);
  c.policy = j.value("policy", c.policy);
  c.step_base = j.value("step_base", c.step_base);
  c.theta = j.value("theta", c.theta);
  c.weights = j.value("weights", c.weights);
  c.enforce_step_bound = j.value("enforce_step_bound", c.enforce_step_bound);
  c.x0_seed = j.value("x0_seed", c.x0_seed);
  c.x0_scale = j.value("x0_scale", c.x0_scale);
  c.backend = j.value("backend", c.backend);
  c.local_iterations = j.value("local_iterations", c.local_iterations);
  c.straggler_ms = j.value("straggler_ms", c.straggler_ms);
  c.tau_proc_cap = j.value("tau_proc_cap", c.tau_proc_cap);
  c.inbox_capacity = j.value("inbox_capacity", c.inbox_capacity);
  return c;
}

namespace detail {

template <ObjectiveLike F>
RunSummary summarize(const AgpRun& run, const std::vector<F>& objs, const StepSizePolicy& policy) {
  RunSummary s;
  const auto rw = reweighted_weights(run, objs);
  s.bias = bias_report(rw);
  s.rate = rate_diagnostics(run, rw, policy);
  s.final_dist_xstar = (run.xbar.back() - s.bias.x_star).norm();
  s.final_dist_xstar_k = (run.xbar.back() - s.bias.x_star_K).norm();
  s.min_real_weight = run.min_real_weight;
  s.max_recursion_defect = run.max_recursion_defect;
  s.max_weight_defect = run.max_weight_defect;
  s.realized_K = run.K;
  return s;
}

}  // namespace detail

// Runs one experiment and writes all artifacts under config.out_dir:
// graph.txt, schedule.txt, objectives.csv, trajectory.csv, metadata.json,
// report.csv, report.txt (and events.csv for the threaded backend).
inline RunSummary run_experiment(const ExperimentConfig& c) {
  namespace fs = std::filesystem;
  validate(c);
  const fs::path dir(c.out_dir);

  const ReferenceGraph g = build_graph(c);

  // objectives: logistic runs are driven by per-agent synthetic datasets,
  // everything else reduces to quadratics
  std::vector<QuadraticObjective> quads;
  std::vector<LogisticObjective> logos;
  std::vector<std::pair<Mat, Mat>> logo_data;
  int dim = c.d;
  if (c.objective == "logistic") {
    Rng rng(c.objective_seed);
    const int samples = c.samples_per_agent > 0 ? c.samples_per_agent : 8;
    for (int i = 0; i < c.n; ++i) {
      Mat X(samples, c.d);
      Mat Y = Mat::Zero(samples, c.classes);
      for (int r = 0; r < samples; ++r) {
        const int label = static_cast<int>(rng.next_below(c.classes));
        for (int f = 0; f < c.d; ++f)
          X(r, f) = rng.next_gaussian() + (f % c.classes == label ? 1.5 : 0.0);
        Y(r, label) = 1.0;
      }
      logo_data.emplace_back(X, Y);
      logos.emplace_back(std::move(X), std::move(Y), c.lambda);
    }
    dim = c.classes * c.d;
  } else {
    const int samples = c.samples_per_agent > 0 ? std::max(c.samples_per_agent, c.d)
                                                : std::max(c.d, 8);
    const auto problems =
        generate_synthetic_partition(c.n, c.d, samples, condition_targets(c), c.objective_seed);
    if (c.objective == "least_squares") {
      std::vector<LeastSquaresObjective> ls;
      const std::int64_t total = static_cast<std::int64_t>(c.n) * samples;
      for (const auto& p : problems) ls.emplace_back(p.data, p.targets, total);
      for (const auto& f : ls) quads.push_back(f.to_quadratic());
    } else {
      quads = quadratics_of(problems);
    }
  }

  const Mat x0 = initial_point(c, dim);
  RunSummary summary;
  AgpRun run;
  Schedule schedule;

  if (c.backend == "simulate") {
    schedule = generate_schedule(c.n, c.K, c.tau_proc_max, c.tau_msg_max, schedule_policy(c),
                                 c.schedule_seed);
    const AugmentedGraph ag = augment(g, c.tau_msg_max);
    const StepSizePolicy policy = build_policy(c, &schedule);
    AgpOptions opts;
    opts.enforce_theoretical_bound = c.enforce_step_bound;
    if (c.objective == "logistic") {
      run = run_agp(ag, schedule, logos, x0, policy, opts);
      summary = detail::summarize(run, logos, policy);
    } else {
      run = run_agp(ag, schedule, quads, x0, policy, opts);
      summary = detail::summarize(run, quads, policy);
    }
  } else {
    ThreadedOptions topts;
    topts.local_iterations = c.local_iterations;
    topts.straggler_delay_ms = c.straggler_ms;
    topts.tau_proc_cap = c.tau_proc_cap;
    topts.inbox_capacity = c.inbox_capacity;
    ThreadedRunResult result;
    if (c.objective == "logistic") {
      const StepSizePolicy policy = build_policy(c, nullptr);
      result = run_threaded(g, logos, x0, policy, topts);
      schedule = reconstruct_schedule(result.log, g);
      const AugmentedGraph ag = augment(g, schedule.tau_msg_max());
      run = run_agp(ag, schedule, logos, x0, policy);
      summary = detail::summarize(run, logos, policy);
    } else {
      const StepSizePolicy policy = build_policy(c, nullptr);
      result = run_threaded(g, quads, x0, policy, topts);
      schedule = reconstruct_schedule(result.log, g);
      const AugmentedGraph ag = augment(g, schedule.tau_msg_max());
      run = run_agp(ag, schedule, quads, x0, policy);
      summary = detail::summarize(run, quads, policy);
    }
    const Vec threaded_xbar = result.final_x.colwise().mean().transpose();
    summary.replay_mismatch = (run.xbar.back() - threaded_xbar).norm();
    io::atomic_write(dir / "events.csv", event_log_csv(result.log));
  }

  io::atomic_write(dir / "graph.txt", edge_list_text(g));
  io::atomic_write(dir / "schedule.txt", schedule_text(schedule));
  if (c.objective == "logistic") {
    for (int i = 0; i < c.n; ++i) {
      std::ostringstream ds;
      for (int f = 0; f < c.d; ++f) ds << "f" << f << ",";
      ds << "label\n";
      const auto& [X, Y] = logo_data[i];
      for (int r = 0; r < X.rows(); ++r) {
        for (int f = 0; f < c.d; ++f) ds << io::fmt(X(r, f)) << ",";
        int label = 0;
        Y.row(r).maxCoeff(&label);
        ds << label << "\n";
      }
      io::atomic_write(dir / ("dataset_" + std::to_string(i + 1) + ".csv"), ds.str());
    }
  } else {
    io::atomic_write(dir / "objectives.csv", objectives_csv(quads));
  }
  io::atomic_write(dir / "trajectory.csv", agp_trajectory_csv(run));

  nlohmann::json meta;
  meta["config"] = config_json(c);
  meta["realized_K"] = run.K;
  meta["dim"] = dim;
  {
    const StepSizePolicy policy = build_policy(c, &schedule);
    std::vector<double> w(c.n);
    for (int i = 0; i < c.n; ++i) w[i] = policy.weight(i);
    meta["policy_weights"] = w;
  }
  const BoundsReport bounds = verify_bounds(schedule);
  meta["observed_proc_gap"] = bounds.max_observed_proc_gap;
  meta["observed_msg_delay"] = bounds.max_observed_msg_delay;
  meta["schedule_ok"] = bounds.ok;
  io::atomic_write(dir / "metadata.json", meta.dump(2) + "\n");
  io::atomic_write(dir / "report.csv", report_csv(summary));
  io::atomic_write(dir / "report.txt", report_text(summary, c));
  return summary;
}

// Recomputes the analysis reports from the artifacts in a run directory.
inline RunSummary analyze_directory(const std::string& dir_in) {
  namespace fs = std::filesystem;
  const fs::path dir(dir_in);
  if (!fs::exists(dir / "metadata.json") || !fs::exists(dir / "trajectory.csv"))
    throw MissingArtifacts(dir_in + " does not contain metadata.json and trajectory.csv");

  const nlohmann::json meta = nlohmann::json::parse(io::read_file(dir / "metadata.json"));
  const ExperimentConfig c = config_from_json(meta.at("config"));

  AgpRun run = parse_agp_trajectory_csv(io::read_file(dir / "trajectory.csv"));
  if (fs::exists(dir / "schedule.txt") && fs::exists(dir / "graph.txt")) {
    const Schedule s = parse_schedule(io::read_file(dir / "schedule.txt"));
    const ReferenceGraph g = parse_edge_list(io::read_file(dir / "graph.txt"), s.agent_count());
    run.schedule = std::make_shared<Schedule>(s);
    run.graph = std::make_shared<AugmentedGraph>(augment(g, s.tau_msg_max()));
  }

  std::vector<double> weights = meta.value("policy_weights", std::vector<double>());
  StepSizePolicy policy =
      (c.policy == "constant" || c.policy == "known_rates_constant")
          ? StepSizePolicy::constant(c.step_base, c.theta, c.K, weights)
          : StepSizePolicy::diminishing(c.step_base, c.theta, weights);

  RunSummary summary;
  if (c.objective == "logistic") {
    std::vector<LogisticObjective> logos;
    for (int i = 0; i < c.n; ++i) {
      const fs::path p = dir / ("dataset_" + std::to_string(i + 1) + ".csv");
      if (!fs::exists(p)) throw MissingArtifacts("missing " + p.string());
      auto [X, Y] = parse_labeled_csv(io::read_file(p), c.classes);
      logos.emplace_back(std::move(X), std::move(Y), c.lambda);
    }
    summary = detail::summarize(run, logos, policy);
  } else {
    if (!fs::exists(dir / "objectives.csv")) throw MissingArtifacts("missing objectives.csv");
    const auto quads = parse_objectives_csv(io::read_file(dir / "objectives.csv"));
    summary = detail::summarize(run, quads, policy);
  }
  summary.replay_mismatch = -1.0;
  io::atomic_write(dir / "report.csv", report_csv(summary));
  io::atomic_write(dir / "report.txt", report_text(summary, c));
  return summary;
}

// ---------------------------------------------------------------------------
// Sweeps: one run per value of a single config field, aggregated into a tidy
// CSV. Cells run in parallel and are fully isolated.

inline void apply_sweep_value(ExperimentConfig& c, const std::string& field,
                              const std::string& value) {
  auto as_int = [&] { return static_cast<int>(io::parse_long(value, 0)); };
  auto as_double = [&] { return io::parse_double(value, 0); };
  if (field == "theta") c.theta = as_double();
  else if (field == "B" || field == "step_base") c.step_base = as_double();
  else if (field == "K") c.K = as_int();
  else if (field == "n") c.n = as_int();
  else if (field == "d") c.d = as_int();
  else if (field == "tau_proc_max") c.tau_proc_max = as_int();
  else if (field == "tau_msg_max") c.tau_msg_max = as_int();
  else if (field == "schedule_seed" || field == "seed") c.schedule_seed = io::parse_long(value, 0);
  else if (field == "objective_seed") c.objective_seed = io::parse_long(value, 0);
  else if (field == "x0_seed") c.x0_seed = io::parse_long(value, 0);
  else if (field == "er_p") c.er_p = as_double();
  else if (field == "x0_scale") c.x0_scale = as_double();
  else if (field == "local_iterations") c.local_iterations = as_int();
  else if (field == "tau_proc_cap") c.tau_proc_cap = as_int();
  else throw FormatError("config: unknown sweep field '" + field + "'");
}

struct SweepCell {
  std::string value;
  bool ok = false;
  std::string error;
  RunSummary summary;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  bool all_ok = true;
};

// `tau_proc_sweep_scales_ratios`: when sweeping tau_proc_max on a rate_ratio
// schedule, re-derive the multipliers so half the agents run at the swept
// rate (the straggler-disparity experiment shape).
inline SweepResult run_sweep(const ExperimentConfig& base, const std::string& field,
                             const std::vector<std::string>& values,
                             bool tau_proc_sweep_scales_ratios = false) {
  if (values.empty()) throw FormatError("config: sweep needs at least one value");
  {
    ExperimentConfig probe = base;
    apply_sweep_value(probe, field, values.front());  // field must exist
  }
  namespace fs = std::filesystem;

  std::vector<std::future<SweepCell>> futures;
  for (std::size_t idx = 0; idx < values.size(); ++idx) {
    futures.push_back(std::async(std::launch::async, [&, idx]() {
      SweepCell cell;
      cell.value = values[idx];
      ExperimentConfig c = base;
      try {
        apply_sweep_value(c, field, values[idx]);
        if (tau_proc_sweep_scales_ratios && field == "tau_proc_max") {
          c.rate_ratios.assign(c.n, 1);
          for (int i = c.n / 2; i < c.n; ++i) c.rate_ratios[i] = std::max(1, c.tau_proc_max);
        }
        c.out_dir = (fs::path(base.out_dir) / ("cell_" + std::to_string(idx))).string();
        cell.summary = run_experiment(c);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      return cell;
    }));
  }

  SweepResult result;
  for (auto& f : futures) result.cells.push_back(f.get());
  for (const auto& c : result.cells) result.all_ok = result.all_ok && c.ok;

  std::ostringstream agg;
  agg << "value,ok,delta_K,bias_bound,bias_actual,final_dist_xstar,final_dist_xstar_k,"
         "mean_sq_err,loglog_slope,error\n";
  for (const auto& cell : result.cells) {
    agg << cell.value << "," << (cell.ok ? 1 : 0) << ",";
    if (cell.ok) {
      agg << io::fmt(cell.summary.bias.delta_K) << "," << io::fmt(cell.summary.bias.bound) << ","
          << io::fmt(cell.summary.bias.actual) << "," << io::fmt(cell.summary.final_dist_xstar)
          << "," << io::fmt(cell.summary.final_dist_xstar_k) << ","
          << io::fmt(cell.summary.rate.mean_sq_err) << "," << io::fmt(cell.summary.rate.loglog_slope)
          << ",";
    } else {
      agg << ",,,,,,,";
    }
    std::string err = cell.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    agg << err << "\n";
  }
  io::atomic_write(fs::path(base.out_dir) / "sweep.csv", agg.str());
  return result;
}

}  // namespace agp
