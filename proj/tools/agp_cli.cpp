// Experiment runner for asynchronous gradient-push: configures a topology,
// schedule, objectives and step-size policy, runs the simulator or the
// threaded backend, and emits plot-ready CSV artifacts plus analysis reports.
//
// Exit codes: 0 success, 2 validation error, 3 runtime error, 4 sweep with
// failed cells.

#include "agp/agp.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

void add_config_options(CLI::App& app, agp::ExperimentConfig& c) {
  app.add_option("--graph", c.graph, "ring | ring_chord | complete | erdos_renyi | file");
  app.add_option("--n", c.n, "number of agents");
  app.add_option("--er-p", c.er_p, "edge probability for erdos_renyi");
  app.add_option("--graph-seed", c.graph_seed, "seed for random graphs");
  app.add_option("--graph-file", c.graph_file, "edge-list file for graph=file");

  app.add_option("--objective", c.objective, "quadratic | least_squares | logistic");
  app.add_option("--d", c.d, "problem dimension (features for logistic)");
  app.add_option("--samples-per-agent", c.samples_per_agent, "local dataset size (0 = default)");
  app.add_option("--kappa-min", c.kappa_min, "smallest local condition-number target");
  app.add_option("--kappa-max", c.kappa_max, "largest local condition-number target");
  app.add_option("--objective-seed", c.objective_seed, "seed for synthetic objectives");
  app.add_option("--classes", c.classes, "class count for logistic");
  app.add_option("--lambda", c.lambda, "ridge weight for logistic");

  app.add_option("--schedule", c.schedule, "semi_synchronous | uniform_random | rate_ratio");
  app.add_option("--rate-ratios", c.rate_ratios, "per-agent activation periods")->delimiter(',');
  app.add_option("--K", c.K, "number of gossip indices");
  app.add_option("--tau-proc-max", c.tau_proc_max, "processing-delay bound");
  app.add_option("--tau-msg-max", c.tau_msg_max, "message-delay bound");
  app.add_option("--schedule-seed", c.schedule_seed, "seed for schedule generation");

  app.add_option("--policy", c.policy,
                 "constant | diminishing | known_rates_constant | known_rates_diminishing");
  app.add_option("--B", c.step_base, "step-size base");
  app.add_option("--theta", c.theta, "step-size exponent");
  app.add_option("--weights", c.weights, "per-agent step-size multipliers")->delimiter(',');
  app.add_flag("--enforce-step-bound", c.enforce_step_bound,
               "reject step sizes above the theoretical bound");

  app.add_option("--x0-seed", c.x0_seed, "seed for the initial point");
  app.add_option("--x0-scale", c.x0_scale, "scale of the initial point");

  app.add_option("--backend", c.backend, "simulate | threaded");
  app.add_option("--local-iterations", c.local_iterations, "per-agent stop bound (threaded)");
  app.add_option("--straggler-ms", c.straggler_ms, "per-agent loop delay in ms (threaded)")
      ->delimiter(',');
  app.add_option("--tau-proc-cap", c.tau_proc_cap, "iteration barrier cap (threaded, 0 = off)");
  app.add_option("--inbox-capacity", c.inbox_capacity, "bounded inbox size (threaded)");

  app.add_option("--out", c.out_dir, "output directory");
}

int fail_validation(const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  return 2;
}

int fail_runtime(const std::exception& e) {
  std::cerr << "runtime error: " << e.what() << "\n";
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous gradient-push experiment runner"};
  app.set_config("--config", "", "read options from an INI-style config file");
  app.require_subcommand(1);

  agp::ExperimentConfig config;

  auto* cmd_run = app.add_subcommand("run", "run one experiment and write its artifacts");
  add_config_options(*cmd_run, config);

  auto* cmd_sweep = app.add_subcommand("sweep", "run one experiment per value of a config field");
  add_config_options(*cmd_sweep, config);
  std::string sweep_field;
  std::vector<std::string> sweep_values;
  bool sweep_scales_ratios = false;
  cmd_sweep->add_option("--sweep-field", sweep_field, "config field to vary")->required();
  cmd_sweep->add_option("--sweep-values", sweep_values, "comma-separated values")
      ->required()
      ->delimiter(',');
  cmd_sweep->add_flag("--scale-rate-ratios", sweep_scales_ratios,
                      "when sweeping tau_proc_max, slow half the agents by the swept factor");

  auto* cmd_analyze = app.add_subcommand("analyze", "recompute reports for a run directory");
  std::string analyze_dir;
  cmd_analyze->add_option("dir", analyze_dir, "run directory")->required();

  auto* cmd_validate = app.add_subcommand("validate", "validate a configuration and exit");
  add_config_options(*cmd_validate, config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_validate->parsed()) {
      agp::validate(config);
      std::cout << "config ok: n=" << config.n << " K=" << config.K << " graph=" << config.graph
                << " schedule=" << config.schedule << " policy=" << config.policy << "\n";
      return 0;
    }
    if (cmd_run->parsed()) {
      agp::validate(config);
      const agp::RunSummary s = agp::run_experiment(config);
      std::cout << agp::report_text(s, config);
      std::cout << "artifacts written to " << config.out_dir << "\n";
      return 0;
    }
    if (cmd_sweep->parsed()) {
      agp::validate(config);
      if (sweep_values.empty()) throw agp::FormatError("config: sweep needs values");
      const agp::SweepResult r =
          agp::run_sweep(config, sweep_field, sweep_values, sweep_scales_ratios);
      std::cout << "sweep over " << sweep_field << ": " << r.cells.size() << " cells, "
                << (r.all_ok ? "all ok" : "with failures") << "\n";
      for (const auto& cell : r.cells)
        if (!cell.ok) std::cerr << "cell " << cell.value << " failed: " << cell.error << "\n";
      return r.all_ok ? 0 : 4;
    }
    if (cmd_analyze->parsed()) {
      const agp::RunSummary s = agp::analyze_directory(analyze_dir);
      std::cout << "reports rewritten under " << analyze_dir << "\n";
      std::cout << "bias bound " << agp::io::fmt(s.bias.bound) << ", actual "
                << agp::io::fmt(s.bias.actual) << "\n";
      return 0;
    }
  } catch (const agp::FormatError& e) {
    return fail_validation(e);
  } catch (const agp::MissingArtifacts& e) {
    return fail_validation(e);
  } catch (const agp::InvalidTarget& e) {
    return fail_validation(e);
  } catch (const agp::InfeasiblePolicy& e) {
    return fail_validation(e);
  } catch (const std::exception& e) {
    return fail_runtime(e);
  }
  return 0;
}
