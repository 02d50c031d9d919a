#pragma once

#include "agp/common.hpp"
#include "agp/objectives.hpp"
#include "agp/pushsum.hpp"
#include "agp/schedule.hpp"
#include "agp/topology.hpp"

#include <cmath>
#include <deque>
#include <memory>
#include <string>
#include <vector>

namespace agp {

enum class StepSizeKind {
  constant,                 // alpha_i = w_i B / K^theta
  diminishing,              // alpha_i[k] = w_i B / c_i[k]^theta
  known_rates_constant,     // constant with w_i = K / c_i[K-1]
  known_rates_diminishing,  // diminishing with w_i = S_theta(K) / S_theta(c_i[K-1])
};

inline const char* to_string(StepSizeKind k) {
  switch (k) {
    case StepSizeKind::constant: return "constant";
    case StepSizeKind::diminishing: return "diminishing";
    case StepSizeKind::known_rates_constant: return "known_rates_constant";
    case StepSizeKind::known_rates_diminishing: return "known_rates_diminishing";
  }
  return "?";
}

class StepSizePolicy {
 public:
  static StepSizePolicy constant(double base, double theta, int horizon,
                                 std::vector<double> weights = {}) {
    if (!(theta > 0.0 && theta < 1.0))
      throw InvalidTarget("constant step-size needs theta in (0,1)");
    return StepSizePolicy(StepSizeKind::constant, base, theta, horizon, std::move(weights));
  }

  static StepSizePolicy diminishing(double base, double theta, std::vector<double> weights = {}) {
    if (!(theta > 0.5 && theta < 1.0))
      throw InvalidTarget("diminishing step-size needs theta in (0.5,1)");
    return StepSizePolicy(StepSizeKind::diminishing, base, theta, 0, std::move(weights));
  }

  // Update-rate-corrected variants; need the whole schedule up front.
  static StepSizePolicy known_rates(StepSizeKind kind, double base, double theta,
                                    const Schedule& s) {
    const int K = s.horizon();
    std::vector<double> w(s.agent_count());
    if (kind == StepSizeKind::known_rates_constant) {
      for (int i = 0; i < s.agent_count(); ++i)
        w[i] = static_cast<double>(K) / local_iteration_counter(s, i, K - 1);
      StepSizePolicy p = constant(base, theta, K, std::move(w));
      p.kind_ = kind;
      return p;
    }
    if (kind == StepSizeKind::known_rates_diminishing) {
      if (!(theta > 0.5 && theta < 1.0))
        throw InvalidTarget("diminishing step-size needs theta in (0.5,1)");
      auto partial = [theta](int count) {
        double sum = 0.0;
        for (int k = 0; k < count; ++k) sum += std::pow(k + 1.0, -theta);
        return sum;
      };
      const double full = partial(K);
      for (int i = 0; i < s.agent_count(); ++i)
        w[i] = full / partial(local_iteration_counter(s, i, K - 1));
      StepSizePolicy p(StepSizeKind::known_rates_diminishing, base, theta, K, std::move(w));
      return p;
    }
    throw InvalidTarget("known_rates expects a known-rates kind");
  }

  StepSizeKind kind() const { return kind_; }
  double base() const { return base_; }
  double theta() const { return theta_; }
  int horizon() const { return horizon_; }
  const std::vector<double>& weights() const { return weights_; }
  bool is_constant() const {
    return kind_ == StepSizeKind::constant || kind_ == StepSizeKind::known_rates_constant;
  }

  double weight(int agent) const {
    return weights_.empty() ? 1.0 : weights_.at(static_cast<std::size_t>(agent));
  }

  // Step size at an agent's local iteration count c >= 1. Constant kinds
  // ignore c except through the per-agent weight.
  double alpha(int agent, int local_count) const {
    const double w = weight(agent);
    if (is_constant()) return w * base_ / std::pow(static_cast<double>(horizon_), theta_);
    return w * base_ / std::pow(static_cast<double>(local_count), theta_);
  }

  // Largest value alpha() can return for this agent.
  double max_alpha(int agent) const { return is_constant() ? alpha(agent, 1) : weight(agent) * base_; }

 private:
  StepSizePolicy(StepSizeKind kind, double base, double theta, int horizon,
                 std::vector<double> weights)
      : kind_(kind), base_(base), theta_(theta), horizon_(horizon), weights_(std::move(weights)) {
    if (!(base_ > 0.0)) throw InvalidTarget("step-size base must be positive");
    if (is_constant() && horizon_ < 1)
      throw InvalidTarget("constant step-size needs the horizon K");
    for (double w : weights_)
      if (!(w >= 1.0)) throw InvalidTarget("step-size weights must be >= 1");
  }

  StepSizeKind kind_;
  double base_;
  double theta_;
  int horizon_;
  std::vector<double> weights_;
};

// alpha_i[k] <= mu/(2 M^2) * (1/N_out_max)^(n*(tau_bar+1)). Vacuously small
// for all but tiny networks; enforcement is optional for that reason.
inline double theoretical_step_bound(double mu, double m_smooth, int n_out_max, int n,
                                     int tau_bar) {
  return mu / (2.0 * m_smooth * m_smooth) *
         std::pow(1.0 / n_out_max, static_cast<double>(n) * (tau_bar + 1));
}

struct AgpRun {
  int n = 0;
  int d = 0;
  int K = 0;
  std::vector<Vec> xbar;         // K+1 entries
  std::vector<Mat> z_real;       // K+1 entries, n x d
  std::vector<Vec> alpha_delta;  // K entries; alpha_i[k] at activations, else 0
  Mat final_x;                   // augmented state after K steps
  Vec final_y;
  double min_real_weight = 1.0;
  double max_recursion_defect = 0.0;  // averaged-iterate identity residual
  double max_weight_defect = 0.0;
  double grad_norm_bound = 0.0;  // max ||grad f_i(z_i[k])|| seen during the run
  std::string policy_name;
  std::shared_ptr<const Schedule> schedule;        // set when run in-process
  std::shared_ptr<const AugmentedGraph> graph;
};

struct AgpOptions {
  bool enforce_theoretical_bound = false;
};

namespace detail {

template <ObjectiveLike F>
void check_step_bound(const std::vector<F>& objs, const AugmentedGraph& ag, const Schedule& s,
                      const StepSizePolicy& policy) {
  const CurvatureConstants cc = aggregate_constants(objs);
  const double bound = theoretical_step_bound(cc.mu, cc.smoothness,
                                              ag.base().max_out_degree(), ag.real_count(),
                                              s.tau_bar());
  for (int i = 0; i < ag.real_count(); ++i)
    if (policy.max_alpha(i) > bound)
      throw StepSizeExceedsBound("agent " + std::to_string(i + 1) + " step size " +
                                 std::to_string(policy.max_alpha(i)) + " exceeds " +
                                 std::to_string(bound));
}

template <ObjectiveLike F>
void check_run_inputs(const AugmentedGraph& ag, const Schedule& s, const std::vector<F>& objs,
                      const Mat& x0) {
  const int n = ag.real_count();
  if (s.agent_count() != n || static_cast<int>(objs.size()) != n || x0.rows() != n)
    throw DimensionMismatch("graph, schedule, objectives and x0 must agree on the agent count");
  for (const F& f : objs)
    if (f.dim() != x0.cols()) throw DimensionMismatch("objective dimension disagrees with x0");
}

}  // namespace detail

// Matrix-form asynchronous gradient-push: per index, activated agents apply a
// gradient step at their current de-biased estimate, then one gossip matrix
// mixes the augmented state.
//
// Step counters are the agents' activation counts (index 0 counts because
// generated schedules activate everyone there), so an agent's ell-th gradient
// always uses alpha(i, ell). On schedules with a universal index-0 activation
// this equals the c_i[k] convention of local_iteration_counter.
template <ObjectiveLike F>
AgpRun run_agp(const AugmentedGraph& ag, const Schedule& s, const std::vector<F>& objs,
               const Mat& x0, const StepSizePolicy& policy, const AgpOptions& opts = {}) {
  detail::check_run_inputs(ag, s, objs, x0);
  if (opts.enforce_theoretical_bound) detail::check_step_bound(objs, ag, s, policy);

  const int n = ag.real_count();
  const int d = static_cast<int>(x0.cols());
  const int K = s.horizon();
  PushSumState state(ag, x0);

  AgpRun run;
  run.n = n;
  run.d = d;
  run.K = K;
  run.policy_name = to_string(policy.kind());
  run.xbar.reserve(K + 1);
  run.z_real.reserve(K + 1);
  run.alpha_delta.assign(K, Vec::Zero(n));
  run.schedule = std::make_shared<Schedule>(s);
  run.graph = std::make_shared<AugmentedGraph>(ag);

  std::vector<int> counts(n, 0);
  Mat grad_block = Mat::Zero(ag.node_count(), d);

  auto log_state = [&](const PushSumState& st) {
    run.xbar.push_back(st.xbar());
    run.z_real.push_back(st.z_real_block());
    run.min_real_weight = std::min(run.min_real_weight, st.y().head(n).minCoeff());
    run.max_weight_defect = std::max(run.max_weight_defect, std::abs(st.weight_total() - n));
  };
  log_state(state);

  for (int k = 0; k < K; ++k) {
    grad_block.setZero();
    Vec applied_mean = Vec::Zero(d);
    for (int i : s.active(k)) {
      ++counts[i];
      const double a = policy.alpha(i, counts[i]);
      const Vec g = objs[i].gradient(run.z_real.back().row(i).transpose());
      run.grad_norm_bound = std::max(run.grad_norm_bound, g.norm());
      grad_block.row(i) = a * g;
      applied_mean += (a / n) * g;
      run.alpha_delta[k][i] = a;
    }

    const ConsensusMatrix m = consensus_matrix_at(ag, s, k);
    Mat xin = state.x() - grad_block;
    Mat xout;
    Vec yout;
    m.apply(xin, xout);
    m.apply(state.y(), yout);
    state = PushSumState(n, std::move(xout), std::move(yout));
    log_state(state);

    const Vec expected = run.xbar[k] - applied_mean;
    run.max_recursion_defect =
        std::max(run.max_recursion_defect, (run.xbar[k + 1] - expected).cwiseAbs().maxCoeff());
  }

  run.final_x = state.x();
  run.final_y = state.y();
  return run;
}

// Per-agent buffer formulation of the same algorithm: local gradient, copy
// (x/N_out, y/N_out) to each out-neighbor with the schedule's delay, then
// absorb everything that falls due this index. Mutual oracle for run_agp:
// identical schedules must give identical trajectories to rounding.
template <ObjectiveLike F>
AgpRun run_agp_buffered(const AugmentedGraph& ag, const Schedule& s, const std::vector<F>& objs,
                        const Mat& x0, const StepSizePolicy& policy, const AgpOptions& opts = {}) {
  detail::check_run_inputs(ag, s, objs, x0);
  if (opts.enforce_theoretical_bound) detail::check_step_bound(objs, ag, s, policy);

  const int n = ag.real_count();
  const int d = static_cast<int>(x0.cols());
  const int K = s.horizon();
  const int tmax = ag.tau_msg_max();

  Mat x = x0;
  Vec y = Vec::Ones(n);

  struct Parcel {
    int receiver;
    Vec xpart;
    double ypart;
  };
  // in-flight parcels bucketed by due index, relative to the current one
  std::deque<std::vector<Parcel>> flights(tmax + 1);

  AgpRun run;
  run.n = n;
  run.d = d;
  run.K = K;
  run.policy_name = to_string(policy.kind());
  run.alpha_delta.assign(K, Vec::Zero(n));
  run.schedule = std::make_shared<Schedule>(s);
  run.graph = std::make_shared<AugmentedGraph>(ag);

  std::vector<int> counts(n, 0);
  auto log_state = [&]() {
    Vec total = x.colwise().sum();
    double ytotal = y.sum();
    for (const auto& bucket : flights)
      for (const Parcel& p : bucket) {
        total += p.xpart;
        ytotal += p.ypart;
      }
    run.xbar.push_back(total / n);
    Mat z(n, d);
    for (int i = 0; i < n; ++i) {
      if (!(y[i] > 0.0))
        throw DebiasUndefinedForRealNode("real agent " + std::to_string(i + 1) +
                                         " lost its push-sum weight");
      z.row(i) = x.row(i) / y[i];
    }
    run.z_real.push_back(std::move(z));
    run.min_real_weight = std::min(run.min_real_weight, y.minCoeff());
    run.max_weight_defect = std::max(run.max_weight_defect, std::abs(ytotal - n));
  };
  log_state();

  for (int k = 0; k < K; ++k) {
    Vec applied_mean = Vec::Zero(d);
    for (int i : s.active(k)) {
      ++counts[i];
      const double a = policy.alpha(i, counts[i]);
      const Vec g = objs[i].gradient(run.z_real.back().row(i).transpose());
      run.grad_norm_bound = std::max(run.grad_norm_bound, g.norm());
      x.row(i) -= a * g.transpose();
      applied_mean += (a / n) * g;
      run.alpha_delta[k][i] = a;
    }
    for (int i : s.active(k)) {
      const double share = 1.0 / ag.base().out_degree(i);
      const Vec xs = share * x.row(i).transpose();
      const double ys = share * y[i];
      for (int j : ag.base().out_neighbors(i)) {
        if (j == i) continue;
        flights[static_cast<std::size_t>(s.delay(k, i, j))].push_back({j, xs, ys});
      }
      x.row(i) = xs.transpose();
      y[i] = ys;
    }
    for (const Parcel& p : flights.front()) {
      x.row(p.receiver) += p.xpart.transpose();
      y[p.receiver] += p.ypart;
    }
    flights.pop_front();
    flights.emplace_back();

    log_state();
    const Vec expected = run.xbar[k] - applied_mean;
    run.max_recursion_defect =
        std::max(run.max_recursion_defect, (run.xbar[k + 1] - expected).cwiseAbs().maxCoeff());
  }

  // pack the remaining in-flight mass into the augmented layout for callers
  // that inspect the final state
  run.final_x = Mat::Zero(n * (tmax + 1), d);
  run.final_y = Vec::Zero(n * (tmax + 1));
  run.final_x.topRows(n) = x;
  run.final_y.head(n) = y;
  for (std::size_t r = 0; r < flights.size(); ++r)
    for (const Parcel& p : flights[r]) {
      // a parcel due in r more indices sits at chain stage r+1... stage r
      // after the pop above; stage index r+1 would overflow only if r == tmax
      const int stage = static_cast<int>(r) + 1;
      if (stage <= tmax) {
        run.final_x.row(stage * n + p.receiver) += p.xpart.transpose();
        run.final_y[stage * n + p.receiver] += p.ypart;
      }
    }
  return run;
}

// Final distance of the network average to a reference point.
inline double final_distance(const AgpRun& run, const Vec& reference) {
  return (run.xbar.back() - reference).norm();
}

}  // namespace agp
