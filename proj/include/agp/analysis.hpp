#pragma once

#include "agp/common.hpp"
#include "agp/objectives.hpp"
#include "agp/optimizer.hpp"
#include "agp/pushsum.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace agp {

// Cumulative applied step mass per agent and the resulting re-weighted
// objective sum_i pbar_i f_i. Asynchrony skews pbar away from uniform, and
// the skew is exactly what biases the limit point.
template <ObjectiveLike F>
struct ReweightedObjective {
  std::vector<double> step_mass;  // p_i = sum_k alpha_i[k] delta_i[k]
  std::vector<double> weights;    // pbar_i, positive, sums to 1
  std::vector<F> objectives;
};

template <ObjectiveLike F>
ReweightedObjective<F> reweighted_weights(const AgpRun& run, const std::vector<F>& objs) {
  if (run.K < 1 || run.alpha_delta.empty()) throw EmptyRun("run has no logged indices");
  if (static_cast<int>(objs.size()) != run.n)
    throw DimensionMismatch("objective count disagrees with the run");
  ReweightedObjective<F> rw;
  rw.step_mass.assign(run.n, 0.0);
  for (const Vec& ad : run.alpha_delta)
    for (int i = 0; i < run.n; ++i) rw.step_mass[i] += ad[i];
  double total = 0.0;
  for (double p : rw.step_mass) total += p;
  if (!(total > 0.0)) throw EmptyRun("run applied no step mass");
  rw.weights.resize(run.n);
  for (int i = 0; i < run.n; ++i) rw.weights[i] = rw.step_mass[i] / total;
  rw.objectives = objs;
  return rw;
}

template <ObjectiveLike F>
Vec reweighted_minimizer(const ReweightedObjective<F>& rw) {
  return weighted_minimizer(rw.objectives, rw.weights);
}

// sqrt( sum_i | 1/n - pbar_i | ), in [0, sqrt(2)].
inline double asynchrony_bias_measure(const std::vector<double>& weights) {
  const double n = static_cast<double>(weights.size());
  double sum = 0.0;
  for (double w : weights) sum += std::abs(1.0 / n - w);
  return std::sqrt(sum);
}

struct BiasReport {
  double delta_K = 0.0;       // asynchrony bias measure
  Mat s_pairwise;             // S_{i,j} = |x*_i - x*_j|
  Vec s_to_global;            // S_i = |x*_i - x*|
  double s_bar = 0.0;         // max_i min_j (S_{i,j} + S_j)
  double kappa = 0.0;         // max_i M_i / min_i mu_i
  double bound = 0.0;         // S_bar sqrt(kappa) delta_K / sqrt(2)
  double actual = 0.0;        // |x*_K - x*|
  Vec x_star;
  Vec x_star_K;
};

// Distance-between-minimizers bound. `actual <= bound` holds unconditionally
// for strongly convex objectives, so a violation beyond rounding indicates an
// implementation bug and throws.
template <ObjectiveLike F>
BiasReport bias_report(const ReweightedObjective<F>& rw) {
  const int n = static_cast<int>(rw.objectives.size());
  BiasReport rep;
  rep.delta_K = asynchrony_bias_measure(rw.weights);
  rep.x_star = global_minimizer(rw.objectives);
  rep.x_star_K = reweighted_minimizer(rw);

  std::vector<Vec> mins;
  mins.reserve(n);
  for (const F& f : rw.objectives) mins.push_back(local_minimizer(f));

  rep.s_pairwise = Mat::Zero(n, n);
  rep.s_to_global = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    rep.s_to_global[i] = (mins[i] - rep.x_star).norm();
    for (int j = 0; j < n; ++j) rep.s_pairwise(i, j) = (mins[i] - mins[j]).norm();
  }
  rep.s_bar = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      best = std::min(best, rep.s_pairwise(i, j) + rep.s_to_global[j]);
    rep.s_bar = std::max(rep.s_bar, best);
  }

  const CurvatureConstants cc = aggregate_constants(rw.objectives);
  rep.kappa = cc.smoothness / cc.mu;
  rep.bound = rep.s_bar * std::sqrt(rep.kappa) * rep.delta_K / std::sqrt(2.0);
  rep.actual = (rep.x_star_K - rep.x_star).norm();
  if (rep.actual > rep.bound * (1.0 + 1e-9) + 1e-12)
    throw BoundViolated("minimizer distance " + std::to_string(rep.actual) +
                        " exceeds its bound " + std::to_string(rep.bound));
  return rep;
}

struct RateCertificate {
  bool available = false;
  double q = 1.0;
  double c = 0.0;             // envelope constant actually used
  double grad_bound = 0.0;    // observed L
  double a1 = 0.0, a2 = 0.0, a3 = 0.0;  // named constants, constant-step form
  double initial_sq_dist = 0.0;
  double bracket = 0.0;       // exact perturbation + step-mass sums
  double rhs_total = 0.0;
  bool satisfied = false;
};

struct RateDiagnostics {
  double mean_sq_err = 0.0;   // (1/K) sum_k |xbar[k] - x*_K|^2
  double loglog_slope = 0.0;  // of prefix mean-sq-err, fitted over the last half
  double xbar_norm_bound = 0.0;  // sup_k |xbar[k]|, the empirical iterate bound
  std::vector<std::pair<int, double>> prefix_mse;  // sampled (K', mse(K'))
  RateCertificate certificate;
};

namespace detail {

template <ObjectiveLike F>
double prefix_mse(const AgpRun& run, const std::vector<F>& objs, int prefix) {
  std::vector<double> mass(run.n, 0.0);
  for (int k = 0; k < prefix; ++k)
    for (int i = 0; i < run.n; ++i) mass[i] += run.alpha_delta[k][i];
  double total = 0.0;
  for (double p : mass) total += p;
  std::vector<double> w(run.n);
  for (int i = 0; i < run.n; ++i) w[i] = mass[i] / total;
  const Vec target = weighted_minimizer(objs, w);
  double acc = 0.0;
  for (int k = 0; k < prefix; ++k) acc += (run.xbar[k] - target).squaredNorm();
  return acc / prefix;
}

}  // namespace detail

// Mean-squared distance of the running average to the re-weighted minimizer,
// its log-log decay slope over growing prefixes, and an inequality
// certificate built from empirically estimated contraction constants. The
// certificate re-derives the averaged-iterate bound with the run's own
// quantities: observed gradient bound, fitted (q, C) from an unperturbed
// gossip run on the same schedule (C enlarged if the run's consensus errors
// demand it), and the exact logged step masses.
template <ObjectiveLike F>
RateDiagnostics rate_diagnostics(const AgpRun& run, const ReweightedObjective<F>& rw,
                                 const StepSizePolicy& policy) {
  RateDiagnostics diag;
  const int K = run.K;
  const int n = run.n;
  const Vec x_star_K = reweighted_minimizer(rw);

  double acc = 0.0;
  for (int k = 0; k < K; ++k) acc += (run.xbar[k] - x_star_K).squaredNorm();
  diag.mean_sq_err = acc / K;
  for (const Vec& xb : run.xbar) diag.xbar_norm_bound = std::max(diag.xbar_norm_bound, xb.norm());

  // prefix mse on log-spaced sample points across [K/2, K]
  std::vector<int> prefixes;
  const int lo = std::max(2, K / 2);
  for (int t = 0; t < 12; ++t) {
    const double f = static_cast<double>(t) / 11.0;
    const int p = static_cast<int>(std::lround(lo * std::pow(static_cast<double>(K) / lo, f)));
    if (prefixes.empty() || p > prefixes.back()) prefixes.push_back(p);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int p : prefixes) {
    const double m = detail::prefix_mse(run, rw.objectives, p);
    diag.prefix_mse.emplace_back(p, m);
    const double lx = std::log(static_cast<double>(p));
    const double ly = std::log(std::max(m, 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double cnt = static_cast<double>(prefixes.size());
  const double denom = cnt * sxx - sx * sx;
  diag.loglog_slope = denom > 0 ? (cnt * sxy - sx * sy) / denom : 0.0;

  if (run.schedule && run.graph) {
    RateCertificate& cert = diag.certificate;
    const Schedule& s = *run.schedule;
    const AugmentedGraph& ag = *run.graph;
    // contraction estimate from the homogeneous gossip dynamics
    const PushSumTrajectory ps = run_pushsum(ag, s, run.z_real.front());
    const auto errs = consensus_error_series(ps);
    const auto [first, tail] = decaying_tail(errs);
    try {
      const GeometricFit fit = fit_geometric_rate(tail, first);
      if (fit.decaying && fit.q_hat > 0.0) {
        cert.available = true;
        cert.q = fit.q_hat;
        cert.c = fit.c_env;
      }
    } catch (const InsufficientData&) {
      // consensus reached machine precision almost immediately; fall back to
      // a crude but valid envelope
      cert.available = true;
      cert.q = 0.5;
      cert.c = 1.0;
    }
    if (cert.available) {
      // observed gradient bound: gradients actually applied plus gradients at
      // the running mean (recomputed from the logs so loaded runs work too)
      double big_l = run.grad_norm_bound;
      for (int k = 0; k <= K; ++k) {
        for (int i = 0; i < n; ++i) {
          if (k < K && run.alpha_delta[k][i] > 0.0)
            big_l = std::max(big_l,
                             rw.objectives[i].gradient(run.z_real[k].row(i).transpose()).norm());
          big_l = std::max(big_l, rw.objectives[i].gradient(run.xbar[k]).norm());
        }
      }
      cert.grad_bound = big_l;

      // enlarge C until the run's own consensus errors sit under the claimed
      // envelope  e_i[k] <= C (q^k |x_i[0]|_1 + L sum_s q^(k-s) alpha delta)
      Vec conv = Vec::Zero(n);  // conv_i[k] = sum_{s<=k} q^(k-s) alpha_i[s] delta_i[s]
      for (int k = 0; k <= K; ++k) {
        if (k > 0) conv *= cert.q;
        if (k < K)
          for (int i = 0; i < n; ++i) conv[i] += run.alpha_delta[k][i];
        for (int i = 0; i < n; ++i) {
          const double e =
              (run.z_real[k].row(i).transpose() - run.xbar[k]).cwiseAbs().sum();
          const double env = std::pow(cert.q, k) *
                                 run.z_real.front().row(i).cwiseAbs().sum() +
                             big_l * conv[i];
          if (env > 1e-300) cert.c = std::max(cert.c, e / env);
        }
      }

      const CurvatureConstants cc = aggregate_constants(rw.objectives);
      const double kappa = cc.smoothness / cc.mu;
      cert.initial_sq_dist = (run.xbar.front() - x_star_K).squaredNorm();

      // gamma_i[k] = kappa L C q^k |x_i[0]|_1,  chi_i[k] = kappa L^2 C conv_i[k]
      conv.setZero();
      double bracket = 0.0;
      for (int k = 0; k < K; ++k) {
        if (k > 0) conv *= cert.q;
        for (int i = 0; i < n; ++i) conv[i] += run.alpha_delta[k][i];
        double inner = 0.0;
        double mean_step = 0.0;
        for (int i = 0; i < n; ++i) {
          const double ad = run.alpha_delta[k][i];
          mean_step += ad / n;
          if (ad > 0.0) {
            const double gamma = kappa * big_l * cert.c * std::pow(cert.q, k) *
                                 run.z_real.front().row(i).cwiseAbs().sum();
            const double chi = kappa * big_l * big_l * cert.c * conv[i];
            inner += ad * (gamma + chi);
          }
        }
        bracket += 2.0 * inner / n + (big_l * mean_step) * (big_l * mean_step);
      }
      cert.bracket = bracket;

      const double sum_w = [&] {
        double sw = 0.0;
        for (int i = 0; i < n; ++i) sw += policy.weight(i);
        return sw;
      }();
      cert.a1 = std::pow(std::sqrt(big_l) * policy.base() * sum_w / n, 2.0);
      cert.a2 = 2.0 * kappa * big_l * big_l * cert.c *
                run.z_real.front().cwiseAbs().rowwise().sum().maxCoeff() *
                (policy.base() * sum_w / n) / (1.0 - cert.q);
      cert.a3 = 2.0 * kappa * std::pow(big_l, 3.0) * cert.c *
                std::pow(policy.base() * sum_w / n, 2.0) / (1.0 - cert.q);

      cert.rhs_total = n * (cert.initial_sq_dist + bracket) /
                       (2.0 * cc.mu * policy.base() * std::pow(static_cast<double>(K), 1.0 - policy.theta()));
      cert.satisfied = diag.mean_sq_err <= cert.rhs_total * (1.0 + 1e-9) + 1e-15;
    }
  }
  return diag;
}

}  // namespace agp
