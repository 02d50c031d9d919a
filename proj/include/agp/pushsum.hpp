#pragma once

#include "agp/common.hpp"
#include "agp/schedule.hpp"
#include "agp/topology.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace agp {

// Augmented push-sum state: numerators x (one row per augmented node), weights
// y, and the de-biased estimate z = x/y wherever y > 0. Virtual rows start at
// zero weight; their z is an explicit "undefined" (empty optional) rather than
// a 0/0, and reading an undefined z for a real node is an error because real
// weights stay positive under any valid gossip sequence.
class PushSumState {
 public:
  PushSumState(const AugmentedGraph& ag, const Mat& x0_real)
      : n_(ag.real_count()), x_(Mat::Zero(ag.node_count(), x0_real.cols())),
        y_(Vec::Zero(ag.node_count())) {
    if (x0_real.rows() != n_)
      throw DimensionMismatch("x0 must have one row per real agent");
    x_.topRows(n_) = x0_real;
    y_.head(n_).setOnes();
  }

  PushSumState(int real_count, Mat x, Vec y) : n_(real_count), x_(std::move(x)), y_(std::move(y)) {
    if (x_.rows() != y_.size() || n_ > x_.rows())
      throw DimensionMismatch("push-sum state shapes disagree");
  }

  int real_count() const { return n_; }
  int node_count() const { return static_cast<int>(x_.rows()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  const Mat& x() const { return x_; }
  const Vec& y() const { return y_; }

  std::optional<Vec> z(int node) const {
    if (y_[node] > 0.0) return Vec(x_.row(node) / y_[node]);
    return std::nullopt;
  }

  Vec z_real(int agent) const {
    if (agent < 0 || agent >= n_) throw IndexOutOfRange("z_real agent index");
    if (!(y_[agent] > 0.0))
      throw DebiasUndefinedForRealNode("real agent " + std::to_string(agent + 1) +
                                       " has weight " + std::to_string(y_[agent]) +
                                       "; gossip matrices were built incorrectly");
    return x_.row(agent) / y_[agent];
  }

  Mat z_real_block() const {
    Mat z(n_, dim());
    for (int i = 0; i < n_; ++i) z.row(i) = z_real(i);
    return z;
  }

  // Mutual time-wise average over the whole augmented state (in-flight mass
  // included), divided by the number of real agents.
  Vec xbar() const { return x_.colwise().sum() / static_cast<double>(n_); }

  double mass() const { return x_.sum(); }
  double weight_total() const { return y_.sum(); }

 private:
  int n_;
  Mat x_;
  Vec y_;
};

// Per-index perturbation applied to the real rows; virtual rows are never
// perturbed.
using Perturbation = std::function<Mat(int)>;

inline Perturbation zero_perturbation() { return nullptr; }

inline Perturbation constant_perturbation(Mat eta0) {
  return [eta0 = std::move(eta0)](int) { return eta0; };
}

inline Perturbation decaying_perturbation(Mat eta0, double decay) {
  return [eta0 = std::move(eta0), decay](int k) { return Mat(std::pow(decay, k) * eta0); };
}

// x' = M (x + eta), y' = M y. `eta` has one row per real agent (may be empty).
inline PushSumState pushsum_step(const PushSumState& state, const ConsensusMatrix& m,
                                 const Mat& eta = Mat()) {
  if (m.dimension() != state.node_count())
    throw DimensionMismatch("gossip matrix dimension " + std::to_string(m.dimension()) +
                            " vs state " + std::to_string(state.node_count()));
  Mat xin = state.x();
  if (eta.size() != 0) {
    if (eta.rows() != state.real_count() || eta.cols() != state.dim())
      throw DimensionMismatch("perturbation must be (real agents) x (dim)");
    xin.topRows(state.real_count()) += eta;
  }
  Mat xout;
  Vec yout;
  m.apply(xin, xout);
  m.apply(state.y(), yout);
  return PushSumState(state.real_count(), std::move(xout), std::move(yout));
}

struct PushSumTrajectory {
  int n = 0;
  int d = 0;
  int K = 0;
  std::vector<Vec> xbar;    // K+1 entries
  std::vector<Mat> z_real;  // K+1 entries, n x d
  std::vector<Vec> y_real;  // K+1 entries
  double max_mass_defect = 0.0;    // per-step conservation residual
  double max_weight_defect = 0.0;  // |1'y - n| over the run
  double min_real_weight = 0.0;
};

inline PushSumTrajectory run_pushsum(const AugmentedGraph& ag, const Schedule& s, const Mat& x0,
                                     const Perturbation& eta = nullptr) {
  const int n = ag.real_count();
  if (s.agent_count() != n) throw DimensionMismatch("schedule/graph agent counts disagree");
  PushSumState state(ag, x0);

  PushSumTrajectory traj;
  traj.n = n;
  traj.d = state.dim();
  traj.K = s.horizon();
  traj.min_real_weight = 1.0;
  traj.xbar.reserve(s.horizon() + 1);
  traj.z_real.reserve(s.horizon() + 1);
  traj.y_real.reserve(s.horizon() + 1);

  auto log_state = [&](const PushSumState& st) {
    traj.xbar.push_back(st.xbar());
    traj.z_real.push_back(st.z_real_block());
    traj.y_real.push_back(st.y().head(n));
    traj.min_real_weight = std::min(traj.min_real_weight, st.y().head(n).minCoeff());
    traj.max_weight_defect = std::max(traj.max_weight_defect, std::abs(st.weight_total() - n));
  };
  log_state(state);

  for (int k = 0; k < s.horizon(); ++k) {
    const ConsensusMatrix m = consensus_matrix_at(ag, s, k);
    const Mat eta_k = eta ? eta(k) : Mat();
    const double mass_before = state.mass() + (eta_k.size() ? eta_k.sum() : 0.0);
    state = pushsum_step(state, m, eta_k);
    traj.max_mass_defect = std::max(traj.max_mass_defect, std::abs(state.mass() - mass_before));
    log_state(state);
  }
  return traj;
}

// max_i || z_i[k] - xbar[k] ||_1 over the real agents.
inline double consensus_error(const PushSumTrajectory& traj, int k) {
  if (k < 0 || k > traj.K) throw IndexOutOfRange("consensus_error index");
  double worst = 0.0;
  for (int i = 0; i < traj.n; ++i)
    worst = std::max(worst,
                     (traj.z_real[k].row(i).transpose() - traj.xbar[k]).cwiseAbs().sum());
  return worst;
}

inline std::vector<double> consensus_error_series(const PushSumTrajectory& traj) {
  std::vector<double> e(traj.K + 1);
  for (int k = 0; k <= traj.K; ++k) e[k] = consensus_error(traj, k);
  return e;
}

struct GeometricFit {
  double q_hat = 1.0;
  double c_hat = 0.0;    // least-squares intercept, exp(a)
  double c_env = 0.0;    // envelope constant: max_k e_k / q_hat^k
  double r_squared = 0.0;
  bool decaying = false;  // q_hat < 1
  int samples = 0;
};

// Least-squares fit of log(e_k) against k over the strictly positive entries.
// Entry errors[t] is treated as the sample at index first_index + t, so
// callers can pass a tail slice. Requires at least 10 positive samples.
inline GeometricFit fit_geometric_rate(const std::vector<double>& errors, int first_index = 0) {
  std::vector<std::pair<double, double>> pts;  // (k, log e)
  for (std::size_t t = 0; t < errors.size(); ++t)
    if (errors[t] > 0.0)
      pts.emplace_back(static_cast<double>(first_index + t), std::log(errors[t]));
  if (pts.size() < 10)
    throw InsufficientData("geometric fit needs >= 10 strictly positive samples, got " +
                           std::to_string(pts.size()));

  double sk = 0, se = 0, skk = 0, ske = 0;
  for (const auto& [k, le] : pts) {
    sk += k;
    se += le;
    skk += k * k;
    ske += k * le;
  }
  const double m = static_cast<double>(pts.size());
  const double denom = m * skk - sk * sk;
  const double slope = denom > 0 ? (m * ske - sk * se) / denom : 0.0;
  const double intercept = (se - slope * sk) / m;

  GeometricFit fit;
  fit.samples = static_cast<int>(pts.size());
  fit.q_hat = std::exp(slope);
  fit.c_hat = std::exp(intercept);
  fit.decaying = fit.q_hat < 1.0;
  double ss_res = 0, ss_tot = 0;
  const double mean = se / m;
  for (const auto& [k, le] : pts) {
    const double pred = intercept + slope * k;
    ss_res += (le - pred) * (le - pred);
    ss_tot += (le - mean) * (le - mean);
  }
  fit.r_squared = ss_tot > 1e-300 ? 1.0 - ss_res / ss_tot : 1.0;
  for (std::size_t t = 0; t < errors.size(); ++t)
    if (errors[t] > 0.0)
      fit.c_env = std::max(fit.c_env,
                           errors[t] / std::pow(fit.q_hat, static_cast<double>(first_index + t)));
  return fit;
}

// Slice of an error series suited for rate fitting: drops the leading
// transient and everything at or below the numerical floor.
inline std::pair<int, std::vector<double>> decaying_tail(const std::vector<double>& errors,
                                                         double floor = 1e-12,
                                                         double skip_fraction = 0.1) {
  int last = -1;
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (errors[k] > floor) last = static_cast<int>(k);
  if (last < 0) return {0, {}};
  const int first = static_cast<int>(skip_fraction * last);
  std::vector<double> out;
  for (int k = first; k <= last; ++k)
    out.push_back(errors[k] > floor ? errors[k] : 0.0);
  return {first, out};
}

}  // namespace agp
