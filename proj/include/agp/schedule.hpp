#pragma once

#include "agp/common.hpp"
#include "agp/topology.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace agp {

// Activation sets and message-delay assignments for K gossip steps.
//
// Index 0 is a universal activation: every agent performs its first local
// step there (generators enforce this; the counter convention below assumes
// it). Delays are stored for every (active sender, receiver) ordered pair so
// a schedule is independent of any particular communication graph; consumers
// restrict to the graph's edges when assembling gossip matrices.
class Schedule {
 public:
  static constexpr std::uint8_t kNoDelay = 0xff;

  Schedule() = default;
  Schedule(int n, int K, int tau_proc_max, int tau_msg_max, std::uint64_t seed)
      : n_(n), K_(K), tau_proc_max_(tau_proc_max), tau_msg_max_(tau_msg_max), seed_(seed) {
    if (n < 1 || K < 1) throw IndexOutOfRange("schedule requires n >= 1 and K >= 1");
    if (tau_proc_max < 1) throw InfeasiblePolicy("tau_proc_max must be >= 1");
    if (tau_msg_max < 0 || tau_msg_max > 254)
      throw InfeasiblePolicy("tau_msg_max must be in [0, 254]");
    active_.assign(K, {});
    delays_.assign(static_cast<std::size_t>(K) * n * n, kNoDelay);
  }

  int agent_count() const { return n_; }
  int horizon() const { return K_; }
  int tau_proc_max() const { return tau_proc_max_; }
  int tau_msg_max() const { return tau_msg_max_; }
  // effective delay bound: tau_msg_max + tau_proc_max - 1
  int tau_bar() const { return tau_msg_max_ + tau_proc_max_ - 1; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<int>& active(int k) const { return active_[k]; }
  bool is_active(int k, int i) const {
    return std::binary_search(active_[k].begin(), active_[k].end(), i);
  }

  void set_active(int k, std::vector<int> agents) {
    std::sort(agents.begin(), agents.end());
    active_[k] = std::move(agents);
  }

  void set_delay(int k, int sender, int receiver, int r) {
    delays_[offset(k, sender, receiver)] = static_cast<std::uint8_t>(r);
  }

  bool has_delay(int k, int sender, int receiver) const {
    return delays_[offset(k, sender, receiver)] != kNoDelay;
  }

  int delay(int k, int sender, int receiver) const {
    const std::uint8_t r = delays_[offset(k, sender, receiver)];
    if (r == kNoDelay)
      throw MissingDelayAssignment("no delay stored for k=" + std::to_string(k) + " edge " +
                                   std::to_string(sender + 1) + "->" +
                                   std::to_string(receiver + 1));
    return r;
  }

  // Number of activations of agent i in indices [0, k].
  int activation_count(int i, int k) const {
    int c = 0;
    for (int ell = 0; ell <= k; ++ell)
      if (is_active(ell, i)) ++c;
    return c;
  }

  bool operator==(const Schedule& o) const {
    return n_ == o.n_ && K_ == o.K_ && tau_proc_max_ == o.tau_proc_max_ &&
           tau_msg_max_ == o.tau_msg_max_ && seed_ == o.seed_ && active_ == o.active_ &&
           delays_ == o.delays_;
  }

 private:
  std::size_t offset(int k, int sender, int receiver) const {
    if (k < 0 || k >= K_ || sender < 0 || sender >= n_ || receiver < 0 || receiver >= n_)
      throw IndexOutOfRange("schedule access (k=" + std::to_string(k) + ", " +
                            std::to_string(sender) + "->" + std::to_string(receiver) + ")");
    return (static_cast<std::size_t>(k) * n_ + sender) * n_ + receiver;
  }

  int n_ = 0;
  int K_ = 0;
  int tau_proc_max_ = 1;
  int tau_msg_max_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::vector<int>> active_;
  std::vector<std::uint8_t> delays_;
};

struct SemiSynchronous {};
struct UniformRandom {};
struct RateRatio {
  std::vector<int> multipliers;  // agent i activates every multipliers[i] ticks
};
using SchedulePolicy = std::variant<SemiSynchronous, UniformRandom, RateRatio>;

// Most recent index k' < k at which agent i was active; 0 if there is none.
inline int prev_activation(const Schedule& s, int i, int k) {
  if (k < 1 || k > s.horizon())
    throw IndexOutOfRange("prev_activation index k=" + std::to_string(k));
  for (int ell = std::min(k, s.horizon()) - 1; ell >= 1; --ell)
    if (s.is_active(ell, i)) return ell;
  return 0;
}

// Local iteration counter c_i[k]: activations of agent i in [1, k] plus one
// for the universal index-0 step (so c_i[0] = 1 on any schedule).
inline int local_iteration_counter(const Schedule& s, int i, int k) {
  if (k < 0 || k >= s.horizon())
    throw IndexOutOfRange("counter index k=" + std::to_string(k));
  int c = 1;
  for (int ell = 1; ell <= k; ++ell)
    if (s.is_active(ell, i)) ++c;
  return c;
}

struct BoundsReport {
  bool ok = true;
  int max_observed_proc_gap = 0;
  int max_observed_msg_delay = 0;
  std::vector<std::string> violations;
};

// Checks the three schedule invariants: activation gaps within tau_proc_max
// (counting index 0 as an activation of everyone, and the tail gap to the
// horizon), message delays within [0, tau_msg_max], and zero self-delays.
// Violations are reported as data, not thrown.
inline BoundsReport verify_bounds(const Schedule& s) {
  BoundsReport rep;
  const int n = s.agent_count();
  const int K = s.horizon();

  for (int i = 0; i < n; ++i) {
    int last = 0;
    int max_gap = 0;
    for (int k = 1; k < K; ++k) {
      if (s.is_active(k, i)) {
        max_gap = std::max(max_gap, k - last);
        last = k;
      }
    }
    max_gap = std::max(max_gap, K - last);
    rep.max_observed_proc_gap = std::max(rep.max_observed_proc_gap, max_gap);
    if (max_gap > s.tau_proc_max()) {
      rep.ok = false;
      rep.violations.push_back("agent " + std::to_string(i + 1) + " has activation gap " +
                               std::to_string(max_gap) + " > tau_proc_max " +
                               std::to_string(s.tau_proc_max()));
    }
  }

  for (int k = 0; k < K; ++k) {
    for (int i : s.active(k)) {
      for (int j = 0; j < n; ++j) {
        if (!s.has_delay(k, i, j)) continue;
        const int r = s.delay(k, i, j);
        rep.max_observed_msg_delay = std::max(rep.max_observed_msg_delay, r);
        if (r > s.tau_msg_max()) {
          rep.ok = false;
          rep.violations.push_back("delay " + std::to_string(r) + " at k=" + std::to_string(k) +
                                   " edge " + std::to_string(i + 1) + "->" +
                                   std::to_string(j + 1) + " > tau_msg_max " +
                                   std::to_string(s.tau_msg_max()));
        }
        if (j == i && r != 0) {
          rep.ok = false;
          rep.violations.push_back("nonzero self-delay at k=" + std::to_string(k) + " agent " +
                                   std::to_string(i + 1));
        }
      }
    }
  }
  return rep;
}

namespace detail {

inline void fill_delays(Schedule& s, Rng& rng) {
  for (int k = 0; k < s.horizon(); ++k)
    for (int i : s.active(k))
      for (int j = 0; j < s.agent_count(); ++j)
        s.set_delay(k, i, j, j == i ? 0 : (s.tau_msg_max() == 0 ? 0 : rng.next_int(0, s.tau_msg_max())));
}

// Tick-level activation generation, compressed to drop empty ticks so every
// index hosts at least one activation. All agents start at tick 0.
inline std::vector<std::vector<int>> compress_ticks(
    const std::vector<std::vector<std::int64_t>>& per_agent_ticks, int K) {
  std::set<std::int64_t> nonempty;
  for (const auto& ticks : per_agent_ticks) nonempty.insert(ticks.begin(), ticks.end());
  std::vector<std::int64_t> order(nonempty.begin(), nonempty.end());
  if (static_cast<int>(order.size()) > K) order.resize(K);

  std::vector<std::vector<int>> active(K);
  for (std::size_t a = 0; a < per_agent_ticks.size(); ++a)
    for (std::int64_t t : per_agent_ticks[a]) {
      const auto it = std::lower_bound(order.begin(), order.end(), t);
      if (it == order.end() || *it != t) continue;
      active[static_cast<int>(it - order.begin())].push_back(static_cast<int>(a));
    }
  for (auto& v : active) std::sort(v.begin(), v.end());
  return active;
}

}  // namespace detail

// Deterministic schedule generation. The same arguments and seed always
// produce an identical schedule.
//
//  - SemiSynchronous: everyone active at every index.
//  - UniformRandom: per-agent activation gaps drawn uniformly from
//    [1, tau_proc_max]; empty ticks are compressed away.
//  - RateRatio: agent i schedules an activation every multipliers[i] ticks,
//    but skips (and retries next tick) whenever it is tau_proc_max iterations
//    ahead of the slowest agent -- the non-blocking-barrier rule used to cap
//    update-rate disparity. Throws InfeasiblePolicy when the resulting gaps
//    still exceed tau_proc_max.
//
// Message delays are drawn uniformly from [0, tau_msg_max] independently per
// (index, sender, receiver); self-delays are always 0.
inline Schedule generate_schedule(int n, int K, int tau_proc_max, int tau_msg_max,
                                  const SchedulePolicy& policy, std::uint64_t seed) {
  Schedule s(n, K, tau_proc_max, tau_msg_max, seed);
  Rng rng(seed);

  if (std::holds_alternative<SemiSynchronous>(policy)) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (int k = 0; k < K; ++k) s.set_active(k, all);
  } else if (std::holds_alternative<UniformRandom>(policy)) {
    std::vector<std::vector<std::int64_t>> ticks(n);
    // horizon in ticks large enough to survive compression
    const std::int64_t tick_limit = static_cast<std::int64_t>(K) * tau_proc_max + 1;
    for (int i = 0; i < n; ++i) {
      std::int64_t t = 0;
      while (t < tick_limit) {
        ticks[i].push_back(t);
        t += tau_proc_max == 1 ? 1 : rng.next_int(1, tau_proc_max);
      }
    }
    for (int k = 0; k < K; ++k) s.set_active(k, {});
    auto active = detail::compress_ticks(ticks, K);
    for (int k = 0; k < K; ++k) s.set_active(k, std::move(active[k]));
  } else {
    const auto& rr = std::get<RateRatio>(policy);
    if (static_cast<int>(rr.multipliers.size()) != n)
      throw InfeasiblePolicy("rate_ratio needs one multiplier per agent");
    for (int m : rr.multipliers)
      if (m < 1) throw InfeasiblePolicy("rate_ratio multipliers must be >= 1");

    std::vector<std::vector<std::int64_t>> ticks(n);
    std::vector<std::int64_t> next_due(n, 0);
    std::vector<std::int64_t> iter(n, 0);
    std::int64_t emitted = 0;
    const std::int64_t max_mult = *std::max_element(rr.multipliers.begin(), rr.multipliers.end());
    const std::int64_t tick_limit = (static_cast<std::int64_t>(K) + 2) * max_mult * 2 + 16;
    for (std::int64_t t = 0; t < tick_limit && emitted < static_cast<std::int64_t>(K) * n; ++t) {
      std::vector<int> wanters;
      for (int i = 0; i < n; ++i)
        if (next_due[i] == t) wanters.push_back(i);
      std::sort(wanters.begin(), wanters.end(),
                [&](int a, int b) { return iter[a] != iter[b] ? iter[a] < iter[b] : a < b; });
      for (int i : wanters) {
        const std::int64_t slowest = *std::min_element(iter.begin(), iter.end());
        if (iter[i] - slowest >= tau_proc_max && iter[i] > slowest) {
          next_due[i] = t + 1;  // barrier: retry next tick
        } else {
          ticks[i].push_back(t);
          ++iter[i];
          ++emitted;
          next_due[i] = (t / rr.multipliers[i] + 1) * rr.multipliers[i];
        }
      }
    }
    auto active = detail::compress_ticks(ticks, K);
    for (int k = 0; k < K; ++k) s.set_active(k, std::move(active[k]));
  }

  detail::fill_delays(s, rng);

  const BoundsReport rep = verify_bounds(s);
  if (!rep.ok)
    throw InfeasiblePolicy("generated schedule violates bounds: " +
                           (rep.violations.empty() ? std::string("?") : rep.violations.front()));
  return s;
}

// Gossip matrix for index k of a schedule, restricted to the graph's edges.
inline ConsensusMatrix consensus_matrix_at(const AugmentedGraph& ag, const Schedule& s, int k) {
  if (ag.real_count() != s.agent_count())
    throw DimensionMismatch("graph has " + std::to_string(ag.real_count()) + " agents, schedule " +
                            std::to_string(s.agent_count()));
  std::set<int> active(s.active(k).begin(), s.active(k).end());
  DelayMap delays;
  for (int i : active)
    for (int j : ag.base().out_neighbors(i)) delays[{i, j}] = s.delay(k, i, j);
  return build_consensus_matrix(ag, active, delays);
}

// Largest index gap between consecutive processed messages over any edge of
// the graph (message sent at s with delay r counts as processed at s+r).
// Bounded by tau_msg_max + tau_proc_max for any valid schedule.
inline int max_processed_message_gap(const Schedule& s, const ReferenceGraph& g) {
  int worst = 0;
  for (int i = 0; i < g.node_count(); ++i) {
    for (int j : g.out_neighbors(i)) {
      if (j == i) continue;
      std::vector<int> arrivals;
      for (int k = 0; k < s.horizon(); ++k)
        if (s.is_active(k, i)) arrivals.push_back(k + s.delay(k, i, j));
      std::sort(arrivals.begin(), arrivals.end());
      int last = 0;
      for (int a : arrivals) {
        worst = std::max(worst, a - last);
        last = a;
      }
    }
  }
  return worst;
}

}  // namespace agp
