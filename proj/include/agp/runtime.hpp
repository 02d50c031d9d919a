#pragma once

#include "agp/common.hpp"
#include "agp/objectives.hpp"
#include "agp/optimizer.hpp"
#include "agp/schedule.hpp"
#include "agp/topology.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace agp {

enum class EventKind { activation, send, deliver };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::activation: return "activation";
    case EventKind::send: return "send";
    case EventKind::deliver: return "deliver";
  }
  return "?";
}

// One record per activation, send, or processed message. Activation indices
// come from a global counter, so they strictly increase across activations;
// send and deliver records carry the index of the activation that produced
// or drained them. Deliver records with index == total activation count mark
// messages absorbed during the post-run drain.
struct Event {
  std::int64_t index;
  double wall_ms;
  int agent;
  EventKind kind;
  std::int64_t msg_id;  // -1 for activations
};

struct EventLog {
  std::vector<Event> records;
  std::int64_t activation_count = 0;
};

struct ThreadedOptions {
  int local_iterations = 50;              // per-agent stop bound
  std::vector<double> straggler_delay_ms; // optional per-agent loop delay
  int tau_proc_cap = 0;                   // 0 disables the barrier
  int inbox_capacity = 1 << 16;
  double watchdog_seconds = 30.0;
};

struct ThreadedRunResult {
  EventLog log;
  Mat final_x;          // one row per agent, drained state
  Vec final_y;
  Vec applied_gradient_mass;  // column sums of every alpha * grad applied
  double wall_ms = 0.0;
};

namespace detail {

struct Parcel {
  std::int64_t msg_id;
  std::int64_t send_index;
  int sender;
  Vec xpart;
  double ypart;
};

class Inbox {
 public:
  explicit Inbox(int capacity) : capacity_(capacity) {}

  bool push(Parcel p) {
    std::lock_guard lock(m_);
    if (static_cast<int>(q_.size()) >= capacity_) return false;
    q_.push_back(std::move(p));
    return true;
  }

  std::vector<Parcel> drain() {
    std::lock_guard lock(m_);
    std::vector<Parcel> out(std::make_move_iterator(q_.begin()),
                            std::make_move_iterator(q_.end()));
    q_.clear();
    return out;
  }

 private:
  std::mutex m_;
  std::deque<Parcel> q_;
  int capacity_;
};

// Non-blocking-barrier emulation: an agent proceeds only while its completed
// iteration count is fewer than `cap` ahead of the slowest unfinished agent.
class IterationBarrier {
 public:
  IterationBarrier(int n, int cap) : counts_(n, 0), finished_(n, 0), cap_(cap) {}

  void wait_turn(int agent, const std::atomic<bool>& abort, double watchdog_seconds) {
    if (cap_ <= 0) return;
    std::unique_lock lock(m_);
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(watchdog_seconds);
    while (!abort.load()) {
      if (counts_[agent] - slowest_unfinished() < cap_) return;
      if (cv_.wait_until(lock, deadline) == std::cv_status::timeout)
        throw Deadlock("agent " + std::to_string(agent + 1) +
                       " stalled on the iteration barrier");
    }
  }

  void bump(int agent) {
    if (cap_ <= 0) return;
    std::lock_guard lock(m_);
    ++counts_[agent];
    cv_.notify_all();
  }

  void finish(int agent) {
    if (cap_ <= 0) return;
    std::lock_guard lock(m_);
    finished_[agent] = 1;
    cv_.notify_all();
  }

  void abort_all() { cv_.notify_all(); }

 private:
  std::int64_t slowest_unfinished() const {
    std::int64_t slow = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 0; i < counts_.size(); ++i)
      if (!finished_[i]) slow = std::min(slow, counts_[i]);
    return slow == std::numeric_limits<std::int64_t>::max() ? 0 : slow;
  }

  std::mutex m_;
  std::condition_variable cv_;
  std::vector<std::int64_t> counts_;
  std::vector<char> finished_;
  int cap_;
};

}  // namespace detail

// Each agent runs on its own thread: local gradient step, copy the split
// (x/N_out, y/N_out) to every out-neighbor's inbox, absorb whatever was
// buffered. No shared state besides the inboxes, the activation counter, and
// the optional barrier. After all workers stop, leftover inbox content is
// drained into the owners so the run quiesces with all mass resident.
template <ObjectiveLike F>
ThreadedRunResult run_threaded(const ReferenceGraph& g, const std::vector<F>& objs,
                               const Mat& x0, const StepSizePolicy& policy,
                               const ThreadedOptions& opts) {
  const int n = g.node_count();
  if (static_cast<int>(objs.size()) != n || x0.rows() != n)
    throw DimensionMismatch("objectives and x0 must match the graph");
  if (opts.local_iterations < 1) throw InvalidTarget("local_iterations must be >= 1");
  if (policy.kind() == StepSizeKind::known_rates_constant ||
      policy.kind() == StepSizeKind::known_rates_diminishing)
    throw InfeasiblePolicy("known-rates policies need schedule foreknowledge; "
                           "the threaded backend cannot provide it");
  const int d = static_cast<int>(x0.cols());

  std::vector<std::unique_ptr<detail::Inbox>> inboxes;
  inboxes.reserve(n);
  for (int i = 0; i < n; ++i)
    inboxes.push_back(std::make_unique<detail::Inbox>(opts.inbox_capacity));

  detail::IterationBarrier barrier(n, opts.tau_proc_cap);
  std::atomic<std::int64_t> activation_counter{0};
  std::atomic<std::int64_t> msg_counter{0};
  std::atomic<bool> abort{false};
  std::mutex log_mutex;
  EventLog log;
  std::mutex error_mutex;
  std::exception_ptr first_error;

  const auto t0 = std::chrono::steady_clock::now();
  auto now_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  Mat x = x0;
  Vec y = Vec::Ones(n);
  Mat grad_mass = Mat::Zero(n, d);

  auto worker = [&](int i) {
    try {
      const double delay_ms =
          i < static_cast<int>(opts.straggler_delay_ms.size()) ? opts.straggler_delay_ms[i] : 0.0;
      for (int iter = 1; iter <= opts.local_iterations && !abort.load(); ++iter) {
        if (delay_ms > 0.0)
          std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay_ms));
        barrier.wait_turn(i, abort, opts.watchdog_seconds);
        if (abort.load()) return;

        // local computation
        const Vec z = x.row(i).transpose() / y[i];
        const double a = policy.alpha(i, iter);
        const Vec grad = objs[i].gradient(z);
        x.row(i) -= (a * grad).transpose();
        grad_mass.row(i) += (a * grad).transpose();

        // snapshot the inbox before taking an index so every drained message
        // has a send index strictly below this activation's
        auto drained = inboxes[i]->drain();
        const std::int64_t idx = activation_counter.fetch_add(1);
        {
          std::lock_guard lk(log_mutex);
          log.records.push_back({idx, now_ms(), i, EventKind::activation, -1});
        }

        // asynchronous gossip
        const double share = 1.0 / g.out_degree(i);
        const Vec xs = share * x.row(i).transpose();
        const double ys = share * y[i];
        for (int j : g.out_neighbors(i)) {
          if (j == i) continue;
          const std::int64_t mid = msg_counter.fetch_add(1);
          if (!inboxes[j]->push({mid, idx, i, xs, ys}))
            throw QueueOverflow("inbox of agent " + std::to_string(j + 1) +
                                " exceeded capacity " + std::to_string(opts.inbox_capacity));
          std::lock_guard lk(log_mutex);
          log.records.push_back({idx, now_ms(), i, EventKind::send, mid});
        }
        x.row(i) = xs.transpose();
        y[i] = ys;
        for (const auto& p : drained) {
          x.row(i) += p.xpart.transpose();
          y[i] += p.ypart;
          std::lock_guard lk(log_mutex);
          log.records.push_back({idx, now_ms(), i, EventKind::deliver, p.msg_id});
        }
        barrier.bump(i);
      }
    } catch (...) {
      {
        std::lock_guard lk(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
      abort.store(true);
      barrier.abort_all();
    }
    barrier.finish(i);
  };

  std::vector<std::thread> threads;
  threads.reserve(n);
  for (int i = 0; i < n; ++i) threads.emplace_back(worker, i);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  ThreadedRunResult result;
  result.log.activation_count = activation_counter.load();

  // quiesce: absorb in-flight messages into their owners
  for (int i = 0; i < n; ++i) {
    for (const auto& p : inboxes[i]->drain()) {
      x.row(i) += p.xpart.transpose();
      y[i] += p.ypart;
      log.records.push_back(
          {result.log.activation_count, now_ms(), i, EventKind::deliver, p.msg_id});
    }
  }

  std::sort(log.records.begin(), log.records.end(), [](const Event& a, const Event& b) {
    if (a.index != b.index) return a.index < b.index;
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    if (a.agent != b.agent) return a.agent < b.agent;
    return a.msg_id < b.msg_id;
  });
  result.log.records = std::move(log.records);
  result.final_x = std::move(x);
  result.final_y = std::move(y);
  result.applied_gradient_mass = grad_mass.colwise().sum();
  result.wall_ms = now_ms();
  return result;
}

// |sum of resident x - (sum of x0 - applied gradient mass)|, max over
// components, plus the weight-total defect. Everything is resident after the
// shutdown drain, so this checks conservation at quiescence.
inline double mass_conservation_defect(const ThreadedRunResult& result, const Mat& x0) {
  const Vec expected = x0.colwise().sum().transpose() - result.applied_gradient_mass.transpose();
  const Vec actual = result.final_x.colwise().sum().transpose();
  const double xdef = (actual - expected).cwiseAbs().maxCoeff();
  const double ydef = std::abs(result.final_y.sum() - static_cast<double>(x0.rows()));
  return std::max(xdef, ydef);
}

// Maps an event log back onto the discrete-index model. Consecutive
// activations of pairwise-distinct agents collapse into one index (a lockstep
// execution reconstructs as a semi-synchronous schedule); message delays are
// receiver's processing index minus sender's activation index. Messages
// drained only at shutdown are charged to the earliest index consistent with
// causality.
inline Schedule reconstruct_schedule(const EventLog& log, const ReferenceGraph& g) {
  const int n = g.node_count();
  std::vector<std::pair<std::int64_t, int>> activations;  // (raw index, agent)
  for (const Event& e : log.records)
    if (e.kind == EventKind::activation) activations.emplace_back(e.index, e.agent);
  std::sort(activations.begin(), activations.end());
  if (activations.empty()) throw IncompleteLog("log has no activations");

  // coalesce into groups of distinct agents
  std::map<std::int64_t, int> group_of_raw;
  std::vector<std::vector<int>> groups;
  std::vector<char> in_group(n, 0);
  for (const auto& [raw, agent] : activations) {
    if (groups.empty() || in_group[agent]) {
      groups.emplace_back();
      std::fill(in_group.begin(), in_group.end(), 0);
    }
    groups.back().push_back(agent);
    in_group[agent] = 1;
    group_of_raw[raw] = static_cast<int>(groups.size()) - 1;
  }
  const int K = static_cast<int>(groups.size());

  std::vector<int> last_act_group(n, 0);
  std::vector<std::vector<char>> active_at(n, std::vector<char>(K, 0));
  for (const auto& [raw, agent] : activations) {
    const int grp = group_of_raw[raw];
    last_act_group[agent] = std::max(last_act_group[agent], grp);
    active_at[agent][grp] = 1;
  }

  struct MsgInfo {
    int sender = -1;
    int receiver = -1;
    std::int64_t send_raw = -1;
    std::int64_t deliver_raw = -1;
  };
  std::map<std::int64_t, MsgInfo> msgs;
  for (const Event& e : log.records) {
    if (e.kind == EventKind::send) {
      msgs[e.msg_id].sender = e.agent;
      msgs[e.msg_id].send_raw = e.index;
    } else if (e.kind == EventKind::deliver) {
      msgs[e.msg_id].receiver = e.agent;
      msgs[e.msg_id].deliver_raw = e.index;
    }
  }
  for (const auto& [id, m] : msgs) {
    if (m.send_raw < 0) throw IncompleteLog("message " + std::to_string(id) + " has no send");
    if (m.deliver_raw < 0)
      throw IncompleteLog("message " + std::to_string(id) + " was never delivered");
    if (!g.has_edge(m.sender, m.receiver))
      throw IncompleteLog("message " + std::to_string(id) + " traveled a non-edge " +
                          std::to_string(m.sender + 1) + "->" + std::to_string(m.receiver + 1));
  }

  // delays per (sender group, sender, receiver)
  std::map<std::tuple<int, int, int>, int> delays;
  int max_delay = 0;
  for (const auto& [id, m] : msgs) {
    const int s_grp = group_of_raw.at(m.send_raw);
    int p_grp;
    if (m.deliver_raw >= log.activation_count) {
      // shutdown drain: earliest causally consistent processing index
      p_grp = std::min(std::max(s_grp, last_act_group[m.receiver] + 1), K - 1);
    } else {
      p_grp = group_of_raw.at(m.deliver_raw);
    }
    const int r = std::max(0, p_grp - s_grp);
    delays[{s_grp, m.sender, m.receiver}] = r;
    max_delay = std::max(max_delay, r);
  }

  // observed activation-gap bound, including lead-in and tail gaps
  int max_gap = 1;
  for (int i = 0; i < n; ++i) {
    int last = 0;
    for (int k = 1; k < K; ++k)
      if (active_at[i][k]) {
        max_gap = std::max(max_gap, k - last);
        last = k;
      }
    max_gap = std::max(max_gap, K - last);
  }

  Schedule s(n, K, max_gap, std::max(max_delay, 0), 0);
  for (int k = 0; k < K; ++k) s.set_active(k, groups[k]);
  for (int k = 0; k < K; ++k)
    for (int i : groups[k]) s.set_delay(k, i, i, 0);
  for (const auto& [key, r] : delays) {
    const auto& [k, i, j] = key;
    s.set_delay(k, i, j, r);
  }
  return s;
}

}  // namespace agp
