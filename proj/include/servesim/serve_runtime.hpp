#pragma once

// Live mode: the same queue/policy machinery driving in-process mock
// workers that sleep for the profiled latency. One dispatcher thread owns
// all scheduling state; the client and workers talk to it exclusively
// through message channels, so no two decisions are ever concurrent.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <variant>
#include <vector>

#include "servesim/edf_queue.hpp"
#include "servesim/metrics.hpp"
#include "servesim/policy.hpp"
#include "servesim/simcore.hpp"
#include "servesim/tracegen.hpp"

namespace servesim {

struct ServeConfig {
  std::uint32_t worker_count = 1;
  Micros actuation_delay_us = 0;
  Micros dispatch_overhead_us = 0;
  PolicyKind policy = PolicyKind::slackfit();
  std::size_t bucket_count = 20;
  std::vector<FaultSpec> fault_schedule;
  Micros pacing_tolerance_us = 20'000;  // client lateness before the run
                                        // is flagged invalid
};

/// Scheduler invocation record; every decision must observe an idle worker
/// and a non-empty queue.
struct DecisionEvent {
  Micros time_us = 0;
  std::size_t idle_workers = 0;
  std::size_t queue_size = 0;
};

namespace serve_detail {

template <typename T>
class Channel {
 public:
  void push(T value) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  /// Blocks until an item arrives or the deadline passes.
  std::optional<T> pop_until(std::chrono::steady_clock::time_point deadline) {
    std::unique_lock<std::mutex> lock(mu_);
    if (!cv_.wait_until(lock, deadline, [&] { return !items_.empty(); })) {
      return std::nullopt;
    }
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

  std::optional<T> pop() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty(); });
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
};

struct EnqueueMsg {
  Query query;
  Micros sent_at_us = 0;
};
struct FreeMsg {
  std::uint32_t worker = 0;
  Micros completion_us = 0;
  Batch batch;
  std::size_t subnet_index = 0;
};
struct ClientDoneMsg {
  Micros max_lateness_us = 0;
};
using RouterMsg = std::variant<EnqueueMsg, FreeMsg, ClientDoneMsg>;

struct DispatchCmd {
  Batch batch;
  std::size_t subnet_index = 0;
  Micros sleep_us = 0;
  bool stop = false;
};

}  // namespace serve_detail

/// Replays the trace in real time against the dispatcher; workers sleep for
/// the profiled latency (plus actuation delay on subnet change) and signal
/// availability, which re-invokes the scheduler.
inline SimReport serve(const Trace& trace, const Catalog& catalog,
                       const ServeConfig& config, DispatchLog* log = nullptr,
                       std::vector<DecisionEvent>* decisions = nullptr) {
  using namespace serve_detail;
  using Clock = std::chrono::steady_clock;

  SimConfig sim_like;
  sim_like.worker_count = config.worker_count;
  sim_like.actuation_delay_us = config.actuation_delay_us;
  sim_like.dispatch_overhead_us = config.dispatch_overhead_us;
  sim_like.policy = config.policy;
  sim_like.bucket_count = config.bucket_count;
  sim_like.fault_schedule = config.fault_schedule;
  sim_like.validate(catalog);

  const BucketTable buckets = build_buckets(catalog, config.bucket_count);
  const Micros min_latency =
      min_feasible_latency(config.policy, catalog) +
      config.dispatch_overhead_us;

  SimReport report;
  report.config_echo = {
      {"mode", "serve"},
      {"policy", to_string(config.policy)},
      {"workers", config.worker_count},
      {"actuation_delay_us", config.actuation_delay_us},
      {"dispatch_overhead_us", config.dispatch_overhead_us},
      {"bucket_count", config.bucket_count},
      {"trace_spec", trace_spec_to_json(trace.spec)},
      {"trace_queries", trace.queries.size()},
  };

  // Replay starts after a short pre-roll so every thread is parked on its
  // channel before the first arrival is due.
  const auto t0 = Clock::now() + std::chrono::milliseconds(100);
  auto now_us = [&]() -> Micros {
    const auto d = std::chrono::duration_cast<std::chrono::microseconds>(
        Clock::now() - t0);
    return d.count() < 0 ? 0 : static_cast<Micros>(d.count());
  };
  auto to_time_point = [&](Micros t) {
    return t0 + std::chrono::microseconds(t);
  };

  Channel<RouterMsg> inbox;
  std::vector<std::unique_ptr<Channel<DispatchCmd>>> worker_channels;
  for (std::uint32_t i = 0; i < config.worker_count; ++i) {
    worker_channels.push_back(std::make_unique<Channel<DispatchCmd>>());
  }

  std::vector<std::thread> worker_threads;
  for (std::uint32_t i = 0; i < config.worker_count; ++i) {
    worker_threads.emplace_back([&, i] {
      for (;;) {
        auto cmd = worker_channels[i]->pop();
        if (!cmd || cmd->stop) return;
        std::this_thread::sleep_for(std::chrono::microseconds(cmd->sleep_us));
        inbox.push(FreeMsg{i, now_us(), std::move(cmd->batch),
                           cmd->subnet_index});
      }
    });
  }

  std::thread client([&] {
    Micros max_late = 0;
    for (const auto& q : trace.queries) {
      std::this_thread::sleep_until(to_time_point(q.arrival_us));
      const Micros t = now_us();
      if (t > q.arrival_us) max_late = std::max(max_late, t - q.arrival_us);
      inbox.push(EnqueueMsg{q, t});
    }
    inbox.push(ClientDoneMsg{max_late});
  });

  // Dispatcher: sole owner of the EDF queue and worker bookkeeping.
  EdfQueue queue;
  struct LiveWorker {
    bool busy = false;
    bool alive = true;
    bool doomed = false;
    std::optional<std::size_t> current_subnet;
  };
  std::vector<LiveWorker> workers(config.worker_count);
  std::vector<FaultSpec> faults = config.fault_schedule;
  std::sort(faults.begin(), faults.end(),
            [](const FaultSpec& a, const FaultSpec& b) {
              return a.time_us < b.time_us;
            });
  std::size_t fault_cursor = 0;
  bool client_done = false;
  std::size_t outstanding = 0;  // batches in flight

  std::vector<std::pair<Micros, std::uint64_t>> arrival_log;
  struct DecisionSample {
    Micros time_us;
    double accuracy;
    std::uint32_t batch;
  };
  std::vector<DecisionSample> decision_log;

  auto alive_count = [&] {
    std::size_t n = 0;
    for (const auto& w : workers) n += w.alive ? 1 : 0;
    return n;
  };
  auto idle_worker = [&]() -> std::optional<std::uint32_t> {
    for (std::uint32_t i = 0; i < workers.size(); ++i) {
      if (workers[i].alive && !workers[i].busy) return i;
    }
    return std::nullopt;
  };
  auto idle_count = [&] {
    std::size_t n = 0;
    for (const auto& w : workers) n += (w.alive && !w.busy) ? 1 : 0;
    return n;
  };
  std::size_t drops_so_far = 0;
  std::size_t max_backlog = 0;
  auto record_drop = [&](const Query& q) {
    report.outcomes.push_back(
        {q.id, OutcomeKind::Dropped, 0.0, 0, q.deadline_us});
    ++drops_so_far;
  };

  auto apply_due_faults = [&](Micros now) {
    while (fault_cursor < faults.size() &&
           faults[fault_cursor].time_us <= now) {
      LiveWorker& w = workers[faults[fault_cursor].worker];
      if (w.alive) {
        if (w.busy) {
          w.doomed = true;
        } else {
          w.alive = false;
        }
      }
      ++fault_cursor;
    }
  };

  auto try_schedule = [&] {
    const Micros now = now_us();
    while (!queue.empty()) {
      const auto wid = idle_worker();
      if (!wid) return;
      for (const auto& q : queue.drop_expired(now, min_latency)) {
        record_drop(q);
      }
      if (queue.empty()) return;
      if (decisions) {
        decisions->push_back({now, idle_count(), queue.size()});
      }
      const SlackMicros slack =
          *queue.peek_slack(now) -
          static_cast<SlackMicros>(config.dispatch_overhead_us);
      const auto decision =
          decide(config.policy, slack, queue.size(), buckets, catalog);
      if (!decision) {
        record_drop(queue.take_batch(1).queries.front());
        continue;
      }
      const auto clamped = clamp_decision(*decision, queue.size(), catalog);
      Batch batch = queue.take_batch(clamped.actual_count);
      LiveWorker& worker = workers[*wid];
      const Micros actuation =
          (worker.current_subnet &&
           *worker.current_subnet == decision->subnet_index)
              ? 0
              : config.actuation_delay_us;
      worker.busy = true;
      worker.current_subnet = decision->subnet_index;
      ++outstanding;
      decision_log.push_back(
          {now, catalog.at(decision->subnet_index).accuracy,
           clamped.actual_count});
      if (log) {
        DispatchRecord rec;
        rec.start_us = now;
        rec.completion_us = 0;  // filled on completion
        rec.worker = *wid;
        rec.subnet_index = decision->subnet_index;
        rec.accuracy = catalog.at(decision->subnet_index).accuracy;
        rec.actual_count = clamped.actual_count;
        rec.profiled_batch = clamped.profiled_batch;
        rec.predicted_latency_us = clamped.latency_us;
        rec.actuation_us = actuation;
        rec.batch_arrival_us = batch.arrival_us;
        rec.batch_deadline_us = batch.deadline_us;
        for (const auto& q : batch.queries) rec.query_ids.push_back(q.id);
        log->push_back(std::move(rec));
      }
      worker_channels[*wid]->push(DispatchCmd{
          std::move(batch), decision->subnet_index,
          actuation + clamped.latency_us, false});
    }
  };

  Micros max_lateness = 0;
  for (;;) {
    const auto deadline =
        fault_cursor < faults.size()
            ? to_time_point(faults[fault_cursor].time_us)
            : Clock::now() + std::chrono::milliseconds(50);
    auto msg = inbox.pop_until(deadline);
    apply_due_faults(now_us());
    if (msg) {
      if (auto* enq = std::get_if<EnqueueMsg>(&*msg)) {
        queue.enqueue(enq->query);
        arrival_log.push_back({enq->sent_at_us, enq->query.id});
        report.max_queue_depth =
            std::max(report.max_queue_depth, queue.size());
        max_backlog = std::max(max_backlog, queue.size() + drops_so_far);
      } else if (auto* free_msg = std::get_if<FreeMsg>(&*msg)) {
        const double accuracy =
            catalog.at(free_msg->subnet_index).accuracy;
        for (const auto& q : free_msg->batch.queries) {
          const bool hit = free_msg->completion_us <= q.deadline_us;
          report.outcomes.push_back({q.id,
                                     hit ? OutcomeKind::Hit
                                         : OutcomeKind::Miss,
                                     hit ? accuracy : 0.0,
                                     free_msg->completion_us, q.deadline_us});
        }
        if (log) {
          // completions arrive in dispatch order per worker
          for (auto& rec : *log) {
            if (rec.worker == free_msg->worker && rec.completion_us == 0) {
              rec.completion_us = free_msg->completion_us;
              break;
            }
          }
        }
        LiveWorker& w = workers[free_msg->worker];
        w.busy = false;
        if (w.doomed) {
          w.alive = false;
          w.doomed = false;
        }
        --outstanding;
      } else if (auto* done = std::get_if<ClientDoneMsg>(&*msg)) {
        client_done = true;
        max_lateness = done->max_lateness_us;
      }
    }
    try_schedule();
    if (client_done && outstanding == 0) {
      if (queue.empty()) break;
      if (alive_count() == 0) {
        while (!queue.empty()) {
          record_drop(queue.take_batch(1).queries.front());
        }
        break;
      }
    }
  }

  for (auto& ch : worker_channels) ch->push(DispatchCmd{{}, 0, 0, true});
  for (auto& t : worker_threads) t.join();
  client.join();

  report.pacing_overrun = max_lateness > config.pacing_tolerance_us;

  // same divergence rule as the simulator, over the unshed backlog
  if (trace.queries.size() >= 2) {
    const double span_s =
        static_cast<double>(trace.last_arrival_us() -
                            trace.queries.front().arrival_us) /
        1e6;
    if (span_s > 0.0) {
      const double lambda =
          static_cast<double>(trace.queries.size()) / span_s;
      double slo_sum = 0.0;
      for (const auto& q : trace.queries) {
        slo_sum += static_cast<double>(q.deadline_us - q.arrival_us);
      }
      const double mean_slo_s =
          slo_sum / static_cast<double>(trace.queries.size()) / 1e6;
      report.diverged = static_cast<double>(max_backlog) >
                        50.0 * lambda * mean_slo_s;
    }
  }

  // Dynamics reconstructed from the event logs on the 100 ms grid.
  const Micros window = sim_detail::kDynamicsWindowUs;
  const Micros end_boundary =
      trace.queries.empty()
          ? 0
          : (trace.last_arrival_us() + window - 1) / window * window;
  std::size_t ai = 0, di = 0;
  double held_acc = 0.0, held_batch = 0.0;
  std::sort(arrival_log.begin(), arrival_log.end());
  for (Micros boundary = window; boundary <= end_boundary;
       boundary += window) {
    std::size_t arrivals = 0;
    while (ai < arrival_log.size() && arrival_log[ai].first < boundary) {
      ++ai;
      ++arrivals;
    }
    double acc_sum = 0.0, batch_sum = 0.0;
    std::size_t n = 0;
    while (di < decision_log.size() && decision_log[di].time_us < boundary) {
      acc_sum += decision_log[di].accuracy;
      batch_sum += decision_log[di].batch;
      ++n;
      ++di;
    }
    if (n > 0) {
      held_acc = acc_sum / static_cast<double>(n);
      held_batch = batch_sum / static_cast<double>(n);
    }
    DynamicsSample s;
    s.t_ms = boundary / 1000;
    s.ingest_qps =
        static_cast<double>(arrivals) * 1e6 / static_cast<double>(window);
    s.accuracy = held_acc;
    s.batch = held_batch;
    s.queue_depth = 0;  // not tracked historically in live mode
    std::size_t dead = 0;
    for (const auto& f : faults) dead += f.time_us <= boundary ? 1 : 0;
    s.workers = config.worker_count - std::min<std::size_t>(
                                          dead, config.worker_count);
    report.dynamics.push_back(s);
  }

  finalize_report(report);
  return report;
}

}  // namespace servesim
