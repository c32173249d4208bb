#pragma once

// Deterministic discrete-event simulator: router + N workers executing
// policy decisions with profiled latencies, optional actuation delay on
// subnet switches, and fault injection. Strictly single-threaded; event
// ties are ordered (Fault < Arrival < BatchDone < WorkerFree, then
// sequence number) so runs are bit-reproducible.

#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "servesim/edf_queue.hpp"
#include "servesim/metrics.hpp"
#include "servesim/policy.hpp"
#include "servesim/profile.hpp"
#include "servesim/tracegen.hpp"

namespace servesim {

struct FaultSpec {
  Micros time_us = 0;
  std::uint32_t worker = 0;
};

struct SimConfig {
  std::uint32_t worker_count = 1;
  Micros actuation_delay_us = 0;   // charged when a worker switches subnet
  Micros dispatch_overhead_us = 0; // subtracted from slack before deciding
  PolicyKind policy = PolicyKind::slackfit();
  std::size_t bucket_count = 20;
  std::vector<FaultSpec> fault_schedule;

  void validate(const Catalog& catalog) const {
    if (worker_count == 0) {
      throw std::invalid_argument("worker_count must be >= 1");
    }
    if (catalog.empty()) throw std::invalid_argument("empty catalog");
    if (!catalog.pareto) {
      throw std::invalid_argument("simulator requires a pareto catalog");
    }
    if (policy.type == PolicyType::Fixed) {
      catalog.index_of(policy.fixed_id);  // throws on unknown id
    }
    for (const auto& f : fault_schedule) {
      if (f.worker >= worker_count) {
        throw std::invalid_argument("fault targets unknown worker");
      }
    }
  }
};

/// One dispatched batch; recorded when a DispatchLog is supplied.
struct DispatchRecord {
  Micros start_us = 0;
  Micros completion_us = 0;
  std::uint32_t worker = 0;
  std::size_t subnet_index = 0;
  double accuracy = 0.0;
  std::uint32_t actual_count = 0;
  std::uint32_t profiled_batch = 0;
  Micros predicted_latency_us = 0;
  Micros actuation_us = 0;
  Micros batch_arrival_us = 0;
  Micros batch_deadline_us = 0;
  std::vector<std::uint64_t> query_ids;
};

using DispatchLog = std::vector<DispatchRecord>;

inline double sustainable_qps(const Catalog& catalog,
                              const std::string& subnet_id,
                              std::uint32_t worker_count) {
  const auto& rec = catalog.at(catalog.index_of(subnet_id));
  double best = 0.0;
  for (const auto& bl : rec.profile) {
    best = std::max(best, static_cast<double>(bl.batch) * 1e6 /
                              static_cast<double>(bl.latency_us));
  }
  return best * worker_count;
}

namespace sim_detail {

constexpr Micros kDynamicsWindowUs = 100'000;

enum class EventKind : std::uint8_t {
  Fault = 0,
  Arrival = 1,
  BatchDone = 2,
  WorkerFree = 3,
};

struct Event {
  Micros time = 0;
  EventKind kind = EventKind::Arrival;
  std::uint64_t seq = 0;
  std::uint32_t worker = 0;
  std::size_t payload = 0;  // pending-batch slot for BatchDone

  bool operator>(const Event& other) const {
    if (time != other.time) return time > other.time;
    if (kind != other.kind) return kind > other.kind;
    return seq > other.seq;
  }
};

struct WorkerState {
  Micros busy_until = 0;
  std::optional<std::size_t> current_subnet;
  bool busy = false;
  bool alive = true;
  bool doomed = false;  // fault arrived while busy
};

struct PendingBatch {
  Batch batch;
  std::size_t subnet_index = 0;
  Micros completion = 0;
};

}  // namespace sim_detail

/// Event loop per the router contract: the scheduler is invoked whenever a
/// worker is idle and the EDF queue is non-empty. Faults let the in-flight
/// batch finish, then the worker never rejoins.
inline SimReport run(const Trace& trace, const Catalog& catalog,
                     const SimConfig& config, DispatchLog* log = nullptr) {
  using namespace sim_detail;
  config.validate(catalog);
  const BucketTable buckets = build_buckets(catalog, config.bucket_count);
  const Micros min_latency =
      min_feasible_latency(config.policy, catalog) +
      config.dispatch_overhead_us;

  std::vector<FaultSpec> faults = config.fault_schedule;
  std::sort(faults.begin(), faults.end(),
            [](const FaultSpec& a, const FaultSpec& b) {
              return a.time_us < b.time_us;
            });

  SimReport report;
  report.outcomes.reserve(trace.queries.size());
  report.config_echo = {
      {"mode", "simulate"},
      {"policy", to_string(config.policy)},
      {"workers", config.worker_count},
      {"actuation_delay_us", config.actuation_delay_us},
      {"dispatch_overhead_us", config.dispatch_overhead_us},
      {"bucket_count", config.bucket_count},
      {"trace_spec", trace_spec_to_json(trace.spec)},
      {"trace_queries", trace.queries.size()},
  };

  std::vector<WorkerState> workers(config.worker_count);
  EdfQueue queue;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events;
  std::uint64_t seq = 0;
  std::vector<PendingBatch> pending;
  std::vector<std::size_t> free_pending_slots;

  std::size_t arrival_cursor = 0;
  std::size_t fault_cursor = 0;

  // Dynamics sampling state (100 ms grid up to the last arrival).
  const Micros end_boundary =
      trace.queries.empty()
          ? 0
          : (trace.last_arrival_us() + kDynamicsWindowUs - 1) /
                kDynamicsWindowUs * kDynamicsWindowUs;
  Micros next_boundary = kDynamicsWindowUs;
  std::size_t window_arrivals = 0;
  double window_acc_sum = 0.0;
  double window_batch_sum = 0.0;
  std::size_t window_decisions = 0;
  double held_accuracy = 0.0;
  double held_batch = 0.0;

  auto alive_count = [&] {
    std::size_t n = 0;
    for (const auto& w : workers) n += w.alive ? 1 : 0;
    return n;
  };

  auto emit_samples_until = [&](Micros t) {
    while (next_boundary <= end_boundary && t >= next_boundary) {
      DynamicsSample s;
      s.t_ms = next_boundary / 1000;
      s.ingest_qps = static_cast<double>(window_arrivals) * 1e6 /
                     static_cast<double>(kDynamicsWindowUs);
      if (window_decisions > 0) {
        held_accuracy =
            window_acc_sum / static_cast<double>(window_decisions);
        held_batch = window_batch_sum / static_cast<double>(window_decisions);
      }
      s.accuracy = held_accuracy;
      s.batch = held_batch;
      s.queue_depth = queue.size();
      s.workers = alive_count();
      report.dynamics.push_back(s);
      window_arrivals = 0;
      window_acc_sum = 0.0;
      window_batch_sum = 0.0;
      window_decisions = 0;
      next_boundary += kDynamicsWindowUs;
    }
  };

  std::size_t drops_so_far = 0;
  std::size_t max_backlog = 0;  // queue depth plus shed queries
  auto record_drop = [&](const Query& q) {
    report.outcomes.push_back(
        {q.id, OutcomeKind::Dropped, 0.0, 0, q.deadline_us});
    ++drops_so_far;
  };

  auto idle_worker = [&]() -> std::optional<std::uint32_t> {
    for (std::uint32_t i = 0; i < workers.size(); ++i) {
      if (workers[i].alive && !workers[i].busy) return i;
    }
    return std::nullopt;
  };

  auto try_schedule = [&](Micros now) {
    while (!queue.empty()) {
      const auto worker_id = idle_worker();
      if (!worker_id) return;
      for (const auto& q : queue.drop_expired(now, min_latency)) {
        record_drop(q);
      }
      if (queue.empty()) return;
      const SlackMicros slack =
          *queue.peek_slack(now) -
          static_cast<SlackMicros>(config.dispatch_overhead_us);
      const auto decision =
          decide(config.policy, slack, queue.size(), buckets, catalog);
      if (!decision) {
        // Infeasible for this policy even though above the global floor.
        record_drop(queue.take_batch(1).queries.front());
        continue;
      }
      const auto clamped = clamp_decision(*decision, queue.size(), catalog);
      Batch batch = queue.take_batch(clamped.actual_count);
      WorkerState& worker = workers[*worker_id];
      const Micros actuation =
          (worker.current_subnet &&
           *worker.current_subnet == decision->subnet_index)
              ? 0
              : config.actuation_delay_us;
      const Micros completion = now + actuation + clamped.latency_us;
      worker.busy = true;
      worker.busy_until = completion;
      worker.current_subnet = decision->subnet_index;

      const double accuracy = catalog.at(decision->subnet_index).accuracy;
      window_acc_sum += accuracy;
      window_batch_sum += clamped.actual_count;
      ++window_decisions;

      std::size_t slot;
      if (!free_pending_slots.empty()) {
        slot = free_pending_slots.back();
        free_pending_slots.pop_back();
        pending[slot] = PendingBatch{};
      } else {
        slot = pending.size();
        pending.emplace_back();
      }
      pending[slot].subnet_index = decision->subnet_index;
      pending[slot].completion = completion;
      if (log) {
        DispatchRecord rec;
        rec.start_us = now;
        rec.completion_us = completion;
        rec.worker = *worker_id;
        rec.subnet_index = decision->subnet_index;
        rec.accuracy = accuracy;
        rec.actual_count = clamped.actual_count;
        rec.profiled_batch = clamped.profiled_batch;
        rec.predicted_latency_us = clamped.latency_us;
        rec.actuation_us = actuation;
        rec.batch_arrival_us = batch.arrival_us;
        rec.batch_deadline_us = batch.deadline_us;
        for (const auto& q : batch.queries) rec.query_ids.push_back(q.id);
        log->push_back(std::move(rec));
      }
      pending[slot].batch = std::move(batch);
      events.push({completion, EventKind::BatchDone, seq++, *worker_id,
                   slot});
      events.push({completion, EventKind::WorkerFree, seq++, *worker_id, 0});
    }
  };

  auto next_event = [&]() -> std::optional<Event> {
    std::optional<Event> best;
    if (fault_cursor < faults.size()) {
      best = Event{faults[fault_cursor].time_us, EventKind::Fault, 0,
                   faults[fault_cursor].worker, 0};
    }
    if (arrival_cursor < trace.queries.size()) {
      Event e{trace.queries[arrival_cursor].arrival_us, EventKind::Arrival,
              0, 0, arrival_cursor};
      if (!best || best->operator>(e)) best = e;
    }
    if (!events.empty()) {
      if (!best || best->operator>(events.top())) best = events.top();
    }
    return best;
  };

  // Events sharing a timestamp are applied together and the scheduler runs
  // once at the end of the instant, so simultaneous arrivals can form one
  // batch. Dispatch completions always land strictly later (latencies are
  // positive), so no cascade stays within the same instant.
  for (;;) {
    const auto ev = next_event();
    if (!ev) break;
    const Micros now = ev->time;
    emit_samples_until(now);
    switch (ev->kind) {
      case EventKind::Fault: {
        ++fault_cursor;
        WorkerState& w = workers[ev->worker];
        if (!w.alive) break;
        if (w.busy) {
          w.doomed = true;  // finishes the in-flight batch, then leaves
        } else {
          w.alive = false;
        }
        break;
      }
      case EventKind::Arrival: {
        const Query& q = trace.queries[arrival_cursor++];
        queue.enqueue(q);
        ++window_arrivals;
        report.max_queue_depth =
            std::max(report.max_queue_depth, queue.size());
        max_backlog = std::max(max_backlog, queue.size() + drops_so_far);
        break;
      }
      case EventKind::BatchDone: {
        events.pop();
        PendingBatch& pb = pending[ev->payload];
        const double accuracy = catalog.at(pb.subnet_index).accuracy;
        for (const auto& q : pb.batch.queries) {
          const bool hit = pb.completion <= q.deadline_us;
          report.outcomes.push_back({q.id,
                                     hit ? OutcomeKind::Hit
                                         : OutcomeKind::Miss,
                                     hit ? accuracy : 0.0, pb.completion,
                                     q.deadline_us});
        }
        pb.batch.queries.clear();
        free_pending_slots.push_back(ev->payload);
        break;
      }
      case EventKind::WorkerFree: {
        events.pop();
        WorkerState& w = workers[ev->worker];
        w.busy = false;
        if (w.doomed) {
          w.alive = false;
          w.doomed = false;
        }
        break;
      }
    }
    const auto upcoming = next_event();
    if (!upcoming || upcoming->time > now) {
      try_schedule(now);
      // With no alive workers left, queued work can never be served.
      if (alive_count() == 0 && !upcoming) {
        while (!queue.empty()) {
          record_drop(queue.take_batch(1).queries.front());
        }
      }
    }
  }
  emit_samples_until(end_boundary);

  finalize_report(report);

  // Divergence: queue growth beyond what the offered load and SLO explain
  // (50 x mean arrival rate x SLO). EDF shedding keeps the physical queue
  // depth bounded near lambda x SLO, so the backlog is measured as depth
  // plus the queries shed so far, i.e. the depth an unshedding queue would
  // have reached.
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
  return report;
}

}  // namespace servesim
