#pragma once

// Global earliest-deadline-first queue and batch formation. Single logical
// owner (the router/dispatcher); no internal locking.

#include <cstdint>
#include <set>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "servesim/profile.hpp"

namespace servesim {

struct Query {
  std::uint64_t id = 0;
  Micros arrival_us = 0;
  Micros deadline_us = 0;
};

/// Batch of queries; deadline is the earliest member deadline.
struct Batch {
  std::vector<Query> queries;
  Micros arrival_us = 0;   // a(B): earliest arrival
  Micros deadline_us = 0;  // d(B): earliest deadline

  std::uint32_t size() const {
    return static_cast<std::uint32_t>(queries.size());
  }
};

/// Keyed by (deadline, insertion sequence): FIFO among equal deadlines.
class EdfQueue {
 public:
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void enqueue(const Query& q) {
    if (q.deadline_us <= q.arrival_us) {
      throw std::invalid_argument("query deadline must exceed arrival");
    }
    if (!ids_.insert(q.id).second) {
      throw std::invalid_argument("duplicate query id: " +
                                  std::to_string(q.id));
    }
    entries_.insert(Entry{q.deadline_us, next_seq_++, q});
  }

  const Query& front() const {
    if (entries_.empty()) throw std::logic_error("peek on empty EDF queue");
    return entries_.begin()->query;
  }

  /// Remaining slack of the most urgent query; empty when the queue is.
  std::optional<SlackMicros> peek_slack(Micros now_us) const {
    if (entries_.empty()) return std::nullopt;
    return static_cast<SlackMicros>(entries_.begin()->deadline) -
           static_cast<SlackMicros>(now_us);
  }

  /// Removes min(n, size) front queries. d(B) equals the pre-call front
  /// deadline by construction.
  Batch take_batch(std::size_t n) {
    if (entries_.empty()) {
      throw std::logic_error("take_batch on empty EDF queue");
    }
    Batch batch;
    batch.arrival_us = std::numeric_limits<Micros>::max();
    batch.deadline_us = entries_.begin()->deadline;
    while (n-- > 0 && !entries_.empty()) {
      auto it = entries_.begin();
      batch.arrival_us = std::min(batch.arrival_us, it->query.arrival_us);
      batch.queries.push_back(it->query);
      ids_.erase(it->query.id);
      entries_.erase(it);
    }
    return batch;
  }

  /// Drops every front query whose slack is below the feasibility floor.
  /// Only the contiguous front needs inspection: later queries have later
  /// deadlines.
  std::vector<Query> drop_expired(Micros now_us,
                                  Micros min_feasible_latency_us) {
    std::vector<Query> dropped;
    while (!entries_.empty()) {
      auto it = entries_.begin();
      const auto slack = static_cast<SlackMicros>(it->deadline) -
                         static_cast<SlackMicros>(now_us);
      if (slack >= static_cast<SlackMicros>(min_feasible_latency_us)) break;
      dropped.push_back(it->query);
      ids_.erase(it->query.id);
      entries_.erase(it);
    }
    return dropped;
  }

 private:
  struct Entry {
    Micros deadline;
    std::uint64_t seq;
    Query query;

    bool operator<(const Entry& other) const {
      if (deadline != other.deadline) return deadline < other.deadline;
      return seq < other.seq;
    }
  };

  std::set<Entry> entries_;
  std::unordered_set<std::uint64_t> ids_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace servesim
