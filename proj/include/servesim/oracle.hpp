#pragma once

// Brute-force solver for the offline scheduling ILP on tiny instances,
// the batch utility function, an executable form of the pareto-utility
// lemma, and policy-vs-oracle comparison. Latencies are rounded UP to
// whole slots so discretized feasibility is conservative.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "servesim/policy.hpp"
#include "servesim/profile.hpp"
#include "servesim/simcore.hpp"

namespace servesim {

struct IlpQuery {
  Micros arrival_us = 0;
  Micros deadline_us = 0;
};

struct IlpInstance {
  std::vector<IlpQuery> queries;          // <= 8
  std::uint32_t workers = 1;              // <= 2
  std::vector<SubnetRecord> subnets;      // <= 3
  std::vector<std::uint32_t> batch_sizes{1, 2, 4};
  std::uint32_t slot_count = 12;          // <= 12
  Micros slot_width_us = 1000;

  std::uint32_t max_batch() const {
    return *std::max_element(batch_sizes.begin(), batch_sizes.end());
  }

  void validate() const {
    if (queries.size() > 8) throw std::invalid_argument("instance too large: > 8 queries");
    if (workers < 1 || workers > 2) {
      throw std::invalid_argument("instance too large: workers must be 1 or 2");
    }
    if (subnets.empty() || subnets.size() > 3) {
      throw std::invalid_argument("instance too large: subnets must be 1..3");
    }
    if (slot_count == 0 || slot_count > 12) {
      throw std::invalid_argument("instance too large: slot_count must be 1..12");
    }
    if (slot_width_us == 0) {
      throw std::invalid_argument("slot width must be positive");
    }
    if (batch_sizes.empty()) {
      throw std::invalid_argument("batch sizes must be non-empty");
    }
    for (auto b : batch_sizes) {
      if (b != 1 && b != 2 && b != 4) {
        throw std::invalid_argument("allowed batch sizes are {1,2,4}");
      }
    }
    for (const auto& q : queries) {
      if (q.deadline_us <= q.arrival_us) {
        throw std::invalid_argument("query deadline must exceed arrival");
      }
    }
    for (const auto& s : subnets) {
      s.validate();
      for (auto b : batch_sizes) {
        if (!s.has_batch(b)) {
          throw std::invalid_argument("subnet " + s.id +
                                      " missing profiled batch " +
                                      std::to_string(b));
        }
      }
      for (const auto& bl : s.profile) {
        if (bl.latency_us % slot_width_us != 0) {
          throw std::invalid_argument("subnet " + s.id +
                                      " latency not expressible in slots");
        }
      }
    }
  }

  /// Whole-slot latency for serving `count` queries with subnet s:
  /// smallest allowed batch >= count, rounded up to slots.
  std::uint32_t latency_slots(std::size_t subnet, std::uint32_t count) const {
    const auto entry = subnets[subnet].ceil_entry(count);
    return static_cast<std::uint32_t>(
        (entry.latency_us + slot_width_us - 1) / slot_width_us);
  }
};

struct IlpAssignment {
  std::vector<std::size_t> queries;  // indices into instance.queries
  std::uint32_t start_slot = 0;
  std::uint32_t worker = 0;
  std::size_t subnet = 0;
};

struct IlpSchedule {
  std::vector<IlpAssignment> assignments;
  double objective = 0.0;
};

namespace oracle_detail {

inline Micros batch_arrival(const IlpInstance& inst,
                            const std::vector<std::size_t>& members) {
  Micros a = std::numeric_limits<Micros>::max();
  for (auto q : members) a = std::min(a, inst.queries[q].arrival_us);
  return a;
}

inline Micros batch_deadline(const IlpInstance& inst,
                             const std::vector<std::size_t>& members) {
  Micros d = std::numeric_limits<Micros>::max();
  for (auto q : members) d = std::min(d, inst.queries[q].deadline_us);
  return d;
}

/// Canonical encoding for the deterministic lexicographic tie-break.
inline std::vector<std::uint64_t> encode(const IlpSchedule& schedule) {
  std::vector<std::vector<std::uint64_t>> rows;
  for (const auto& a : schedule.assignments) {
    std::vector<std::uint64_t> row;
    auto members = a.queries;
    std::sort(members.begin(), members.end());
    for (auto q : members) row.push_back(q);
    row.push_back(1000000 + a.start_slot);
    row.push_back(2000000 + a.worker);
    row.push_back(3000000 + a.subnet);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::uint64_t> flat;
  for (const auto& r : rows) {
    for (auto v : r) flat.push_back(v);
    flat.push_back(9999999);  // row separator
  }
  return flat;
}

/// All set partitions of {0..n-1}.
inline std::vector<std::vector<std::vector<std::size_t>>> all_partitions(
    std::size_t n) {
  std::vector<std::vector<std::vector<std::size_t>>> out;
  std::vector<std::vector<std::size_t>> current;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == n) {
      out.push_back(current);
      return;
    }
    // index-based: recursion grows `current`, invalidating iterators
    for (std::size_t b = 0, blocks = current.size(); b < blocks; ++b) {
      current[b].push_back(i);
      rec(i + 1);
      current[b].pop_back();
    }
    current.push_back({i});
    rec(i + 1);
    current.pop_back();
  };
  rec(0);
  return out;
}

}  // namespace oracle_detail

/// Exhaustive argmax of sum Acc * |B| subject to constraints (1a)-(1f).
/// Candidate groupings: all set partitions for <= 4 queries; deadline-
/// ordered contiguous groupings (plus all 2-partitions at exactly 5) for
/// larger instances. Ties break on the lexicographic schedule encoding.
inline IlpSchedule solve_exact(const IlpInstance& inst) {
  using namespace oracle_detail;
  inst.validate();
  const std::size_t n = inst.queries.size();
  IlpSchedule best;
  best.objective = 0.0;
  std::vector<std::uint64_t> best_enc = encode(best);
  if (n == 0) return best;

  // Deadline order for contiguous groupings.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (inst.queries[a].deadline_us != inst.queries[b].deadline_us) {
      return inst.queries[a].deadline_us < inst.queries[b].deadline_us;
    }
    if (inst.queries[a].arrival_us != inst.queries[b].arrival_us) {
      return inst.queries[a].arrival_us < inst.queries[b].arrival_us;
    }
    return a < b;
  });

  std::vector<std::vector<std::vector<std::size_t>>> partitions;
  if (n <= 4) {
    partitions = all_partitions(n);
  } else {
    for (std::uint64_t mask = 0; mask < (1ull << (n - 1)); ++mask) {
      std::vector<std::vector<std::size_t>> part;
      std::vector<std::size_t> block{order[0]};
      for (std::size_t i = 1; i < n; ++i) {
        if (mask & (1ull << (i - 1))) {
          part.push_back(block);
          block.clear();
        }
        block.push_back(order[i]);
      }
      part.push_back(block);
      partitions.push_back(std::move(part));
    }
    if (n == 5) {
      for (std::uint32_t s = 1; s < (1u << n) - 1; ++s) {
        if (!(s & 1u)) continue;  // fix element 0 to avoid mirror duplicates
        std::vector<std::size_t> a, b;
        for (std::size_t i = 0; i < n; ++i) {
          ((s >> i) & 1u ? a : b).push_back(i);
        }
        partitions.push_back({a, b});
      }
    }
  }

  const double max_acc =
      std::max_element(inst.subnets.begin(), inst.subnets.end(),
                       [](const SubnetRecord& a, const SubnetRecord& b) {
                         return a.accuracy < b.accuracy;
                       })
          ->accuracy;

  std::vector<IlpAssignment> current;
  std::vector<std::uint32_t> occupancy;  // slot bitmask per worker

  std::function<void(const std::vector<std::vector<std::size_t>>&,
                     std::size_t, double, double)>
      dfs = [&](const std::vector<std::vector<std::size_t>>& blocks,
                std::size_t bi, double value, double remaining_bound) {
        if (value + remaining_bound < best.objective) return;  // cannot win
        if (bi == blocks.size()) {
          if (value > best.objective) {
            best.assignments = current;
            best.objective = value;
            best_enc = encode(best);
          } else if (value == best.objective) {
            IlpSchedule candidate{current, value};
            auto enc = encode(candidate);
            if (enc < best_enc) {
              best = std::move(candidate);
              best_enc = std::move(enc);
            }
          }
          return;
        }
        const auto& block = blocks[bi];
        const auto m = static_cast<std::uint32_t>(block.size());
        const double block_bound = max_acc * m;
        if (m <= inst.max_batch()) {
          const Micros a_b = batch_arrival(inst, block);
          const Micros d_b = batch_deadline(inst, block);
          const auto t_min = static_cast<std::uint32_t>(
              (a_b + inst.slot_width_us - 1) / inst.slot_width_us);
          for (std::size_t s = 0; s < inst.subnets.size(); ++s) {
            const std::uint32_t lat = inst.latency_slots(s, m);
            if (lat > inst.slot_count) continue;
            const Micros d_slots = d_b / inst.slot_width_us;  // floor
            if (d_slots < lat) continue;
            const auto t_max = static_cast<std::uint32_t>(std::min<Micros>(
                d_slots - lat, inst.slot_count - lat));
            const double gained = inst.subnets[s].accuracy * m;
            for (std::uint32_t t = t_min; t <= t_max; ++t) {
              const std::uint32_t mask = ((1u << lat) - 1u) << t;
              for (std::uint32_t w = 0; w < inst.workers; ++w) {
                // identical workers: skip mirrored states
                if (w > 0 && occupancy[w] == occupancy[w - 1]) break;
                if (occupancy[w] & mask) continue;
                occupancy[w] |= mask;
                current.push_back({block, t, w, s});
                dfs(blocks, bi + 1, value + gained,
                    remaining_bound - block_bound);
                current.pop_back();
                occupancy[w] &= ~mask;
              }
            }
          }
        }
        // skip the block (queries go unserved)
        dfs(blocks, bi + 1, value, remaining_bound - block_bound);
      };

  for (const auto& blocks : partitions) {
    double bound = 0.0;
    for (const auto& b : blocks) {
      bound += max_acc * static_cast<double>(b.size());
    }
    occupancy.assign(inst.workers, 0);
    current.clear();
    dfs(blocks, 0, 0.0, bound);
  }
  return best;
}

/// Independent validity checker for constraints (1a)-(1f); written against
/// the instance alone, not the enumerator. Returns false with a reason on
/// the first violation.
inline bool check_schedule(const IlpInstance& inst, const IlpSchedule& sched,
                           std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::vector<std::uint32_t> assigned(inst.queries.size(), 0);
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>>
      busy(inst.workers);
  double objective = 0.0;
  for (const auto& a : sched.assignments) {
    if (a.queries.empty()) return fail("empty batch");
    if (a.subnet >= inst.subnets.size()) return fail("bad subnet index");
    if (a.worker >= inst.workers) return fail("bad worker index");
    const auto m = static_cast<std::uint32_t>(a.queries.size());
    if (m > inst.max_batch()) return fail("batch exceeds allowed sizes");
    for (auto q : a.queries) {
      if (q >= inst.queries.size()) return fail("bad query index");
      if (++assigned[q] > 1) return fail("query in two batches (1a)");
    }
    const std::uint32_t lat = inst.latency_slots(a.subnet, m);
    const Micros start_us =
        static_cast<Micros>(a.start_slot) * inst.slot_width_us;
    const Micros end_us =
        static_cast<Micros>(a.start_slot + lat) * inst.slot_width_us;
    if (start_us < oracle_detail::batch_arrival(inst, a.queries)) {
      return fail("batch starts before arrival (1c)");
    }
    if (end_us > oracle_detail::batch_deadline(inst, a.queries)) {
      return fail("batch completes after deadline (1e)");
    }
    if (a.start_slot + lat > inst.slot_count) {
      return fail("batch leaves the slot horizon");
    }
    busy[a.worker].push_back({a.start_slot, a.start_slot + lat});
    objective += inst.subnets[a.subnet].accuracy * m;
  }
  for (auto& intervals : busy) {
    std::sort(intervals.begin(), intervals.end());
    for (std::size_t i = 1; i < intervals.size(); ++i) {
      if (intervals[i].first < intervals[i - 1].second) {
        return fail("worker executes two batches at once (1b)");
      }
    }
  }
  if (std::abs(objective - sched.objective) > 1e-9) {
    return fail("objective mismatch");
  }
  return true;
}

// ---------------------------------------------------------------------------
// Utility function and the pareto-utility lemma

/// Acc * |B| when the batch finishes strictly before its deadline, else 0.
inline double utility(const SubnetRecord& subnet, std::uint32_t batch_size,
                      Micros deadline_us, Micros start_us) {
  const Micros latency = subnet.latency_at(batch_size);
  return start_us + latency < deadline_us
             ? subnet.accuracy * static_cast<double>(batch_size)
             : 0.0;
}

struct Lemma1Result {
  bool pass = true;
  std::size_t pairs_checked = 0;
  std::string counterexample;
};

/// Samples (batch, deadline) points and pareto/non-pareto subnet pairs with
/// near-equal latency and asserts the pareto side never has lower utility,
/// strictly higher when the deadline is feasible for both. Deadlines are
/// sampled outside the latency gap of the pair, matching the lemma's
/// similar-latency premise.
inline Lemma1Result check_lemma1(const Catalog& catalog, std::size_t trials,
                                 Micros epsilon_us,
                                 std::uint64_t seed = 12345) {
  Lemma1Result result;
  const Catalog pareto = pareto_filter(catalog);
  std::vector<std::size_t> pareto_idx, other_idx;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (pareto.has(catalog.at(i).id)) {
      pareto_idx.push_back(i);
    } else {
      other_idx.push_back(i);
    }
  }
  if (pareto_idx.empty() || other_idx.empty()) {
    result.pass = false;
    result.counterexample = "catalog must mix pareto and non-pareto subnets";
    return result;
  }
  std::mt19937_64 rng(seed);
  const auto batches = catalog.batch_sizes();
  for (std::size_t t = 0; t < trials; ++t) {
    const auto& p =
        catalog.at(pareto_idx[rng() % pareto_idx.size()]);
    const auto& q = catalog.at(other_idx[rng() % other_idx.size()]);
    const std::uint32_t batch = batches[rng() % batches.size()];
    const Micros lp = p.latency_at(batch);
    const Micros lq = q.latency_at(batch);
    if (p.accuracy <= q.accuracy) continue;
    if ((lp > lq ? lp - lq : lq - lp) > epsilon_us) continue;
    const Micros lo = std::min(lp, lq);
    const Micros hi = std::max(lp, lq);
    const bool feasible = (rng() & 1) != 0;
    const Micros deadline =
        feasible ? hi + 1 + rng() % (hi + 1) : rng() % (lo + 1);
    ++result.pairs_checked;
    const double up = utility(p, batch, deadline, 0);
    const double uq = utility(q, batch, deadline, 0);
    const bool ok = feasible ? up > uq : up >= uq;
    if (!ok) {
      result.pass = false;
      result.counterexample =
          "U(" + p.id + ")=" + std::to_string(up) + " vs U(" + q.id +
          ")=" + std::to_string(uq) + " at batch " + std::to_string(batch) +
          " deadline " + std::to_string(deadline);
      return result;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Policy vs oracle

/// Continuous-time constraint check over a simulator dispatch log: each
/// query served at most once, per-worker intervals disjoint, batches start
/// after their arrival and complete by their deadline.
inline bool check_dispatch_log(const Trace& trace, const DispatchLog& log,
                               std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::unordered_set<std::uint64_t> served;
  std::unordered_map<std::uint32_t, std::vector<std::pair<Micros, Micros>>>
      busy;
  for (const auto& d : log) {
    for (auto id : d.query_ids) {
      if (!served.insert(id).second) {
        return fail("query served twice (1a)");
      }
    }
    if (d.start_us < d.batch_arrival_us) {
      return fail("dispatch before batch arrival (1c)");
    }
    if (d.completion_us > d.batch_deadline_us) {
      return fail("dispatch past batch deadline (1e)");
    }
    busy[d.worker].push_back({d.start_us, d.completion_us});
  }
  (void)trace;
  for (auto& [w, intervals] : busy) {
    std::sort(intervals.begin(), intervals.end());
    for (std::size_t i = 1; i < intervals.size(); ++i) {
      if (intervals[i].first < intervals[i - 1].second) {
        return fail("worker overlap (1b)");
      }
    }
  }
  return true;
}

struct PolicyVsOracle {
  double policy_objective = 0.0;
  double oracle_objective = 0.0;
  bool policy_feasible = false;
};

/// Runs the online policy through the simulator on the instance's trace and
/// compares its realized objective against the exhaustive optimum.
inline PolicyVsOracle policy_vs_oracle(const IlpInstance& inst,
                                       const PolicyKind& kind) {
  inst.validate();
  PolicyVsOracle out;
  out.oracle_objective = solve_exact(inst).objective;

  Catalog catalog;
  catalog.subnets = inst.subnets;
  catalog.max_batch = inst.max_batch();
  catalog.validate();
  const Catalog pareto = pareto_filter(catalog);

  Trace trace;
  trace.spec.kind = TraceKind::Bursty;
  trace.spec.duration_s = 1.0;
  trace.spec.slo_us = 1;
  std::vector<std::size_t> by_arrival(inst.queries.size());
  for (std::size_t i = 0; i < by_arrival.size(); ++i) by_arrival[i] = i;
  std::sort(by_arrival.begin(), by_arrival.end(),
            [&](std::size_t a, std::size_t b) {
              if (inst.queries[a].arrival_us != inst.queries[b].arrival_us) {
                return inst.queries[a].arrival_us < inst.queries[b].arrival_us;
              }
              return a < b;
            });
  std::uint64_t id = 0;
  for (auto qi : by_arrival) {
    trace.queries.push_back(
        {id++, inst.queries[qi].arrival_us, inst.queries[qi].deadline_us});
  }

  SimConfig config;
  config.worker_count = inst.workers;
  config.policy = kind;
  config.bucket_count = 20;
  DispatchLog log;
  run(trace, pareto, config, &log);
  out.policy_feasible = check_dispatch_log(trace, log);
  for (const auto& d : log) {
    if (d.completion_us <= d.batch_deadline_us) {
      out.policy_objective += d.accuracy * d.actual_count;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Instance JSON

inline IlpInstance instance_from_json(const nlohmann::json& j) {
  IlpInstance inst;
  for (const auto& q : j.at("queries")) {
    inst.queries.push_back({q.at("arrival_us").get<Micros>(),
                            q.at("deadline_us").get<Micros>()});
  }
  inst.workers = j.value("workers", 1u);
  inst.slot_count = j.value("slot_count", 12u);
  inst.slot_width_us = j.value("slot_width_us", Micros{1000});
  if (j.contains("batch_sizes")) {
    inst.batch_sizes = j.at("batch_sizes").get<std::vector<std::uint32_t>>();
  }
  for (const auto& s : j.at("subnets")) {
    SubnetRecord rec;
    rec.id = s.at("id").get<std::string>();
    rec.accuracy = s.at("accuracy").get<double>();
    for (const auto& bl : s.at("profile")) {
      rec.profile.push_back({bl.at(0).get<std::uint32_t>(),
                             bl.at(1).get<Micros>()});
    }
    inst.subnets.push_back(std::move(rec));
  }
  inst.validate();
  return inst;
}

inline nlohmann::json instance_to_json(const IlpInstance& inst) {
  nlohmann::json j;
  j["queries"] = nlohmann::json::array();
  for (const auto& q : inst.queries) {
    j["queries"].push_back({{"arrival_us", q.arrival_us},
                            {"deadline_us", q.deadline_us}});
  }
  j["workers"] = inst.workers;
  j["slot_count"] = inst.slot_count;
  j["slot_width_us"] = inst.slot_width_us;
  j["batch_sizes"] = inst.batch_sizes;
  j["subnets"] = nlohmann::json::array();
  for (const auto& s : inst.subnets) {
    nlohmann::json profile = nlohmann::json::array();
    for (const auto& bl : s.profile) {
      profile.push_back({bl.batch, bl.latency_us});
    }
    j["subnets"].push_back(
        {{"id", s.id}, {"accuracy", s.accuracy}, {"profile", profile}});
  }
  return j;
}

inline IlpInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance: " + path);
  nlohmann::json j;
  in >> j;
  return instance_from_json(j);
}

}  // namespace servesim
