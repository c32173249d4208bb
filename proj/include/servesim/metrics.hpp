#pragma once

// Success metrics and report/dynamics export. Pure post-processing over
// per-query outcomes.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "servesim/profile.hpp"

namespace servesim {

enum class OutcomeKind { Hit, Miss, Dropped };

inline const char* to_string(OutcomeKind o) {
  switch (o) {
    case OutcomeKind::Hit: return "hit";
    case OutcomeKind::Miss: return "miss";
    case OutcomeKind::Dropped: return "dropped";
  }
  return "?";
}

inline OutcomeKind outcome_from_string(const std::string& s) {
  if (s == "hit") return OutcomeKind::Hit;
  if (s == "miss") return OutcomeKind::Miss;
  if (s == "dropped") return OutcomeKind::Dropped;
  throw std::invalid_argument("unknown outcome: " + s);
}

struct QueryOutcome {
  std::uint64_t id = 0;
  OutcomeKind outcome = OutcomeKind::Dropped;
  double accuracy = 0.0;       // profiled accuracy of the serving subnet
  Micros completion_us = 0;    // hits and misses only
  Micros deadline_us = 0;
};

/// One row per 100 ms of simulated time.
struct DynamicsSample {
  Micros t_ms = 0;
  double ingest_qps = 0.0;
  double accuracy = 0.0;   // mean over decisions in the window (held)
  double batch = 0.0;      // mean dispatched batch size (held)
  std::size_t queue_depth = 0;
  std::size_t workers = 0;
};

struct Aggregates {
  double slo_attainment = 0.0;
  std::optional<double> mean_serving_accuracy;  // absent with zero hits
  double effective_accuracy = 0.0;  // misses/drops count as zero accuracy
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t drops = 0;
  std::size_t total = 0;
};

inline Aggregates aggregate(const std::vector<QueryOutcome>& outcomes) {
  Aggregates agg;
  agg.total = outcomes.size();
  double acc_sum = 0.0;
  for (const auto& o : outcomes) {
    switch (o.outcome) {
      case OutcomeKind::Hit:
        ++agg.hits;
        acc_sum += o.accuracy;
        break;
      case OutcomeKind::Miss: ++agg.misses; break;
      case OutcomeKind::Dropped: ++agg.drops; break;
    }
  }
  if (agg.total > 0) {
    agg.slo_attainment =
        static_cast<double>(agg.hits) / static_cast<double>(agg.total);
    agg.effective_accuracy = acc_sum / static_cast<double>(agg.total);
  }
  if (agg.hits > 0) {
    agg.mean_serving_accuracy = acc_sum / static_cast<double>(agg.hits);
  }
  return agg;
}

struct SimReport {
  std::vector<QueryOutcome> outcomes;
  std::vector<DynamicsSample> dynamics;
  Aggregates aggregates;
  bool diverged = false;
  std::size_t max_queue_depth = 0;
  bool pacing_overrun = false;  // live mode only
  nlohmann::json config_echo;
};

inline void finalize_report(SimReport& report) {
  report.aggregates = aggregate(report.outcomes);
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json report_to_json(const SimReport& report) {
  nlohmann::json j;
  j["config"] = report.config_echo;
  j["slo_attainment"] = report.aggregates.slo_attainment;
  if (report.aggregates.mean_serving_accuracy) {
    j["mean_serving_accuracy"] = *report.aggregates.mean_serving_accuracy;
  } else {
    j["mean_serving_accuracy"] = nullptr;
  }
  j["effective_accuracy"] = report.aggregates.effective_accuracy;
  j["hits"] = report.aggregates.hits;
  j["misses"] = report.aggregates.misses;
  j["drops"] = report.aggregates.drops;
  j["total"] = report.aggregates.total;
  j["diverged"] = report.diverged;
  j["max_queue_depth"] = report.max_queue_depth;
  if (report.pacing_overrun) j["pacing_overrun"] = true;
  return j;
}

inline void save_report(const SimReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << report_to_json(report).dump(2) << '\n';
}

inline void write_dynamics_csv(const SimReport& report, std::ostream& out) {
  out << "t_ms,ingest_qps,accuracy,batch,queue_depth,workers\n";
  char buf[160];
  for (const auto& s : report.dynamics) {
    std::snprintf(buf, sizeof(buf), "%llu,%.6g,%.6g,%.6g,%zu,%zu\n",
                  static_cast<unsigned long long>(s.t_ms), s.ingest_qps,
                  s.accuracy, s.batch, s.queue_depth, s.workers);
    out << buf;
  }
}

inline void export_dynamics(const SimReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dynamics: " + path);
  write_dynamics_csv(report, out);
}

inline void write_outcomes_jsonl(const std::vector<QueryOutcome>& outcomes,
                                 std::ostream& out) {
  for (const auto& o : outcomes) {
    nlohmann::json j{{"id", o.id}, {"outcome", to_string(o.outcome)}};
    if (o.outcome != OutcomeKind::Dropped) {
      j["completion_us"] = o.completion_us;
    }
    if (o.outcome == OutcomeKind::Hit) j["accuracy"] = o.accuracy;
    j["deadline_us"] = o.deadline_us;
    out << j.dump() << '\n';
  }
}

inline void export_outcomes(const std::vector<QueryOutcome>& outcomes,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write outcomes: " + path);
  write_outcomes_jsonl(outcomes, out);
}

inline std::vector<QueryOutcome> read_outcomes_jsonl(std::istream& in) {
  std::vector<QueryOutcome> outcomes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    QueryOutcome o;
    o.id = j.at("id").get<std::uint64_t>();
    o.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    o.completion_us = j.value("completion_us", Micros{0});
    o.accuracy = j.value("accuracy", 0.0);
    o.deadline_us = j.value("deadline_us", Micros{0});
    outcomes.push_back(o);
  }
  return outcomes;
}

inline std::vector<QueryOutcome> load_outcomes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open outcomes: " + path);
  return read_outcomes_jsonl(in);
}

/// Recomputes outcomes as if every deadline had been tightened by
/// `tighten_us`. Late completions become misses; drops stay drops.
inline std::vector<QueryOutcome> tighten_deadlines(
    const std::vector<QueryOutcome>& outcomes, Micros tighten_us) {
  std::vector<QueryOutcome> out = outcomes;
  for (auto& o : out) {
    if (o.outcome == OutcomeKind::Hit &&
        o.completion_us + tighten_us > o.deadline_us) {
      o.outcome = OutcomeKind::Miss;
    }
  }
  return out;
}

}  // namespace servesim
