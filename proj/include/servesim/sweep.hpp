#pragma once

// Experiment sweeps: the cross product of trace specs x policies x seeds,
// each cell an independent simulator run. Cells execute in parallel; all
// cells are validated before any run starts.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "servesim/simcore.hpp"
#include "servesim/tracegen.hpp"

namespace servesim {

struct SweepCell {
  TraceSpec trace;
  PolicyKind policy;
  std::uint64_t seed = 0;
};

struct SweepSpec {
  std::vector<TraceSpec> traces;
  std::vector<PolicyKind> policies;
  std::vector<std::uint64_t> seeds{0};
  std::uint32_t worker_count = 1;
  Micros actuation_delay_us = 0;
  Micros dispatch_overhead_us = 0;
  std::size_t bucket_count = 20;

  std::vector<SweepCell> cells() const {
    std::vector<SweepCell> out;
    for (const auto& t : traces) {
      for (const auto& p : policies) {
        for (auto s : seeds) out.push_back({t, p, s});
      }
    }
    return out;
  }
};

struct SweepRow {
  std::string policy;
  double lambda = 0.0;  // offered mean rate, q/s
  double cv2 = 0.0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  double slo_attainment = 0.0;
  double mean_accuracy = 0.0;  // 0 when no query hit
  bool diverged = false;
};

inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
  SweepSpec spec;
  for (const auto& t : j.at("traces")) {
    spec.traces.push_back(trace_spec_from_json(t));
  }
  for (const auto& p : j.at("policies")) {
    spec.policies.push_back(policy_from_string(p.get<std::string>()));
  }
  if (j.contains("seeds")) {
    spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  }
  spec.worker_count = j.value("workers", 1u);
  spec.actuation_delay_us = j.value("actuation_delay_us", Micros{0});
  spec.dispatch_overhead_us = j.value("dispatch_overhead_us", Micros{0});
  spec.bucket_count = j.value("bucket_count", std::size_t{20});
  return spec;
}

inline SweepSpec load_sweep_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sweep spec: " + path);
  nlohmann::json j;
  in >> j;
  return sweep_spec_from_json(j);
}

/// Validates every cell up front; any invalid cell aborts the whole sweep
/// before a single run starts.
inline void validate_sweep(const SweepSpec& spec, const Catalog& catalog) {
  for (const auto& cell : spec.cells()) {
    cell.trace.validate();
    SimConfig config;
    config.worker_count = spec.worker_count;
    config.policy = cell.policy;
    config.bucket_count = spec.bucket_count;
    config.validate(catalog);
  }
}

inline double offered_rate(const TraceSpec& t) {
  switch (t.kind) {
    case TraceKind::Bursty: return t.base_rate + t.variant_rate;
    case TraceKind::TimeVarying: return t.end_rate;
    case TraceKind::Spikes: return t.base_rate;
  }
  return 0.0;
}

inline std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                       const Catalog& catalog,
                                       std::size_t jobs = 0) {
  validate_sweep(spec, catalog);
  const auto cells = spec.cells();
  if (jobs == 0) {
    jobs = std::max(1u, std::thread::hardware_concurrency());
  }
  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& cell = cells[i];
      TraceSpec t = cell.trace;
      t.seed = cell.seed;
      const Trace trace = generate_trace(t);
      SimConfig config;
      config.worker_count = spec.worker_count;
      config.actuation_delay_us = spec.actuation_delay_us;
      config.dispatch_overhead_us = spec.dispatch_overhead_us;
      config.policy = cell.policy;
      config.bucket_count = spec.bucket_count;
      const SimReport report = run(trace, catalog, config);
      SweepRow row;
      row.policy = to_string(cell.policy);
      row.lambda = offered_rate(t);
      row.cv2 = t.cv2;
      row.tau = t.acceleration;
      row.seed = cell.seed;
      row.slo_attainment = report.aggregates.slo_attainment;
      row.mean_accuracy =
          report.aggregates.mean_serving_accuracy.value_or(0.0);
      row.diverged = report.diverged;
      rows[i] = std::move(row);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < std::min(jobs, cells.size()); ++i) {
    pool.emplace_back(work);
  }
  for (auto& th : pool) th.join();
  return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows,
                            std::ostream& out) {
  out << "policy,lambda,cv2,tau,seed,slo_attainment,mean_accuracy,"
         "diverged\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%llu,%.9g,%.9g,%d\n",
                  r.policy.c_str(), r.lambda, r.cv2, r.tau,
                  static_cast<unsigned long long>(r.seed), r.slo_attainment,
                  r.mean_accuracy, r.diverged ? 1 : 0);
    out << buf;
  }
}

}  // namespace servesim
