// Command-line front end: trace generation, simulation, live serving,
// the tiny-instance oracle, experiment sweeps, the memory model and
// report re-aggregation.
//
// Exit codes: 0 success, 2 configuration error, 3 divergence-flagged run
// under --strict.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "servesim/metrics.hpp"
#include "servesim/oracle.hpp"
#include "servesim/profile.hpp"
#include "servesim/serve_runtime.hpp"
#include "servesim/simcore.hpp"
#include "servesim/sweep.hpp"
#include "servesim/tracegen.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

servesim::Catalog load_profile_or_default(const std::string& path) {
  servesim::Catalog catalog =
      path.empty() ? servesim::default_catalog() : servesim::load_catalog(path);
  catalog = servesim::pareto_filter(catalog);
  std::string why;
  if (!servesim::holds_p2(catalog, &why)) {
    throw std::runtime_error("profile unusable for scheduling: " + why);
  }
  return catalog;
}

// "12s:w0,24s:w1" -> kill worker 0 at 12s, worker 1 at 24s.
std::vector<servesim::FaultSpec> parse_faults(const std::string& text) {
  std::vector<servesim::FaultSpec> faults;
  if (text.empty()) return faults;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("bad fault '" + item +
                               "' (expected <time>s:w<worker>)");
    }
    std::string time_part = item.substr(0, colon);
    std::string worker_part = item.substr(colon + 1);
    if (time_part.empty() || time_part.back() != 's' ||
        worker_part.size() < 2 || worker_part[0] != 'w') {
      throw std::runtime_error("bad fault '" + item +
                               "' (expected <time>s:w<worker>)");
    }
    servesim::FaultSpec f;
    f.time_us = static_cast<servesim::Micros>(
        std::stod(time_part.substr(0, time_part.size() - 1)) * 1e6);
    f.worker = static_cast<std::uint32_t>(std::stoul(worker_part.substr(1)));
    faults.push_back(f);
  }
  return faults;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << content;
}

struct SimFlags {
  std::string trace_path;
  std::string profile_path;
  std::string policy = "slackfit";
  std::uint32_t workers = 1;
  double actuation_ms = 0.0;
  std::uint64_t dispatch_overhead_us = 0;
  std::size_t bucket_count = 20;
  std::string faults;
  std::string out_path;
  std::string dynamics_path;
  std::string outcomes_path;
  bool strict = false;
};

void add_sim_flags(CLI::App* cmd, SimFlags& flags, bool live) {
  cmd->add_option("--trace", flags.trace_path, "trace JSONL file")
      ->required();
  cmd->add_option("--profile", flags.profile_path,
                  "profile CSV (defaults to the built-in catalog)");
  cmd->add_option("--policy", flags.policy,
                  "slackfit|maxbatch|maxacc|fixed:<id>|minacc");
  cmd->add_option("--workers", flags.workers, "worker count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--actuation-ms", flags.actuation_ms,
                  "model switch cost in milliseconds");
  cmd->add_option("--dispatch-overhead-us", flags.dispatch_overhead_us,
                  "overhead subtracted from slack before deciding");
  cmd->add_option("--bucket-count", flags.bucket_count,
                  "latency bucket count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--fault", flags.faults,
                  "worker kill schedule, e.g. \"12s:w0,24s:w1\"");
  cmd->add_option("--out", flags.out_path, "report JSON path");
  cmd->add_option("--dynamics", flags.dynamics_path,
                  "dynamics CSV path (100 ms grid)");
  cmd->add_option("--outcomes", flags.outcomes_path,
                  "per-query outcomes JSONL path");
  cmd->add_flag("--strict", flags.strict,
                "exit 3 when the run is divergence-flagged");
  (void)live;
}

int finish_run(const servesim::SimReport& report, const SimFlags& flags) {
  if (!flags.out_path.empty()) {
    servesim::save_report(report, flags.out_path);
  } else {
    std::cout << servesim::report_to_json(report).dump(2) << '\n';
  }
  if (!flags.dynamics_path.empty()) {
    servesim::export_dynamics(report, flags.dynamics_path);
  }
  if (!flags.outcomes_path.empty()) {
    servesim::export_outcomes(report.outcomes, flags.outcomes_path);
  }
  if (report.pacing_overrun) {
    std::cerr << "warning: trace pacing overrun; run flagged invalid\n";
  }
  if (flags.strict && report.diverged) return kExitDiverged;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLO-aware subnet serving: scheduler, simulator and live "
               "runtime"};
  app.require_subcommand(1);

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "generate a seeded trace");
  std::string gen_kind = "bursty";
  servesim::TraceSpec spec;
  double slo_ms = 36.0;
  std::string gen_out;
  gen->add_option("--kind", gen_kind, "bursty|time_varying|spikes");
  gen->add_option("--lambda-b", spec.base_rate, "base rate, q/s");
  gen->add_option("--lambda-v", spec.variant_rate, "variant rate, q/s");
  gen->add_option("--cv2", spec.cv2, "squared coefficient of variation");
  gen->add_option("--lambda1", spec.start_rate, "start rate, q/s");
  gen->add_option("--lambda2", spec.end_rate, "end rate, q/s");
  gen->add_option("--tau", spec.acceleration, "acceleration, q/s^2");
  gen->add_option("--spike-period", spec.spike_period_s,
                  "seconds between spikes");
  gen->add_option("--spike-height", spec.spike_height,
                  "rate reached during a spike, q/s");
  gen->add_option("--duration", spec.duration_s, "trace length, seconds")
      ->required();
  gen->add_option("--slo-ms", slo_ms, "per-query SLO in milliseconds");
  gen->add_option("--seed", spec.seed, "RNG seed");
  gen->add_option("--out", gen_out, "output JSONL path")->required();

  // simulate / serve
  auto* sim_cmd = app.add_subcommand("simulate", "discrete-event simulation");
  SimFlags sim_flags;
  add_sim_flags(sim_cmd, sim_flags, false);
  auto* serve_cmd =
      app.add_subcommand("serve", "live in-process mock serving");
  SimFlags serve_flags;
  add_sim_flags(serve_cmd, serve_flags, true);

  // oracle
  auto* oracle_cmd =
      app.add_subcommand("oracle", "tiny-instance exhaustive oracle");
  std::string inst_path, oracle_policy = "slackfit";
  oracle_cmd->add_option("--instance", inst_path, "instance JSON")
      ->required();
  oracle_cmd->add_option("--policy", oracle_policy, "policy to compare");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment grid");
  std::string sweep_spec_path, sweep_out, sweep_profile;
  std::size_t sweep_jobs = 0;
  bool sweep_strict = false;
  sweep_cmd->add_option("--spec", sweep_spec_path, "sweep spec JSON")
      ->required();
  sweep_cmd->add_option("--profile", sweep_profile, "profile CSV");
  sweep_cmd->add_option("--out", sweep_out, "result CSV path");
  sweep_cmd->add_option("--jobs", sweep_jobs, "parallel cells (0 = auto)");
  sweep_cmd->add_flag("--strict", sweep_strict,
                      "exit 3 when any cell diverges");

  // memory
  auto* mem_cmd =
      app.add_subcommand("memory", "supernet memory footprint model");
  std::string mem_config, mem_profile;
  mem_cmd->add_option("--config", mem_config,
                      "key-value memory spec file")
      ->required();
  mem_cmd->add_option("--profile", mem_profile,
                      "profile CSV supplying width multipliers");

  // report
  auto* report_cmd =
      app.add_subcommand("report", "re-aggregate an outcomes JSONL file");
  std::string report_outcomes;
  report_cmd->add_option("--outcomes", report_outcomes, "outcomes JSONL")
      ->required();

  // emit-profile (convenience: write the built-in catalog as CSV)
  auto* emit_cmd = app.add_subcommand(
      "emit-profile", "write the built-in profile CSV");
  std::string emit_out;
  emit_cmd->add_option("--out", emit_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      spec.kind = servesim::trace_kind_from_string(gen_kind);
      spec.slo_us = static_cast<servesim::Micros>(slo_ms * 1000.0);
      spec.validate();
      const servesim::Trace trace = servesim::generate_trace(spec);
      servesim::save_trace(trace, gen_out);
      std::cout << "wrote " << trace.queries.size() << " queries to "
                << gen_out << '\n';
      return kExitOk;
    }
    if (sim_cmd->parsed()) {
      const auto catalog = load_profile_or_default(sim_flags.profile_path);
      const auto trace = servesim::load_trace(sim_flags.trace_path);
      servesim::SimConfig config;
      config.worker_count = sim_flags.workers;
      config.actuation_delay_us =
          static_cast<servesim::Micros>(sim_flags.actuation_ms * 1000.0);
      config.dispatch_overhead_us = sim_flags.dispatch_overhead_us;
      config.policy = servesim::policy_from_string(sim_flags.policy);
      config.bucket_count = sim_flags.bucket_count;
      config.fault_schedule = parse_faults(sim_flags.faults);
      const auto report = servesim::run(trace, catalog, config);
      return finish_run(report, sim_flags);
    }
    if (serve_cmd->parsed()) {
      const auto catalog = load_profile_or_default(serve_flags.profile_path);
      const auto trace = servesim::load_trace(serve_flags.trace_path);
      servesim::ServeConfig config;
      config.worker_count = serve_flags.workers;
      config.actuation_delay_us =
          static_cast<servesim::Micros>(serve_flags.actuation_ms * 1000.0);
      config.dispatch_overhead_us = serve_flags.dispatch_overhead_us;
      config.policy = servesim::policy_from_string(serve_flags.policy);
      config.bucket_count = serve_flags.bucket_count;
      config.fault_schedule = parse_faults(serve_flags.faults);
      const auto report = servesim::serve(trace, catalog, config);
      return finish_run(report, serve_flags);
    }
    if (oracle_cmd->parsed()) {
      const auto inst = servesim::load_instance(inst_path);
      const auto result = servesim::policy_vs_oracle(
          inst, servesim::policy_from_string(oracle_policy));
      nlohmann::json j{{"policy", oracle_policy},
                       {"policy_objective", result.policy_objective},
                       {"oracle_objective", result.oracle_objective},
                       {"policy_feasible", result.policy_feasible}};
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }
    if (sweep_cmd->parsed()) {
      const auto catalog = load_profile_or_default(sweep_profile);
      const auto sweep_spec = servesim::load_sweep_spec(sweep_spec_path);
      const auto rows =
          servesim::run_sweep(sweep_spec, catalog, sweep_jobs);
      std::ostringstream csv;
      servesim::write_sweep_csv(rows, csv);
      if (sweep_out.empty()) {
        std::cout << csv.str();
      } else {
        write_file(sweep_out, csv.str());
      }
      bool any_diverged = false;
      for (const auto& r : rows) any_diverged |= r.diverged;
      if (sweep_strict && any_diverged) return kExitDiverged;
      return kExitOk;
    }
    if (mem_cmd->parsed()) {
      const auto spec_kv = servesim::load_memory_spec(mem_config);
      std::vector<double> widths;
      if (!mem_profile.empty()) {
        const auto catalog = servesim::load_catalog(mem_profile);
        for (const auto& s : catalog.subnets) {
          widths.push_back(s.config.mean_width_multiplier());
        }
      } else if (spec_kv.subnet_count == 6) {
        for (const auto& s : servesim::default_catalog().subnets) {
          widths.push_back(s.config.mean_width_multiplier());
        }
      }
      const auto fp = servesim::memory_footprint(spec_kv, widths);
      nlohmann::json j{
          {"supernet_bytes", fp.supernet_bytes},
          {"individual_bytes_estimate", fp.individual_bytes_estimate},
          {"stat_fraction", fp.stat_fraction}};
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }
    if (report_cmd->parsed()) {
      const auto outcomes = servesim::load_outcomes(report_outcomes);
      const auto agg = servesim::aggregate(outcomes);
      nlohmann::json j{{"slo_attainment", agg.slo_attainment},
                       {"effective_accuracy", agg.effective_accuracy},
                       {"hits", agg.hits},
                       {"misses", agg.misses},
                       {"drops", agg.drops},
                       {"total", agg.total}};
      if (agg.mean_serving_accuracy) {
        j["mean_serving_accuracy"] = *agg.mean_serving_accuracy;
      } else {
        j["mean_serving_accuracy"] = nullptr;
      }
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }
    if (emit_cmd->parsed()) {
      std::ostringstream csv;
      servesim::write_catalog_csv(servesim::default_catalog(), csv);
      write_file(emit_out, csv.str());
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
