#pragma once

// Seeded arrival-trace generators: bursty (deterministic base + gamma
// variant), time-varying (accelerating mean rate) and periodic spikes.
// Timestamps are integer microseconds; same seed + spec gives a
// byte-identical trace.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "servesim/edf_queue.hpp"

namespace servesim {

enum class TraceKind { Bursty, TimeVarying, Spikes };

inline const char* to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::Bursty: return "bursty";
    case TraceKind::TimeVarying: return "time_varying";
    case TraceKind::Spikes: return "spikes";
  }
  return "?";
}

inline TraceKind trace_kind_from_string(const std::string& s) {
  if (s == "bursty") return TraceKind::Bursty;
  if (s == "time_varying") return TraceKind::TimeVarying;
  if (s == "spikes") return TraceKind::Spikes;
  throw std::invalid_argument("unknown trace kind: " + s);
}

struct TraceSpec {
  TraceKind kind = TraceKind::Bursty;
  double base_rate = 0.0;     // lambda_b, q/s (bursty, spikes)
  double variant_rate = 0.0;  // lambda_v, q/s (bursty)
  double cv2 = 0.0;           // squared coefficient of variation
  double start_rate = 0.0;    // lambda_1, q/s (time_varying)
  double end_rate = 0.0;      // lambda_2, q/s (time_varying)
  double acceleration = 0.0;  // tau, q/s^2 (time_varying)
  double spike_period_s = 0.0;
  double spike_height = 0.0;  // q/s reached during a spike second
  double duration_s = 0.0;
  Micros slo_us = 36'000;
  std::uint64_t seed = 0;

  void validate() const {
    auto nonneg = [](double v, const char* what) {
      if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) +
                                                   " must be >= 0");
    };
    nonneg(base_rate, "base_rate");
    nonneg(variant_rate, "variant_rate");
    nonneg(cv2, "cv2");
    nonneg(start_rate, "start_rate");
    nonneg(end_rate, "end_rate");
    nonneg(acceleration, "acceleration");
    nonneg(spike_height, "spike_height");
    if (!(duration_s > 0.0)) {
      throw std::invalid_argument("duration must be > 0");
    }
    if (slo_us == 0) throw std::invalid_argument("slo must be > 0");
    if (kind == TraceKind::TimeVarying) {
      if (end_rate < start_rate) {
        throw std::invalid_argument("end_rate must be >= start_rate");
      }
      if (!(acceleration > 0.0)) {
        throw std::invalid_argument("acceleration must be > 0");
      }
    }
    if (kind == TraceKind::Spikes && !(spike_period_s > 0.0)) {
      throw std::invalid_argument("spike_period must be > 0");
    }
  }
};

struct Trace {
  std::vector<Query> queries;  // time-ordered, dense ids
  TraceSpec spec;

  Micros last_arrival_us() const {
    return queries.empty() ? 0 : queries.back().arrival_us;
  }
};

namespace detail {

/// Renewal stream of cumulative arrival times (seconds rounded to us).
/// Shape k = 1/cv2; scale = 1/(rate*k) so the mean inter-arrival is 1/rate.
/// cv2 == 0 degenerates to equal spacing.
class GammaRenewal {
 public:
  GammaRenewal(double cv2, std::mt19937_64& rng) : rng_(rng) {
    if (cv2 > 0.0) {
      shape_ = 1.0 / cv2;
      gamma_ = std::gamma_distribution<double>(shape_, 1.0);
    }
  }

  double next_gap_seconds(double rate_qps) {
    const double mean = 1.0 / rate_qps;
    if (shape_ == 0.0) return mean;
    // gamma(k, 1) sample scaled to the requested mean = k * scale.
    return gamma_(rng_) * (mean / shape_);
  }

  double shape() const { return shape_; }

 private:
  std::mt19937_64& rng_;
  double shape_ = 0.0;  // 0 means deterministic
  std::gamma_distribution<double> gamma_;
};

inline void append_deterministic(std::vector<Micros>& out, double rate_qps,
                                 double from_s, double to_s) {
  if (rate_qps <= 0.0) return;
  const double gap = 1.0 / rate_qps;
  for (double t = from_s + gap; t < to_s; t += gap) {
    out.push_back(static_cast<Micros>(std::llround(t * 1e6)));
  }
}

inline void append_renewal(std::vector<Micros>& out, GammaRenewal& renewal,
                           double rate_qps, double from_s, double to_s) {
  if (rate_qps <= 0.0) return;
  double t = from_s;
  for (;;) {
    t += renewal.next_gap_seconds(rate_qps);
    if (t >= to_s) break;
    out.push_back(static_cast<Micros>(std::llround(t * 1e6)));
  }
}

inline Trace assemble(std::vector<Micros> arrivals, const TraceSpec& spec) {
  std::sort(arrivals.begin(), arrivals.end());
  Trace trace;
  trace.spec = spec;
  trace.queries.reserve(arrivals.size());
  std::uint64_t id = 0;
  for (Micros a : arrivals) {
    trace.queries.push_back({id++, a, a + spec.slo_us});
  }
  return trace;
}

}  // namespace detail

/// Deterministic base stream at lambda_b merged with a gamma-renewal
/// variant stream at mean rate lambda_v.
inline Trace gen_bursty(const TraceSpec& spec) {
  if (spec.kind != TraceKind::Bursty) {
    throw std::invalid_argument("gen_bursty requires kind = bursty");
  }
  spec.validate();
  std::vector<Micros> arrivals;
  detail::append_deterministic(arrivals, spec.base_rate, 0.0, spec.duration_s);
  std::mt19937_64 rng(spec.seed);
  detail::GammaRenewal renewal(spec.cv2, rng);
  detail::append_renewal(arrivals, renewal, spec.variant_rate, 0.0,
                         spec.duration_s);
  return detail::assemble(std::move(arrivals), spec);
}

/// Instantaneous rate lambda(t) = min(lambda_2, lambda_1 + tau*t); each
/// inter-arrival is drawn at the rate in effect at the previous arrival.
inline Trace gen_time_varying(const TraceSpec& spec) {
  if (spec.kind != TraceKind::TimeVarying) {
    throw std::invalid_argument("gen_time_varying requires kind = "
                                "time_varying");
  }
  spec.validate();
  if (spec.start_rate <= 0.0) {
    throw std::invalid_argument("time_varying start_rate must be > 0");
  }
  constexpr double kMaxAcceleration = 1e9;  // effectively a step at t=0
  const double tau = std::min(spec.acceleration, kMaxAcceleration);
  std::mt19937_64 rng(spec.seed);
  detail::GammaRenewal renewal(spec.cv2, rng);
  std::vector<Micros> arrivals;
  double t = 0.0;
  for (;;) {
    const double rate = std::min(spec.end_rate, spec.start_rate + tau * t);
    t += renewal.next_gap_seconds(rate);
    if (t >= spec.duration_s) break;
    arrivals.push_back(static_cast<Micros>(std::llround(t * 1e6)));
  }
  return detail::assemble(std::move(arrivals), spec);
}

/// Deterministic base rate with a one-second burst every spike_period
/// seconds; during a burst the total rate reaches spike_height.
inline Trace gen_spikes(const TraceSpec& spec) {
  if (spec.kind != TraceKind::Spikes) {
    throw std::invalid_argument("gen_spikes requires kind = spikes");
  }
  spec.validate();
  std::vector<Micros> arrivals;
  detail::append_deterministic(arrivals, spec.base_rate, 0.0, spec.duration_s);
  std::mt19937_64 rng(spec.seed);
  detail::GammaRenewal renewal(spec.cv2, rng);
  const double extra = spec.spike_height - spec.base_rate;
  if (extra > 0.0) {
    for (double start = 0.0; start < spec.duration_s;
         start += spec.spike_period_s) {
      const double end = std::min(start + 1.0, spec.duration_s);
      detail::append_renewal(arrivals, renewal, extra, start, end);
    }
  }
  return detail::assemble(std::move(arrivals), spec);
}

inline Trace generate_trace(const TraceSpec& spec) {
  switch (spec.kind) {
    case TraceKind::Bursty: return gen_bursty(spec);
    case TraceKind::TimeVarying: return gen_time_varying(spec);
    case TraceKind::Spikes: return gen_spikes(spec);
  }
  throw std::invalid_argument("bad trace kind");
}

// ---------------------------------------------------------------------------
// Trace file: JSON lines. First line echoes the generating spec, then one
// object per query: {"id":..,"arrival_us":..,"deadline_us":..}.

inline nlohmann::json trace_spec_to_json(const TraceSpec& spec) {
  return nlohmann::json{{"kind", to_string(spec.kind)},
                        {"base_rate", spec.base_rate},
                        {"variant_rate", spec.variant_rate},
                        {"cv2", spec.cv2},
                        {"start_rate", spec.start_rate},
                        {"end_rate", spec.end_rate},
                        {"acceleration", spec.acceleration},
                        {"spike_period_s", spec.spike_period_s},
                        {"spike_height", spec.spike_height},
                        {"duration_s", spec.duration_s},
                        {"slo_us", spec.slo_us},
                        {"seed", spec.seed}};
}

inline TraceSpec trace_spec_from_json(const nlohmann::json& j) {
  TraceSpec spec;
  spec.kind = trace_kind_from_string(j.at("kind").get<std::string>());
  spec.base_rate = j.value("base_rate", 0.0);
  spec.variant_rate = j.value("variant_rate", 0.0);
  spec.cv2 = j.value("cv2", 0.0);
  spec.start_rate = j.value("start_rate", 0.0);
  spec.end_rate = j.value("end_rate", 0.0);
  spec.acceleration = j.value("acceleration", 0.0);
  spec.spike_period_s = j.value("spike_period_s", 0.0);
  spec.spike_height = j.value("spike_height", 0.0);
  spec.duration_s = j.value("duration_s", 0.0);
  spec.slo_us = j.value("slo_us", Micros{36'000});
  spec.seed = j.value("seed", std::uint64_t{0});
  return spec;
}

inline void write_trace(const Trace& trace, std::ostream& out) {
  nlohmann::json header = {{"trace_spec", trace_spec_to_json(trace.spec)}};
  out << header.dump() << '\n';
  char buf[96];
  for (const auto& q : trace.queries) {
    std::snprintf(buf, sizeof(buf),
                  "{\"id\":%llu,\"arrival_us\":%llu,\"deadline_us\":%llu}\n",
                  static_cast<unsigned long long>(q.id),
                  static_cast<unsigned long long>(q.arrival_us),
                  static_cast<unsigned long long>(q.deadline_us));
    out << buf;
  }
}

inline void save_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace: " + path);
  write_trace(trace, out);
}

inline Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  Micros prev_arrival = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    if (j.contains("trace_spec")) {
      trace.spec = trace_spec_from_json(j["trace_spec"]);
      continue;
    }
    Query q{j.at("id").get<std::uint64_t>(),
            j.at("arrival_us").get<Micros>(),
            j.at("deadline_us").get<Micros>()};
    if (q.arrival_us < prev_arrival) {
      throw std::runtime_error("trace line " + std::to_string(line_no) +
                               ": arrivals must be non-decreasing");
    }
    prev_arrival = q.arrival_us;
    trace.queries.push_back(q);
  }
  return trace;
}

inline Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace: " + path);
  return read_trace(in);
}

}  // namespace servesim
