#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "servesim/tracegen.hpp"

using namespace servesim;

namespace {

TraceSpec bursty_spec(double lb, double lv, double cv2, double duration,
                      std::uint64_t seed) {
  TraceSpec spec;
  spec.kind = TraceKind::Bursty;
  spec.base_rate = lb;
  spec.variant_rate = lv;
  spec.cv2 = cv2;
  spec.duration_s = duration;
  spec.seed = seed;
  return spec;
}

double empirical_cv2(const Trace& trace) {
  REQUIRE(trace.queries.size() > 2);
  std::vector<double> gaps;
  for (std::size_t i = 1; i < trace.queries.size(); ++i) {
    gaps.push_back(static_cast<double>(trace.queries[i].arrival_us -
                                       trace.queries[i - 1].arrival_us));
  }
  double mean = 0.0;
  for (double g : gaps) mean += g;
  mean /= static_cast<double>(gaps.size());
  double var = 0.0;
  for (double g : gaps) var += (g - mean) * (g - mean);
  var /= static_cast<double>(gaps.size() - 1);
  return var / (mean * mean);
}

std::size_t count_in_window(const Trace& trace, double from_s, double to_s) {
  std::size_t n = 0;
  for (const auto& q : trace.queries) {
    const double t = static_cast<double>(q.arrival_us) / 1e6;
    if (t >= from_s && t < to_s) ++n;
  }
  return n;
}

void check_well_formed(const Trace& trace) {
  Micros prev = 0;
  std::uint64_t id = 0;
  for (const auto& q : trace.queries) {
    REQUIRE(q.id == id++);
    REQUIRE(q.arrival_us >= prev);
    REQUIRE(q.deadline_us == q.arrival_us + trace.spec.slo_us);
    prev = q.arrival_us;
  }
}

}  // namespace

TEST_CASE("same seed gives a byte-identical trace", "[tracegen]") {
  const auto spec = bursty_spec(1000, 3000, 4, 5, 42);
  const Trace a = gen_bursty(spec);
  const Trace b = gen_bursty(spec);
  REQUIRE(a.queries.size() == b.queries.size());
  std::ostringstream fa, fb;
  write_trace(a, fa);
  write_trace(b, fb);
  CHECK(fa.str() == fb.str());

  const Trace c = gen_bursty(bursty_spec(1000, 3000, 4, 5, 43));
  std::ostringstream fc;
  write_trace(c, fc);
  CHECK(fa.str() != fc.str());
}

TEST_CASE("pure deterministic stream count", "[tracegen]") {
  const Trace trace = gen_bursty(bursty_spec(1500, 0, 0, 10, 1));
  check_well_formed(trace);
  CHECK(std::llabs(static_cast<long long>(trace.queries.size()) - 15000) <=
        1);
  // equal spacing up to integer-microsecond rounding
  const double ideal = 1e6 / 1500.0;
  for (std::size_t i = 1; i < 100; ++i) {
    const auto gap = static_cast<double>(trace.queries[i].arrival_us -
                                         trace.queries[i - 1].arrival_us);
    CHECK(std::abs(gap - ideal) <= 1.0);
  }
}

TEST_CASE("bursty mean rate matches the configured total", "[tracegen]") {
  // lambda = 7050 = 1500 base + 5550 variant
  const Trace trace = gen_bursty(bursty_spec(1500, 5550, 2, 60, 7));
  check_well_formed(trace);
  const double rate = static_cast<double>(trace.queries.size()) / 60.0;
  CHECK(rate == Catch::Approx(7050.0).epsilon(0.05));
}

TEST_CASE("gamma shape is exactly the reciprocal of cv2", "[tracegen]") {
  std::mt19937_64 rng(1);
  detail::GammaRenewal r2(2.0, rng);
  CHECK(r2.shape() == 0.5);
  detail::GammaRenewal r8(8.0, rng);
  CHECK(r8.shape() == 0.125);
}

TEST_CASE("empirical cv2 of the variant stream converges", "[tracegen]") {
  for (double cv2 : {2.0, 4.0, 8.0}) {
    // variant-only trace, ~100k samples
    const Trace trace = gen_bursty(bursty_spec(0, 5000, cv2, 20, 99));
    CHECK(trace.queries.size() > 90'000);
    const double est = empirical_cv2(trace);
    INFO("cv2 target " << cv2 << " estimate " << est);
    CHECK(est > cv2 * 0.9);
    CHECK(est < cv2 * 1.1);
  }
}

TEST_CASE("cv2 zero variant stream is deterministic, not an error",
          "[tracegen]") {
  const Trace trace = gen_bursty(bursty_spec(0, 2000, 0, 5, 3));
  check_well_formed(trace);
  CHECK(std::llabs(static_cast<long long>(trace.queries.size()) - 10000) <=
        1);
}

TEST_CASE("time varying ramp reaches the target windowed rate",
          "[tracegen]") {
  // lambda(2s) = 2500 + 250*2 = 3000 q/s; average the [1.5s, 2.5s] window
  // over 20 seeds.
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TraceSpec spec;
    spec.kind = TraceKind::TimeVarying;
    spec.start_rate = 2500;
    spec.end_rate = 7400;
    spec.acceleration = 250;
    spec.cv2 = 4;
    spec.duration_s = 4;
    spec.seed = seed;
    const Trace trace = gen_time_varying(spec);
    check_well_formed(trace);
    total += static_cast<double>(count_in_window(trace, 1.5, 2.5));
  }
  CHECK(total / 20.0 == Catch::Approx(3000.0).epsilon(0.10));
}

TEST_CASE("huge acceleration is a step change at zero", "[tracegen]") {
  TraceSpec spec;
  spec.kind = TraceKind::TimeVarying;
  spec.start_rate = 500;
  spec.end_rate = 4000;
  spec.acceleration = 1e18;  // capped internally
  spec.cv2 = 2;
  spec.duration_s = 2;
  spec.seed = 5;
  const Trace trace = gen_time_varying(spec);
  const double early =
      static_cast<double>(count_in_window(trace, 0.25, 0.75)) / 0.5;
  CHECK(early == Catch::Approx(4000.0).epsilon(0.15));
}

TEST_CASE("time varying requires a sane ramp", "[tracegen]") {
  TraceSpec spec;
  spec.kind = TraceKind::TimeVarying;
  spec.start_rate = 2000;
  spec.end_rate = 1000;  // end below start
  spec.acceleration = 100;
  spec.duration_s = 1;
  CHECK_THROWS_AS(gen_time_varying(spec), std::invalid_argument);
}

TEST_CASE("spikes reach the configured height", "[tracegen]") {
  TraceSpec spec;
  spec.kind = TraceKind::Spikes;
  spec.base_rate = 4000;
  spec.spike_height = 8750;
  spec.spike_period_s = 15;
  spec.cv2 = 2;
  spec.duration_s = 120;
  spec.seed = 13;
  const Trace trace = gen_spikes(spec);
  check_well_formed(trace);

  // 120 s / 15 s -> 8 spike windows
  std::size_t spike_windows = 0;
  double max_rate = 0.0;
  for (int second = 0; second < 120; ++second) {
    const double rate = static_cast<double>(
        count_in_window(trace, second, second + 1.0));
    max_rate = std::max(max_rate, rate);
    if (rate > 6000.0) ++spike_windows;
  }
  CHECK(spike_windows == 8);
  CHECK(max_rate == Catch::Approx(8750.0).epsilon(0.10));
}

TEST_CASE("spike height equal to base collapses to a uniform trace",
          "[tracegen]") {
  TraceSpec spec;
  spec.kind = TraceKind::Spikes;
  spec.base_rate = 2000;
  spec.spike_height = 2000;
  spec.spike_period_s = 10;
  spec.duration_s = 30;
  spec.seed = 2;
  const Trace trace = gen_spikes(spec);
  for (int second = 0; second < 30; ++second) {
    CHECK(static_cast<double>(
              count_in_window(trace, second, second + 1.0)) ==
          Catch::Approx(2000).epsilon(0.01));
  }
}

TEST_CASE("query count tracks the rate integral within 5 percent",
          "[tracegen]") {
  CHECK(static_cast<double>(
            gen_bursty(bursty_spec(1000, 2000, 4, 60, 4)).queries.size()) ==
        Catch::Approx(3000.0 * 60).epsilon(0.05));
  // ramp 1000 -> 3000 at 100 q/s^2 completes at 20 s: integral over 60 s is
  // 20s * 2000 mean + 40s * 3000.
  TraceSpec tv;
  tv.kind = TraceKind::TimeVarying;
  tv.start_rate = 1000;
  tv.end_rate = 3000;
  tv.acceleration = 100;
  tv.cv2 = 2;
  tv.duration_s = 60;
  tv.seed = 8;
  CHECK(static_cast<double>(gen_time_varying(tv).queries.size()) ==
        Catch::Approx(20 * 2000 + 40 * 3000).epsilon(0.05));
  // spikes: 60 s of base 1000 plus 6 spike seconds adding 2000 each
  TraceSpec sp;
  sp.kind = TraceKind::Spikes;
  sp.base_rate = 1000;
  sp.spike_height = 3000;
  sp.spike_period_s = 10;
  sp.cv2 = 2;
  sp.duration_s = 60;
  sp.seed = 9;
  CHECK(static_cast<double>(gen_spikes(sp).queries.size()) ==
        Catch::Approx(60 * 1000 + 6 * 2000).epsilon(0.05));
}

TEST_CASE("trace files round trip", "[tracegen]") {
  const Trace trace = gen_bursty(bursty_spec(500, 1500, 2, 3, 77));
  std::ostringstream out;
  write_trace(trace, out);
  std::istringstream in(out.str());
  const Trace loaded = read_trace(in);
  REQUIRE(loaded.queries.size() == trace.queries.size());
  for (std::size_t i = 0; i < trace.queries.size(); ++i) {
    CHECK(loaded.queries[i].id == trace.queries[i].id);
    CHECK(loaded.queries[i].arrival_us == trace.queries[i].arrival_us);
    CHECK(loaded.queries[i].deadline_us == trace.queries[i].deadline_us);
  }
  CHECK(loaded.spec.kind == TraceKind::Bursty);
  CHECK(loaded.spec.variant_rate == 1500.0);
  CHECK(loaded.spec.seed == 77);
}

TEST_CASE("trace spec validation", "[tracegen]") {
  TraceSpec spec;
  spec.kind = TraceKind::Bursty;
  spec.duration_s = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.duration_s = 1;
  spec.base_rate = -1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
