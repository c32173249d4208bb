#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "servesim/oracle.hpp"
#include "support.hpp"

using namespace servesim;

namespace {

SubnetRecord subnet(std::string id, double acc,
                    std::vector<std::pair<std::uint32_t, Micros>> profile) {
  SubnetRecord rec;
  rec.id = std::move(id);
  rec.accuracy = acc;
  for (auto [b, l] : profile) rec.profile.push_back({b, l});
  return rec;
}

/// Four queries against a tight shared deadline on one worker: the optimum
/// packs everything into the low-accuracy subnet at batch 4.
IlpInstance high_load_instance() {
  IlpInstance inst;
  inst.slot_width_us = 500;
  inst.slot_count = 12;
  inst.workers = 1;
  inst.batch_sizes = {1, 2, 4};
  inst.subnets = {
      subnet("low", 70.0, {{1, 1000}, {2, 2000}, {4, 3000}}),
      subnet("high", 80.0, {{1, 2000}, {2, 4000}, {4, 6000}}),
  };
  for (int i = 0; i < 4; ++i) inst.queries.push_back({0, 3500});
  inst.validate();
  return inst;
}

/// Three queries with loose deadlines: a high-accuracy pair plus a
/// low-accuracy single (160 + 70 = 230) beats the mid-accuracy batch of
/// three (225) and every other grouping.
IlpInstance low_load_instance() {
  IlpInstance inst;
  inst.slot_width_us = 500;
  inst.slot_count = 12;
  inst.workers = 1;
  inst.batch_sizes = {1, 2, 4};
  inst.subnets = {
      subnet("low", 70.0, {{1, 1000}, {2, 2000}, {4, 4000}}),
      subnet("mid", 75.0, {{1, 2500}, {2, 3000}, {4, 5000}}),
      subnet("high", 80.0, {{1, 3500}, {2, 5000}, {4, 8000}}),
  };
  for (int i = 0; i < 3; ++i) inst.queries.push_back({0, 6000});
  inst.validate();
  return inst;
}

}  // namespace

TEST_CASE("utility follows the strict-deadline rule", "[oracle]") {
  const SubnetRecord rec = subnet("u", 0.8, {{4, 10}});
  CHECK(utility(rec, 4, 12, 0) == Catch::Approx(3.2));
  CHECK(utility(rec, 4, 10, 0) == 0.0);  // l == d: strict inequality
  CHECK(utility(rec, 4, 13, 2) == Catch::Approx(3.2));
  CHECK(utility(rec, 4, 12, 2) == 0.0);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const double acc = std::uniform_real_distribution<double>(0, 100)(rng);
    const std::uint32_t b = 1u << (rng() % 7);
    const Micros lat = 1 + rng() % 10'000;
    const SubnetRecord r = subnet("x", acc, {{b, lat}});
    const Micros start = rng() % 1'000;
    const Micros d = start + lat + 1 + rng() % 1'000;
    CHECK(utility(r, b, d, start) == Catch::Approx(acc * b));
    CHECK(utility(r, b, start + lat, start) == 0.0);
  }
}

TEST_CASE("solve_exact on the two-query example", "[oracle]") {
  // subnet a (acc 0.7, l(2)=2 slots), subnet b (acc 0.8, l(2)=3 slots),
  // shared 3-slot deadline, one worker: serve both with b, objective 1.6
  IlpInstance inst;
  inst.slot_width_us = 1000;
  inst.slot_count = 12;
  inst.workers = 1;
  inst.batch_sizes = {1, 2};
  inst.subnets = {
      subnet("a", 0.7, {{1, 1000}, {2, 2000}}),
      subnet("b", 0.8, {{1, 2000}, {2, 3000}}),
  };
  inst.queries = {{0, 3000}, {0, 3000}};
  const IlpSchedule schedule = solve_exact(inst);
  CHECK(schedule.objective == Catch::Approx(1.6));
  REQUIRE(schedule.assignments.size() == 1);
  CHECK(schedule.assignments[0].queries.size() == 2);
  CHECK(inst.subnets[schedule.assignments[0].subnet].id == "b");
  std::string why;
  CHECK(check_schedule(inst, schedule, &why));
}

TEST_CASE("solve_exact degenerate instances", "[oracle]") {
  IlpInstance inst;
  inst.subnets = {subnet("a", 0.7, {{1, 1000}, {2, 2000}, {4, 3000}})};
  const IlpSchedule empty = solve_exact(inst);
  CHECK(empty.objective == 0.0);
  CHECK(empty.assignments.empty());

  // one query that cannot be served by any subnet
  inst.queries = {{0, 500}};
  const IlpSchedule infeasible = solve_exact(inst);
  CHECK(infeasible.objective == 0.0);
  CHECK(infeasible.assignments.empty());
}

TEST_CASE("solve_exact rejects oversized instances", "[oracle]") {
  IlpInstance inst;
  inst.subnets = {subnet("a", 0.7, {{1, 1000}, {2, 2000}, {4, 3000}})};
  for (int i = 0; i < 9; ++i) inst.queries.push_back({0, 5000});
  CHECK_THROWS_AS(solve_exact(inst), std::invalid_argument);
}

TEST_CASE("high load favors lower accuracy at a bigger batch", "[oracle]") {
  const IlpInstance inst = high_load_instance();
  const IlpSchedule schedule = solve_exact(inst);
  // low@4 (0+6 slots <= 7) scores 280; the best high-accuracy alternative
  // is high@1 then low@1 for 150.
  CHECK(schedule.objective == Catch::Approx(280.0));
  REQUIRE(schedule.assignments.size() == 1);
  CHECK(schedule.assignments[0].queries.size() == 4);
  CHECK(inst.subnets[schedule.assignments[0].subnet].id == "low");
  std::string why;
  CHECK(check_schedule(inst, schedule, &why));

  // SlackFit makes the same call online
  const auto comparison = policy_vs_oracle(inst, PolicyKind::slackfit());
  CHECK(comparison.policy_feasible);
  CHECK(comparison.policy_objective == Catch::Approx(280.0));
}

TEST_CASE("low load favors the high-accuracy split", "[oracle]") {
  const IlpInstance inst = low_load_instance();
  const IlpSchedule schedule = solve_exact(inst);
  // {2@high} + {1@low} = 230 beats {3@mid} = 225 and every other split
  CHECK(schedule.objective == Catch::Approx(230.0));
  REQUIRE(schedule.assignments.size() == 2);
  std::map<std::string, std::size_t> sizes;
  for (const auto& a : schedule.assignments) {
    sizes[inst.subnets[a.subnet].id] = a.queries.size();
  }
  REQUIRE(sizes.count("high"));
  REQUIRE(sizes.count("low"));
  CHECK(sizes["high"] == 2);
  CHECK(sizes["low"] == 1);
  std::string why;
  CHECK(check_schedule(inst, schedule, &why));
}

TEST_CASE("the checker rejects broken schedules", "[oracle]") {
  const IlpInstance inst = high_load_instance();
  IlpSchedule schedule = solve_exact(inst);
  std::string why;

  IlpSchedule dup = schedule;
  dup.assignments.push_back(dup.assignments[0]);
  CHECK(!check_schedule(inst, dup, &why));
  CHECK(why.find("1a") != std::string::npos);

  IlpSchedule late = schedule;
  late.assignments[0].start_slot = 5;  // 5 + 6 slots > 3.5 ms deadline
  CHECK(!check_schedule(inst, late, &why));

  IlpSchedule wrong = schedule;
  wrong.objective += 1.0;
  CHECK(!check_schedule(inst, wrong, &why));
  CHECK(why.find("objective") != std::string::npos);
}

TEST_CASE("lemma holds for a hand-built pareto pair", "[oracle]") {
  // pareto (acc 0.80, l=10us) vs dominated (acc 0.75, l=10us)
  Catalog catalog;
  catalog.max_batch = 2;
  catalog.subnets = {subnet("p", 0.80, {{1, 5}, {2, 10}}),
                     subnet("q", 0.75, {{1, 5}, {2, 10}})};
  catalog.validate();
  const auto& p = catalog.at(0);
  const auto& q = catalog.at(1);
  CHECK(utility(p, 2, 12, 0) == Catch::Approx(1.6));
  CHECK(utility(q, 2, 12, 0) == Catch::Approx(1.5));
  CHECK(utility(p, 2, 12, 0) > utility(q, 2, 12, 0));
  // both infeasible: the non-strict branch
  CHECK(utility(p, 2, 5, 0) == 0.0);
  CHECK(utility(q, 2, 5, 0) == 0.0);

  const Lemma1Result res = check_lemma1(catalog, 200, 0);
  CHECK(res.pass);
  CHECK(res.pairs_checked > 0);
}

TEST_CASE("lemma survives 1000 random trials", "[oracle]") {
  std::mt19937_64 rng(29);
  const Catalog catalog = testsupport::random_mixed_catalog(rng, 4, 3);
  const Lemma1Result res = check_lemma1(catalog, 1000, 0, 4242);
  INFO(res.counterexample);
  CHECK(res.pass);
  CHECK(res.pairs_checked > 100);
}

TEST_CASE("restricting to the pareto subset never lowers the optimum",
          "[oracle]") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    IlpInstance inst = testsupport::random_instance(1000 + trial);
    if (inst.subnets.size() < 2) continue;
    // shadow a pareto subnet with an identical-latency, lower-accuracy copy
    IlpInstance full = inst;
    SubnetRecord shadow = inst.subnets[rng() % inst.subnets.size()];
    shadow.id = "shadow";
    shadow.accuracy -= 1.0;
    full.subnets.back() = shadow;  // keep the subnet cap
    full.validate();

    IlpInstance restricted = full;
    Catalog catalog;
    catalog.subnets = full.subnets;
    catalog.max_batch = full.max_batch();
    const Catalog pareto = pareto_filter(catalog);
    restricted.subnets.clear();
    for (const auto& s : full.subnets) {
      if (pareto.has(s.id)) restricted.subnets.push_back(s);
    }
    REQUIRE(!restricted.subnets.empty());
    CHECK(solve_exact(restricted).objective ==
          Catch::Approx(solve_exact(full).objective));
  }
}

TEST_CASE("policies never beat the oracle", "[oracle]") {
  const std::vector<PolicyKind> kinds = {
      PolicyKind::slackfit(), PolicyKind::maxbatch(), PolicyKind::maxacc(),
      PolicyKind::minacc()};
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const IlpInstance inst = testsupport::random_instance(seed);
    const IlpSchedule oracle = solve_exact(inst);
    std::string why;
    REQUIRE(check_schedule(inst, oracle, &why));
    for (const auto& kind : kinds) {
      const auto result = policy_vs_oracle(inst, kind);
      INFO("seed " << seed << " policy " << to_string(kind));
      CHECK(result.policy_feasible);
      CHECK(result.policy_objective <= result.oracle_objective + 1e-9);
    }
  }
}

TEST_CASE("single ample-slack query: slackfit matches the oracle",
          "[oracle]") {
  IlpInstance inst;
  inst.slot_width_us = 500;
  inst.slot_count = 12;
  inst.workers = 1;
  inst.batch_sizes = {1, 2, 4};
  inst.subnets = {
      subnet("a", 70.0, {{1, 500}, {2, 1000}, {4, 1500}}),
      subnet("b", 80.0, {{1, 1000}, {2, 2000}, {4, 3000}}),
  };
  inst.queries = {{0, 6000}};
  const auto result = policy_vs_oracle(inst, PolicyKind::slackfit());
  CHECK(result.oracle_objective == Catch::Approx(80.0));
  CHECK(result.policy_objective == Catch::Approx(80.0));
}

TEST_CASE("mean policy-to-oracle ratio is reported", "[oracle]") {
  double ratio_sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const IlpInstance inst = testsupport::random_instance(seed);
    const auto result = policy_vs_oracle(inst, PolicyKind::slackfit());
    if (result.oracle_objective > 0) {
      ratio_sum += result.policy_objective / result.oracle_objective;
      ++n;
    }
  }
  REQUIRE(n > 0);
  WARN("slackfit/oracle mean objective ratio over " << n << " instances: "
                                                    << ratio_sum /
                                                           static_cast<double>(
                                                               n));
  CHECK(ratio_sum / static_cast<double>(n) > 0.0);
}

TEST_CASE("instance json round trip", "[oracle]") {
  const IlpInstance inst = high_load_instance();
  const auto j = instance_to_json(inst);
  const IlpInstance loaded = instance_from_json(j);
  CHECK(loaded.queries.size() == inst.queries.size());
  CHECK(loaded.workers == inst.workers);
  CHECK(loaded.subnets.size() == inst.subnets.size());
  CHECK(loaded.subnets[0].id == "low");
  CHECK(solve_exact(loaded).objective ==
        Catch::Approx(solve_exact(inst).objective));
}
