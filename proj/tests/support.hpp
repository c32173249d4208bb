#pragma once

// Shared test fixtures: random catalog/instance generators and small
// independent oracles. Everything here is deliberately written against the
// type definitions only, not against the implementations under test.

#include <algorithm>
#include <random>
#include <vector>

#include "servesim/oracle.hpp"
#include "servesim/profile.hpp"
#include "servesim/tracegen.hpp"

namespace testsupport {

using namespace servesim;

inline const std::vector<std::uint32_t>& standard_batches() {
  static const std::vector<std::uint32_t> b{1, 2, 4, 8, 16, 32, 64};
  return b;
}

/// Random catalog satisfying P1 and P2: each accuracy rank sits strictly
/// above the previous one at every batch size.
inline Catalog random_p2_catalog(std::mt19937_64& rng,
                                 std::size_t subnet_count,
                                 const std::vector<std::uint32_t>& batches =
                                     standard_batches()) {
  Catalog catalog;
  catalog.max_batch = batches.back();
  catalog.pareto = true;
  std::uniform_int_distribution<Micros> base_gap(200, 3000);
  std::uniform_int_distribution<Micros> step(50, 2500);
  std::vector<double> accuracies;
  std::uniform_real_distribution<double> acc(55.0, 95.0);
  while (accuracies.size() < subnet_count) {
    const double a = acc(rng);
    if (std::find(accuracies.begin(), accuracies.end(), a) ==
        accuracies.end()) {
      accuracies.push_back(a);
    }
  }
  std::sort(accuracies.begin(), accuracies.end());
  std::vector<Micros> prev(batches.size(), 0);
  Micros prev_base = 1000;
  for (std::size_t s = 0; s < subnet_count; ++s) {
    SubnetRecord rec;
    rec.id = "r" + std::to_string(s);
    rec.accuracy = accuracies[s];
    Micros lat = prev_base + base_gap(rng);
    prev_base = lat;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      lat = std::max(lat + step(rng), prev[b] + 1);
      rec.profile.push_back({batches[b], lat});
      prev[b] = lat;
    }
    catalog.subnets.push_back(std::move(rec));
  }
  catalog.validate();
  return catalog;
}

/// Mixed catalog: a P2 pareto core plus dominated subnets that copy some
/// pareto subnet's latency profile exactly at a lower accuracy.
inline Catalog random_mixed_catalog(std::mt19937_64& rng,
                                    std::size_t pareto_count,
                                    std::size_t dominated_count) {
  Catalog catalog = random_p2_catalog(rng, pareto_count);
  catalog.pareto = false;
  for (std::size_t d = 0; d < dominated_count; ++d) {
    const auto& donor = catalog.subnets[rng() % pareto_count];
    SubnetRecord rec = donor;
    rec.id = "x" + std::to_string(d);
    rec.accuracy = donor.accuracy -
                   std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    if (rec.accuracy < 0.0) rec.accuracy = 0.0;
    catalog.subnets.push_back(std::move(rec));
  }
  catalog.validate();
  return catalog;
}

/// Brute-force dominance scan used as the pareto_filter oracle.
inline bool dominated_at_batch1(const Catalog& catalog, std::size_t i) {
  const auto& x = catalog.subnets[i];
  for (std::size_t j = 0; j < catalog.subnets.size(); ++j) {
    if (j == i) continue;
    const auto& y = catalog.subnets[j];
    const bool weakly = y.accuracy >= x.accuracy &&
                        y.min_latency() <= x.min_latency();
    const bool strictly = y.accuracy > x.accuracy ||
                          y.min_latency() < x.min_latency();
    if (weakly && strictly) return true;
    if (weakly && !strictly && y.id < x.id) return true;  // exact duplicate
  }
  return false;
}

/// Random tiny ILP instance within the solver caps. Instances with five or
/// more queries put every arrival at zero so the restricted batch
/// enumeration stays an upper bound for any EDF policy.
inline IlpInstance random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  IlpInstance inst;
  inst.slot_width_us = 500;
  inst.slot_count = 12;
  inst.batch_sizes = {1, 2, 4};
  const std::size_t n = 1 + rng() % 5;  // 1..5 queries
  const std::size_t subnet_count = 2 + rng() % 2;
  inst.workers = 1 + static_cast<std::uint32_t>(rng() % 2);

  std::uniform_real_distribution<double> acc(60.0, 90.0);
  std::vector<double> accuracies;
  for (std::size_t s = 0; s < subnet_count; ++s) {
    accuracies.push_back(acc(rng));
  }
  std::sort(accuracies.begin(), accuracies.end());
  // Latency grid in whole slots, strictly increasing along both batch size
  // (P1) and accuracy rank (P2), capped to the slot horizon.
  std::vector<std::vector<Micros>> slots(
      subnet_count, std::vector<Micros>(inst.batch_sizes.size(), 0));
  for (std::size_t s = 0; s < subnet_count; ++s) {
    for (std::size_t b = 0; b < inst.batch_sizes.size(); ++b) {
      Micros lo = 1;
      if (s > 0) lo = std::max(lo, slots[s - 1][b] + 1);
      if (b > 0) lo = std::max(lo, slots[s][b - 1] + 1);
      slots[s][b] = lo + rng() % 2;
    }
  }
  for (std::size_t s = 0; s < subnet_count; ++s) {
    SubnetRecord rec;
    rec.id = "o" + std::to_string(s);
    rec.accuracy = accuracies[s];
    for (std::size_t b = 0; b < inst.batch_sizes.size(); ++b) {
      rec.profile.push_back(
          {inst.batch_sizes[b], slots[s][b] * inst.slot_width_us});
    }
    inst.subnets.push_back(std::move(rec));
  }
  for (std::size_t q = 0; q < n; ++q) {
    const Micros arrival_slots = n >= 5 ? 0 : rng() % 4;
    const Micros deadline_slots =
        std::min<Micros>(arrival_slots + 2 + rng() % 8, inst.slot_count);
    inst.queries.push_back({arrival_slots * inst.slot_width_us,
                            deadline_slots * inst.slot_width_us});
  }
  inst.validate();
  return inst;
}

}  // namespace testsupport
