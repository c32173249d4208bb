#pragma once

// Scheduling policies: map (slack, queue depth, catalog) to a control
// decision (batch size, subnet). All policies are pure functions and only
// ever return decisions whose predicted latency is strictly below the
// slack they were given.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "servesim/profile.hpp"

namespace servesim {

enum class PolicyType { SlackFit, MaxBatch, MaxAcc, Fixed, MinAcc };

struct PolicyKind {
  PolicyType type = PolicyType::SlackFit;
  std::string fixed_id;  // only for Fixed

  static PolicyKind slackfit() { return {PolicyType::SlackFit, {}}; }
  static PolicyKind maxbatch() { return {PolicyType::MaxBatch, {}}; }
  static PolicyKind maxacc() { return {PolicyType::MaxAcc, {}}; }
  static PolicyKind minacc() { return {PolicyType::MinAcc, {}}; }
  static PolicyKind fixed(std::string id) {
    return {PolicyType::Fixed, std::move(id)};
  }
};

/// Parses `slackfit|maxbatch|maxacc|fixed:<id>|minacc`.
inline PolicyKind policy_from_string(const std::string& s) {
  if (s == "slackfit") return PolicyKind::slackfit();
  if (s == "maxbatch") return PolicyKind::maxbatch();
  if (s == "maxacc") return PolicyKind::maxacc();
  if (s == "minacc") return PolicyKind::minacc();
  if (s.rfind("fixed:", 0) == 0 && s.size() > 6) {
    return PolicyKind::fixed(s.substr(6));
  }
  throw std::invalid_argument(
      "unknown policy '" + s +
      "' (expected slackfit|maxbatch|maxacc|fixed:<id>|minacc)");
}

inline std::string to_string(const PolicyKind& kind) {
  switch (kind.type) {
    case PolicyType::SlackFit: return "slackfit";
    case PolicyType::MaxBatch: return "maxbatch";
    case PolicyType::MaxAcc: return "maxacc";
    case PolicyType::MinAcc: return "minacc";
    case PolicyType::Fixed: return "fixed:" + kind.fixed_id;
  }
  return "?";
}

struct Decision {
  std::uint32_t batch_size = 0;
  std::size_t subnet_index = 0;
  Micros predicted_latency_us = 0;
};

/// Comparison counter for the complexity check of the binary-search
/// policies.
struct DecideStats {
  std::size_t comparisons = 0;
};

namespace policy_detail {

inline bool lat_less(Micros lhs, SlackMicros slack, DecideStats* stats) {
  if (stats) ++stats->comparisons;
  return static_cast<SlackMicros>(lhs) < slack;
}

/// Largest batch index whose latency is < slack for a fixed subnet, by
/// binary search over the (P1-monotone) profile. Returns npos if none.
inline std::size_t largest_feasible_batch(const SubnetRecord& rec,
                                          SlackMicros slack,
                                          DecideStats* stats) {
  const auto& profile = rec.profile;
  std::size_t lo = 0, hi = profile.size();  // search in [lo, hi)
  if (!lat_less(profile.front().latency_us, slack, stats)) {
    return static_cast<std::size_t>(-1);
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (lat_less(profile[mid].latency_us, slack, stats)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/// Largest accuracy rank whose latency at a fixed batch index is < slack,
/// by binary search down the (P2-monotone) accuracy order.
inline std::size_t largest_feasible_subnet(const Catalog& catalog,
                                           std::size_t batch_index,
                                           SlackMicros slack,
                                           DecideStats* stats) {
  std::size_t lo = 0, hi = catalog.size();
  if (!lat_less(catalog.at(0).profile[batch_index].latency_us, slack,
                stats)) {
    return static_cast<std::size_t>(-1);
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (lat_less(catalog.at(mid).profile[batch_index].latency_us, slack,
                 stats)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

inline std::optional<Decision> decide_slackfit(SlackMicros slack,
                                               const BucketTable& buckets,
                                               const Catalog& catalog) {
  if (buckets.bucket_count == 0 || catalog.empty()) return std::nullopt;
  if (slack <= static_cast<SlackMicros>(buckets.min_latency)) {
    return std::nullopt;  // below the feasible latency range
  }
  // Highest bucket whose upper bound fits the slack, falling to the next
  // lower non-empty bucket when it is empty. When the slack lands inside
  // the lowest bucket no full bucket exists; that bucket is then used for
  // its entries strictly below the slack.
  std::size_t start = 0;
  if (buckets.span() > 0) {
    const auto rel = static_cast<std::uint64_t>(
        slack - static_cast<SlackMicros>(buckets.min_latency));
    const auto q = static_cast<std::size_t>(
        static_cast<unsigned __int128>(rel) * buckets.bucket_count /
        buckets.span());
    start = q > 0 ? std::min(q - 1, buckets.bucket_count - 1) : 0;
  }
  for (std::size_t b = start + 1; b-- > 0;) {
    // The strict filter only bites in the closed-top last bucket and in
    // the partial lowest-bucket case.
    for (const auto& entry : buckets.buckets[b].entries) {
      if (static_cast<SlackMicros>(entry.latency_us) < slack) {
        return Decision{entry.batch, entry.subnet_index, entry.latency_us};
      }
    }
  }
  return std::nullopt;
}

inline std::optional<Decision> decide_maxbatch(SlackMicros slack,
                                               const Catalog& catalog,
                                               DecideStats* stats) {
  const auto b = largest_feasible_batch(catalog.at(0), slack, stats);
  if (b == static_cast<std::size_t>(-1)) return std::nullopt;
  const auto s = largest_feasible_subnet(catalog, b, slack, stats);
  if (s == static_cast<std::size_t>(-1)) return std::nullopt;
  const auto& entry = catalog.at(s).profile[b];
  return Decision{entry.batch, s, entry.latency_us};
}

inline std::optional<Decision> decide_maxacc(SlackMicros slack,
                                             const Catalog& catalog,
                                             DecideStats* stats) {
  const auto s = largest_feasible_subnet(catalog, 0, slack, stats);
  if (s == static_cast<std::size_t>(-1)) return std::nullopt;
  const auto b = largest_feasible_batch(catalog.at(s), slack, stats);
  if (b == static_cast<std::size_t>(-1)) return std::nullopt;
  const auto& entry = catalog.at(s).profile[b];
  return Decision{entry.batch, s, entry.latency_us};
}

inline std::optional<Decision> decide_fixed(SlackMicros slack,
                                            const Catalog& catalog,
                                            std::size_t subnet_index,
                                            DecideStats* stats) {
  const auto b =
      largest_feasible_batch(catalog.at(subnet_index), slack, stats);
  if (b == static_cast<std::size_t>(-1)) return std::nullopt;
  const auto& entry = catalog.at(subnet_index).profile[b];
  return Decision{entry.batch, subnet_index, entry.latency_us};
}

}  // namespace policy_detail

/// Control decision for the given slack, or Drop (nullopt) when no choice
/// fits. The catalog must be pareto-sorted (MaxBatch/MaxAcc binary-search
/// P1/P2 monotonicity; SlackFit reads the bucket table). The caller clamps
/// the batch to the queue depth afterwards.
inline std::optional<Decision> decide(const PolicyKind& kind,
                                      SlackMicros slack_us,
                                      std::size_t queue_depth,
                                      const BucketTable& buckets,
                                      const Catalog& catalog,
                                      DecideStats* stats = nullptr) {
  (void)queue_depth;  // decisions are depth-independent; see clamp_decision
  if (catalog.empty()) return std::nullopt;
  switch (kind.type) {
    case PolicyType::SlackFit:
      return policy_detail::decide_slackfit(slack_us, buckets, catalog);
    case PolicyType::MaxBatch:
      return policy_detail::decide_maxbatch(slack_us, catalog, stats);
    case PolicyType::MaxAcc:
      return policy_detail::decide_maxacc(slack_us, catalog, stats);
    case PolicyType::MinAcc:
      return policy_detail::decide_fixed(slack_us, catalog, 0, stats);
    case PolicyType::Fixed:
      return policy_detail::decide_fixed(slack_us, catalog,
                                         catalog.index_of(kind.fixed_id),
                                         stats);
  }
  return std::nullopt;
}

/// What actually gets dispatched after clamping to the queue depth: the
/// latency is re-looked-up at the smallest profiled batch >= the actual
/// count, which never underestimates.
struct ClampedDispatch {
  std::uint32_t actual_count = 0;
  std::uint32_t profiled_batch = 0;
  Micros latency_us = 0;
};

inline ClampedDispatch clamp_decision(const Decision& decision,
                                      std::size_t queue_depth,
                                      const Catalog& catalog) {
  const auto count = static_cast<std::uint32_t>(
      std::min<std::size_t>(decision.batch_size, queue_depth));
  const auto entry = catalog.at(decision.subnet_index).ceil_entry(count);
  return ClampedDispatch{count, entry.batch, entry.latency_us};
}

/// Smallest latency any decision of this policy can realize; queries whose
/// slack falls below it can never be served and must be dropped.
inline Micros min_feasible_latency(const PolicyKind& kind,
                                   const Catalog& catalog) {
  if (catalog.empty()) return 0;
  switch (kind.type) {
    case PolicyType::Fixed:
      return catalog.at(catalog.index_of(kind.fixed_id)).min_latency();
    case PolicyType::MinAcc:
      return catalog.at(0).min_latency();
    default:
      return catalog.min_latency();
  }
}

}  // namespace servesim
