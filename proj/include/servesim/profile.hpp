#pragma once

// Subnet catalog: latency/accuracy records, pareto filtering, latency
// buckets and the supernet memory model.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace servesim {

using Micros = std::uint64_t;
using SlackMicros = std::int64_t;  // slack can be negative

/// Architecture control tuple. Lists are per-stage/per-layer; the
/// scheduler never interprets them, they only feed the memory model.
struct SubnetConfig {
  std::vector<bool> depth_flags{true};
  std::vector<double> expand_ratios{1.0};
  std::vector<double> width_multipliers{1.0};

  double mean_width_multiplier() const {
    if (width_multipliers.empty()) return 1.0;
    double s = 0.0;
    for (double w : width_multipliers) s += w;
    return s / static_cast<double>(width_multipliers.size());
  }

  void validate() const {
    if (depth_flags.empty() || expand_ratios.empty() ||
        width_multipliers.empty()) {
      throw std::invalid_argument("subnet config lists must be non-empty");
    }
    for (double e : expand_ratios) {
      if (!(e > 0.0)) throw std::invalid_argument("expand ratio must be > 0");
    }
    for (double w : width_multipliers) {
      if (!(w > 0.0) || w > 1.0) {
        throw std::invalid_argument("width multiplier must be in (0,1]");
      }
    }
  }
};

struct BatchLatency {
  std::uint32_t batch = 0;
  Micros latency_us = 0;
};

/// One subnet: accuracy plus a latency profile over batch sizes.
/// The profile must be strictly increasing in batch size (P1).
struct SubnetRecord {
  std::string id;
  SubnetConfig config;
  double accuracy = 0.0;                  // percentage in [0, 100]
  std::vector<BatchLatency> profile;      // sorted by batch
  std::optional<double> gflops;

  std::uint32_t max_batch() const { return profile.back().batch; }
  Micros min_latency() const { return profile.front().latency_us; }
  Micros max_latency() const { return profile.back().latency_us; }

  /// Latency at an exactly profiled batch size.
  Micros latency_at(std::uint32_t batch) const {
    for (const auto& bl : profile) {
      if (bl.batch == batch) return bl.latency_us;
    }
    throw std::out_of_range("batch size " + std::to_string(batch) +
                            " not profiled for subnet " + id);
  }

  bool has_batch(std::uint32_t batch) const {
    for (const auto& bl : profile) {
      if (bl.batch == batch) return true;
    }
    return false;
  }

  /// Smallest profiled batch >= count. Conservative lookup for dispatch
  /// counts that fall between profiled sizes.
  BatchLatency ceil_entry(std::uint32_t count) const {
    for (const auto& bl : profile) {
      if (bl.batch >= count) return bl;
    }
    throw std::out_of_range("count " + std::to_string(count) +
                            " exceeds max profiled batch of subnet " + id);
  }

  void validate() const {
    if (id.empty()) throw std::invalid_argument("subnet id must be non-empty");
    if (profile.empty()) {
      throw std::invalid_argument("subnet " + id + " has no latency profile");
    }
    if (accuracy < 0.0 || accuracy > 100.0) {
      throw std::invalid_argument("subnet " + id +
                                  " accuracy must be in [0,100]");
    }
    config.validate();
    for (std::size_t i = 0; i < profile.size(); ++i) {
      if (profile[i].latency_us == 0) {
        throw std::invalid_argument("subnet " + id +
                                    " has a zero latency entry");
      }
      if (i > 0) {
        if (profile[i].batch <= profile[i - 1].batch) {
          throw std::invalid_argument("subnet " + id +
                                      " batch sizes must increase");
        }
        if (profile[i].latency_us <= profile[i - 1].latency_us) {
          // P1 violation: name the subnet and the offending batch sizes.
          throw std::invalid_argument(
              "subnet " + id + " violates latency monotonicity: l(" +
              std::to_string(profile[i].batch) +
              ") <= l(" + std::to_string(profile[i - 1].batch) + ")");
        }
      }
    }
  }
};

/// Immutable after construction; share by const reference across threads.
struct Catalog {
  std::vector<SubnetRecord> subnets;
  std::uint32_t max_batch = 0;
  bool pareto = false;  // set by pareto_filter: sorted by accuracy, P2 holds

  bool empty() const { return subnets.empty(); }
  std::size_t size() const { return subnets.size(); }

  const SubnetRecord& at(std::size_t i) const { return subnets.at(i); }

  std::size_t index_of(const std::string& id) const {
    for (std::size_t i = 0; i < subnets.size(); ++i) {
      if (subnets[i].id == id) return i;
    }
    throw std::out_of_range("unknown subnet id: " + id);
  }

  bool has(const std::string& id) const {
    for (const auto& s : subnets) {
      if (s.id == id) return true;
    }
    return false;
  }

  /// Batch grid shared by all subnets. All records must be profiled at
  /// identical batch sizes; validate() enforces this.
  const std::vector<BatchLatency>& profile_of(std::size_t i) const {
    return subnets[i].profile;
  }

  std::vector<std::uint32_t> batch_sizes() const {
    std::vector<std::uint32_t> out;
    if (subnets.empty()) return out;
    out.reserve(subnets.front().profile.size());
    for (const auto& bl : subnets.front().profile) out.push_back(bl.batch);
    return out;
  }

  Micros min_latency() const {
    Micros m = std::numeric_limits<Micros>::max();
    for (const auto& s : subnets) m = std::min(m, s.min_latency());
    return m;
  }

  Micros max_latency() const {
    Micros m = 0;
    for (const auto& s : subnets) m = std::max(m, s.max_latency());
    return m;
  }

  void validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& s : subnets) {
      s.validate();
      if (!ids.insert(s.id).second) {
        throw std::invalid_argument("duplicate subnet id: " + s.id);
      }
      if (s.max_batch() > max_batch) {
        throw std::invalid_argument("subnet " + s.id +
                                    " exceeds catalog max_batch");
      }
      if (s.profile.size() != subnets.front().profile.size()) {
        throw std::invalid_argument(
            "subnets must share one batch grid (subnet " + s.id + " differs)");
      }
      for (std::size_t i = 0; i < s.profile.size(); ++i) {
        if (s.profile[i].batch != subnets.front().profile[i].batch) {
          throw std::invalid_argument(
              "subnets must share one batch grid (subnet " + s.id +
              " differs)");
        }
      }
    }
  }
};

/// P2: within a pareto catalog, latency strictly increases with accuracy
/// rank at every common batch size.
inline bool holds_p2(const Catalog& catalog, std::string* why = nullptr) {
  for (std::size_t i = 1; i < catalog.subnets.size(); ++i) {
    const auto& lo = catalog.subnets[i - 1];
    const auto& hi = catalog.subnets[i];
    for (std::size_t b = 0; b < lo.profile.size(); ++b) {
      if (hi.profile[b].latency_us <= lo.profile[b].latency_us) {
        if (why) {
          *why = "P2 violated at batch " +
                 std::to_string(lo.profile[b].batch) + " between " + lo.id +
                 " and " + hi.id;
        }
        return false;
      }
    }
  }
  return true;
}

/// Keeps exactly the subnets not dominated at batch 1 (another subnet with
/// >= accuracy and <= latency, one strict; exact duplicates keep the
/// lexicographically smallest id). Output is sorted by accuracy.
inline Catalog pareto_filter(const Catalog& catalog) {
  Catalog out;
  out.max_batch = catalog.max_batch;
  out.pareto = true;
  for (const auto& x : catalog.subnets) {
    bool dominated = false;
    for (const auto& y : catalog.subnets) {
      if (&x == &y) continue;
      const Micros lx = x.min_latency();
      const Micros ly = y.min_latency();
      if (y.accuracy >= x.accuracy && ly <= lx) {
        if (y.accuracy > x.accuracy || ly < lx ||
            (y.accuracy == x.accuracy && ly == lx && y.id < x.id)) {
          dominated = true;
          break;
        }
      }
    }
    if (!dominated) out.subnets.push_back(x);
  }
  std::sort(out.subnets.begin(), out.subnets.end(),
            [](const SubnetRecord& a, const SubnetRecord& b) {
              if (a.accuracy != b.accuracy) return a.accuracy < b.accuracy;
              return a.id < b.id;
            });
  return out;
}

// ---------------------------------------------------------------------------
// Latency buckets

struct BucketEntry {
  std::uint32_t batch = 0;
  std::size_t subnet_index = 0;  // into the catalog the table was built from
  Micros latency_us = 0;
};

struct Bucket {
  std::vector<BucketEntry> entries;  // sorted by (batch desc, accuracy desc)
  std::optional<std::size_t> best;   // index into entries: max batch
};

/// Evenly sized latency buckets over [min profiled latency, max]. Bucket
/// membership uses exact integer arithmetic so every (B, subnet) pair lands
/// in exactly one bucket; the last bucket is closed on top.
struct BucketTable {
  Micros min_latency = 0;
  Micros max_latency = 0;
  std::size_t bucket_count = 0;
  std::vector<Bucket> buckets;

  Micros span() const { return max_latency - min_latency; }
  double width() const {
    return static_cast<double>(span()) / static_cast<double>(bucket_count);
  }
  double lo(std::size_t i) const {
    return static_cast<double>(min_latency) +
           static_cast<double>(span()) * static_cast<double>(i) /
               static_cast<double>(bucket_count);
  }
  double hi(std::size_t i) const { return lo(i + 1); }

  std::size_t index_for_latency(Micros l) const {
    if (span() == 0) return 0;
    const auto idx = static_cast<std::size_t>(
        static_cast<unsigned __int128>(l - min_latency) * bucket_count /
        span());
    return std::min(idx, bucket_count - 1);
  }

  std::size_t total_entries() const {
    std::size_t n = 0;
    for (const auto& b : buckets) n += b.entries.size();
    return n;
  }
};

inline BucketTable build_buckets(const Catalog& catalog,
                                 std::size_t bucket_count) {
  if (catalog.empty()) {
    throw std::invalid_argument("cannot build buckets from an empty catalog");
  }
  if (!catalog.pareto) {
    throw std::invalid_argument("bucket table requires a pareto catalog");
  }
  if (bucket_count == 0) {
    throw std::invalid_argument("bucket_count must be positive");
  }
  BucketTable table;
  table.min_latency = catalog.min_latency();
  table.max_latency = catalog.max_latency();
  table.bucket_count = bucket_count;
  table.buckets.resize(bucket_count);
  for (std::size_t s = 0; s < catalog.subnets.size(); ++s) {
    for (const auto& bl : catalog.subnets[s].profile) {
      const std::size_t idx = table.index_for_latency(bl.latency_us);
      table.buckets[idx].entries.push_back({bl.batch, s, bl.latency_us});
    }
  }
  for (auto& bucket : table.buckets) {
    // Max batch first; accuracy rank (catalog order) breaks ties.
    std::sort(bucket.entries.begin(), bucket.entries.end(),
              [](const BucketEntry& a, const BucketEntry& b) {
                if (a.batch != b.batch) return a.batch > b.batch;
                return a.subnet_index > b.subnet_index;
              });
    if (!bucket.entries.empty()) bucket.best = 0;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Profile CSV: header `subnet_id,accuracy,gflops,batch,latency_us`,
// one row per (subnet, batch).

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string& s, std::size_t line_no,
                           const char* what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("profile csv line " + std::to_string(line_no) +
                             ": bad " + what + " '" + s + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& s, std::size_t line_no,
                               const char* what) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("profile csv line " + std::to_string(line_no) +
                             ": bad " + what + " '" + s + "'");
  }
}

}  // namespace detail

inline Catalog parse_catalog_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error("empty profile csv");
  ++line_no;
  if (detail::split_csv_line(line) !=
      std::vector<std::string>{"subnet_id", "accuracy", "gflops", "batch",
                               "latency_us"}) {
    throw std::runtime_error(
        "profile csv line 1: expected header "
        "subnet_id,accuracy,gflops,batch,latency_us");
  }
  Catalog catalog;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 5) {
      throw std::runtime_error("profile csv line " + std::to_string(line_no) +
                               ": expected 5 fields, got " +
                               std::to_string(f.size()));
    }
    const std::string& id = f[0];
    const double acc = detail::parse_double(f[1], line_no, "accuracy");
    const double gflops = f[2].empty()
                              ? 0.0
                              : detail::parse_double(f[2], line_no, "gflops");
    const auto batch = static_cast<std::uint32_t>(
        detail::parse_u64(f[3], line_no, "batch"));
    const Micros latency = detail::parse_u64(f[4], line_no, "latency_us");
    auto it = index.find(id);
    if (it == index.end()) {
      index.emplace(id, catalog.subnets.size());
      SubnetRecord rec;
      rec.id = id;
      rec.accuracy = acc;
      if (gflops > 0.0) rec.gflops = gflops;
      catalog.subnets.push_back(std::move(rec));
      it = index.find(id);
    }
    catalog.subnets[it->second].profile.push_back({batch, latency});
  }
  for (auto& s : catalog.subnets) {
    std::sort(s.profile.begin(), s.profile.end(),
              [](const BatchLatency& a, const BatchLatency& b) {
                return a.batch < b.batch;
              });
    catalog.max_batch = std::max(catalog.max_batch, s.max_batch());
  }
  catalog.validate();
  return catalog;
}

inline Catalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile csv: " + path);
  return parse_catalog_csv(in);
}

inline void write_catalog_csv(const Catalog& catalog, std::ostream& out) {
  out << "subnet_id,accuracy,gflops,batch,latency_us\n";
  for (const auto& s : catalog.subnets) {
    for (const auto& bl : s.profile) {
      out << s.id << ',' << s.accuracy << ','
          << (s.gflops ? *s.gflops : 0.0) << ',' << bl.batch << ','
          << bl.latency_us << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Built-in synthetic profile. Six accuracy points; per-batch latency slope
// grows with accuracy so that small subnets stay flat (high throughput) and
// big subnets stretch into the high-latency buckets. Satisfies P1-P3 and
// keeps bucket-best accuracy non-decreasing with latency.

inline Catalog default_catalog() {
  struct Row {
    const char* id;
    double accuracy;
    double gflops;
    double mean_width;
    Micros latency[7];
  };
  static const Row rows[] = {
      {"sub0", 73.82, 0.9, 0.40, {3000, 3200, 3500, 3900, 4400, 5600, 7600}},
      {"sub1", 76.69, 1.7, 0.50, {4000, 4200, 4400, 4700, 5900, 7700, 10100}},
      {"sub2", 77.64, 2.6, 0.60, {5000, 5200, 5450, 5800, 7000, 9900, 11900}},
      {"sub3", 78.25, 3.9, 0.70,
       {7000, 7250, 7600, 8300, 10000, 12500, 14200}},
      {"sub4", 79.44, 5.5, 0.85,
       {9000, 9300, 9800, 10900, 12800, 14000, 16800}},
      {"sub5", 80.16, 7.5, 1.00,
       {12000, 12600, 13300, 14500, 16900, 24000, 39000}},
  };
  static const std::uint32_t batches[] = {1, 2, 4, 8, 16, 32, 64};
  Catalog catalog;
  catalog.max_batch = 64;
  catalog.pareto = true;
  for (const auto& row : rows) {
    SubnetRecord rec;
    rec.id = row.id;
    rec.accuracy = row.accuracy;
    rec.gflops = row.gflops;
    rec.config.depth_flags.assign(5, true);
    rec.config.expand_ratios = {3.0, 4.0, 6.0};
    rec.config.width_multipliers.assign(4, row.mean_width);
    for (std::size_t b = 0; b < 7; ++b) {
      rec.profile.push_back({batches[b], row.latency[b]});
    }
    catalog.subnets.push_back(std::move(rec));
  }
  catalog.validate();
  return catalog;
}

// ---------------------------------------------------------------------------
// Memory model: weight-shared layers plus per-subnet normalization stats.

struct MemorySpec {
  std::uint64_t shared_weight_bytes = 0;
  std::uint64_t per_subnet_stat_bytes = 0;
  std::uint64_t subnet_count = 0;
};

struct MemoryFootprint {
  std::uint64_t supernet_bytes = 0;
  std::uint64_t individual_bytes_estimate = 0;
  double stat_fraction = 0.0;
};

/// `width_means` supplies each subnet's mean width multiplier as the
/// standalone-size proxy; missing entries count as 1.0.
inline MemoryFootprint memory_footprint(const MemorySpec& spec,
                                        std::span<const double> width_means =
                                            {}) {
  MemoryFootprint out;
  out.supernet_bytes = spec.shared_weight_bytes +
                       spec.subnet_count * spec.per_subnet_stat_bytes;
  double individual = 0.0;
  for (std::uint64_t k = 0; k < spec.subnet_count; ++k) {
    const double w = k < width_means.size() ? width_means[k] : 1.0;
    individual += static_cast<double>(spec.shared_weight_bytes) * w;
  }
  out.individual_bytes_estimate = static_cast<std::uint64_t>(individual);
  out.stat_fraction =
      out.supernet_bytes == 0
          ? 0.0
          : static_cast<double>(spec.subnet_count *
                                spec.per_subnet_stat_bytes) /
                static_cast<double>(out.supernet_bytes);
  return out;
}

/// Key-value config block: `shared_weight_bytes`, `per_subnet_stat_bytes`,
/// `subnet_count`, one `key = value` per line, '#' comments.
inline MemorySpec parse_memory_spec(std::istream& in) {
  MemorySpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = true;
      for (char c : line) {
        if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
      }
      if (blank) continue;
      throw std::runtime_error("memory spec line " + std::to_string(line_no) +
                               ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::uint64_t v = detail::parse_u64(value, line_no, key.c_str());
    if (key == "shared_weight_bytes") {
      spec.shared_weight_bytes = v;
    } else if (key == "per_subnet_stat_bytes") {
      spec.per_subnet_stat_bytes = v;
    } else if (key == "subnet_count") {
      spec.subnet_count = v;
    } else {
      throw std::runtime_error("memory spec line " + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
    }
  }
  return spec;
}

inline MemorySpec load_memory_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open memory spec: " + path);
  return parse_memory_spec(in);
}

}  // namespace servesim
