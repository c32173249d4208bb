#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "servesim/edf_queue.hpp"

using namespace servesim;

TEST_CASE("edf ordering", "[queue]") {
  EdfQueue queue;
  queue.enqueue({0, 0, 30});
  queue.enqueue({1, 0, 10});
  queue.enqueue({2, 0, 20});
  CHECK(queue.front().deadline_us == 10);
  CHECK(queue.size() == 3);
}

TEST_CASE("fifo among equal deadlines", "[queue]") {
  EdfQueue queue;
  queue.enqueue({7, 0, 50});
  queue.enqueue({8, 0, 50});
  CHECK(queue.take_batch(1).queries.front().id == 7);
  CHECK(queue.take_batch(1).queries.front().id == 8);
}

TEST_CASE("dequeue order matches a stable sort by deadline", "[queue]") {
  std::mt19937_64 rng(3);
  EdfQueue queue;
  std::vector<Query> inserted;
  for (std::uint64_t i = 0; i < 100'000; ++i) {
    Query q{i, 0, 1 + rng() % 500};
    queue.enqueue(q);
    inserted.push_back(q);
  }
  std::stable_sort(inserted.begin(), inserted.end(),
                   [](const Query& a, const Query& b) {
                     return a.deadline_us < b.deadline_us;
                   });
  for (const auto& expect : inserted) {
    const Query got = queue.take_batch(1).queries.front();
    REQUIRE(got.id == expect.id);
  }
  CHECK(queue.empty());
}

TEST_CASE("duplicate ids are rejected", "[queue]") {
  EdfQueue queue;
  queue.enqueue({1, 0, 10});
  CHECK_THROWS_AS(queue.enqueue(Query{1, 0, 20}), std::invalid_argument);
  // after removal the id may be reused
  queue.take_batch(1);
  CHECK_NOTHROW(queue.enqueue(Query{1, 0, 20}));
}

TEST_CASE("peek_slack", "[queue]") {
  EdfQueue queue;
  CHECK(!queue.peek_slack(0).has_value());
  queue.enqueue({0, 0, 50'000});
  CHECK(*queue.peek_slack(14'000) == 36'000);
  CHECK(*queue.peek_slack(50'000) == 0);
  CHECK(*queue.peek_slack(60'000) == -10'000);
}

TEST_CASE("take_batch clamps and tracks earliest times", "[queue]") {
  EdfQueue queue;
  queue.enqueue({0, 5, 40});
  queue.enqueue({1, 3, 30});
  queue.enqueue({2, 9, 50});
  const Batch batch = queue.take_batch(8);
  CHECK(batch.size() == 3);
  CHECK(batch.deadline_us == 30);
  CHECK(batch.arrival_us == 3);
  CHECK(queue.empty());
  CHECK_THROWS_AS(queue.take_batch(1), std::logic_error);
}

TEST_CASE("take_batch singleton", "[queue]") {
  EdfQueue queue;
  queue.enqueue({0, 0, 25});
  queue.enqueue({1, 0, 35});
  const Batch batch = queue.take_batch(1);
  CHECK(batch.size() == 1);
  CHECK(batch.deadline_us == 25);
}

TEST_CASE("random batches have the min deadline of the removed set",
          "[queue]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    EdfQueue queue;
    const std::size_t n = 1 + rng() % 50;
    for (std::uint64_t i = 0; i < n; ++i) {
      queue.enqueue({i, rng() % 100, 100 + rng() % 1000});
    }
    const Micros front_deadline = queue.front().deadline_us;
    const Batch batch = queue.take_batch(1 + rng() % 8);
    Micros min_deadline = std::numeric_limits<Micros>::max();
    Micros min_arrival = std::numeric_limits<Micros>::max();
    for (const auto& q : batch.queries) {
      min_deadline = std::min(min_deadline, q.deadline_us);
      min_arrival = std::min(min_arrival, q.arrival_us);
    }
    CHECK(batch.deadline_us == min_deadline);
    CHECK(batch.deadline_us == front_deadline);
    CHECK(batch.arrival_us == min_arrival);
  }
}

TEST_CASE("drop_expired removes exactly the infeasible front", "[queue]") {
  EdfQueue queue;
  queue.enqueue({0, 0, 10'000});  // slack 2ms at now=8ms
  queue.enqueue({1, 0, 50'000});
  const auto dropped = queue.drop_expired(8'000, 3'000);
  REQUIRE(dropped.size() == 1);
  CHECK(dropped[0].id == 0);
  CHECK(queue.size() == 1);

  // ample slack: nothing dropped
  CHECK(queue.drop_expired(8'000, 3'000).empty());
}

TEST_CASE("drop_expired equals a full scan oracle", "[queue]") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    EdfQueue queue;
    std::vector<Query> all;
    const std::size_t n = 1 + rng() % 60;
    for (std::uint64_t i = 0; i < n; ++i) {
      Query q{i, 0, 1 + rng() % 20'000};
      queue.enqueue(q);
      all.push_back(q);
    }
    const Micros now = rng() % 15'000;
    const Micros min_latency = rng() % 6'000;
    const auto dropped = queue.drop_expired(now, min_latency);
    std::vector<std::uint64_t> expect;
    for (const auto& q : all) {
      const auto slack = static_cast<SlackMicros>(q.deadline_us) -
                         static_cast<SlackMicros>(now);
      if (slack < static_cast<SlackMicros>(min_latency)) {
        expect.push_back(q.id);
      }
    }
    std::vector<std::uint64_t> got;
    for (const auto& q : dropped) got.push_back(q.id);
    std::sort(got.begin(), got.end());
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
  }
}
