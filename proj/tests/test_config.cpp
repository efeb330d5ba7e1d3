#include "ibm/config.hpp"

#include <map>
#include <random>
#include <vector>

#include "doctest.h"
#include "ibm/law.hpp"
#include "ibm/rng.hpp"

using ibm::BallId;
using ibm::Configuration;
using ibm::ReproductionLaw;
using ibm::RngStream;

namespace {

Configuration make(std::optional<std::int64_t> barrier,
                   std::map<std::int64_t, std::uint64_t> counts) {
  return Configuration(barrier, counts);
}

Configuration random_config(std::mt19937_64& gen) {
  std::optional<std::int64_t> barrier;
  if (gen() % 2 == 0) barrier = static_cast<std::int64_t>(gen() % 11) - 5;
  const std::int64_t base = barrier ? *barrier : static_cast<std::int64_t>(gen() % 7) - 3;
  std::map<std::int64_t, std::uint64_t> counts;
  const int bins = 1 + static_cast<int>(gen() % 5);
  for (int i = 0; i < bins; ++i) {
    const std::int64_t loc = base + 1 + static_cast<std::int64_t>(gen() % 8);
    counts[loc] += 1 + gen() % 3;
  }
  return Configuration(barrier, counts);
}

}  // namespace

TEST_CASE("ball_at_rank counts from the right") {
  const auto cfg = make(std::nullopt, {{0, 2}, {1, 1}, {3, 1}});
  CHECK(cfg.ball_at_rank(1) == 3);
  CHECK(cfg.ball_at_rank(2) == 1);
  CHECK(cfg.ball_at_rank(3) == 0);
  CHECK(cfg.ball_at_rank(4) == 0);
  CHECK_FALSE(cfg.ball_at_rank(5).has_value());

  const auto hat = Configuration::barrier_at(0);
  CHECK(hat.ball_at_rank(7) == 0);
  CHECK(hat.front() == 0);

  const auto mixed = make(-4, {{-1, 1}, {0, 4}});
  CHECK(mixed.ball_at_rank(4) == 0);
  CHECK(mixed.ball_at_rank(5) == -1);
  CHECK(mixed.ball_at_rank(6) == -4);
  CHECK(mixed.total_balls() == 5);

  // same shape with one ball fewer in bin 0: every boundary shifts by one
  const auto shifted = make(-4, {{-1, 1}, {0, 3}});
  CHECK(shifted.ball_at_rank(3) == 0);
  CHECK(shifted.ball_at_rank(4) == -1);
  CHECK(shifted.ball_at_rank(5) == -4);
}

TEST_CASE("rank_of follows the bottom-to-top convention") {
  const auto cfg = make(std::nullopt, {{0, 2}, {1, 1}, {3, 1}});
  CHECK(cfg.rank_of({3, 1}) == 1);
  CHECK(cfg.rank_of({1, 1}) == 2);
  CHECK(cfg.rank_of({0, 1}) == 3);
  CHECK(cfg.rank_of({0, 2}) == 4);
  CHECK_THROWS_AS(cfg.rank_of({2, 1}), ibm::ValidationError);
  CHECK_THROWS_AS(cfg.rank_of({0, 3}), ibm::ValidationError);

  const auto single = make(std::nullopt, {{5, 1}});
  CHECK(single.rank_of({5, 1}) == 1);
}

TEST_CASE("rank round-trip is exhaustive") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cfg = random_config(gen);
    for (std::uint64_t k = 1; k <= cfg.total_balls(); ++k) {
      const BallId b = cfg.ball_of_rank(k);
      CHECK(cfg.rank_of(b) == k);
    }
  }
}

TEST_CASE("add_ball updates counts, front and rank index") {
  auto cfg = make(std::nullopt, {{0, 1}});
  const BallId b = cfg.add_ball(1);
  CHECK(b == BallId{1, 1});
  CHECK(cfg.front() == 1);
  CHECK(cfg.count(0) == 1);
  CHECK(cfg.count(1) == 1);

  auto hat = Configuration::barrier_at(0);
  CHECK(hat.add_ball(1) == BallId{1, 1});
  CHECK_THROWS_AS(hat.add_ball(0), ibm::ValidationError);
  CHECK_THROWS_AS(hat.add_ball(-3), ibm::ValidationError);

  // the new ball's rank equals S_j of the post-insertion configuration
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = random_config(gen);
    const std::int64_t loc = c.front() + 1 - static_cast<std::int64_t>(gen() % 3);
    if (c.barrier() && loc <= *c.barrier()) continue;
    const BallId nb = c.add_ball(loc);
    CHECK(c.rank_of(nb) == c.count_at_or_right(loc));
  }
}

TEST_CASE("step_threshold follows the staircase") {
  const auto law = ReproductionLaw::uniform_range(3);
  auto tail = law.tail_view();

  auto hat = Configuration::barrier_at(0);
  const auto out = hat.step_threshold(0.123, tail);
  REQUIRE(out.added());
  CHECK(out.selected_bin == 0);
  CHECK(out.new_ball == BallId{1, 1});

  // implied rank 2 lives at bin 1, so the ball lands at 2
  auto cfg = make(std::nullopt, {{0, 2}, {1, 1}, {3, 1}});
  const auto mid = cfg.step_threshold(0.5, tail);
  REQUIRE(mid.added());
  CHECK(mid.selected_bin == 1);
  CHECK(mid.new_ball == BallId{2, 1});
  CHECK(cfg.nonzero_counts() ==
        std::map<std::int64_t, std::uint64_t>{{0, 2}, {1, 1}, {2, 1}, {3, 1}});

  // rank 3 exceeds the single ball: no-op
  auto tiny = make(std::nullopt, {{0, 1}});
  const auto noop = tiny.step_threshold(0.1, tail);
  CHECK_FALSE(noop.added());
  CHECK_FALSE(noop.selected_bin.has_value());
  CHECK(tiny.total_balls() == 1);
}

TEST_CASE("step_threshold agrees with step_at_rank for every draw") {
  const auto law = ReproductionLaw::table({0.4, 0.3, 0.2, 0.1});
  auto tail = law.tail_view();
  std::mt19937_64 gen(17);
  RngStream rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_config(gen);
    auto b = a;
    for (int s = 0; s < 20; ++s) {
      const double v = rng.uniform01();
      const auto via_threshold = a.step_threshold(v, tail);
      const auto via_rank = b.step_at_rank(law.rank_of_threshold(v));
      CHECK(via_threshold.selected_bin == via_rank.selected_bin);
      CHECK(via_threshold.new_ball == via_rank.new_ball);
      CHECK(a == b);
    }
  }
}

TEST_CASE("rank shift: exactly the ranks at or above the new ball move up") {
  const auto law = ReproductionLaw::uniform_range(5);
  auto tail = law.tail_view();
  std::mt19937_64 gen(23);
  RngStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto cfg = random_config(gen);
    for (int s = 0; s < 10; ++s) {
      std::vector<BallId> before;
      for (std::uint64_t k = 1; k <= cfg.total_balls(); ++k) {
        before.push_back(cfg.ball_of_rank(k));
      }
      const auto out = cfg.step_threshold(rng.uniform01(), tail);
      if (!out.added()) continue;
      const std::uint64_t r_new = cfg.rank_of(*out.new_ball);
      for (std::uint64_t k = 1; k <= before.size(); ++k) {
        const std::uint64_t now = cfg.rank_of(before[k - 1]);
        if (k >= r_new) {
          CHECK(now == k + 1);
        } else {
          CHECK(now == k);
        }
      }
    }
  }
}

TEST_CASE("per-bin counts never decrease and totals grow by one per step") {
  const auto law = ReproductionLaw::geometric(0.5);
  auto tail = law.tail_view();
  std::mt19937_64 gen(5);
  RngStream rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    auto cfg = random_config(gen);
    auto prev = cfg.nonzero_counts();
    auto prev_total = cfg.total_balls();
    for (int s = 0; s < 30; ++s) {
      const auto out = cfg.step_threshold(rng.uniform01(), tail);
      const auto now = cfg.nonzero_counts();
      for (const auto& [loc, c] : prev) {
        auto it = now.find(loc);
        REQUIRE(it != now.end());
        CHECK(it->second >= c);
      }
      CHECK(cfg.total_balls() == prev_total + (out.added() ? 1 : 0));
      prev = now;
      prev_total = cfg.total_balls();
    }
  }
}

TEST_CASE("truncate_left") {
  const auto a = make(std::nullopt, {{-2, 1}, {0, 1}});
  CHECK(a.truncate_left(-1).nonzero_counts() ==
        std::map<std::int64_t, std::uint64_t>{{0, 1}});

  const auto b = make(-5, {{0, 1}});
  const auto tb = b.truncate_left(-3);
  CHECK_FALSE(tb.barrier().has_value());
  CHECK(tb.nonzero_counts() == std::map<std::int64_t, std::uint64_t>{{0, 1}});

  const auto keep = make(-5, {{0, 1}});
  CHECK(keep.truncate_left(-5).barrier() == -5);

  const auto c = make(std::nullopt, {{0, 1}});
  CHECK_THROWS_AS(c.truncate_left(1), ibm::ValidationError);
}

TEST_CASE("json round-trip on random configurations") {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cfg = random_config(gen);
    const auto back = Configuration::from_json(cfg.to_json());
    CHECK(back == cfg);
  }
  const auto cfg = Configuration::from_json(
      R"({"barrier": -4, "bins": {"-1": 1, "0": 3}})");
  CHECK(cfg.barrier() == -4);
  CHECK(cfg.count(0) == 3);
  const auto nb = Configuration::from_json(R"({"barrier": null, "bins": {"2": 1}})");
  CHECK_FALSE(nb.barrier().has_value());

  CHECK_THROWS_AS(Configuration::from_json("{"), ibm::ValidationError);
  CHECK_THROWS_AS(Configuration::from_json(R"({"bins": {"x": 1}})"),
                  ibm::ValidationError);
  CHECK_THROWS_AS(Configuration::from_json(R"({"barrier": null, "bins": {}})"),
                  ibm::ValidationError);
}

TEST_CASE("shorthand specs") {
  const auto hat = Configuration::from_spec("barrier");
  CHECK(hat.barrier() == 0);
  CHECK(hat.total_balls() == 0);

  const auto f = Configuration::from_spec("flat:2,left=-3");
  CHECK(f.total_balls() == 8);
  CHECK(f.count(-3) == 2);
  CHECK(f.count(0) == 2);
  CHECK(f.front() == 0);

  CHECK_THROWS_AS(Configuration::from_spec("flat:0,left=-3"), ibm::ValidationError);
  CHECK_THROWS_AS(Configuration::from_spec("wat"), ibm::ValidationError);
}

TEST_CASE("normalization drops bins at or left of the barrier") {
  const auto cfg = make(2, {{0, 5}, {2, 7}, {3, 1}});
  CHECK(cfg.count(0) == 0);
  CHECK(cfg.count(3) == 1);
  CHECK(cfg.total_balls() == 1);
  CHECK(cfg.ball_at_rank(2) == 2);
}
