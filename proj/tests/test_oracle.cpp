#include "ibm/oracle.hpp"

#include "doctest.h"
#include "ibm/config.hpp"
#include "ibm/law.hpp"

using ibm::Configuration;
using ibm::ReproductionLaw;
using ibm::oracle::ExactDistribution;
using ibm::oracle::Rational;
using ibm::oracle::StateKey;

namespace {

StateKey key(std::optional<std::int64_t> barrier,
             std::map<std::int64_t, std::uint64_t> counts) {
  return StateKey::of(Configuration(barrier, counts));
}

Rational total_mass(const ExactDistribution& d) {
  Rational s = 0;
  for (const auto& [state, p] : d.dist) s += p;
  return s;
}

}  // namespace

TEST_CASE("deterministic path: uniform N=1") {
  const auto law = ReproductionLaw::uniform_range(1);
  const auto init = Configuration(std::nullopt, {{0, 1}});
  const auto d = ibm::oracle::enumerate(law, init, {.horizon = 3});
  REQUIRE(d.dist.size() == 1);
  CHECK(d.dist.begin()->first ==
        key(std::nullopt, {{0, 1}, {1, 1}, {2, 1}, {3, 1}}));
  CHECK(d.dist.begin()->second == Rational(1));
  CHECK(d.exact_inputs);
}

TEST_CASE("no-op branch: uniform N=2 from a single ball") {
  const auto law = ReproductionLaw::uniform_range(2);
  const auto init = Configuration(std::nullopt, {{0, 1}});
  const auto d = ibm::oracle::enumerate(law, init, {.horizon = 1});
  REQUIRE(d.dist.size() == 2);
  CHECK(d.dist.at(key(std::nullopt, {{0, 1}, {1, 1}})) == Rational(1, 2));
  CHECK(d.dist.at(key(std::nullopt, {{0, 1}})) == Rational(1, 2));
}

TEST_CASE("two-step hand enumeration: uniform N=2 from two balls") {
  const auto law = ReproductionLaw::uniform_range(2);
  const auto init = Configuration(std::nullopt, {{0, 2}});
  const auto d = ibm::oracle::enumerate(law, init, {.horizon = 2});
  // step 1 always lands at 1; step 2 splits between bins 2 and 1
  REQUIRE(d.dist.size() == 2);
  CHECK(d.dist.at(key(std::nullopt, {{0, 2}, {1, 1}, {2, 1}})) == Rational(1, 2));
  CHECK(d.dist.at(key(std::nullopt, {{0, 2}, {1, 2}})) == Rational(1, 2));
  CHECK(total_mass(d) == Rational(1));

  CHECK(ibm::oracle::exact_expected_count(d, 1) == Rational(3, 2));
  CHECK(ibm::oracle::exact_expected_count(d, 9) == Rational(0));
}

TEST_CASE("expected counts are exact and monotone in the horizon") {
  const auto law = ReproductionLaw::uniform_range(1);
  const auto init = Configuration(std::nullopt, {{0, 1}});
  CHECK(ibm::oracle::exact_expected_count(law, init, 1, 3) == Rational(1));

  const auto law2 = ReproductionLaw::table_exact({{1, 2}, {1, 2}});
  const auto init2 = Configuration(std::nullopt, {{0, 2}});
  Rational prev = 0;
  for (std::uint64_t t = 1; t <= 6; ++t) {
    const Rational e = ibm::oracle::exact_expected_count(law2, init2, 1, t);
    CHECK(e >= prev);
    prev = e;
  }
}

TEST_CASE("barrier states enumerate exactly") {
  const auto law = ReproductionLaw::uniform_range(2);
  const auto d = ibm::oracle::enumerate(law, Configuration::barrier_at(0),
                                        {.horizon = 2});
  // first draw always lands at 1; second lands at 2 (rank 1) or 1 (rank 2)
  REQUIRE(d.dist.size() == 2);
  CHECK(d.dist.at(key(0, {{1, 1}, {2, 1}})) == Rational(1, 2));
  CHECK(d.dist.at(key(0, {{1, 2}})) == Rational(1, 2));
}

TEST_CASE("event marginals and joints") {
  const auto law = ReproductionLaw::uniform_range(2);
  const auto init = Configuration(std::nullopt, {{0, 1}});
  const auto d = ibm::oracle::enumerate(
      law, init, {.horizon = 2, .event_bin = std::int64_t{1}});
  REQUIRE(d.events.has_value());
  REQUIRE(d.events->p_single.size() == 2);
  CHECK(d.events->p_single[0] == Rational(1, 2));
  CHECK(d.events->p_single[1] == Rational(1, 2));
  CHECK(d.events->p_joint.at({1, 2}) == Rational(1, 4));
}

TEST_CASE("double tables stay within float tolerance of unit mass") {
  const auto law = ReproductionLaw::table({0.6, 0.4});
  const auto init = Configuration(std::nullopt, {{-1, 1}, {0, 1}});
  const auto d = ibm::oracle::enumerate(law, init, {.horizon = 5});
  CHECK_FALSE(d.exact_inputs);
  CHECK(std::abs(static_cast<double>(total_mass(d)) - 1.0) < 1e-12);
}

TEST_CASE("budget exhaustion raises") {
  const auto law = ReproductionLaw::uniform_range(3);
  const auto init = Configuration(std::nullopt, {{0, 3}});
  CHECK_THROWS_AS(
      ibm::oracle::enumerate(law, init, {.horizon = 6, .budget = 10}),
      ibm::BudgetError);
}

TEST_CASE("empirical distribution approaches the exact one") {
  const auto law = ReproductionLaw::uniform_range(2);
  const auto init = Configuration(std::nullopt, {{0, 1}});
  const auto d = ibm::oracle::enumerate(law, init, {.horizon = 3});
  const auto emp = ibm::oracle::empirical_distribution(law, init, 3, 4000, 17);
  CHECK(ibm::oracle::tv_distance(d, emp) < 0.03);
}

TEST_CASE("state keys round-trip through configurations") {
  const auto k = key(-2, {{0, 2}, {3, 1}});
  CHECK(StateKey::of(k.to_configuration()) == k);
  CHECK(k.count(0) == 2);
  CHECK(k.count(1) == 0);
  CHECK(k.to_json().find("\"barrier\":-2") != std::string::npos);
}
