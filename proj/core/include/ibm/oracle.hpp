#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ibm/config.hpp"
#include "ibm/law.hpp"

namespace ibm::oracle {

/// Exact probability arithmetic. Laws given as exact fractions (and the
/// uniform law) enumerate with true rationals; decimal tables are lifted to
/// the exact rationals of their double entries, so the DP itself is always
/// exact.
using Rational = boost::multiprecision::cpp_rational;

/// Canonical serialized form of a configuration (sorted nonzero bins).
struct StateKey {
  std::optional<std::int64_t> barrier;
  std::vector<std::pair<std::int64_t, std::uint64_t>> bins;

  static StateKey of(const Configuration& cfg);
  Configuration to_configuration() const;
  std::string to_json() const;
  std::uint64_t count(std::int64_t bin) const;

  auto operator<=>(const StateKey&) const = default;
};

/// Per-step bin-increment probabilities P(B_n) and joints P(B_n and B_m).
struct EventTable {
  std::int64_t bin = 0;
  std::vector<Rational> p_single;                    // index n-1, n = 1..T
  std::map<std::pair<int, int>, Rational> p_joint;   // keys (n, m), n < m
};

struct ExactDistribution {
  std::uint64_t horizon = 0;
  bool exact_inputs = false;  // law entries were exact fractions
  std::map<StateKey, Rational> dist;
  std::optional<EventTable> events;
};

struct EnumerateOptions {
  std::uint64_t horizon = 0;
  std::optional<std::int64_t> event_bin;
  /// Budget on state-times-support expansions across all levels.
  std::uint64_t budget = 10'000'000;
};

/// Exact law of X_T by dynamic programming over configuration states
/// (duplicate states merged at every level). Requires a finite-support law.
ExactDistribution enumerate(const ReproductionLaw& law,
                            const Configuration& initial,
                            const EnumerateOptions& options);

/// E(X_T(bin)), exactly.
Rational exact_expected_count(const ExactDistribution& dist, std::int64_t bin);
Rational exact_expected_count(const ReproductionLaw& law,
                              const Configuration& initial, std::int64_t bin,
                              std::uint64_t horizon,
                              std::uint64_t budget = 10'000'000);

/// Total-variation distance between the exact law and an empirical one.
double tv_distance(const ExactDistribution& dist,
                   const std::map<StateKey, double>& empirical);

/// Empirical distribution of X_T over seeded replicas (Monte Carlo side of
/// the simulator-agreement contract).
std::map<StateKey, double> empirical_distribution(const ReproductionLaw& law,
                                                  const Configuration& initial,
                                                  std::uint64_t horizon,
                                                  std::uint64_t replicas,
                                                  std::uint64_t seed);

}  // namespace ibm::oracle
