#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ibm/config.hpp"
#include "ibm/law.hpp"
#include "ibm/rng.hpp"

namespace ibm {

/// One entry of the event log. The step index n is the 1-based position in
/// the log. selected_bin is always new_loc - 1 when a ball was created.
struct StepRecord {
  enum class Parent : std::uint8_t { none, ball, barrier };
  static constexpr std::int32_t kNoLoc = INT32_MIN;

  double v = 0.0;
  std::int32_t new_loc = kNoLoc;
  std::uint32_t new_height = 0;
  std::int32_t parent_loc = kNoLoc;
  std::uint32_t parent_height = 0;
  Parent parent_kind = Parent::none;

  bool added() const { return new_loc != kNoLoc; }
  std::optional<std::int64_t> selected_bin() const {
    if (!added()) return std::nullopt;
    return static_cast<std::int64_t>(new_loc) - 1;
  }
  bool operator==(const StepRecord&) const = default;
};

/// Increment history of one watched bin: the times n at which the bin's
/// count grew (the events B_n of the 0-1 law analysis).
struct BinWatch {
  std::int64_t bin = 0;
  std::uint64_t initial_count = 0;
  std::uint64_t final_count = 0;
  std::vector<std::uint64_t> increment_times;
  std::optional<std::uint64_t> last_increment() const {
    if (increment_times.empty()) return std::nullopt;
    return increment_times.back();
  }
};

struct BallIdHash {
  std::size_t operator()(const BallId& b) const {
    return static_cast<std::size_t>(splitmix64(
        static_cast<std::uint64_t>(b.location) * 0x9E3779B97F4A7C15ULL ^
        b.height));
  }
};

/// Parent map aggregates (opt-in; O(n) memory).
struct Genealogy {
  bool tracked = false;
  std::unordered_map<BallId, std::uint64_t, BallIdHash> offspring;
  std::uint64_t barrier_offspring = 0;
};

struct RunOptions {
  std::uint64_t horizon = 0;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> watch_bins;
  bool track_genealogy = false;
  /// Event logs are kept in memory for horizons <= 10^7; longer runs must
  /// stream through `sink` instead.
  bool keep_log = true;
  std::function<void(std::uint64_t n, const StepRecord&)> sink;
};

struct SimulationRun {
  ReproductionLaw law;
  Configuration initial;
  Configuration final_config;
  std::uint64_t horizon = 0;
  std::uint64_t seed = 0;
  std::uint64_t added_steps = 0;
  std::uint64_t noop_steps = 0;
  std::vector<StepRecord> log;
  std::vector<BinWatch> watches;
  Genealogy genealogy;

  const BinWatch& watch(std::int64_t bin) const;
};

/// Runs the Markov recursion for `horizon` steps. Deterministic given
/// (law, initial, seed, horizon): identical inputs give identical logs.
SimulationRun run(const ReproductionLaw& law, const Configuration& initial,
                  const RunOptions& options);

/// Expectation bound on the total offspring of the ball ranked k:
/// sum_{l >= k} mu(l) / mu([1, l]), convention 0/0 = 0, evaluated with a
/// certified truncation error below 1e-9.
double offspring_bound(const ReproductionLaw& law, std::uint64_t k);

/// Offspring count R_k of the ball ranked k in the initial configuration.
std::uint64_t offspring_of_initial_rank(const SimulationRun& run,
                                        std::uint64_t k);

struct FreezingDiagnostic {
  std::int64_t bin = 0;
  std::optional<std::uint64_t> last_increment;
  /// (n, count) at logarithmically spaced checkpoints n = ceil(10^{i/4}).
  std::vector<std::pair<std::uint64_t, std::uint64_t>> checkpoints;
  /// Heuristic: no increment during the last half of the horizon.
  bool frozen_within_horizon = false;
  std::uint64_t window_start = 0;  // the inspected window is (window_start, horizon]
};

/// The bin must have been watched during the run.
FreezingDiagnostic freezing_diagnostic(const SimulationRun& run,
                                       std::int64_t bin);

/// Applies a recorded event log to a configuration. Verifies that recorded
/// heights match as it goes; a mismatch raises InvariantError.
Configuration replay(const Configuration& initial,
                     const std::vector<StepRecord>& log);

/// CSV columns: n,V,selected_bin,new_loc,new_height,parent_loc,parent_height
/// (parent fields empty for barrier parents, everything but n,V empty for
/// no-ops).
void write_event_csv(std::ostream& os, const std::vector<StepRecord>& log);
std::vector<StepRecord> read_event_csv(std::istream& is);

/// Run summary: final nonzero counts, watched-bin traces, genealogy stats.
std::string run_summary_json(const SimulationRun& run);

/// Logarithmic checkpoint grid ceil(10^{i/4}), deduplicated, capped at n_max.
std::vector<std::uint64_t> log_checkpoints(std::uint64_t n_max);

}  // namespace ibm
