#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ibm/errors.hpp"
#include "ibm/law.hpp"

namespace ibm {

/// Identity of a finite ball: bin index and height within the bin.
/// Heights start at 1 (bottom); both coordinates are immutable once the
/// ball exists.
struct BallId {
  std::int64_t location = 0;
  std::uint64_t height = 0;
  bool operator==(const BallId&) const = default;
};

/// Result of one dynamics step. When a ball is created, selected_bin is the
/// parent bin J and the ball lands at J+1.
struct StepOutcome {
  std::optional<std::int64_t> selected_bin;
  std::optional<BallId> new_ball;
  bool added() const { return new_ball.has_value(); }
};

/// A ball configuration over a window of Z with an optional infinite barrier.
///
/// Rank/location/height queries and single-ball insertions run in
/// O(log W) where W is the occupied window width, via a binary-indexed
/// prefix-sum tree ordered right-to-left (suffix counts S_j are Fenwick
/// prefixes). The window re-anchors with amortized doubling when the front
/// advances past its capacity.
///
/// Single-writer object: one thread mutates; copies are cheap snapshots.
class Configuration {
 public:
  Configuration(std::optional<std::int64_t> barrier,
                const std::map<std::int64_t, std::uint64_t>& counts);

  /// The single-barrier configuration: one infinite bin, everything else empty.
  static Configuration barrier_at(std::int64_t pos);
  /// `a` balls in every bin of [left, 0], no barrier.
  static Configuration flat(std::uint64_t a, std::int64_t left);

  /// JSON form: {"barrier": -4, "bins": {"-1": 1, "0": 3}}; barrier may be null.
  static Configuration from_json(const std::string& text);
  std::string to_json() const;
  /// Shorthand specs: "barrier", "flat:A,left=L", or inline JSON.
  static Configuration from_spec(const std::string& spec);

  std::optional<std::int64_t> barrier() const { return barrier_; }
  /// F(X): rightmost nonempty bin (the barrier counts as nonempty).
  std::int64_t front() const;
  /// Number of finite balls (right of the barrier, if any).
  std::uint64_t total_balls() const { return total_; }
  std::uint64_t count(std::int64_t bin) const;
  /// S_j: finite balls at locations >= bin. The barrier is not included.
  std::uint64_t count_at_or_right(std::int64_t bin) const;
  std::map<std::int64_t, std::uint64_t> nonzero_counts() const;

  /// B(X,k): location of the k-th rightmost ball; the barrier absorbs all
  /// ranks beyond the finite balls; nullopt when no barrier and k > total.
  std::optional<std::int64_t> ball_at_rank(std::uint64_t k) const;
  /// Rank of an existing finite ball: bins right-to-left, bottom-to-top
  /// inside each bin (height 1 gets the smallest rank of its bin).
  std::uint64_t rank_of(BallId ball) const;
  bool has_ball(BallId ball) const;
  /// Ball identity of finite rank k (k <= total_balls()).
  BallId ball_of_rank(std::uint64_t k) const;

  /// Adds one ball; location must be right of the barrier.
  BallId add_ball(std::int64_t location);

  /// One step of the dynamics under the threshold reparametrization: the
  /// selected bin J is found by a Fenwick descent comparing v against
  /// tail(S_j + 1), so only tails at arguments <= total+1 are evaluated.
  StepOutcome step_threshold(double v, ReproductionLaw::TailView& tail);
  /// One step with an explicit rank (used by couplings and the oracle).
  StepOutcome step_at_rank(std::uint64_t rank);

  /// Materializes the implied rank of a threshold among the finite balls;
  /// nullopt when the rank falls past them (barrier or no-op territory).
  std::optional<std::uint64_t> implied_rank(double v,
                                            ReproductionLaw::TailView& tail) const;

  /// Removes all balls strictly left of l, and any barrier left of l.
  Configuration truncate_left(std::int64_t l) const;

  bool operator==(const Configuration& other) const;

 private:
  Configuration() = default;
  void rebuild(std::int64_t new_lo, std::uint64_t min_capacity);
  std::uint64_t fenwick_prefix(std::uint64_t t) const;
  void fenwick_add(std::uint64_t t, std::uint64_t delta);
  std::uint64_t index_of(std::int64_t location) const;

  std::optional<std::int64_t> barrier_;
  std::int64_t lo_ = 0;            // leftmost tracked location
  std::int64_t hi_ = -1;           // rightmost tracked location (lo_+cap-1)
  std::int64_t max_occupied_ = 0;  // rightmost nonzero; lo_-1 when none
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> counts_;  // counts_[j - lo_]
  std::vector<std::uint64_t> fw_;      // 1-based, size cap+1
};

}  // namespace ibm
