#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ibm/errors.hpp"
#include "ibm/rng.hpp"

namespace ibm {

enum class LawVariant { table, geometric, uniform_range, power };

/// Certified enclosure of a tail value: the true value lies in [lo, hi].
struct TailBracket {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

namespace detail {

/// Immutable snapshot of the power-law suffix cache.
///
/// sfx[n] ~ sum_{m >= n} f(m) for the unnormalized weight
/// f(m) = m^{-alpha} * ln(m+1)^{-logpow}, valid for n in [1, cutoff+1];
/// sfx[cutoff+1] is the midpoint of a certified integral bracket, and the
/// interior values are built backward from it by compensated summation.
struct PowerCache {
  std::uint64_t cutoff = 0;
  std::vector<double> sfx;      // index 0 unused; size cutoff+2
  double rem_halfwidth = 0.0;   // half-width of the remainder bracket at cutoff+1
};

}  // namespace detail

/// A reproduction law mu on {1,2,...}: exact pmf, certified tail, and
/// rank sampling that never materializes heavy-tailed ranks.
///
/// Thread safety: immutable after construction except for the lazily
/// extended power-law suffix cache. Extension is mutex-synchronized and
/// publishes immutable snapshots, so values already cached are safe to
/// read concurrently.
class ReproductionLaw {
 public:
  static ReproductionLaw table(std::vector<double> probs);
  /// Table with exact fractional entries (numerator, denominator).
  static ReproductionLaw table_exact(
      std::vector<std::pair<std::int64_t, std::int64_t>> fractions);
  static ReproductionLaw geometric(double q);
  static ReproductionLaw uniform_range(std::uint64_t n);
  static ReproductionLaw power(double alpha, double logpow = 0.0);

  /// Parses CLI spec strings:
  ///   table:0.5,0.3,0.2   table:1/2,1/3,1/6   geometric:q=0.5
  ///   uniform:N=3         power:alpha=1.5     power:alpha=1.0,logpow=2
  static ReproductionLaw parse(std::string_view spec);

  LawVariant variant() const { return variant_; }
  /// Whether (mu(n)) is non-increasing. Required by the monotone coupling.
  bool monotone() const { return monotone_; }
  /// True iff sum n*mu(n) < infinity, decided analytically per variant.
  bool has_first_moment() const;
  /// Largest n with mu(n) > 0, or 0 when the support is unbounded.
  std::uint64_t support_max() const { return support_max_; }

  double pmf(std::uint64_t n) const;
  /// mu_bar(n) = mu([n, inf)).
  double tail(std::uint64_t n) const;
  /// mu([1, n]) = 1 - tail(n+1).
  double head(std::uint64_t n) const { return 1.0 - tail(n + 1); }
  /// Certified enclosure of tail(n). Exact (up to fp rounding) for
  /// table/geometric/uniform; integral-bracketed for the power variant.
  TailBracket tail_bracket(std::uint64_t n) const;

  /// Inverse of the tail staircase: the k with tail(k+1) <= v < tail(k).
  /// Throws BudgetError if the implied rank exceeds the cache cap
  /// (possible only for the power variant at extreme thresholds).
  std::uint64_t rank_of_threshold(double v) const;

  /// Samples k in (a, b] with probability pmf(k)/mu((a,b]).
  /// Throws ValidationError on a zero-mass interval (unusable coupling
  /// interval).
  std::uint64_t conditional_sample(std::uint64_t a, std::uint64_t b,
                                   RngStream& rng) const;

  /// Exact fraction entries when built via table_exact, or uniform 1/N;
  /// nullopt otherwise. Consumed by the exact-arithmetic oracle.
  std::optional<std::vector<std::pair<std::int64_t, std::int64_t>>>
  exact_entries() const;

  std::string spec_string() const;

  double power_alpha() const { return alpha_; }
  double power_logpow() const { return logpow_; }
  double geometric_q() const { return q_; }
  std::uint64_t uniform_n() const { return uniform_n_; }

  /// Unnormalized certified bracket of sum_{m>=n} f(m) (power variant only);
  /// exposed for oracle-style verification in tests.
  TailBracket power_suffix_bracket(std::uint64_t n) const;
  /// Certified bracket of the power normalization constant Z.
  TailBracket power_z_bracket() const;

  /// Snapshot view for hot loops: O(1) cached tail reads, refreshing its
  /// snapshot only when an argument beyond the cache is requested.
  class TailView {
   public:
    explicit TailView(const ReproductionLaw& law);
    double operator()(std::uint64_t n) {
      if (law_->variant_ == LawVariant::power) {
        if (n <= limit_) return sfx_[n] * inv_z_;
        return slow_power(n);
      }
      return law_->tail(n);
    }

   private:
    double slow_power(std::uint64_t n);
    const ReproductionLaw* law_;
    std::shared_ptr<const detail::PowerCache> snap_;
    const double* sfx_ = nullptr;
    std::uint64_t limit_ = 0;
    double inv_z_ = 0.0;
  };

  TailView tail_view() const { return TailView(*this); }

 private:
  ReproductionLaw() = default;

  struct PowerState;
  std::shared_ptr<const detail::PowerCache> power_snapshot() const;
  std::shared_ptr<const detail::PowerCache> power_extend(std::uint64_t need) const;

  LawVariant variant_ = LawVariant::table;
  bool monotone_ = false;
  std::uint64_t support_max_ = 0;

  // table
  std::vector<double> probs_;
  std::vector<double> table_sfx_;  // table_sfx_[n] = sum_{m>=n} probs, size m*+2
  std::optional<std::vector<std::pair<std::int64_t, std::int64_t>>> fractions_;

  // geometric / uniform / power parameters
  double q_ = 0.0;
  std::uint64_t uniform_n_ = 0;
  double alpha_ = 0.0;
  double logpow_ = 0.0;

  std::shared_ptr<PowerState> power_;
};

/// Uniform threshold used by the rank reparametrization.
inline double draw_threshold(RngStream& rng) { return rng.uniform01(); }

}  // namespace ibm
