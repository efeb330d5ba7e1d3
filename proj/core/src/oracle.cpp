#include "ibm/oracle.hpp"

#include <algorithm>

#include "ibm/engine.hpp"

namespace ibm::oracle {
namespace {

StateKey add_at(StateKey s, std::int64_t loc) {
  auto it = std::lower_bound(
      s.bins.begin(), s.bins.end(), loc,
      [](const auto& bin, std::int64_t l) { return bin.first < l; });
  if (it != s.bins.end() && it->first == loc) {
    ++it->second;
  } else {
    s.bins.insert(it, {loc, 1});
  }
  return s;
}

std::uint64_t total_of(const StateKey& s) {
  std::uint64_t t = 0;
  for (const auto& [loc, c] : s.bins) t += c;
  return t;
}

struct Step {
  StateKey next;
  std::optional<std::int64_t> landed;  // location of the created ball
};

Step apply_rank(const StateKey& s, std::uint64_t rank) {
  std::uint64_t cum = 0;
  for (auto it = s.bins.rbegin(); it != s.bins.rend(); ++it) {
    cum += it->second;
    if (cum >= rank) {
      const std::int64_t target = it->first + 1;
      return {add_at(s, target), target};
    }
  }
  if (s.barrier) {
    const std::int64_t target = *s.barrier + 1;
    return {add_at(s, target), target};
  }
  return {s, std::nullopt};
}

using Measure = std::map<StateKey, Rational>;

struct LawTable {
  std::vector<std::pair<std::uint64_t, Rational>> pmf;  // (rank, mass > 0)
  bool exact = false;
};

LawTable law_table(const ReproductionLaw& law) {
  if (law.support_max() == 0) {
    throw ValidationError(
        "exact enumeration requires a finite-support law (table or uniform)");
  }
  LawTable out;
  if (const auto fracs = law.exact_entries()) {
    out.exact = true;
    for (std::size_t i = 0; i < fracs->size(); ++i) {
      const auto [num, den] = (*fracs)[i];
      if (num != 0) out.pmf.emplace_back(i + 1, Rational(num, den));
    }
  } else {
    for (std::uint64_t r = 1; r <= law.support_max(); ++r) {
      const double p = law.pmf(r);
      if (p > 0.0) out.pmf.emplace_back(r, Rational(p));
    }
  }
  return out;
}

/// One exact DP step. Returns the landed mass in `event_bin` and, when
/// `split` is set, also the sub-measure of outcomes that landed there.
Rational evolve(const Measure& level, const LawTable& law,
                std::optional<std::int64_t> event_bin, Measure& next,
                Measure* split, std::uint64_t& budget) {
  Rational landed_mass = 0;
  for (const auto& [state, prob] : level) {
    for (const auto& [rank, mass] : law.pmf) {
      if (budget == 0) {
        throw BudgetError("oracle enumeration budget exceeded");
      }
      --budget;
      const Step step = apply_rank(state, rank);
      const Rational p = prob * mass;
      next[step.next] += p;
      if (event_bin && step.landed == *event_bin) {
        landed_mass += p;
        if (split) (*split)[step.next] += p;
      }
    }
  }
  return landed_mass;
}

}  // namespace

StateKey StateKey::of(const Configuration& cfg) {
  StateKey key;
  key.barrier = cfg.barrier();
  for (const auto& [loc, c] : cfg.nonzero_counts()) key.bins.emplace_back(loc, c);
  return key;
}

Configuration StateKey::to_configuration() const {
  std::map<std::int64_t, std::uint64_t> counts(bins.begin(), bins.end());
  return Configuration(barrier, counts);
}

std::string StateKey::to_json() const { return to_configuration().to_json(); }

std::uint64_t StateKey::count(std::int64_t bin) const {
  for (const auto& [loc, c] : bins) {
    if (loc == bin) return c;
  }
  return 0;
}

ExactDistribution enumerate(const ReproductionLaw& law,
                            const Configuration& initial,
                            const EnumerateOptions& options) {
  const LawTable table = law_table(law);
  std::uint64_t budget = options.budget;

  std::vector<Measure> levels;
  levels.reserve(options.horizon + 1);
  levels.push_back({{StateKey::of(initial), Rational(1)}});

  ExactDistribution out;
  out.horizon = options.horizon;
  out.exact_inputs = table.exact;
  if (options.event_bin) {
    out.events = EventTable{};
    out.events->bin = *options.event_bin;
  }

  for (std::uint64_t n = 1; n <= options.horizon; ++n) {
    Measure next;
    const Rational landed =
        evolve(levels.back(), table, options.event_bin, next, nullptr, budget);
    if (out.events) out.events->p_single.push_back(landed);
    levels.push_back(std::move(next));
  }

  if (out.events) {
    // Joint probabilities: restrict to the B_n paths and evolve them forward.
    for (std::uint64_t n = 1; n < options.horizon; ++n) {
      Measure dummy, restricted;
      evolve(levels[n - 1], table, options.event_bin, dummy, &restricted,
             budget);
      Measure current = std::move(restricted);
      for (std::uint64_t m = n + 1; m <= options.horizon; ++m) {
        Measure next;
        const Rational joint =
            evolve(current, table, options.event_bin, next, nullptr, budget);
        out.events->p_joint[{static_cast<int>(n), static_cast<int>(m)}] = joint;
        current = std::move(next);
      }
    }
  }

  out.dist = std::move(levels.back());
  return out;
}

Rational exact_expected_count(const ExactDistribution& dist, std::int64_t bin) {
  Rational e = 0;
  for (const auto& [state, p] : dist.dist) {
    e += p * Rational(state.count(bin));
  }
  return e;
}

Rational exact_expected_count(const ReproductionLaw& law,
                              const Configuration& initial, std::int64_t bin,
                              std::uint64_t horizon, std::uint64_t budget) {
  return exact_expected_count(
      enumerate(law, initial, {.horizon = horizon, .budget = budget}), bin);
}

double tv_distance(const ExactDistribution& dist,
                   const std::map<StateKey, double>& empirical) {
  double acc = 0.0;
  for (const auto& [state, p] : dist.dist) {
    const auto it = empirical.find(state);
    const double q = it == empirical.end() ? 0.0 : it->second;
    acc += std::abs(static_cast<double>(p) - q);
  }
  for (const auto& [state, q] : empirical) {
    if (!dist.dist.count(state)) acc += q;
  }
  return 0.5 * acc;
}

std::map<StateKey, double> empirical_distribution(const ReproductionLaw& law,
                                                  const Configuration& initial,
                                                  std::uint64_t horizon,
                                                  std::uint64_t replicas,
                                                  std::uint64_t seed) {
  std::map<StateKey, std::uint64_t> counts;
  RunOptions opt;
  opt.horizon = horizon;
  opt.keep_log = false;
  for (std::uint64_t r = 0; r < replicas; ++r) {
    opt.seed = replica_seed(seed, r);
    const auto run = ibm::run(law, initial, opt);
    ++counts[StateKey::of(run.final_config)];
  }
  std::map<StateKey, double> out;
  for (const auto& [state, c] : counts) {
    out[state] = static_cast<double>(c) / static_cast<double>(replicas);
  }
  return out;
}

}  // namespace ibm::oracle
