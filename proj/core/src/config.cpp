#include "ibm/config.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <sstream>

#include "json.hpp"

namespace ibm {
namespace {

constexpr std::uint64_t kMinCapacity = 8;

std::uint64_t capacity_for(std::uint64_t width) {
  return std::bit_ceil(std::max(width, kMinCapacity));
}

}  // namespace

Configuration::Configuration(std::optional<std::int64_t> barrier,
                             const std::map<std::int64_t, std::uint64_t>& counts)
    : barrier_(barrier) {
  // Normalize: bins at or left of the barrier never matter and are dropped.
  std::int64_t min_key = 0, max_key = 0;
  bool any = false;
  for (const auto& [loc, c] : counts) {
    if (c == 0) continue;
    if (barrier_ && loc <= *barrier_) continue;
    if (!any) {
      min_key = max_key = loc;
      any = true;
    } else {
      min_key = std::min(min_key, loc);
      max_key = std::max(max_key, loc);
    }
  }
  if (!any && !barrier_) {
    throw ValidationError(
        "configuration must contain a ball or a barrier (rightmost nonempty "
        "bin required)");
  }
  lo_ = barrier_ ? *barrier_ + 1 : min_key;
  const std::uint64_t width =
      any ? static_cast<std::uint64_t>(max_key - lo_ + 1) : 1;
  const std::uint64_t cap = capacity_for(width);
  hi_ = lo_ + static_cast<std::int64_t>(cap) - 1;
  counts_.assign(cap, 0);
  fw_.assign(cap + 1, 0);
  max_occupied_ = lo_ - 1;
  if (any) {
    for (const auto& [loc, c] : counts) {
      if (c == 0) continue;
      if (barrier_ && loc <= *barrier_) continue;
      counts_[static_cast<std::size_t>(loc - lo_)] = c;
      total_ += c;
      max_occupied_ = std::max(max_occupied_, loc);
    }
    // O(cap) Fenwick build.
    for (std::uint64_t t = 1; t <= cap; ++t) {
      fw_[t] += counts_[static_cast<std::size_t>(hi_ - lo_) + 1 - t];
      const std::uint64_t parent = t + (t & (~t + 1));
      if (parent <= cap) fw_[parent] += fw_[t];
    }
  }
}

Configuration Configuration::barrier_at(std::int64_t pos) {
  return Configuration(pos, {});
}

Configuration Configuration::flat(std::uint64_t a, std::int64_t left) {
  if (a == 0) throw ValidationError("flat configuration requires A >= 1");
  if (left > 0) throw ValidationError("flat configuration requires left <= 0");
  std::map<std::int64_t, std::uint64_t> counts;
  for (std::int64_t j = left; j <= 0; ++j) counts[j] = a;
  return Configuration(std::nullopt, counts);
}

void Configuration::rebuild(std::int64_t new_lo, std::uint64_t min_capacity) {
  const std::uint64_t cap = capacity_for(min_capacity);
  std::vector<std::uint64_t> counts(cap, 0);
  for (std::int64_t j = lo_; j <= hi_; ++j) {
    const std::uint64_t c = counts_[static_cast<std::size_t>(j - lo_)];
    if (c) counts[static_cast<std::size_t>(j - new_lo)] = c;
  }
  lo_ = new_lo;
  hi_ = new_lo + static_cast<std::int64_t>(cap) - 1;
  counts_ = std::move(counts);
  fw_.assign(cap + 1, 0);
  for (std::uint64_t t = 1; t <= cap; ++t) {
    fw_[t] += counts_[static_cast<std::size_t>(hi_ - lo_) + 1 - t];
    const std::uint64_t parent = t + (t & (~t + 1));
    if (parent <= cap) fw_[parent] += fw_[t];
  }
}

std::uint64_t Configuration::index_of(std::int64_t location) const {
  return static_cast<std::uint64_t>(hi_ - location + 1);
}

std::uint64_t Configuration::fenwick_prefix(std::uint64_t t) const {
  std::uint64_t s = 0;
  for (; t > 0; t -= t & (~t + 1)) s += fw_[t];
  return s;
}

void Configuration::fenwick_add(std::uint64_t t, std::uint64_t delta) {
  const std::uint64_t cap = counts_.size();
  for (; t <= cap; t += t & (~t + 1)) fw_[t] += delta;
}

std::int64_t Configuration::front() const {
  if (total_ > 0) return max_occupied_;
  return *barrier_;
}

std::uint64_t Configuration::count(std::int64_t bin) const {
  if (bin < lo_ || bin > hi_) return 0;
  return counts_[static_cast<std::size_t>(bin - lo_)];
}

std::uint64_t Configuration::count_at_or_right(std::int64_t bin) const {
  if (bin > hi_) return 0;
  if (bin <= lo_) return total_;
  return fenwick_prefix(index_of(bin));
}

std::map<std::int64_t, std::uint64_t> Configuration::nonzero_counts() const {
  std::map<std::int64_t, std::uint64_t> out;
  for (std::int64_t j = lo_; j <= max_occupied_; ++j) {
    const std::uint64_t c = counts_[static_cast<std::size_t>(j - lo_)];
    if (c) out[j] = c;
  }
  return out;
}

std::optional<std::int64_t> Configuration::ball_at_rank(std::uint64_t k) const {
  if (k == 0) throw ValidationError("ranks start at 1");
  if (k > total_) {
    if (barrier_) return *barrier_;
    return std::nullopt;
  }
  return ball_of_rank(k).location;
}

BallId Configuration::ball_of_rank(std::uint64_t k) const {
  if (k == 0 || k > total_) {
    throw ValidationError("ball_of_rank: rank outside the finite balls");
  }
  // Classic Fenwick k-th element descent over right-to-left indices.
  std::uint64_t pos = 0;
  std::uint64_t rem = k;
  const std::uint64_t cap = counts_.size();
  for (std::uint64_t bit = cap; bit > 0; bit >>= 1) {
    const std::uint64_t next = pos + bit;
    if (next <= cap && fw_[next] < rem) {
      rem -= fw_[next];
      pos = next;
    }
  }
  const std::int64_t loc = hi_ - static_cast<std::int64_t>(pos);
  // rank k = S_{loc+1} + height
  return BallId{loc, rem};
}

bool Configuration::has_ball(BallId ball) const {
  return ball.height >= 1 && ball.height <= count(ball.location);
}

std::uint64_t Configuration::rank_of(BallId ball) const {
  if (!has_ball(ball)) {
    std::ostringstream os;
    os << "rank_of: no ball at location " << ball.location << " height "
       << ball.height;
    throw ValidationError(os.str());
  }
  return count_at_or_right(ball.location + 1) + ball.height;
}

BallId Configuration::add_ball(std::int64_t location) {
  if (barrier_ && location <= *barrier_) {
    throw ValidationError("add_ball: location must be right of the barrier");
  }
  if (location < lo_) {
    rebuild(location, static_cast<std::uint64_t>(hi_ - location + 1));
  } else if (location > hi_) {
    rebuild(lo_, static_cast<std::uint64_t>(location - lo_ + 1));
  }
  auto& c = counts_[static_cast<std::size_t>(location - lo_)];
  ++c;
  ++total_;
  fenwick_add(index_of(location), 1);
  max_occupied_ = std::max(max_occupied_, location);
  return BallId{location, c};
}

StepOutcome Configuration::step_threshold(double v,
                                          ReproductionLaw::TailView& tail) {
  if (total_ == 0) {
    // Barrier-only configuration: the barrier holds every rank.
    const std::int64_t j = *barrier_;
    return {j, add_ball(j + 1)};
  }
  // Fenwick descent on the monotone predicate v < tail(S_j + 1), i.e. the
  // implied rank lies strictly right of the accumulated prefix.
  std::uint64_t pos = 0;
  std::uint64_t acc = 0;
  const std::uint64_t cap = counts_.size();
  for (std::uint64_t bit = cap; bit > 0; bit >>= 1) {
    const std::uint64_t next = pos + bit;
    if (next <= cap && v < tail(acc + fw_[next] + 1)) {
      acc += fw_[next];
      pos = next;
    }
  }
  if (pos == cap) {
    // Implied rank beyond every finite ball.
    if (barrier_) return {*barrier_, add_ball(*barrier_ + 1)};
    return {};
  }
  const std::int64_t j = hi_ - static_cast<std::int64_t>(pos);
  return {j, add_ball(j + 1)};
}

StepOutcome Configuration::step_at_rank(std::uint64_t rank) {
  if (rank == 0) throw ValidationError("ranks start at 1");
  if (rank > total_) {
    if (barrier_) return {*barrier_, add_ball(*barrier_ + 1)};
    return {};
  }
  const std::int64_t j = ball_of_rank(rank).location;
  return {j, add_ball(j + 1)};
}

std::optional<std::uint64_t> Configuration::implied_rank(
    double v, ReproductionLaw::TailView& tail) const {
  if (total_ == 0 || v < tail(total_ + 1)) return std::nullopt;
  // Smallest m in [1, total] with tail(m+1) <= v.
  std::uint64_t lo = 1, hi = total_;
  while (lo < hi) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (tail(mid + 1) <= v) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

Configuration Configuration::truncate_left(std::int64_t l) const {
  std::optional<std::int64_t> barrier;
  if (barrier_ && *barrier_ >= l) barrier = barrier_;
  std::map<std::int64_t, std::uint64_t> counts;
  for (const auto& [loc, c] : nonzero_counts()) {
    if (loc >= l) counts[loc] = c;
  }
  if (!barrier && counts.empty()) {
    throw ValidationError("truncate_left would empty the configuration");
  }
  return Configuration(barrier, counts);
}

bool Configuration::operator==(const Configuration& other) const {
  return barrier_ == other.barrier_ && total_ == other.total_ &&
         nonzero_counts() == other.nonzero_counts();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

Configuration Configuration::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("configuration JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("bins")) {
    throw ValidationError(
        "configuration JSON must be {\"barrier\": int|null, \"bins\": {...}}");
  }
  std::optional<std::int64_t> barrier;
  if (j.contains("barrier") && !j["barrier"].is_null()) {
    if (!j["barrier"].is_number_integer()) {
      throw ValidationError("configuration field 'barrier' must be an integer");
    }
    barrier = j["barrier"].get<std::int64_t>();
  }
  std::map<std::int64_t, std::uint64_t> counts;
  for (const auto& [key, val] : j["bins"].items()) {
    std::int64_t loc = 0;
    const auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), loc);
    if (ec != std::errc() || p != key.data() + key.size()) {
      throw ValidationError("configuration bin key '" + key +
                            "' is not an integer");
    }
    if (!val.is_number_unsigned() && !(val.is_number_integer() &&
                                       val.get<std::int64_t>() >= 0)) {
      throw ValidationError("configuration bin count for '" + key +
                            "' must be a nonnegative integer");
    }
    counts[loc] = val.get<std::uint64_t>();
  }
  return Configuration(barrier, counts);
}

std::string Configuration::to_json() const {
  nlohmann::json bins = nlohmann::json::object();
  for (const auto& [loc, c] : nonzero_counts()) {
    bins[std::to_string(loc)] = c;
  }
  nlohmann::json j;
  j["barrier"] = barrier_ ? nlohmann::json(*barrier_) : nlohmann::json(nullptr);
  j["bins"] = bins;
  return j.dump();
}

Configuration Configuration::from_spec(const std::string& spec) {
  if (spec == "barrier") return barrier_at(0);
  if (spec.rfind("flat:", 0) == 0) {
    const std::string rest = spec.substr(5);
    const auto comma = rest.find(',');
    if (comma == std::string::npos || rest.compare(comma + 1, 5, "left=") != 0) {
      throw ValidationError("flat spec must look like 'flat:A,left=L'");
    }
    std::uint64_t a = 0;
    std::int64_t left = 0;
    const std::string a_str = rest.substr(0, comma);
    const std::string l_str = rest.substr(comma + 6);
    auto r1 = std::from_chars(a_str.data(), a_str.data() + a_str.size(), a);
    auto r2 = std::from_chars(l_str.data(), l_str.data() + l_str.size(), left);
    if (r1.ec != std::errc() || r1.ptr != a_str.data() + a_str.size() ||
        r2.ec != std::errc() || r2.ptr != l_str.data() + l_str.size()) {
      throw ValidationError("flat spec must look like 'flat:A,left=L'");
    }
    return flat(a, left);
  }
  if (!spec.empty() && spec.front() == '{') return from_json(spec);
  throw ValidationError("unknown configuration spec '" + spec + "'");
}

}  // namespace ibm
