#include "ibm/law.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace ibm {
namespace {

// ---------------------------------------------------------------------------
// Certified integral enclosures for the power-law weight
//   f(x) = x^{-alpha} * ln(x+1)^{-logpow}
// f is positive, strictly decreasing and strictly convex on [1/2, inf) for
// alpha >= 1, logpow >= 0, which justifies the trapezoid/midpoint suffix-sum
// bracketing below.
// ---------------------------------------------------------------------------

struct Bracket {
  double lo, hi;
};

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGlNode[8] = {
    0.0950125098376374401853193, 0.2816035507792589132304605,
    0.4580167776572273863424194, 0.6178762444026437484466718,
    0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
constexpr double kGlWeight[8] = {
    0.1894506104550684962853967, 0.1826034150449235888667637,
    0.1691565193950025381893121, 0.1495959888165767320815017,
    0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};

template <class F>
double gauss16(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 8; ++i) {
    s += kGlWeight[i] * (f(c - h * kGlNode[i]) + f(c + h * kGlNode[i]));
  }
  return s * h;
}

// ln(n * e^t + 1) without overflow.
double log_shifted_exp(double log_n, double t, double n) {
  return log_n + t + std::log1p(std::exp(-t) / n);
}

// Relative slop granted to the composite quadrature when forming enclosures.
constexpr double kQuadSlop = 1e-11;

// I(n) = int_n^inf x^{-s} ln(x+1)^{-r} dx for s > 1, r >= 0, n >= 1/2.
// Substituting u = 1 - e^{-(s-1)t}, x = n e^t turns this into
//   n^{1-s}/(s-1) * int_0^1 psi(u) du,  psi(u) = ln(n e^{t(u)} + 1)^{-r},
// integrated over panels refined dyadically toward u = 1.
Bracket integral_tail_sgt1(double s, double r, double n) {
  const double scale = std::exp((1.0 - s) * std::log(n)) / (s - 1.0);
  if (r == 0.0) return {scale, scale};  // psi == 1 exactly
  const double log_n = std::log(n);
  const double inv = 1.0 / (s - 1.0);
  auto psi = [&](double u) {
    const double t = -std::log1p(-u) * inv;
    return std::pow(log_shifted_exp(log_n, t, n), -r);
  };
  double acc = 0.0;
  double a = 0.0;
  constexpr int kPanels = 64;
  for (int k = 0; k < kPanels; ++k) {
    const double b = 1.0 - std::ldexp(1.0, -(k + 1));
    acc += gauss16(psi, a, b);
    a = b;
  }
  // psi is decreasing, so the tail panel mass is at most psi(a)*(1-a).
  const double trunc = psi(a) * (1.0 - a);
  const double val = scale * acc;
  return {val * (1.0 - kQuadSlop), (val + scale * trunc) * (1.0 + kQuadSlop)};
}

// I(n) = int_n^inf x^{-1} ln(x+1)^{-r} dx for r > 1. With w = ln(x+1),
//   I = w0^{1-r}/(r-1) + int_{w0}^inf w^{-r}/(e^w - 1) dw,  w0 = ln(n+1),
// where the correction integrand decays like e^{-w}.
Bracket integral_tail_seq1(double r, double n) {
  const double w0 = std::log(n + 1.0);
  const double main = std::pow(w0, 1.0 - r) / (r - 1.0);
  auto corr = [&](double w) { return std::pow(w, -r) / std::expm1(w); };
  double acc = 0.0;
  double a = w0;
  double width = 1.0;
  double bound;
  for (;;) {
    acc += gauss16(corr, a, a + width);
    a += width;
    width *= 2.0;
    bound = std::pow(a, -r) * std::exp(-a) / (-std::expm1(-a));
    if (bound < 1e-18 * main || a > 800.0) break;
  }
  const double val = main + acc;
  return {val * (1.0 - kQuadSlop), (val + bound) * (1.0 + kQuadSlop)};
}

Bracket integral_tail(double alpha, double logpow, double n) {
  if (alpha > 1.0) return integral_tail_sgt1(alpha, logpow, n);
  return integral_tail_seq1(logpow, n);
}

double power_weight(double alpha, double logpow, std::uint64_t m) {
  const double x = static_cast<double>(m);
  if (logpow == 0.0) return std::pow(x, -alpha);
  return std::exp(-alpha * std::log(x) - logpow * std::log(std::log(x + 1.0)));
}

// Certified enclosure of sum_{m >= c} f(m), using that f is decreasing and
// convex: trapezoid gives the lower bound I(c) + f(c)/2, midpoint the upper
// bound I(c - 1/2); both are intersected with the plain monotone bracket.
Bracket suffix_sum_bracket(double alpha, double logpow, std::uint64_t c) {
  const double fc = power_weight(alpha, logpow, c);
  const Bracket ic = integral_tail(alpha, logpow, static_cast<double>(c));
  const Bracket ih = integral_tail(alpha, logpow, static_cast<double>(c) - 0.5);
  double lo = std::max(ic.lo + 0.5 * fc, ic.lo);
  double hi = std::min(ih.hi, ic.hi + fc);
  if (lo > hi) std::swap(lo, hi);
  return {lo, hi};
}

constexpr std::uint64_t kInitialCutoff = 1u << 16;
constexpr std::uint64_t kCacheCap = 1u << 24;

std::shared_ptr<const detail::PowerCache> build_power_cache(
    double alpha, double logpow, std::uint64_t cutoff) {
  auto cache = std::make_shared<detail::PowerCache>();
  cache->cutoff = cutoff;
  cache->sfx.resize(cutoff + 2);
  const Bracket rem = suffix_sum_bracket(alpha, logpow, cutoff + 1);
  cache->rem_halfwidth = 0.5 * (rem.hi - rem.lo);
  // Backward compensated summation keeps every suffix value accurate to a
  // few ulps regardless of cutoff.
  double s = 0.5 * (rem.lo + rem.hi);
  double comp = 0.0;
  cache->sfx[cutoff + 1] = s;
  for (std::uint64_t m = cutoff; m >= 1; --m) {
    const double y = power_weight(alpha, logpow, m) - comp;
    const double t = s + y;
    comp = (t - s) - y;
    s = t;
    cache->sfx[m] = s;
  }
  return cache;
}

std::uint64_t parse_u64(std::string_view s, const char* what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v == 0) {
    throw ValidationError(std::string("invalid ") + what + ": '" +
                          std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s, const char* what) {
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || buf.empty()) {
    throw ValidationError(std::string("invalid ") + what + ": '" + buf + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

std::string_view expect_key(std::string_view kv, std::string_view key) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string_view::npos || kv.substr(0, eq) != key) {
    throw ValidationError("expected '" + std::string(key) + "=...', got '" +
                          std::string(kv) + "'");
  }
  return kv.substr(eq + 1);
}

}  // namespace

struct ReproductionLaw::PowerState {
  double alpha = 0.0;
  double logpow = 0.0;
  double z = 0.0;
  double z_lo = 0.0;
  double z_hi = 0.0;
  mutable std::mutex mu;
  mutable std::shared_ptr<const detail::PowerCache> cache;
};

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

ReproductionLaw ReproductionLaw::table(std::vector<double> probs) {
  if (probs.empty()) throw ValidationError("table law needs at least one entry");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || p > 1.0) {
      throw ValidationError("table entries must lie in [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("table entries must sum to 1 (got " +
                          std::to_string(sum) + ")");
  }
  ReproductionLaw law;
  law.variant_ = LawVariant::table;
  law.probs_ = std::move(probs);
  std::uint64_t m = law.probs_.size();
  while (m > 1 && law.probs_[m - 1] == 0.0) --m;
  if (law.probs_[m - 1] == 0.0) throw ValidationError("table law has zero mass");
  law.support_max_ = m;
  law.table_sfx_.assign(law.probs_.size() + 2, 0.0);
  for (std::size_t i = law.probs_.size(); i >= 1; --i) {
    law.table_sfx_[i] = law.table_sfx_[i + 1] + law.probs_[i - 1];
  }
  law.monotone_ = true;
  for (std::size_t i = 1; i < law.probs_.size(); ++i) {
    if (law.probs_[i] > law.probs_[i - 1]) law.monotone_ = false;
  }
  return law;
}

ReproductionLaw ReproductionLaw::table_exact(
    std::vector<std::pair<std::int64_t, std::int64_t>> fractions) {
  // Exact sum-to-one check with running gcd reduction.
  std::int64_t num = 0, den = 1;
  std::vector<double> probs;
  probs.reserve(fractions.size());
  for (auto [n, d] : fractions) {
    if (d <= 0 || n < 0) throw ValidationError("table fractions must be >= 0");
    const std::int64_t g0 = std::gcd(n, d);
    if (g0 > 1) {
      n /= g0;
      d /= g0;
    }
    // num/den += n/d
    const std::int64_t g = std::gcd(den, d);
    const __int128 nn =
        static_cast<__int128>(num) * (d / g) + static_cast<__int128>(n) * (den / g);
    const __int128 dd = static_cast<__int128>(den) * (d / g);
    if (dd > INT64_MAX || nn > INT64_MAX) {
      throw ValidationError("table fraction denominators too large");
    }
    num = static_cast<std::int64_t>(nn);
    den = static_cast<std::int64_t>(dd);
    const std::int64_t g2 = std::gcd(num, den);
    num /= g2;
    den /= g2;
    probs.push_back(static_cast<double>(n) / static_cast<double>(d));
  }
  if (num != den) {
    throw ValidationError("table fractions must sum to exactly 1");
  }
  ReproductionLaw law = table(std::move(probs));
  law.fractions_ = std::move(fractions);
  return law;
}

ReproductionLaw ReproductionLaw::geometric(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw ValidationError("geometric law requires q in (0,1)");
  }
  ReproductionLaw law;
  law.variant_ = LawVariant::geometric;
  law.q_ = q;
  law.monotone_ = true;
  law.support_max_ = 0;
  return law;
}

ReproductionLaw ReproductionLaw::uniform_range(std::uint64_t n) {
  if (n == 0) throw ValidationError("uniform law requires N >= 1");
  ReproductionLaw law;
  law.variant_ = LawVariant::uniform_range;
  law.uniform_n_ = n;
  law.monotone_ = true;
  law.support_max_ = n;
  return law;
}

ReproductionLaw ReproductionLaw::power(double alpha, double logpow) {
  if (!(alpha >= 1.0)) {
    throw ValidationError("power law requires alpha >= 1");
  }
  if (!(logpow >= 0.0)) {
    throw ValidationError("power law requires logpow >= 0");
  }
  if (alpha == 1.0 && !(logpow > 1.0)) {
    throw ValidationError(
        "power law with alpha=1 requires logpow > 1 for normalizability");
  }
  ReproductionLaw law;
  law.variant_ = LawVariant::power;
  law.alpha_ = alpha;
  law.logpow_ = logpow;
  law.monotone_ = true;
  law.support_max_ = 0;
  auto state = std::make_shared<PowerState>();
  state->alpha = alpha;
  state->logpow = logpow;
  state->cache = build_power_cache(alpha, logpow, kInitialCutoff);
  // Z is frozen here: every pmf/tail value shares this normalization.
  state->z = state->cache->sfx[1];
  const double hw = state->cache->rem_halfwidth + state->z * 1e-14;
  state->z_lo = state->z - hw;
  state->z_hi = state->z + hw;
  law.power_ = std::move(state);
  return law;
}

ReproductionLaw ReproductionLaw::parse(std::string_view spec) {
  const std::size_t colon = spec.find(':');
  if (colon == std::string_view::npos) {
    throw ValidationError("law spec must look like '<variant>:<params>', got '" +
                          std::string(spec) + "'");
  }
  const std::string_view kind = spec.substr(0, colon);
  const std::string_view rest = spec.substr(colon + 1);
  if (kind == "table") {
    const auto parts = split(rest, ',');
    const bool fractional =
        std::any_of(parts.begin(), parts.end(), [](std::string_view p) {
          return p.find('/') != std::string_view::npos;
        });
    if (fractional) {
      std::vector<std::pair<std::int64_t, std::int64_t>> fracs;
      for (auto p : parts) {
        const std::size_t sl = p.find('/');
        if (sl == std::string_view::npos) {
          throw ValidationError(
              "mixed fraction/decimal table entries are not supported");
        }
        fracs.emplace_back(
            static_cast<std::int64_t>(parse_u64(p.substr(0, sl), "numerator")),
            static_cast<std::int64_t>(parse_u64(p.substr(sl + 1), "denominator")));
      }
      return table_exact(std::move(fracs));
    }
    std::vector<double> probs;
    for (auto p : parts) probs.push_back(parse_double(p, "table entry"));
    return table(std::move(probs));
  }
  if (kind == "geometric") {
    return geometric(parse_double(expect_key(rest, "q"), "q"));
  }
  if (kind == "uniform") {
    return uniform_range(parse_u64(expect_key(rest, "N"), "N"));
  }
  if (kind == "power") {
    const auto parts = split(rest, ',');
    if (parts.empty() || parts.size() > 2) {
      throw ValidationError("power law takes alpha=<v>[,logpow=<v>]");
    }
    const double alpha = parse_double(expect_key(parts[0], "alpha"), "alpha");
    double logpow = 0.0;
    if (parts.size() == 2) {
      logpow = parse_double(expect_key(parts[1], "logpow"), "logpow");
    }
    return power(alpha, logpow);
  }
  throw ValidationError("unknown law variant '" + std::string(kind) + "'");
}

// ---------------------------------------------------------------------------
// pmf / tail
// ---------------------------------------------------------------------------

double ReproductionLaw::pmf(std::uint64_t n) const {
  if (n == 0) return 0.0;
  switch (variant_) {
    case LawVariant::table:
      return n <= probs_.size() ? probs_[n - 1] : 0.0;
    case LawVariant::geometric:
      return (1.0 - q_) * std::pow(q_, static_cast<double>(n - 1));
    case LawVariant::uniform_range:
      return n <= uniform_n_ ? 1.0 / static_cast<double>(uniform_n_) : 0.0;
    case LawVariant::power:
      return power_weight(alpha_, logpow_, n) / power_->z;
  }
  return 0.0;
}

std::shared_ptr<const detail::PowerCache> ReproductionLaw::power_snapshot()
    const {
  std::lock_guard<std::mutex> lock(power_->mu);
  return power_->cache;
}

std::shared_ptr<const detail::PowerCache> ReproductionLaw::power_extend(
    std::uint64_t need) const {
  std::lock_guard<std::mutex> lock(power_->mu);
  if (need <= power_->cache->cutoff || power_->cache->cutoff >= kCacheCap) {
    return power_->cache;
  }
  std::uint64_t cutoff = std::max(power_->cache->cutoff * 2, std::bit_ceil(need));
  cutoff = std::min(cutoff, kCacheCap);
  power_->cache = build_power_cache(power_->alpha, power_->logpow, cutoff);
  return power_->cache;
}

double ReproductionLaw::tail(std::uint64_t n) const {
  if (n <= 1) return variant_ == LawVariant::table ? table_sfx_[1] : 1.0;
  switch (variant_) {
    case LawVariant::table:
      return n <= probs_.size() + 1 ? table_sfx_[n] : 0.0;
    case LawVariant::geometric:
      return std::pow(q_, static_cast<double>(n - 1));
    case LawVariant::uniform_range:
      return n <= uniform_n_
                 ? static_cast<double>(uniform_n_ - n + 1) /
                       static_cast<double>(uniform_n_)
                 : 0.0;
    case LawVariant::power: {
      auto snap = power_snapshot();
      if (n > snap->cutoff + 1) snap = power_extend(n);
      if (n <= snap->cutoff + 1) return snap->sfx[n] / power_->z;
      // Beyond the hard cache cap: certified bracket midpoint per call.
      const Bracket b = suffix_sum_bracket(alpha_, logpow_, n);
      return 0.5 * (b.lo + b.hi) / power_->z;
    }
  }
  return 0.0;
}

TailBracket ReproductionLaw::tail_bracket(std::uint64_t n) const {
  if (variant_ != LawVariant::power) {
    const double t = tail(n);
    const double slop = 4e-16 * t;
    return {t - slop, t + slop};
  }
  const TailBracket suf = power_suffix_bracket(n);
  return {suf.lo / power_->z_hi, suf.hi / power_->z_lo};
}

TailBracket ReproductionLaw::power_suffix_bracket(std::uint64_t n) const {
  if (variant_ != LawVariant::power) {
    throw ValidationError("power_suffix_bracket: not a power law");
  }
  if (n == 0) n = 1;
  const auto snap = power_snapshot();
  if (n <= snap->cutoff + 1) {
    const double v = snap->sfx[n];
    const double slop = snap->rem_halfwidth + 1e-13 * v;
    return {v - slop, v + slop};
  }
  const Bracket b = suffix_sum_bracket(alpha_, logpow_, n);
  return {b.lo, b.hi};
}

TailBracket ReproductionLaw::power_z_bracket() const {
  if (variant_ != LawVariant::power) {
    throw ValidationError("power_z_bracket: not a power law");
  }
  return {power_->z_lo, power_->z_hi};
}

bool ReproductionLaw::has_first_moment() const {
  switch (variant_) {
    case LawVariant::table:
    case LawVariant::uniform_range:
    case LawVariant::geometric:
      return true;
    case LawVariant::power:
      return alpha_ > 2.0 || (alpha_ == 2.0 && logpow_ > 1.0);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Rank sampling
// ---------------------------------------------------------------------------

std::uint64_t ReproductionLaw::rank_of_threshold(double v) const {
  if (!(v > 0.0 && v < 1.0)) {
    throw ValidationError("threshold must lie in (0,1)");
  }
  switch (variant_) {
    case LawVariant::table:
    case LawVariant::uniform_range: {
      std::uint64_t lo = 1, hi = support_max_;
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
    case LawVariant::geometric: {
      // Closed-form start, then exact staircase adjustment.
      double guess = std::floor(std::log(v) / std::log(q_));
      std::uint64_t k =
          guess < 0.0 ? 1 : static_cast<std::uint64_t>(guess) + 1;
      if (k < 1) k = 1;
      while (tail(k + 1) > v) ++k;
      while (k > 1 && tail(k) <= v) --k;
      return k;
    }
    case LawVariant::power: {
      const double zv = v * power_->z;
      auto snap = power_snapshot();
      while (snap->sfx[snap->cutoff + 1] > zv) {
        if (snap->cutoff >= kCacheCap) {
          throw BudgetError(
              "rank_of_threshold: implied rank exceeds the suffix cache cap "
              "for this heavy-tailed law");
        }
        snap = power_extend(snap->cutoff * 2);
      }
      std::uint64_t lo = 1, hi = snap->cutoff;
      while (lo < hi) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        if (snap->sfx[mid + 1] <= zv) {
          hi = mid;
        } else {
          lo = mid + 1;
        }
      }
      return lo;
    }
  }
  return 1;
}

std::uint64_t ReproductionLaw::conditional_sample(std::uint64_t a,
                                                  std::uint64_t b,
                                                  RngStream& rng) const {
  if (a >= b) throw ValidationError("conditional_sample requires a < b");
  const double ta = tail(a + 1);
  const double tb = tail(b + 1);
  const double mass = ta - tb;
  if (!(mass > 0.0)) {
    throw ValidationError(
        "conditional_sample: zero-mass rank interval (unusable coupling "
        "interval)");
  }
  const double target = tb + rng.uniform01() * mass;
  // Smallest k in (a, b] with tail(k+1) <= target.
  std::uint64_t lo = a + 1, hi = b;
  while (lo < hi) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (tail(mid + 1) <= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

std::optional<std::vector<std::pair<std::int64_t, std::int64_t>>>
ReproductionLaw::exact_entries() const {
  if (fractions_) return fractions_;
  if (variant_ == LawVariant::uniform_range &&
      uniform_n_ <= static_cast<std::uint64_t>(INT64_MAX)) {
    std::vector<std::pair<std::int64_t, std::int64_t>> out(
        uniform_n_, {1, static_cast<std::int64_t>(uniform_n_)});
    return out;
  }
  return std::nullopt;
}

std::string ReproductionLaw::spec_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (variant_) {
    case LawVariant::table:
      os << "table:";
      if (fractions_) {
        for (std::size_t i = 0; i < fractions_->size(); ++i) {
          if (i) os << ',';
          os << (*fractions_)[i].first << '/' << (*fractions_)[i].second;
        }
      } else {
        for (std::size_t i = 0; i < probs_.size(); ++i) {
          if (i) os << ',';
          os << probs_[i];
        }
      }
      break;
    case LawVariant::geometric:
      os << "geometric:q=" << q_;
      break;
    case LawVariant::uniform_range:
      os << "uniform:N=" << uniform_n_;
      break;
    case LawVariant::power:
      os << "power:alpha=" << alpha_;
      if (logpow_ != 0.0) os << ",logpow=" << logpow_;
      break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// TailView
// ---------------------------------------------------------------------------

ReproductionLaw::TailView::TailView(const ReproductionLaw& law) : law_(&law) {
  if (law.variant_ == LawVariant::power) {
    snap_ = law.power_snapshot();
    sfx_ = snap_->sfx.data();
    limit_ = snap_->cutoff + 1;
    inv_z_ = 1.0 / law.power_->z;
  }
}

double ReproductionLaw::TailView::slow_power(std::uint64_t n) {
  const double v = law_->tail(n);  // extends the shared cache if possible
  snap_ = law_->power_snapshot();
  sfx_ = snap_->sfx.data();
  limit_ = snap_->cutoff + 1;
  return v;
}

}  // namespace ibm
