#include "ibm/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace ibm {
namespace {

constexpr std::uint64_t kMaxInMemoryLog = 10'000'000;

void format_double(char* buf, std::size_t n, double v) {
  std::snprintf(buf, n, "%.17g", v);
}

}  // namespace

const BinWatch& SimulationRun::watch(std::int64_t bin) const {
  for (const auto& w : watches) {
    if (w.bin == bin) return w;
  }
  throw ValidationError("bin " + std::to_string(bin) +
                        " was not watched during this run");
}

SimulationRun run(const ReproductionLaw& law, const Configuration& initial,
                  const RunOptions& options) {
  if (options.horizon > kMaxInMemoryLog && options.keep_log && !options.sink) {
    throw ValidationError(
        "event logs are kept in memory only up to 1e7 steps; pass a sink to "
        "stream longer runs");
  }
  const std::int64_t reach =
      initial.front() + static_cast<std::int64_t>(options.horizon) + 2;
  if (reach > std::numeric_limits<std::int32_t>::max()) {
    throw ValidationError("horizon too large for the packed event log");
  }

  SimulationRun out{law, initial, initial, options.horizon, options.seed};
  out.genealogy.tracked = options.track_genealogy;
  out.watches.reserve(options.watch_bins.size());
  for (const std::int64_t b : options.watch_bins) {
    out.watches.push_back(BinWatch{b, initial.count(b), 0, {}});
  }

  Configuration& cfg = out.final_config;
  auto tail = law.tail_view();
  RngStream rng(options.seed);
  const bool keep = options.keep_log && options.horizon <= kMaxInMemoryLog;
  if (keep) out.log.reserve(options.horizon);

  for (std::uint64_t n = 1; n <= options.horizon; ++n) {
    const double v = rng.uniform01();
    const auto rank = cfg.implied_rank(v, tail);
    const auto outcome = cfg.step_threshold(v, tail);

    StepRecord rec;
    rec.v = v;
    if (outcome.added()) {
      ++out.added_steps;
      rec.new_loc = static_cast<std::int32_t>(outcome.new_ball->location);
      rec.new_height = static_cast<std::uint32_t>(outcome.new_ball->height);
      if (rank) {
        rec.parent_kind = StepRecord::Parent::ball;
        rec.parent_loc = static_cast<std::int32_t>(*outcome.selected_bin);
        // heights in the parent bin are unchanged by the step; the parent is
        // the (rank - S_pre(J+1))-th ball from the bottom of bin J
        const std::uint64_t s_after =
            cfg.count_at_or_right(*outcome.selected_bin + 1);
        rec.parent_height = static_cast<std::uint32_t>(*rank - (s_after - 1));
        if (out.genealogy.tracked) {
          ++out.genealogy.offspring[BallId{*outcome.selected_bin,
                                           rec.parent_height}];
        }
      } else {
        rec.parent_kind = StepRecord::Parent::barrier;
        if (out.genealogy.tracked) ++out.genealogy.barrier_offspring;
      }
      for (auto& w : out.watches) {
        if (w.bin == outcome.new_ball->location) {
          w.increment_times.push_back(n);
        }
      }
    } else {
      ++out.noop_steps;
    }
    if (keep) out.log.push_back(rec);
    if (options.sink) options.sink(n, rec);
  }
  for (auto& w : out.watches) w.final_count = cfg.count(w.bin);
  return out;
}

double offspring_bound(const ReproductionLaw& law, std::uint64_t k) {
  if (k == 0) throw ValidationError("ranks start at 1");
  constexpr std::uint64_t kCap = 200'000'000;
  double head = 0.0, head_comp = 0.0;  // mu([1, l]) by compensated summation
  double sum = 0.0, comp = 0.0;
  for (std::uint64_t l = 1; l <= kCap; ++l) {
    const double p = law.pmf(l);
    {
      const double y = p - head_comp;
      const double t = head + y;
      head_comp = (t - head) - y;
      head = t;
    }
    if (l >= k) {
      const double term = (p == 0.0 && head == 0.0) ? 0.0 : p / head;
      const double y = term - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    if (law.support_max() != 0 && l >= law.support_max()) return sum;
    if (l >= k) {
      // Remaining mass a = tail(l+1). The remainder lies in
      // [-ln(1-a) - w, -ln(1-a)] with w = mu(l+1) * a / (1-a)^2, by
      // integral comparison of the staircase sum_{m>l} mu(m)/mu([1,m]).
      const double a = 1.0 - head;
      if (a <= 0.0) return sum;
      const double w =
          law.pmf(l + 1) * a / ((1.0 - a) * (1.0 - a));
      if (w < 1e-9) {
        return sum - std::log1p(-a) - 0.5 * w;
      }
    }
  }
  throw BudgetError("offspring_bound: truncation target not reached");
}

std::uint64_t offspring_of_initial_rank(const SimulationRun& run,
                                        std::uint64_t k) {
  if (!run.genealogy.tracked) {
    throw ValidationError("genealogy was not tracked during this run");
  }
  const BallId ball = run.initial.ball_of_rank(k);
  const auto it = run.genealogy.offspring.find(ball);
  return it == run.genealogy.offspring.end() ? 0 : it->second;
}

std::vector<std::uint64_t> log_checkpoints(std::uint64_t n_max) {
  std::vector<std::uint64_t> out;
  for (int i = 0;; ++i) {
    const auto n = static_cast<std::uint64_t>(
        std::ceil(std::pow(10.0, static_cast<double>(i) / 4.0)));
    if (n > n_max) break;
    if (out.empty() || out.back() != n) out.push_back(n);
  }
  if (out.empty() || out.back() != n_max) out.push_back(n_max);
  return out;
}

FreezingDiagnostic freezing_diagnostic(const SimulationRun& run,
                                       std::int64_t bin) {
  const BinWatch& w = run.watch(bin);
  FreezingDiagnostic d;
  d.bin = bin;
  d.last_increment = w.last_increment();
  d.window_start = run.horizon / 2;
  d.frozen_within_horizon =
      !d.last_increment || *d.last_increment <= d.window_start;
  for (const std::uint64_t n : log_checkpoints(run.horizon)) {
    const auto upto = std::upper_bound(w.increment_times.begin(),
                                       w.increment_times.end(), n);
    d.checkpoints.emplace_back(
        n, w.initial_count +
               static_cast<std::uint64_t>(upto - w.increment_times.begin()));
  }
  return d;
}

Configuration replay(const Configuration& initial,
                     const std::vector<StepRecord>& log) {
  Configuration cfg = initial;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const StepRecord& rec = log[i];
    if (!rec.added()) continue;
    const BallId b = cfg.add_ball(rec.new_loc);
    if (b.height != rec.new_height) {
      throw InvariantError("replay: height mismatch at step " +
                           std::to_string(i + 1));
    }
  }
  return cfg;
}

void write_event_csv(std::ostream& os, const std::vector<StepRecord>& log) {
  os << "n,V,selected_bin,new_loc,new_height,parent_loc,parent_height\n";
  char vbuf[32];
  for (std::size_t i = 0; i < log.size(); ++i) {
    const StepRecord& r = log[i];
    format_double(vbuf, sizeof vbuf, r.v);
    os << (i + 1) << ',' << vbuf << ',';
    if (r.added()) {
      os << (static_cast<std::int64_t>(r.new_loc) - 1) << ',' << r.new_loc
         << ',' << r.new_height << ',';
      if (r.parent_kind == StepRecord::Parent::ball) {
        os << r.parent_loc << ',' << r.parent_height;
      } else {
        os << ',';
      }
    } else {
      os << ",,,,";
    }
    os << '\n';
  }
}

std::vector<StepRecord> read_event_csv(std::istream& is) {
  std::vector<StepRecord> out;
  std::string line;
  if (!std::getline(is, line)) return out;
  if (line.rfind("n,V,", 0) != 0) {
    throw ValidationError("event CSV: unexpected header '" + line + "'");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t next = line.find(',', pos);
      if (next == std::string::npos) {
        cells.push_back(line.substr(pos));
        break;
      }
      cells.push_back(line.substr(pos, next - pos));
      pos = next + 1;
    }
    if (cells.size() != 7) {
      throw ValidationError("event CSV: expected 7 columns, got " +
                            std::to_string(cells.size()));
    }
    StepRecord r;
    r.v = std::stod(cells[1]);
    if (!cells[3].empty()) {
      r.new_loc = static_cast<std::int32_t>(std::stol(cells[3]));
      r.new_height = static_cast<std::uint32_t>(std::stoul(cells[4]));
      if (!cells[5].empty()) {
        r.parent_kind = StepRecord::Parent::ball;
        r.parent_loc = static_cast<std::int32_t>(std::stol(cells[5]));
        r.parent_height = static_cast<std::uint32_t>(std::stoul(cells[6]));
      } else {
        r.parent_kind = StepRecord::Parent::barrier;
      }
    }
    out.push_back(r);
  }
  return out;
}

std::string run_summary_json(const SimulationRun& run) {
  nlohmann::json j;
  j["schema"] = "ibm.run_summary.v1";
  j["law"] = run.law.spec_string();
  j["seed"] = run.seed;
  j["horizon"] = run.horizon;
  j["initial"] = nlohmann::json::parse(run.initial.to_json());
  j["barrier"] = run.final_config.barrier()
                     ? nlohmann::json(*run.final_config.barrier())
                     : nlohmann::json(nullptr);
  j["front"] = run.final_config.front();
  j["total_balls"] = run.final_config.total_balls();
  j["added_steps"] = run.added_steps;
  j["noop_steps"] = run.noop_steps;
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [loc, c] : run.final_config.nonzero_counts()) {
    counts[std::to_string(loc)] = c;
  }
  j["final_counts"] = counts;
  nlohmann::json watches = nlohmann::json::array();
  for (const auto& w : run.watches) {
    const auto diag = freezing_diagnostic(run, w.bin);
    nlohmann::json jw;
    jw["bin"] = w.bin;
    jw["initial_count"] = w.initial_count;
    jw["final_count"] = w.final_count;
    jw["increments"] = w.increment_times.size();
    jw["last_increment"] = w.last_increment()
                               ? nlohmann::json(*w.last_increment())
                               : nlohmann::json(nullptr);
    jw["frozen_within_horizon"] = diag.frozen_within_horizon;
    jw["window"] = {diag.window_start, run.horizon};
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [n, c] : diag.checkpoints) trace.push_back({n, c});
    jw["trace"] = trace;
    watches.push_back(jw);
  }
  j["watches"] = watches;
  nlohmann::json g;
  g["tracked"] = run.genealogy.tracked;
  if (run.genealogy.tracked) {
    g["barrier_offspring"] = run.genealogy.barrier_offspring;
    g["balls_with_offspring"] = run.genealogy.offspring.size();
  }
  j["genealogy"] = g;
  return j.dump(2);
}

}  // namespace ibm
