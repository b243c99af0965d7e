#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/corpus.hpp"
#include "mdrl/rule_policy.hpp"
#include "mdrl/trpo.hpp"

namespace mdrl {

struct RuleBaseline {
  double success_rate = 0.0;
  double success_stderr = 0.0;
  double mean_length = 0.0;
  std::size_t episodes = 0;
};

// Monte Carlo measurement of the scripted baseline in its never-confirming
// form: the reference the learned policies must outperform.
inline RuleBaseline measure_rule_based(const DomainSpec& domain,
                                       std::size_t n_episodes, double noise_p,
                                       std::uint64_t seed) {
  if (n_episodes < 1) throw config_error("measure_rule_based: n must be >= 1");
  RewardConfig cfg;
  Rng rng(mix_seed(seed, hash_string("rule:" + domain.name)));
  RuleBaseline b;
  b.episodes = n_episodes;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    RuleEpisode ep = run_rule_based_episode(
        domain, cfg, noise_p, kNonConfirmingThreshold, rng.derive(i));
    b.success_rate += ep.success ? 1.0 : 0.0;
    b.mean_length += double(ep.turns);
  }
  b.success_rate /= double(n_episodes);
  b.mean_length /= double(n_episodes);
  b.success_stderr = std::sqrt(b.success_rate * (1.0 - b.success_rate) /
                               double(n_episodes));
  return b;
}

// ---------------------------------------------------------------------------
// Iteration-log CSV. One row per (iteration, domain); checkpoint rows are
// re-identified from (checkpoint interval, budget) when reading back.

inline const char* kCsvHeader =
    "run_id,mode,domain,seed,dialogs_seen,success_rate,avg_length,mean_kl,"
    "surrogate_gain,accepted";

inline void write_rows_csv(const std::vector<IterationRow>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open CSV for write: " + path);
  out << kCsvHeader << "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%s,%s,%s,%llu,%zu,%.6f,%.4f,%.8g,%.8g,%d\n",
                  r.run_id.c_str(), r.mode.c_str(), r.domain.c_str(),
                  static_cast<unsigned long long>(r.seed), r.dialogs_seen,
                  r.success_rate, r.avg_length, r.mean_kl, r.surrogate_gain,
                  r.accepted ? 1 : 0);
    out << buf;
  }
  if (!out) throw config_error("CSV write failed: " + path);
}

inline std::vector<IterationRow> read_rows_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw artifact_missing_error("cannot open CSV: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw config_error("unexpected CSV header in " + path);
  std::vector<IterationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    IterationRow r;
    std::string field;
    auto next = [&](const char* what) {
      if (!std::getline(ls, field, ','))
        throw config_error(std::string("CSV missing field ") + what + " in " +
                           path);
      return field;
    };
    r.run_id = next("run_id");
    r.mode = next("mode");
    r.domain = next("domain");
    r.seed = std::stoull(next("seed"));
    r.dialogs_seen = std::stoull(next("dialogs_seen"));
    r.success_rate = std::stod(next("success_rate"));
    r.avg_length = std::stod(next("avg_length"));
    r.mean_kl = std::stod(next("mean_kl"));
    r.surrogate_gain = std::stod(next("surrogate_gain"));
    r.accepted = std::stoi(next("accepted")) != 0;
    rows.push_back(std::move(r));
  }
  return rows;
}

// Replays the trainer's checkpoint marking over rows of ONE (run, domain)
// ordered by dialogs_seen, so evaluation rows can be recovered from raw CSV.
inline void mark_checkpoints(std::vector<IterationRow>& rows,
                             std::size_t interval, std::size_t budget) {
  std::size_t next_mark = interval;
  for (auto& r : rows) {
    r.is_checkpoint = r.dialogs_seen >= next_mark || r.dialogs_seen >= budget;
    if (r.is_checkpoint)
      while (next_mark <= r.dialogs_seen) next_mark += interval;
  }
}

struct DialogsToBeat {
  bool reached = false;
  double dialogs = 0.0;  // capped at budget when not reached
};

// First dialogs-seen at which held-out success strictly exceeds the
// reference, linearly interpolated between checkpoint evaluations.
inline DialogsToBeat dialogs_to_beat(const std::vector<IterationRow>& rows,
                                     double reference, std::size_t budget) {
  std::vector<const IterationRow*> cps;
  for (const auto& r : rows)
    if (r.is_checkpoint) cps.push_back(&r);
  if (cps.empty()) throw config_error("dialogs_to_beat: no checkpoints");
  DialogsToBeat out;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (cps[i]->success_rate > reference) {
      out.reached = true;
      if (i == 0) {
        out.dialogs = double(cps[0]->dialogs_seen);
      } else {
        double s0 = cps[i - 1]->success_rate, s1 = cps[i]->success_rate;
        double d0 = double(cps[i - 1]->dialogs_seen);
        double d1 = double(cps[i]->dialogs_seen);
        out.dialogs =
            s1 > s0 ? d0 + (reference - s0) / (s1 - s0) * (d1 - d0) : d1;
      }
      return out;
    }
  }
  out.reached = false;
  out.dialogs = double(budget);
  return out;
}

// ---------------------------------------------------------------------------
// Aggregated results across seeds.

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr m;
  m.n = xs.size();
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= double(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stderr_ = std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
  }
  return m;
}

struct MetricsCell {
  MeanStderr success_at_cut, success_final;
  MeanStderr beat;  // dialogs-to-beat, not-reached seeds capped at budget
  std::size_t not_reached = 0;
  MeanStderr length_at_cut, length_final;
};

// Per (mode, domain) aggregation plus the unweighted Average row.
struct MetricsTable {
  std::vector<std::string> modes;    // row group order
  std::vector<std::string> domains;  // column/domain order
  std::map<std::pair<std::string, std::string>, MetricsCell> cells;
  std::map<std::string, RuleBaseline> rule;  // per domain

  const MetricsCell& cell(const std::string& mode,
                          const std::string& domain) const {
    auto it = cells.find({mode, domain});
    if (it == cells.end())
      throw config_error("metrics: no cell for " + mode + "/" + domain);
    return it->second;
  }
};

// Nearest checkpoint row at-or-before the cut (the trainer always evaluates
// at the cut when the interval divides it).
inline const IterationRow* checkpoint_at(
    const std::vector<IterationRow>& rows, std::size_t cut) {
  const IterationRow* best = nullptr;
  for (const auto& r : rows)
    if (r.is_checkpoint && r.dialogs_seen <= cut &&
        (!best || r.dialogs_seen > best->dialogs_seen))
      best = &r;
  return best;
}

inline const IterationRow* final_checkpoint(
    const std::vector<IterationRow>& rows) {
  const IterationRow* best = nullptr;
  for (const auto& r : rows)
    if (r.is_checkpoint &&
        (!best || r.dialogs_seen > best->dialogs_seen))
      best = &r;
  return best;
}

// Builds the aggregate table from per-seed row logs. `runs` maps (mode,
// domain) to one row vector per seed (checkpoint flags already marked).
inline MetricsTable build_metrics_table(
    const std::vector<std::string>& modes,
    const std::vector<std::string>& domains,
    const std::map<std::pair<std::string, std::string>,
                   std::vector<std::vector<IterationRow>>>& runs,
    const std::map<std::string, RuleBaseline>& rule, std::size_t cut,
    std::size_t budget) {
  MetricsTable table;
  table.modes = modes;
  table.domains = domains;
  table.rule = rule;
  for (const auto& mode : modes) {
    for (const auto& domain : domains) {
      auto it = runs.find({mode, domain});
      if (it == runs.end())
        throw config_error("metrics: missing runs for " + mode + "/" +
                           domain);
      MetricsCell cell;
      std::vector<double> s_cut, s_fin, beat, l_cut, l_fin;
      for (const auto& rows : it->second) {
        const IterationRow* rc = checkpoint_at(rows, cut);
        const IterationRow* rf = final_checkpoint(rows);
        if (!rc || !rf)
          throw config_error("metrics: run has no checkpoints for " + mode +
                             "/" + domain);
        s_cut.push_back(rc->success_rate);
        l_cut.push_back(rc->avg_length);
        s_fin.push_back(rf->success_rate);
        l_fin.push_back(rf->avg_length);
        DialogsToBeat b =
            dialogs_to_beat(rows, rule.at(domain).success_rate, budget);
        beat.push_back(b.dialogs);
        if (!b.reached) ++cell.not_reached;
      }
      cell.success_at_cut = mean_stderr(s_cut);
      cell.success_final = mean_stderr(s_fin);
      cell.beat = mean_stderr(beat);
      cell.length_at_cut = mean_stderr(l_cut);
      cell.length_final = mean_stderr(l_fin);
      table.cells[{mode, domain}] = cell;
    }
  }
  return table;
}

inline MetricsCell average_row(const MetricsTable& t,
                               const std::string& mode) {
  MetricsCell avg;
  std::size_t n = t.domains.size();
  auto acc = [n](MeanStderr MetricsCell::*field, const MetricsTable& t,
                 const std::string& mode) {
    MeanStderr m;
    double mean = 0.0, var = 0.0;
    for (const auto& d : t.domains) {
      const MeanStderr& c = t.cell(mode, d).*field;
      mean += c.mean;
      var += c.stderr_ * c.stderr_;
    }
    m.mean = mean / double(n);
    m.stderr_ = std::sqrt(var) / double(n);
    m.n = n;
    return m;
  };
  avg.success_at_cut = acc(&MetricsCell::success_at_cut, t, mode);
  avg.success_final = acc(&MetricsCell::success_final, t, mode);
  avg.beat = acc(&MetricsCell::beat, t, mode);
  avg.length_at_cut = acc(&MetricsCell::length_at_cut, t, mode);
  avg.length_final = acc(&MetricsCell::length_final, t, mode);
  for (const auto& d : t.domains)
    avg.not_reached += t.cell(mode, d).not_reached;
  return avg;
}

// report.csv: one row per (mode, domain) plus Average rows.
inline void write_report_csv(const MetricsTable& t, std::size_t cut,
                             std::size_t budget, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open report CSV: " + path);
  out << "mode,domain,success_at_" << cut << ",success_at_" << cut
      << "_stderr,dialogs_to_beat,dialogs_to_beat_stderr,not_reached,"
      << "success_at_" << budget << ",success_at_" << budget
      << "_stderr,length_at_" << cut << ",length_at_" << budget
      << ",rule_success,rule_length\n";
  char buf[512];
  auto emit = [&](const std::string& mode, const std::string& domain,
                  const MetricsCell& c, const RuleBaseline* rb) {
    std::snprintf(buf, sizeof buf,
                  "%s,%s,%.6f,%.6f,%.1f,%.1f,%zu,%.6f,%.6f,%.4f,%.4f,%.6f,"
                  "%.4f\n",
                  mode.c_str(), domain.c_str(), c.success_at_cut.mean,
                  c.success_at_cut.stderr_, c.beat.mean, c.beat.stderr_,
                  c.not_reached, c.success_final.mean,
                  c.success_final.stderr_, c.length_at_cut.mean,
                  c.length_final.mean, rb ? rb->success_rate : 0.0,
                  rb ? rb->mean_length : 0.0);
    out << buf;
  };
  for (const auto& mode : t.modes) {
    for (const auto& d : t.domains)
      emit(mode, d, t.cell(mode, d), &t.rule.at(d));
    MetricsCell avg = average_row(t, mode);
    double rs = 0.0, rl = 0.0;
    for (const auto& d : t.domains) {
      rs += t.rule.at(d).success_rate;
      rl += t.rule.at(d).mean_length;
    }
    RuleBaseline ravg;
    ravg.success_rate = rs / double(t.domains.size());
    ravg.mean_length = rl / double(t.domains.size());
    emit(mode, "Average", avg, &ravg);
  }
}

inline std::string format_report_text(const MetricsTable& t, std::size_t cut,
                                      std::size_t budget) {
  std::ostringstream out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-8s %-12s %14s %16s %14s %10s %10s\n",
                "mode", "domain",
                ("succ@" + std::to_string(cut)).c_str(), "dialogs-to-beat",
                ("succ@" + std::to_string(budget)).c_str(),
                ("len@" + std::to_string(cut)).c_str(),
                ("len@" + std::to_string(budget)).c_str());
  out << buf;
  auto line = [&](const std::string& mode, const std::string& domain,
                  const MetricsCell& c) {
    std::string beat =
        c.not_reached > 0
            ? ">" + std::to_string(std::size_t(c.beat.mean))
            : std::to_string(std::size_t(c.beat.mean + 0.5));
    std::snprintf(buf, sizeof buf,
                  "%-8s %-12s %6.1f%% ±%4.1f %16s %6.1f%% ±%4.1f %10.2f "
                  "%10.2f\n",
                  mode.c_str(), domain.c_str(), 100.0 * c.success_at_cut.mean,
                  100.0 * c.success_at_cut.stderr_, beat.c_str(),
                  100.0 * c.success_final.mean,
                  100.0 * c.success_final.stderr_, c.length_at_cut.mean,
                  c.length_final.mean);
    out << buf;
  };
  for (const auto& d : t.domains) {
    const RuleBaseline& rb = t.rule.at(d);
    std::snprintf(buf, sizeof buf,
                  "%-8s %-12s %6.1f%% ±%4.1f %16s %6.1f%% ±%4.1f %10.2f "
                  "%10.2f\n",
                  "rule", d.c_str(), 100.0 * rb.success_rate,
                  100.0 * rb.success_stderr, "-", 100.0 * rb.success_rate,
                  100.0 * rb.success_stderr, rb.mean_length, rb.mean_length);
    out << buf;
  }
  for (const auto& mode : t.modes) {
    for (const auto& d : t.domains) line(mode, d, t.cell(mode, d));
    line(mode, "Average", average_row(t, mode));
  }
  return out.str();
}

}  // namespace mdrl
