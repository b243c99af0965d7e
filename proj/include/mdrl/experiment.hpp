#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/corpus.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/dst.hpp"
#include "mdrl/metrics.hpp"
#include "mdrl/policy_net.hpp"
#include "mdrl/trpo.hpp"

namespace mdrl {

struct ExperimentConfig {
  std::vector<DomainSpec> domains;
  std::vector<std::string> modes = {"single", "mtl", "tl"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  TrainSettings settings;
  DstConfig dst = DstConfig::desk_scale();
  std::size_t policy_embedding_width = 32;
  std::size_t policy_value_hidden = 32;
  double head_init_scale = 0.01;
  std::size_t success_cut = 1000;
  std::size_t rule_episodes = 2000;
  // 2000 dialogs give every value of the highest-cardinality slots enough
  // inform examples for the tracker to generalize instead of memorizing
  // goal combinations; 300 demonstrably does not.
  std::size_t corpus_train = 2000;
  std::size_t corpus_test = 100;
  std::string out_dir = "out";

  void validate() const {
    if (domains.empty()) throw config_error("experiment: domain list empty");
    if (seeds.empty()) throw config_error("experiment: seeds empty");
    settings.validate();
    if (success_cut > settings.budget)
      throw config_error("experiment: success cut beyond budget");
    for (const auto& m : modes)
      if (m != "single" && m != "mtl" && m != "tl")
        throw config_error("experiment: unknown mode " + m);
  }

  static ExperimentConfig desk_scale() {
    ExperimentConfig c;
    c.domains = builtin_domains();
    return c;
  }

  static ExperimentConfig paper_scale() {
    ExperimentConfig c;
    c.domains = builtin_domains();
    c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    c.settings.budget = 10000;
    c.settings.checkpoint_interval = 250;
    c.success_cut = 2000;
    c.dst = DstConfig::paper_scale();
    c.policy_embedding_width = 100;
    c.corpus_train = 2000;
    c.corpus_test = 500;
    return c;
  }

  PolicyConfig policy_config() const {
    PolicyConfig p;
    p.obs_width = dst.dialog_hidden_width;
    p.embedding_width = policy_embedding_width;
    p.value_hidden = policy_value_hidden;
    p.head_init_scale = head_init_scale;
    return p;
  }

  const DomainSpec& domain(const std::string& name) const {
    for (const auto& d : domains)
      if (d.name == name) return d;
    throw config_error("experiment: domain not configured: " + name);
  }

  std::vector<DomainSpec> sources_for(const std::string& target) const {
    std::vector<DomainSpec> out;
    for (const auto& d : domains)
      if (d.name != target) out.push_back(d);
    if (out.size() + 1 != domains.size())
      throw config_error("experiment: domain not configured: " + target);
    return out;
  }

  // --- artifact paths inside out_dir ---------------------------------------
  std::string corpus_path(const std::string& domain, bool train) const {
    return out_dir + "/corpus/" + domain + (train ? ".train" : ".test") +
           ".jsonl";
  }
  std::string dst_checkpoint_path() const { return out_dir + "/dst.ckpt"; }
  std::string cells_dir() const { return out_dir + "/cells"; }
  std::string cell_csv(const std::string& run_id) const {
    return cells_dir() + "/" + run_id + ".csv";
  }
  std::string cell_ckpt(const std::string& run_id) const {
    return cells_dir() + "/" + run_id + ".ckpt";
  }
  std::string cell_done(const std::string& run_id) const {
    return cells_dir() + "/" + run_id + ".done";
  }
  std::string rule_cache_path(const std::string& domain) const {
    return out_dir + "/cache/rule_" + domain + ".txt";
  }
};

// ---------------------------------------------------------------------------
// DST artifact handling.

inline DstModel load_dst_model(const ExperimentConfig& cfg) {
  Rng rng(mix_seed(17, hash_string("dst-shell")));
  DstModel model(cfg.domains, cfg.dst, rng);
  const std::string path = cfg.dst_checkpoint_path();
  if (!std::filesystem::exists(path))
    throw artifact_missing_error(
        "DST checkpoint not found at " + path +
        "; run `train-dst` first (after `gen-corpus`)");
  model.load_values(path);
  return model;
}

inline std::map<std::string, std::vector<LabeledDialog>> load_corpora(
    const ExperimentConfig& cfg, bool train) {
  std::map<std::string, std::vector<LabeledDialog>> corpora;
  for (const auto& d : cfg.domains) {
    std::string path = cfg.corpus_path(d.name, train);
    if (!std::filesystem::exists(path))
      throw artifact_missing_error("corpus not found at " + path +
                                   "; run `gen-corpus` first");
    corpora[d.name] = load_corpus(path);
  }
  return corpora;
}

// ---------------------------------------------------------------------------
// Rule-based reference, cached per (domain, noise, episode count).

inline RuleBaseline rule_reference(const ExperimentConfig& cfg,
                                   const DomainSpec& domain,
                                   bool use_cache = true) {
  std::string path = cfg.rule_cache_path(domain.name);
  if (use_cache && std::filesystem::exists(path)) {
    std::ifstream in(path);
    double noise = 0.0;
    std::size_t n = 0;
    RuleBaseline b;
    if (in >> noise >> n >> b.success_rate >> b.success_stderr >>
        b.mean_length) {
      b.episodes = n;
      if (noise == cfg.settings.noise_p && n == cfg.rule_episodes) return b;
    }
  }
  RuleBaseline b = measure_rule_based(domain, cfg.rule_episodes,
                                      cfg.settings.noise_p, 7041);
  if (use_cache) {
    std::filesystem::create_directories(cfg.out_dir + "/cache");
    std::ofstream out(path);
    out.precision(17);
    out << cfg.settings.noise_p << " " << cfg.rule_episodes << " "
        << b.success_rate << " " << b.success_stderr << " " << b.mean_length
        << "\n";
  }
  return b;
}

// ---------------------------------------------------------------------------
// Experiment cells. One cell = (mode, domain-or-set, seed); each writes its
// own CSV, policy checkpoint, and done marker, so completed cells are
// skipped on rerun.

inline std::string cell_run_id(const ExperimentConfig& cfg,
                               const std::string& mode,
                               const std::string& domain,
                               std::uint64_t seed) {
  if (mode == "mtl") return make_run_id("mtl", domain_set_tag(cfg.domains), seed);
  if (mode == "single" || mode == "tl")
    return make_run_id(mode, domain, seed);
  throw config_error("unknown mode: " + mode);
}

// Domain list backing a cell's policy network, in construction order (used
// to rebuild the layout when loading the cell's checkpoint).
inline std::vector<DomainSpec> cell_policy_domains(
    const ExperimentConfig& cfg, const std::string& mode,
    const std::string& domain) {
  if (mode == "single") return {cfg.domain(domain)};
  if (mode == "mtl") return cfg.domains;
  if (mode == "tl") {
    std::vector<DomainSpec> d = cfg.sources_for(domain);
    d.push_back(cfg.domain(domain));
    return d;
  }
  throw config_error("unknown mode: " + mode);
}

// Runs one cell to completion and persists its artifacts. Returns the run id.
inline std::string run_cell(const ExperimentConfig& cfg, const DstModel& dst,
                            const std::string& mode,
                            const std::string& domain, std::uint64_t seed,
                            bool force = false) {
  cfg.validate();
  std::string run_id = cell_run_id(cfg, mode, domain, seed);
  std::filesystem::create_directories(cfg.cells_dir());
  if (!force && std::filesystem::exists(cfg.cell_done(run_id)))
    return run_id;

  PolicyConfig pcfg = cfg.policy_config();
  TrainRun run;
  if (mode == "single") {
    const DomainSpec& d = cfg.domain(domain);
    Rng init(mix_seed(seed, hash_string("policy:single:" + d.name)));
    MultiDomainPolicy policy({d}, pcfg, init);
    run = train_single(policy, dst, d, cfg.settings, seed);
    policy.save(cfg.cell_ckpt(run_id));
  } else if (mode == "mtl") {
    Rng init(mix_seed(seed, hash_string("policy:mtl")));
    MultiDomainPolicy policy(cfg.domains, pcfg, init);
    run = train_mtl(policy, dst, cfg.domains, cfg.settings, seed);
    policy.save(cfg.cell_ckpt(run_id));
  } else if (mode == "tl") {
    TlRun tl = train_tl(dst, cfg.sources_for(domain), cfg.domain(domain),
                        pcfg, cfg.settings, seed);
    run = tl.target_run;
    tl.policy->save(cfg.cell_ckpt(run_id));
  } else {
    throw config_error("unknown mode: " + mode);
  }
  write_rows_csv(run.rows, cfg.cell_csv(run_id));
  std::ofstream done(cfg.cell_done(run_id));
  done << run_id << "\n";
  return run_id;
}

// All (mode, domain, seed) triples of the experiment, in execution order.
struct CellKey {
  std::string mode, domain;
  std::uint64_t seed;
};

inline std::vector<CellKey> experiment_cells(const ExperimentConfig& cfg) {
  std::vector<CellKey> cells;
  for (const auto& mode : cfg.modes) {
    if (mode == "mtl") {
      for (std::uint64_t s : cfg.seeds) cells.push_back({mode, "", s});
    } else {
      for (const auto& d : cfg.domains)
        for (std::uint64_t s : cfg.seeds) cells.push_back({mode, d.name, s});
    }
  }
  return cells;
}

// Reads every cell CSV back and groups rows per (mode, domain) and seed with
// checkpoint flags restored.
inline std::map<std::pair<std::string, std::string>,
                std::vector<std::vector<IterationRow>>>
collect_runs(const ExperimentConfig& cfg) {
  std::map<std::pair<std::string, std::string>,
           std::vector<std::vector<IterationRow>>>
      runs;
  for (const auto& mode : cfg.modes) {
    for (const auto& d : cfg.domains) {
      auto& per_seed = runs[{mode, d.name}];
      for (std::uint64_t seed : cfg.seeds) {
        std::string run_id = cell_run_id(
            cfg, mode, mode == "mtl" ? "" : d.name, seed);
        std::vector<IterationRow> all = read_rows_csv(cfg.cell_csv(run_id));
        std::vector<IterationRow> mine;
        for (auto& r : all)
          if (r.domain == d.name) mine.push_back(std::move(r));
        if (mine.empty())
          throw config_error("cell " + run_id + " has no rows for " + d.name);
        mark_checkpoints(mine, cfg.settings.checkpoint_interval,
                         cfg.settings.budget);
        per_seed.push_back(std::move(mine));
      }
    }
  }
  return runs;
}

struct ExperimentResult {
  MetricsTable table;
  std::string report_csv, report_text;
};

// Executes any missing cells, then aggregates everything into the report.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const DstModel& dst,
                                       std::ostream* progress = nullptr) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  std::map<std::string, RuleBaseline> rule;
  for (const auto& d : cfg.domains) rule[d.name] = rule_reference(cfg, d);

  auto cells = experiment_cells(cfg);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    std::string run_id = cell_run_id(cfg, c.mode, c.domain, c.seed);
    bool had = std::filesystem::exists(cfg.cell_done(run_id));
    run_cell(cfg, dst, c.mode, c.domain, c.seed);
    if (progress)
      *progress << "[" << (i + 1) << "/" << cells.size() << "] " << run_id
                << (had ? " (cached)" : " done") << "\n"
                << std::flush;
  }

  auto runs = collect_runs(cfg);
  std::vector<std::string> domain_names;
  for (const auto& d : cfg.domains) domain_names.push_back(d.name);
  ExperimentResult res;
  res.table = build_metrics_table(cfg.modes, domain_names, runs, rule,
                                  cfg.success_cut, cfg.settings.budget);
  res.report_csv = cfg.out_dir + "/report.csv";
  res.report_text = cfg.out_dir + "/report.txt";
  write_report_csv(res.table, cfg.success_cut, cfg.settings.budget,
                   res.report_csv);
  std::ofstream txt(res.report_text);
  txt << format_report_text(res.table, cfg.success_cut,
                            cfg.settings.budget);
  return res;
}

// ---------------------------------------------------------------------------
// Hyper-parameter grid search over (max_kl, dialogs_per_iteration).

struct GridCell {
  double max_kl = 0.0;
  std::size_t dialogs_per_iteration = 0;
  double mean_final_success = 0.0;
  double mean_beat = 0.0;
};

struct GridSearchResult {
  GridCell best;
  std::vector<GridCell> cells;
};

inline GridSearchResult grid_search(const ExperimentConfig& cfg,
                                    const DstModel& dst,
                                    const DomainSpec& domain,
                                    const std::vector<double>& kl_grid,
                                    const std::vector<std::size_t>& dpi_grid,
                                    std::ostream* progress = nullptr) {
  if (kl_grid.empty() || dpi_grid.empty())
    throw config_error("grid_search: empty grid");
  RuleBaseline rb = rule_reference(cfg, domain, /*use_cache=*/false);
  GridSearchResult res;
  for (double kl : kl_grid) {
    for (std::size_t dpi : dpi_grid) {
      TrainSettings s = cfg.settings;
      s.trpo.max_kl = kl;
      s.trpo.dialogs_per_iteration = dpi;
      GridCell cell;
      cell.max_kl = kl;
      cell.dialogs_per_iteration = dpi;
      for (std::uint64_t seed : cfg.seeds) {
        Rng init(mix_seed(seed, hash_string("policy:grid:" + domain.name)));
        MultiDomainPolicy policy({domain}, cfg.policy_config(), init);
        TrainRun run = train_single(policy, dst, domain, s, seed, "grid");
        mark_checkpoints(run.rows, s.checkpoint_interval, s.budget);
        const IterationRow* fin = final_checkpoint(run.rows);
        if (!fin) throw contract_error("grid_search: run has no checkpoints");
        cell.mean_final_success += fin->success_rate;
        cell.mean_beat +=
            dialogs_to_beat(run.rows, rb.success_rate, s.budget).dialogs;
      }
      cell.mean_final_success /= double(cfg.seeds.size());
      cell.mean_beat /= double(cfg.seeds.size());
      res.cells.push_back(cell);
      if (progress)
        *progress << "grid kl=" << kl << " dpi=" << dpi
                  << " success=" << cell.mean_final_success << "\n"
                  << std::flush;
    }
  }
  res.best = *std::min_element(
      res.cells.begin(), res.cells.end(),
      [](const GridCell& a, const GridCell& b) {
        if (a.mean_final_success != b.mean_final_success)
          return a.mean_final_success > b.mean_final_success;
        if (a.mean_beat != b.mean_beat) return a.mean_beat < b.mean_beat;
        return a.max_kl < b.max_kl;
      });
  return res;
}

inline void write_grid_csv(const GridSearchResult& res,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open grid CSV: " + path);
  out << "max_kl,dialogs_per_iteration,mean_final_success,mean_dialogs_to_"
         "beat\n";
  for (const auto& c : res.cells)
    out << c.max_kl << "," << c.dialogs_per_iteration << ","
        << c.mean_final_success << "," << c.mean_beat << "\n";
}

// ---------------------------------------------------------------------------
// Noise calibration: pick the channel error rate whose rule-based success,
// averaged over the domains, lands closest to the target operating point.

struct NoiseCalibration {
  double best_noise = 0.0;
  std::vector<std::pair<double, double>> curve;  // (noise_p, mean success)
};

inline NoiseCalibration calibrate_noise(
    const std::vector<DomainSpec>& domains, double target,
    const std::vector<double>& candidates, std::size_t episodes,
    std::uint64_t seed) {
  if (candidates.empty()) throw config_error("calibrate_noise: no candidates");
  NoiseCalibration out;
  double best_gap = -1.0;
  for (double p : candidates) {
    double mean = 0.0;
    for (const auto& d : domains)
      mean += measure_rule_based(d, episodes, p, seed).success_rate;
    mean /= double(domains.size());
    out.curve.emplace_back(p, mean);
    double gap = std::abs(mean - target);
    if (best_gap < 0.0 || gap < best_gap) {
      best_gap = gap;
      out.best_noise = p;
    }
  }
  return out;
}

inline std::vector<double> default_noise_candidates() {
  return {0.10, 0.15, 0.20, 0.25, 0.30, 0.35};
}

}  // namespace mdrl
