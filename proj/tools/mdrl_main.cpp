// Command-line driver: corpus generation, tracker training/evaluation, RL
// training in single/mtl/tl modes, hyper-parameter grid search, and report
// emission. Exit codes: 0 ok, 2 config error, 3 missing dependency artifact,
// 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <mdrl/mdrl.hpp>

namespace {

using namespace mdrl;

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string scale = "desk";
};

ExperimentConfig build_config(const GlobalOpts& g) {
  ExperimentConfig cfg = g.scale == "paper" ? ExperimentConfig::paper_scale()
                                            : ExperimentConfig::desk_scale();
  if (!g.config_path.empty())
    cfg = apply_config_file(std::move(cfg), ConfigFile::load(g.config_path));
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  cfg.validate();
  return cfg;
}

int cmd_gen_corpus(const GlobalOpts& g) {
  ExperimentConfig cfg = build_config(g);
  std::filesystem::create_directories(cfg.out_dir + "/corpus");
  Rng root(mix_seed(g.seed, hash_string("corpus")));
  for (const auto& d : cfg.domains) {
    auto train = generate_corpus(d, cfg.corpus_train, cfg.settings.noise_p,
                                 root.derive(hash_string(d.name + ":train")));
    auto test = generate_corpus(d, cfg.corpus_test, cfg.settings.noise_p,
                                root.derive(hash_string(d.name + ":test")));
    save_corpus(train, cfg.corpus_path(d.name, true));
    save_corpus(test, cfg.corpus_path(d.name, false));
    std::cout << d.name << ": " << train.size() << " train / " << test.size()
              << " test dialogs\n";
  }
  return 0;
}

int cmd_train_dst(const GlobalOpts& g) {
  ExperimentConfig cfg = build_config(g);
  auto corpora = load_corpora(cfg, /*train=*/true);
  Rng init(mix_seed(g.seed, hash_string("dst:init")));
  DstModel model(cfg.domains, cfg.dst, init);
  Rng train_rng(mix_seed(g.seed, hash_string("dst:train")));
  DstTrainInfo info = train_dst(model, corpora, train_rng);
  model.save(cfg.dst_checkpoint_path());
  std::cout << "epochs: " << info.epoch_loss.size()
            << ", best validation epoch: " << info.best_epoch << "\n";
  for (std::size_t e = 0; e < info.epoch_loss.size(); ++e)
    std::printf("epoch %2zu  loss %.5f  val joint %.4f\n", e,
                info.epoch_loss[e], info.epoch_val_joint[e]);
  std::cout << "checkpoint: " << cfg.dst_checkpoint_path() << "\n";
  return 0;
}

int cmd_eval_dst(const GlobalOpts& g) {
  ExperimentConfig cfg = build_config(g);
  DstModel model = load_dst_model(cfg);
  auto corpora = load_corpora(cfg, /*train=*/false);
  double mean = 0.0;
  for (const auto& d : cfg.domains) {
    double acc = joint_accuracy(model, corpora.at(d.name), d.name);
    mean += acc;
    std::printf("%-12s joint accuracy %.4f\n", d.name.c_str(), acc);
  }
  std::printf("%-12s joint accuracy %.4f\n", "Average",
              mean / double(cfg.domains.size()));
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& mode,
              const std::string& domain, bool force) {
  ExperimentConfig cfg = build_config(g);
  if (mode != "mtl" && domain.empty())
    throw config_error("--domain is required for mode " + mode);
  DstModel dst = load_dst_model(cfg);
  std::string run_id = run_cell(cfg, dst, mode, mode == "mtl" ? "" : domain,
                                g.seed, force);
  auto rows = read_rows_csv(cfg.cell_csv(run_id));
  std::cout << "cell " << run_id << ": " << rows.size() << " logged rows\n";
  if (!rows.empty()) {
    const auto& last = rows.back();
    std::printf("last row: dialogs %zu  success %.3f  length %.2f\n",
                last.dialogs_seen, last.success_rate, last.avg_length);
  }
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& mode,
                 const std::string& domain, std::size_t episodes) {
  ExperimentConfig cfg = build_config(g);
  DstModel dst = load_dst_model(cfg);
  std::string run_id = cell_run_id(cfg, mode, mode == "mtl" ? "" : domain,
                                   g.seed);
  std::string ckpt = cfg.cell_ckpt(run_id);
  if (!std::filesystem::exists(ckpt))
    throw artifact_missing_error("policy checkpoint not found at " + ckpt +
                                 "; run `train` first");
  std::vector<DomainSpec> pdomains = cell_policy_domains(
      cfg, mode, mode == "mtl" ? cfg.domains.front().name : domain);
  Rng shell(1);
  MultiDomainPolicy policy(pdomains, cfg.policy_config(), shell);
  policy.load_values(ckpt);
  const DomainSpec& d = cfg.domain(domain);
  EvalStats es = evaluate_policy(policy, dst, d, cfg.settings.reward,
                                 cfg.settings.noise_p, episodes,
                                 Rng(mix_seed(g.seed,
                                              hash_string("eval:" + run_id))));
  std::printf("%s on %s over %zu dialogs: success %.4f  length %.2f  "
              "return %.2f\n",
              run_id.c_str(), d.name.c_str(), episodes, es.success_rate,
              es.mean_length, es.mean_return);
  return 0;
}

int cmd_grid_search(const GlobalOpts& g, const std::string& domain,
                    std::vector<double> kls, std::vector<std::size_t> dpis) {
  ExperimentConfig cfg = build_config(g);
  DstModel dst = load_dst_model(cfg);
  if (kls.empty()) kls = max_kl_grid();
  if (dpis.empty()) dpis = dialogs_per_iteration_grid();
  GridSearchResult res = grid_search(cfg, dst, cfg.domain(domain), kls, dpis,
                                     &std::cout);
  std::string path = cfg.out_dir + "/grid_" + domain + ".csv";
  write_grid_csv(res, path);
  std::printf("best: max_kl %g, dialogs_per_iteration %zu "
              "(final success %.4f)\n",
              res.best.max_kl, res.best.dialogs_per_iteration,
              res.best.mean_final_success);
  std::cout << "grid written to " << path << "\n";
  return 0;
}

int cmd_report(const GlobalOpts& g) {
  ExperimentConfig cfg = build_config(g);
  std::map<std::string, RuleBaseline> rule;
  for (const auto& d : cfg.domains) rule[d.name] = rule_reference(cfg, d);
  auto runs = collect_runs(cfg);
  std::vector<std::string> names;
  for (const auto& d : cfg.domains) names.push_back(d.name);
  MetricsTable table = build_metrics_table(cfg.modes, names, runs, rule,
                                           cfg.success_cut,
                                           cfg.settings.budget);
  write_report_csv(table, cfg.success_cut, cfg.settings.budget,
                   cfg.out_dir + "/report.csv");
  std::string text = format_report_text(table, cfg.success_cut,
                                        cfg.settings.budget);
  std::ofstream txt(cfg.out_dir + "/report.txt");
  txt << text;
  std::cout << text;
  std::cout << "report written to " << cfg.out_dir << "/report.{csv,txt}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-domain dialog policy workbench"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "config file path");
  app.add_option("--seed", g.seed, "base random seed");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--scale", g.scale, "preset scale")
      ->check(CLI::IsMember({"desk", "paper"}));

  auto* gen = app.add_subcommand("gen-corpus",
                                 "generate labeled dialog corpora");
  auto* tdst = app.add_subcommand("train-dst",
                                  "train the dialog state tracker");
  auto* edst = app.add_subcommand("eval-dst",
                                  "evaluate the tracker on test corpora");

  auto* train = app.add_subcommand("train", "train one policy cell");
  std::string mode = "single", domain;
  bool force = false;
  train->add_option("--mode", mode, "single|mtl|tl")
      ->check(CLI::IsMember({"single", "mtl", "tl"}));
  train->add_option("--domain", domain,
                    "domain name (single) / target domain (tl)");
  train->add_flag("--force", force, "re-run even if the cell is complete");

  auto* eval = app.add_subcommand("evaluate",
                                  "evaluate a trained policy checkpoint");
  std::string eval_mode = "single", eval_domain;
  std::size_t eval_episodes = 500;
  eval->add_option("--mode", eval_mode, "single|mtl|tl")
      ->check(CLI::IsMember({"single", "mtl", "tl"}));
  eval->add_option("--domain", eval_domain, "domain to evaluate")->required();
  eval->add_option("--episodes", eval_episodes, "number of eval dialogs");

  auto* grid = app.add_subcommand("grid-search",
                                  "sweep max_kl x dialogs_per_iteration");
  std::string grid_domain;
  std::vector<double> grid_kls;
  std::vector<std::size_t> grid_dpis;
  grid->add_option("--domain", grid_domain, "domain to sweep")->required();
  grid->add_option("--max-kl", grid_kls,
                   "kl grid values (default: the full grid)");
  grid->add_option("--dpi", grid_dpis,
                   "dialogs-per-iteration grid values (default: full grid)");

  auto* report = app.add_subcommand("report",
                                    "aggregate cell logs into the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(g);
    if (tdst->parsed()) return cmd_train_dst(g);
    if (edst->parsed()) return cmd_eval_dst(g);
    if (train->parsed()) return cmd_train(g, mode, domain, force);
    if (eval->parsed())
      return cmd_evaluate(g, eval_mode, eval_domain, eval_episodes);
    if (grid->parsed())
      return cmd_grid_search(g, grid_domain, grid_kls, grid_dpis);
    if (report->parsed()) return cmd_report(g);
  } catch (const mdrl::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mdrl::artifact_missing_error& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const mdrl::numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
