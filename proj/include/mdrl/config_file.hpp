#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/experiment.hpp"

namespace mdrl {

// Sectioned key = value text config:
//
//   [experiment]
//   seeds = 1 2 3 4 5
//   budget = 3000
//   [trpo]
//   max_kl = 0.01
//
// '#' starts a comment; list values are space-separated.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in) {
    ConfigFile f;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw config_error("config line " + std::to_string(lineno) +
                             ": unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw config_error("config line " + std::to_string(lineno) +
                             ": empty section name");
        f.sections_[section];
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw config_error("config line " + std::to_string(lineno) +
                           ": expected 'key = value'");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw config_error("config line " + std::to_string(lineno) +
                           ": empty key");
      if (section.empty())
        throw config_error("config line " + std::to_string(lineno) +
                           ": key outside any section");
      f.sections_[section][key] = value;
    }
    return f;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw artifact_missing_error("cannot open config: " + path);
    return parse(in);
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) != 0;
  }

  std::string get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end())
      throw config_error("config: missing section [" + section + "]");
    auto k = s->second.find(key);
    if (k == s->second.end())
      throw config_error("config: missing key " + key + " in [" + section +
                         "]");
    return k->second;
  }

  double get_real(const std::string& section, const std::string& key) const {
    return parse_real(get(section, key), section, key);
  }
  std::size_t get_count(const std::string& section,
                        const std::string& key) const {
    double v = get_real(section, key);
    if (v < 0 || v != double(std::size_t(v)))
      throw config_error("config: " + key + " must be a non-negative integer");
    return std::size_t(v);
  }
  bool get_bool(const std::string& section, const std::string& key) const {
    std::string v = get(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config: " + key + " must be a boolean");
  }
  std::vector<std::string> get_list(const std::string& section,
                                    const std::string& key) const {
    std::istringstream ss(get(section, key));
    std::vector<std::string> out;
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  }
  std::vector<std::uint64_t> get_u64_list(const std::string& section,
                                          const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& s : get_list(section, key))
      out.push_back(std::stoull(s));
    return out;
  }

  const std::map<std::string, std::map<std::string, std::string>>& sections()
      const {
    return sections_;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }
  static double parse_real(const std::string& v, const std::string& section,
                           const std::string& key) {
    try {
      std::size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw config_error("config: bad number for " + key + " in [" + section +
                         "]: " + v);
    }
  }

  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// Overlays file values onto a scale-preset ExperimentConfig. Unknown keys
// are rejected so typos fail fast.
inline ExperimentConfig apply_config_file(ExperimentConfig cfg,
                                          const ConfigFile& f) {
  static const std::map<std::string, std::vector<std::string>> known = {
      {"domains", {"use", "files"}},
      {"dst",
       {"word_emb_width", "utt_hidden_width", "dialog_hidden_width",
        "shared_dense_width", "epochs", "learning_rate", "batch_size",
        "val_fraction", "weight_decay"}},
      {"policy", {"embedding_width", "value_hidden", "head_init_scale"}},
      {"trpo",
       {"max_kl", "dialogs_per_iteration", "cg_iterations", "cg_damping",
        "backtrack_steps", "backtrack_coefficient", "discount", "gae_lambda",
        "value_fit_epochs", "per_task_kl"}},
      {"experiment",
       {"seeds", "modes", "budget", "checkpoint_interval", "eval_dialogs",
        "noise_p", "success_cut", "rule_episodes", "corpus_train",
        "corpus_test", "out_dir"}},
  };
  for (const auto& [section, keys] : f.sections()) {
    auto ks = known.find(section);
    if (ks == known.end())
      throw config_error("config: unknown section [" + section + "]");
    for (const auto& [key, value] : keys) {
      (void)value;
      bool ok = false;
      for (const auto& k : ks->second)
        if (k == key) ok = true;
      if (!ok)
        throw config_error("config: unknown key " + key + " in [" + section +
                           "]");
    }
  }

  if (f.has("domains", "use") || f.has("domains", "files")) {
    cfg.domains.clear();
    if (f.has("domains", "use"))
      for (const auto& name : f.get_list("domains", "use"))
        cfg.domains.push_back(builtin_domain(name));
    if (f.has("domains", "files"))
      for (const auto& path : f.get_list("domains", "files"))
        cfg.domains.push_back(load_domain_file(path));
  }

  auto set_count = [&](const char* sec, const char* key, std::size_t& out) {
    if (f.has(sec, key)) out = f.get_count(sec, key);
  };
  auto set_real = [&](const char* sec, const char* key, double& out) {
    if (f.has(sec, key)) out = f.get_real(sec, key);
  };

  set_count("dst", "word_emb_width", cfg.dst.word_emb_width);
  set_count("dst", "utt_hidden_width", cfg.dst.utt_hidden_width);
  set_count("dst", "dialog_hidden_width", cfg.dst.dialog_hidden_width);
  set_count("dst", "shared_dense_width", cfg.dst.shared_dense_width);
  set_count("dst", "epochs", cfg.dst.epochs);
  set_real("dst", "learning_rate", cfg.dst.learning_rate);
  set_count("dst", "batch_size", cfg.dst.batch_size);
  set_real("dst", "val_fraction", cfg.dst.val_fraction);
  set_real("dst", "weight_decay", cfg.dst.weight_decay);

  set_count("policy", "embedding_width", cfg.policy_embedding_width);
  set_count("policy", "value_hidden", cfg.policy_value_hidden);
  set_real("policy", "head_init_scale", cfg.head_init_scale);

  TrpoConfig& t = cfg.settings.trpo;
  set_real("trpo", "max_kl", t.max_kl);
  set_count("trpo", "dialogs_per_iteration", t.dialogs_per_iteration);
  set_count("trpo", "cg_iterations", t.cg_iterations);
  set_real("trpo", "cg_damping", t.cg_damping);
  set_count("trpo", "backtrack_steps", t.backtrack_steps);
  set_real("trpo", "backtrack_coefficient", t.backtrack_coefficient);
  set_real("trpo", "discount", t.discount);
  set_real("trpo", "gae_lambda", t.gae_lambda);
  set_count("trpo", "value_fit_epochs", t.value_fit_epochs);
  if (f.has("trpo", "per_task_kl"))
    t.per_task_kl = f.get_bool("trpo", "per_task_kl");

  if (f.has("experiment", "seeds"))
    cfg.seeds = f.get_u64_list("experiment", "seeds");
  if (f.has("experiment", "modes"))
    cfg.modes = f.get_list("experiment", "modes");
  set_count("experiment", "budget", cfg.settings.budget);
  set_count("experiment", "checkpoint_interval",
            cfg.settings.checkpoint_interval);
  set_count("experiment", "eval_dialogs", cfg.settings.eval_dialogs);
  set_real("experiment", "noise_p", cfg.settings.noise_p);
  set_count("experiment", "success_cut", cfg.success_cut);
  set_count("experiment", "rule_episodes", cfg.rule_episodes);
  set_count("experiment", "corpus_train", cfg.corpus_train);
  set_count("experiment", "corpus_test", cfg.corpus_test);
  if (f.has("experiment", "out_dir"))
    cfg.out_dir = f.get("experiment", "out_dir");

  cfg.validate();
  return cfg;
}

}  // namespace mdrl
