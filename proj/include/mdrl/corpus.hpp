#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdrl/common.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/env.hpp"
#include "mdrl/nlg.hpp"
#include "mdrl/rule_policy.hpp"

namespace mdrl {

struct DialogTurn {
  TokenSeq sys_tokens;
  TokenSeq user_tokens;
};

// One annotated dialog: tokenized turns plus the true goal values, which are
// constant across turns.
struct LabeledDialog {
  std::string domain;
  std::vector<DialogTurn> turns;
  std::map<std::string, int> labels;
};

// Corpus-generation thresholds: dialogs are split evenly between the
// confirm-everything variant of the scripted policy, the never-confirm
// variant, and the system-initiative confirm-first script, so the tracker
// sees every conversation shape a policy can produce.
inline constexpr double kConfirmingThreshold = 0.9;
inline constexpr double kNonConfirmingThreshold = 0.0;

inline LabeledDialog record_episode(const DomainSpec& domain,
                                    const RuleEpisode& ep) {
  LabeledDialog d;
  d.domain = domain.name;
  d.labels = ep.goal.user_slot_values;
  for (const auto& [sys, usr] : ep.exchanges) {
    DialogTurn t;
    t.sys_tokens = render_utterance(sys, domain.nlg_style, domain);
    if (usr.type == ActType::greet)
      t.user_tokens = render_user_greeting(domain.nlg_style, domain,
                                           ep.goal.requested_system_slots);
    else
      t.user_tokens = render_utterance(usr, domain.nlg_style, domain);
    d.turns.push_back(std::move(t));
  }
  return d;
}

inline std::vector<LabeledDialog> generate_corpus(const DomainSpec& domain,
                                                  std::size_t n_dialogs,
                                                  double noise_p, Rng rng) {
  if (n_dialogs < 1) throw config_error("generate_corpus: n must be >= 1");
  RewardConfig cfg;
  std::vector<LabeledDialog> out;
  out.reserve(n_dialogs);
  for (std::size_t i = 0; i < n_dialogs; ++i) {
    std::size_t variant = rng.uniform_index(3);
    RuleEpisode ep;
    if (variant == 2) {
      ep = run_confirm_first_episode(domain, cfg, noise_p, rng.derive(i),
                                     /*append_goodbye=*/true);
    } else {
      double threshold = variant == 1 ? kConfirmingThreshold
                                      : kNonConfirmingThreshold;
      ep = run_rule_based_episode(domain, cfg, noise_p, threshold,
                                  rng.derive(i), /*append_goodbye=*/true);
    }
    out.push_back(record_episode(domain, ep));
  }
  return out;
}

// --- corpus files: one JSON record per line --------------------------------

inline void save_corpus(const std::vector<LabeledDialog>& dialogs,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open corpus file for write: " + path);
  for (const auto& d : dialogs) {
    nlohmann::json j;
    j["domain"] = d.domain;
    j["labels"] = d.labels;
    auto& turns = j["turns"] = nlohmann::json::array();
    for (const auto& t : d.turns)
      turns.push_back({{"sys", t.sys_tokens}, {"user", t.user_tokens}});
    out << j.dump() << "\n";
  }
}

inline std::vector<LabeledDialog> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw artifact_missing_error("cannot open corpus file: " + path);
  std::vector<LabeledDialog> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    LabeledDialog d;
    d.domain = j.at("domain").get<std::string>();
    d.labels = j.at("labels").get<std::map<std::string, int>>();
    for (const auto& t : j.at("turns")) {
      DialogTurn turn;
      turn.sys_tokens = t.at("sys").get<TokenSeq>();
      turn.user_tokens = t.at("user").get<TokenSeq>();
      d.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace mdrl
