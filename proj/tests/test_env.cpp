// Dialog environment, knowledge base, surface realization, rule-based
// policy, and corpus generation.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <mdrl/corpus.hpp>
#include <mdrl/dialog.hpp>
#include <mdrl/domain.hpp>
#include <mdrl/env.hpp>
#include <mdrl/kb.hpp>
#include <mdrl/nlg.hpp>
#include <mdrl/rule_policy.hpp>

#include "support/test_util.hpp"

using namespace mdrl;

TEST_CASE("builtin domains validate and have the documented shapes") {
  auto ds = builtin_domains();
  REQUIRE(ds.size() == 6);
  for (const auto& d : ds) d.validate();

  const DomainSpec& bus = ds[0];
  REQUIRE(bus.name == "bus");
  REQUIRE(bus.user_slots.size() == 3);
  REQUIRE(bus.user_slots[2].name == "time");
  REQUIRE(bus.user_slots[2].cardinality == 30);
  REQUIRE(bus.system_slots == std::vector<std::string>{"route", "duration"});

  REQUIRE(builtin_domain("weather").user_slots[0].cardinality == 11);
  REQUIRE_THROWS_AS(builtin_domain("nope"), config_error);

  // the three rest variants: same slot structure, different identity axes
  DomainSpec rest = builtin_domain("rest");
  DomainSpec rest_slot = builtin_domain("rest_slot");
  DomainSpec rest_style = builtin_domain("rest_style");
  REQUIRE(rest.user_slots.size() == rest_slot.user_slots.size());
  REQUIRE(rest.nlg_style == rest_slot.nlg_style);
  REQUIRE(rest.value_vocab_seed != rest_slot.value_vocab_seed);
  REQUIRE(rest.nlg_style != rest_style.nlg_style);
  REQUIRE(rest.value_vocab_seed == rest_style.value_vocab_seed);
}

TEST_CASE("domain files round-trip") {
  DomainSpec d = builtin_domain("movie");
  std::ostringstream out;
  write_domain_file(d, out);
  std::istringstream in(out.str());
  DomainSpec back = parse_domain_file(in);
  REQUIRE(back.name == d.name);
  REQUIRE(back.nlg_style == d.nlg_style);
  REQUIRE(back.value_vocab_seed == d.value_vocab_seed);
  REQUIRE(back.user_slots.size() == d.user_slots.size());
  for (std::size_t i = 0; i < d.user_slots.size(); ++i) {
    REQUIRE(back.user_slots[i].name == d.user_slots[i].name);
    REQUIRE(back.user_slots[i].cardinality == d.user_slots[i].cardinality);
  }
  REQUIRE(back.system_slots == d.system_slots);
}

TEST_CASE("dialog act validation") {
  REQUIRE_THROWS_AS(validate_act(DialogAct::sys(ActType::request)),
                    config_error);  // request needs a slot
  REQUIRE_THROWS_AS(validate_act(DialogAct::sys(ActType::confirm, "x")),
                    config_error);  // confirm needs a value too
  REQUIRE_THROWS_AS(validate_act(DialogAct::usr(ActType::affirm, "", 3)),
                    config_error);  // affirm carries no value
  REQUIRE_NOTHROW(validate_act(DialogAct::sys(ActType::inform, "route", 3)));
  REQUIRE(to_string(DialogAct::usr(ActType::inform, "food", 2, true))
              .find("deny+inform") != std::string::npos);
  REQUIRE(to_string(DialogAct::sys(ActType::request, "food")) ==
          "request(food)");
}

TEST_CASE("kb answers are deterministic functions of the full assignment") {
  DomainSpec d = builtin_domain("rest");
  std::map<std::string, int> g1 = {{"food", 3}, {"area", 7}};
  auto a1 = kb_lookup(d, g1);
  auto a2 = kb_lookup(d, g1);
  REQUIRE(a1 == a2);
  REQUIRE(a1.size() == d.system_slots.size());
  for (const auto& [slot, v] : a1) {
    REQUIRE(v >= 0);
    REQUIRE(v < int(kAnswerCardinality));
    REQUIRE(kb_answer(d, g1, slot) == v);
  }
  // changing any user slot changes the row key (values may or may not
  // collide per slot, but not everywhere at once for this pair)
  std::map<std::string, int> g2 = {{"food", 4}, {"area", 7}};
  REQUIRE(kb_lookup(d, g2) != a1);
}

TEST_CASE("micro domain kb distinguishes the two goals") {
  DomainSpec m = micro_domain();
  REQUIRE(m.user_slots.size() == 1);
  REQUIRE(m.user_slots[0].cardinality == 2);
  int a0 = kb_answer(m, {{"need", 0}}, "answer");
  int a1 = kb_answer(m, {{"need", 1}}, "answer");
  REQUIRE(a0 != a1);
}

TEST_CASE("surface forms differ along the intended axes") {
  DomainSpec rest = builtin_domain("rest");
  DomainSpec rest_slot = builtin_domain("rest_slot");
  DomainSpec rest_style = builtin_domain("rest_style");

  DialogAct inform = DialogAct::usr(ActType::inform, "food", 5);
  TokenSeq t_rest = render_utterance(inform, rest.nlg_style, rest);
  TokenSeq t_slot = render_utterance(inform, rest_slot.nlg_style, rest_slot);
  TokenSeq t_style =
      render_utterance(inform, rest_style.nlg_style, rest_style);

  // rest_slot: same template words, different value tokens
  REQUIRE(t_rest.size() == t_slot.size());
  REQUIRE(t_rest != t_slot);
  std::set<std::string> rest_set(t_rest.begin(), t_rest.end());
  bool value_diff = false;
  for (const auto& tok : t_slot)
    if (tok.rfind("v", 0) == 0 && !rest_set.count(tok)) value_diff = true;
  REQUIRE(value_diff);

  // rest_style: same value tokens, no shared template words
  std::set<std::string> style_set(t_style.begin(), t_style.end());
  for (const auto& tok : t_rest)
    if (tok.rfind("v", 0) != 0)  // template word
      REQUIRE_FALSE(style_set.count(tok));
  bool shares_value = false;
  for (const auto& tok : t_rest)
    if (tok.rfind("v", 0) == 0 && style_set.count(tok)) shares_value = true;
  REQUIRE(shares_value);
}

TEST_CASE("user greeting names the requested system slots") {
  DomainSpec d = builtin_domain("weather");
  TokenSeq g1 = render_user_greeting(d.nlg_style, d, {"temperature"});
  TokenSeq g2 = render_user_greeting(d.nlg_style, d, {"temperature", "wind"});
  REQUIRE(g2.size() > g1.size());
  bool has_wind = false;
  for (const auto& tok : g2)
    if (tok.find("wind") != std::string::npos) has_wind = true;
  REQUIRE(has_wind);
}

TEST_CASE("vocabulary interning and encoding") {
  auto ds = builtin_domains();
  Vocabulary v = build_vocabulary(ds);
  REQUIRE(v.size() > 2);
  REQUIRE(v.lookup("never-seen-token") == Vocabulary::kUnk);
  REQUIRE(v.encode({}).size() == 1);
  REQUIRE(v.encode({})[0] == Vocabulary::kEmpty);

  // every token any in-domain act can produce is known
  DomainSpec d = ds[0];
  TokenSeq toks =
      render_utterance(DialogAct::sys(ActType::confirm, "time", 12),
                       d.nlg_style, d);
  for (const auto& t : toks) REQUIRE(v.lookup(t) != Vocabulary::kUnk);
}

TEST_CASE("environment: scripted optimal play at zero noise") {
  DomainSpec d = builtin_domain("rest");
  Rng rng(12345);
  for (int ep = 0; ep < 20; ++ep) {
    DialogEnv env(d, RewardConfig{}, 0.0, rng.derive(ep));
    env.greeting_exchange();
    const UserGoal& goal = env.state().goal;

    double total = 0.0;
    int steps = 0;
    std::map<std::string, int> heard;
    for (const auto& s : d.user_slots) {
      StepResult r = env.step(DialogAct::sys(ActType::request, s.name));
      REQUIRE(r.user_act.type == ActType::inform);
      REQUIRE(r.user_act.value == goal.user_slot_values.at(s.name));
      heard[r.user_act.slot] = r.user_act.value;
      total += r.reward;
      ++steps;
    }
    for (const auto& s : goal.requested_system_slots) {
      StepResult r =
          env.step(DialogAct::sys(ActType::inform, s, kb_answer(d, heard, s)));
      total += r.reward;
      ++steps;
      REQUIRE(r.user_act.type == ActType::affirm);
      if (s == goal.requested_system_slots.back()) {
        REQUIRE(r.done);
        REQUIRE(r.success);
      }
    }
    REQUIRE(env.state().success);
    REQUIRE(total == Catch::Approx(30.0 - steps));
    REQUIRE(steps <= int(RewardConfig{}.max_turns));
  }
}

TEST_CASE("environment: confirm corrections and deny flows") {
  DomainSpec d = builtin_domain("weather");
  Rng rng(777);
  DialogEnv env(d, RewardConfig{}, 0.0, rng.derive(0));
  env.greeting_exchange();
  int truth = env.state().goal.user_slot_values.at("city");

  // confirming a wrong value triggers a faithful correction
  int wrong = (truth + 1) % 11;
  StepResult r = env.step(DialogAct::sys(ActType::confirm, "city", wrong));
  REQUIRE(r.user_act.type == ActType::inform);
  REQUIRE(r.user_act.reinform);
  REQUIRE(r.user_act.value == truth);

  // confirming the right value is affirmed
  r = env.step(DialogAct::sys(ActType::confirm, "city", truth));
  REQUIRE(r.user_act.type == ActType::affirm);

  // informing a wrong answer is denied and does not end the episode
  auto assignment = env.state().goal.user_slot_values;
  int good = kb_answer(d, assignment, "temperature");
  r = env.step(
      DialogAct::sys(ActType::inform, "temperature", (good + 1) % 20));
  REQUIRE(r.user_act.type == ActType::deny);
  REQUIRE_FALSE(env.state().done);
}

TEST_CASE("environment: turn cap fails the episode") {
  DomainSpec d = builtin_domain("movie");
  RewardConfig cfg;
  DialogEnv env(d, cfg, 0.0, Rng(5));
  env.greeting_exchange();
  int turns = 0;
  while (!env.state().done) {
    env.step(DialogAct::sys(ActType::request, "genre"));
    ++turns;
    REQUIRE(turns <= int(cfg.max_turns));
  }
  REQUIRE(turns == int(cfg.max_turns));
  REQUIRE_FALSE(env.state().success);
  REQUIRE_THROWS_AS(env.step(DialogAct::sys(ActType::request, "genre")),
                    contract_error);
}

TEST_CASE("environment: same seed gives identical traces") {
  DomainSpec d = builtin_domain("bus");
  auto run = [&](std::uint64_t seed) {
    RuleEpisode ep = run_rule_based_episode(d, RewardConfig{}, 0.3,
                                            kConfirmingThreshold, Rng(seed));
    std::string trace;
    for (const auto& [s, u] : ep.exchanges)
      trace += to_string(s) + "|" + to_string(u) + "\n";
    return trace;
  };
  REQUIRE(run(9) == run(9));
  bool any_diff = false;
  for (std::uint64_t s = 0; s < 20; ++s)
    if (run(100 + s) != run(200 + s)) any_diff = true;
  REQUIRE(any_diff);
}

TEST_CASE("rule-based policy is perfect at zero noise within the cap") {
  for (const auto& d : builtin_domains()) {
    Rng rng(mix_seed(1, hash_string(d.name)));
    for (int ep = 0; ep < 50; ++ep) {
      RuleEpisode e = run_rule_based_episode(
          d, RewardConfig{}, 0.0, kNonConfirmingThreshold, rng.derive(ep));
      REQUIRE(e.success);
      REQUIRE(e.turns <= 15);
      REQUIRE(e.undiscounted_return == Catch::Approx(30.0 - e.turns));
    }
  }
}

TEST_CASE("rule-based success degrades with noise but stays mid-range") {
  DomainSpec d = builtin_domain("rest");
  auto rate = [&](double noise, double threshold) {
    int ok = 0;
    Rng rng(404);
    for (int ep = 0; ep < 400; ++ep)
      ok += run_rule_based_episode(d, RewardConfig{}, noise, threshold,
                                   rng.derive(ep))
                .success;
    return double(ok) / 400.0;
  };
  double never = rate(0.2, kNonConfirmingThreshold);
  double confirming = rate(0.2, kConfirmingThreshold);
  REQUIRE(never > 0.3);
  REQUIRE(never < 0.9);
  // confirmation repairs channel errors, at the cost of longer dialogs
  REQUIRE(confirming > never);
}

TEST_CASE("corpus generation mixes confirming and plain dialogs") {
  DomainSpec d = builtin_domain("weather");
  auto corpus = generate_corpus(d, 60, 0.2, Rng(88));
  REQUIRE(corpus.size() == 60);

  const auto& tpl_confirm = render_utterance(
      DialogAct::sys(ActType::confirm, "city", 0), d.nlg_style, d);
  REQUIRE_FALSE(tpl_confirm.empty());
  int with_confirm = 0, with_goodbye_end = 0;
  for (const auto& dlg : corpus) {
    REQUIRE(dlg.domain == "weather");
    REQUIRE(dlg.labels.size() == d.user_slots.size());
    for (const auto& [slot, v] : dlg.labels) {
      REQUIRE(v >= 0);
      REQUIRE(v < int(d.cardinality(slot)));
    }
    bool has_confirm = false;
    for (const auto& t : dlg.turns)
      if (!t.sys_tokens.empty() && t.sys_tokens[0] == tpl_confirm[0] &&
          t.sys_tokens.size() == tpl_confirm.size())
        has_confirm = true;
    with_confirm += has_confirm;
    if (!dlg.turns.empty()) {
      const auto& last = dlg.turns.back();
      const auto& bye = render_utterance(DialogAct::sys(ActType::goodbye),
                                         d.nlg_style, d);
      if (last.sys_tokens == bye) ++with_goodbye_end;
    }
  }
  REQUIRE(with_confirm > 5);
  REQUIRE(with_confirm < 55);
  REQUIRE(with_goodbye_end > 0);
}

TEST_CASE("corpus round-trips through jsonl") {
  DomainSpec d = builtin_domain("movie");
  auto corpus = generate_corpus(d, 10, 0.2, Rng(17));
  std::string path = "corpus_roundtrip.jsonl";
  save_corpus(corpus, path);
  auto back = load_corpus(path);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    REQUIRE(back[i].domain == corpus[i].domain);
    REQUIRE(back[i].labels == corpus[i].labels);
    REQUIRE(back[i].turns.size() == corpus[i].turns.size());
    for (std::size_t t = 0; t < corpus[i].turns.size(); ++t) {
      REQUIRE(back[i].turns[t].sys_tokens == corpus[i].turns[t].sys_tokens);
      REQUIRE(back[i].turns[t].user_tokens == corpus[i].turns[t].user_tokens);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("trace writer accumulates rewards") {
  std::ostringstream out;
  TraceWriter w(out);
  w.turn(0, DialogAct::sys(ActType::request, "food"),
         DialogAct::usr(ActType::inform, "food", 1), -1.0);
  w.turn(1, DialogAct::sys(ActType::inform, "price", 3),
         DialogAct::usr(ActType::affirm), 29.0);
  REQUIRE(w.cumulative() == Catch::Approx(28.0));
  REQUIRE(out.str().find("request(food)") != std::string::npos);
}
