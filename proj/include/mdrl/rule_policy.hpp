#pragma once

#include <map>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/dialog.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/env.hpp"
#include "mdrl/kb.hpp"

namespace mdrl {

// The rule-based system's view of one user slot: last heard value, channel
// confidence, and whether it has been confirmed.
struct TrackedSlot {
  int value = -1;
  double confidence = 0.0;
  bool confirmed = false;
};

struct RuleObservation {
  bool greeted = false;
  std::vector<TrackedSlot> user_slots;  // declaration order
  std::vector<bool> requested;          // per system slot
  std::vector<bool> answered;
};

// Deterministic request -> confirm -> inform policy. Greets first, requests
// each unfilled user slot in declaration order, confirms filled slots whose
// confidence is below the threshold, then informs each unanswered requested
// system slot in order.
inline DialogAct rule_based_policy(const DomainSpec& domain,
                                   const RuleObservation& obs,
                                   double confirm_threshold) {
  if (!obs.greeted) return DialogAct::sys(ActType::greet);
  for (std::size_t i = 0; i < domain.user_slots.size(); ++i)
    if (obs.user_slots[i].value < 0)
      return DialogAct::sys(ActType::request, domain.user_slots[i].name);
  for (std::size_t i = 0; i < domain.user_slots.size(); ++i) {
    const TrackedSlot& t = obs.user_slots[i];
    if (!t.confirmed && t.confidence < confirm_threshold)
      return DialogAct::sys(ActType::confirm, domain.user_slots[i].name,
                            t.value);
  }
  std::map<std::string, int> assignment;
  for (std::size_t i = 0; i < domain.user_slots.size(); ++i)
    assignment[domain.user_slots[i].name] = obs.user_slots[i].value;
  for (std::size_t i = 0; i < domain.system_slots.size(); ++i)
    if (obs.requested[i] && !obs.answered[i])
      return DialogAct::sys(ActType::inform, domain.system_slots[i],
                            kb_answer(domain, assignment,
                                      domain.system_slots[i]));
  return DialogAct::sys(ActType::goodbye);
}

struct RuleEpisode {
  bool success = false;
  int turns = 0;
  double undiscounted_return = 0.0;
  UserGoal goal;
  // all exchanges including the greeting and, on success, a closing
  // goodbye that is not stepped through the environment
  std::vector<std::pair<DialogAct, DialogAct>> exchanges;
};

// Plays one full dialog of the rule-based system against the simulated user.
// The system tracks what it hears through the noisy channel; the requested
// system slots are read from the goal (the scripted system is told what the
// user wants, the learned policies are not).
inline RuleEpisode run_rule_based_episode(const DomainSpec& domain,
                                          const RewardConfig& cfg,
                                          double noise_p,
                                          double confirm_threshold, Rng rng,
                                          bool append_goodbye = false) {
  DialogEnv env(domain, cfg, noise_p, std::move(rng));
  RuleEpisode ep;
  ep.goal = env.state().goal;

  RuleObservation obs;
  obs.user_slots.resize(domain.user_slots.size());
  obs.requested.resize(domain.system_slots.size(), false);
  obs.answered.resize(domain.system_slots.size(), false);
  for (std::size_t i = 0; i < domain.system_slots.size(); ++i)
    for (const auto& s : ep.goal.requested_system_slots)
      if (s == domain.system_slots[i]) obs.requested[i] = true;

  DialogAct last_sys;
  while (!env.state().done) {
    DialogAct sys = rule_based_policy(domain, obs, confirm_threshold);
    StepResult r = env.step(sys);
    ep.turns += 1;
    ep.undiscounted_return += r.reward;
    ep.exchanges.emplace_back(sys, r.user_act);

    const DialogAct& u = r.user_act;
    if (sys.type == ActType::greet) obs.greeted = true;
    if (u.type == ActType::inform && domain.has_user_slot(u.slot)) {
      std::size_t i = domain.user_slot_index(u.slot);
      obs.user_slots[i].value = u.value;
      if (u.reinform) {
        // correction after a rejected confirmation; delivered faithfully
        obs.user_slots[i].confidence = 1.0;
        obs.user_slots[i].confirmed = true;
      } else {
        obs.user_slots[i].confidence = 1.0 - noise_p;
        obs.user_slots[i].confirmed = false;
      }
    } else if (sys.type == ActType::confirm && u.type == ActType::affirm) {
      std::size_t i = domain.user_slot_index(sys.slot);
      obs.user_slots[i].confidence = 1.0;
      obs.user_slots[i].confirmed = true;
    } else if (sys.type == ActType::inform && u.type == ActType::affirm) {
      for (std::size_t i = 0; i < domain.system_slots.size(); ++i)
        if (domain.system_slots[i] == sys.slot) obs.answered[i] = true;
    }
    last_sys = sys;
  }
  ep.success = env.state().success;
  if (ep.success && append_goodbye)
    ep.exchanges.emplace_back(DialogAct::sys(ActType::goodbye),
                              DialogAct::usr(ActType::goodbye));
  return ep;
}

// System-initiative variant: confirm every user slot up front (guessing a
// value for slots never heard), then inform the requested system slots.
// Confirmations and their corrections bypass the noisy channel, so this
// script pins down the goal without a single request.
inline RuleEpisode run_confirm_first_episode(const DomainSpec& domain,
                                             const RewardConfig& cfg,
                                             double noise_p, Rng rng,
                                             bool append_goodbye = false) {
  Rng env_rng = rng.derive(0);
  Rng guess_rng = rng.derive(1);
  DialogEnv env(domain, cfg, noise_p, std::move(env_rng));
  RuleEpisode ep;
  ep.goal = env.state().goal;

  std::vector<TrackedSlot> slots(domain.user_slots.size());
  std::vector<bool> requested(domain.system_slots.size(), false);
  std::vector<bool> answered(domain.system_slots.size(), false);
  for (std::size_t i = 0; i < domain.system_slots.size(); ++i)
    for (const auto& s : ep.goal.requested_system_slots)
      if (s == domain.system_slots[i]) requested[i] = true;

  bool greeted = false;
  while (!env.state().done) {
    DialogAct sys = DialogAct::sys(ActType::goodbye);
    if (!greeted) {
      sys = DialogAct::sys(ActType::greet);
    } else {
      bool chosen = false;
      for (std::size_t i = 0; i < slots.size() && !chosen; ++i)
        if (!slots[i].confirmed) {
          int guess = slots[i].value >= 0
                          ? slots[i].value
                          : int(guess_rng.uniform_index(
                                domain.user_slots[i].cardinality));
          sys = DialogAct::sys(ActType::confirm, domain.user_slots[i].name,
                               guess);
          chosen = true;
        }
      if (!chosen) {
        std::map<std::string, int> assignment;
        for (std::size_t i = 0; i < slots.size(); ++i)
          assignment[domain.user_slots[i].name] = slots[i].value;
        for (std::size_t i = 0; i < requested.size() && !chosen; ++i)
          if (requested[i] && !answered[i]) {
            sys = DialogAct::sys(
                ActType::inform, domain.system_slots[i],
                kb_answer(domain, assignment, domain.system_slots[i]));
            chosen = true;
          }
      }
    }
    StepResult r = env.step(sys);
    ep.turns += 1;
    ep.undiscounted_return += r.reward;
    ep.exchanges.emplace_back(sys, r.user_act);

    const DialogAct& u = r.user_act;
    if (sys.type == ActType::greet) greeted = true;
    if (sys.type == ActType::confirm) {
      std::size_t i = domain.user_slot_index(sys.slot);
      if (u.type == ActType::affirm) {
        slots[i].value = sys.value;
        slots[i].confirmed = true;
      } else if (u.type == ActType::inform && u.reinform) {
        slots[i].value = u.value;
        slots[i].confirmed = true;
      }
      slots[i].confidence = 1.0;
    } else if (sys.type == ActType::inform && u.type == ActType::affirm) {
      for (std::size_t i = 0; i < domain.system_slots.size(); ++i)
        if (domain.system_slots[i] == sys.slot) answered[i] = true;
    }
  }
  ep.success = env.state().success;
  if (ep.success && append_goodbye)
    ep.exchanges.emplace_back(DialogAct::sys(ActType::goodbye),
                              DialogAct::usr(ActType::goodbye));
  return ep;
}

}  // namespace mdrl
