#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/dialog.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/kb.hpp"
#include "mdrl/nlg.hpp"

namespace mdrl {

// Every user slot value uniform over its cardinality; requested system slots
// are a non-empty uniform random subset, kept in declaration order.
inline UserGoal sample_goal(const DomainSpec& domain, Rng& rng) {
  UserGoal g;
  for (const auto& s : domain.user_slots)
    g.user_slot_values[s.name] = int(rng.uniform_index(s.cardinality));
  std::size_t n = domain.system_slots.size();
  // uniform over the 2^n - 1 non-empty subsets
  std::size_t mask = 1 + rng.uniform_index((std::size_t(1) << n) - 1);
  for (std::size_t i = 0; i < n; ++i)
    if (mask & (std::size_t(1) << i))
      g.requested_system_slots.push_back(domain.system_slots[i]);
  g.validate(domain);
  return g;
}

// Simulated user. Corruption lives in the channel: a requested value is
// swapped for a different one with probability noise_p, while confirmations
// and their corrections are always delivered faithfully.
inline DialogAct user_respond(const EnvState& state, const DomainSpec& domain,
                              const DialogAct& system_act, double noise_p,
                              Rng& rng) {
  if (state.done) throw contract_error("user_respond after episode end");
  validate_act(system_act);
  const UserGoal& goal = state.goal;
  switch (system_act.type) {
    case ActType::greet: return DialogAct::usr(ActType::greet);
    case ActType::goodbye: return DialogAct::usr(ActType::goodbye);
    case ActType::request: {
      if (!domain.has_user_slot(system_act.slot))
        throw config_error("request for non-user slot " + system_act.slot);
      int truth = goal.user_slot_values.at(system_act.slot);
      int delivered = truth;
      if (noise_p > 0.0 && rng.bernoulli(noise_p)) {
        std::size_t card = domain.cardinality(system_act.slot);
        delivered = int(rng.uniform_index(card - 1));
        if (delivered >= truth) ++delivered;
      }
      return DialogAct::usr(ActType::inform, system_act.slot, delivered);
    }
    case ActType::confirm: {
      if (!domain.has_user_slot(system_act.slot))
        throw config_error("confirm for non-user slot " + system_act.slot);
      int truth = goal.user_slot_values.at(system_act.slot);
      if (system_act.value == truth) return DialogAct::usr(ActType::affirm);
      return DialogAct::usr(ActType::inform, system_act.slot, truth,
                            /*reinform=*/true);
    }
    case ActType::inform: {
      if (!domain.has_system_slot(system_act.slot))
        throw config_error("inform for non-system slot " + system_act.slot);
      int truth = kb_answer(domain, goal.user_slot_values, system_act.slot);
      if (system_act.value == truth) return DialogAct::usr(ActType::affirm);
      return DialogAct::usr(ActType::deny);
    }
    default:
      throw config_error("system cannot emit act " +
                         std::string(act_type_name(system_act.type)));
  }
}

struct StepResult {
  DialogAct user_act;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

inline StepResult step(EnvState& state, const DomainSpec& domain,
                       const DialogAct& system_act,
                       const RewardConfig& reward_cfg, double noise_p,
                       Rng& rng) {
  if (state.done) throw contract_error("step after episode end");
  StepResult r;
  r.user_act = user_respond(state, domain, system_act, noise_p, rng);
  state.turn_index += 1;
  r.reward = reward_cfg.step_reward;
  if (system_act.type == ActType::inform &&
      r.user_act.type == ActType::affirm)
    state.informed_correct.insert(system_act.slot);
  bool all_answered = true;
  for (const auto& s : state.goal.requested_system_slots)
    if (!state.informed_correct.count(s)) all_answered = false;
  if (all_answered) {
    state.done = true;
    state.success = true;
    r.reward += reward_cfg.success_bonus;
  } else if (state.turn_index >= reward_cfg.max_turns) {
    state.done = true;
    state.success = false;
  }
  r.done = state.done;
  r.success = state.success;
  state.history.emplace_back(system_act, r.user_act);
  return r;
}

// One dialog episode against the simulated user. Holds the sampled goal and
// the per-episode random stream; strictly sequential within an episode.
class DialogEnv {
 public:
  DialogEnv(DomainSpec domain, RewardConfig cfg, double noise_p, Rng rng)
      : domain_(std::move(domain)), cfg_(cfg), noise_p_(noise_p),
        rng_(std::move(rng)) {
    reset();
  }

  void reset() {
    state_ = EnvState{};
    state_.domain = domain_.name;
    state_.goal = sample_goal(domain_, rng_);
  }

  // Opening exchange; not part of the RL decision loop and not charged.
  std::pair<DialogAct, DialogAct> greeting_exchange() {
    auto sys = DialogAct::sys(ActType::greet);
    auto usr = DialogAct::usr(ActType::greet);
    state_.history.emplace_back(sys, usr);
    return {sys, usr};
  }

  StepResult step(const DialogAct& system_act) {
    return mdrl::step(state_, domain_, system_act, cfg_, noise_p_, rng_);
  }

  const EnvState& state() const { return state_; }
  const DomainSpec& domain() const { return domain_; }
  const RewardConfig& reward_config() const { return cfg_; }
  double noise_p() const { return noise_p_; }

 private:
  DomainSpec domain_;
  RewardConfig cfg_;
  double noise_p_;
  Rng rng_;
  EnvState state_;
};

// Episode trace: one line per turn, tab-separated.
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& out) : out_(out) {}

  void turn(int index, const DialogAct& sys, const DialogAct& usr,
            double reward) {
    cumulative_ += reward;
    out_ << index << '\t' << to_string(sys) << '\t' << to_string(usr) << '\t'
         << reward << '\t' << cumulative_ << '\n';
  }

  double cumulative() const { return cumulative_; }

 private:
  std::ostream& out_;
  double cumulative_ = 0.0;
};

}  // namespace mdrl
