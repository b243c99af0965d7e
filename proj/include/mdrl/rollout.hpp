#pragma once

#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/dst.hpp"
#include "mdrl/env.hpp"
#include "mdrl/nlg.hpp"
#include "mdrl/policy_net.hpp"

namespace mdrl {

struct Trajectory {
  std::string domain;
  std::size_t policy_domain = 0;  // head index in the policy
  std::vector<Observation> obs;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> old_log_probs;
  std::vector<std::vector<double>> old_probs;
  double episode_return = 0.0;  // undiscounted
  bool success = false;

  std::size_t turns() const { return actions.size(); }

  void check() const {
    std::size_t n = actions.size();
    if (obs.size() != n || rewards.size() != n || old_log_probs.size() != n ||
        old_probs.size() != n)
      throw contract_error("Trajectory: per-turn lists differ in length");
  }
};

// One full episode: greeting exchange (not charged, encoded into the tracker
// state), then per turn encode -> action_probs -> sample -> ground -> step.
inline Trajectory run_policy_episode(const MultiDomainPolicy& policy,
                                     const DstModel& dst,
                                     const DomainSpec& domain,
                                     const RewardConfig& rcfg, double noise_p,
                                     Rng episode_rng,
                                     const double* p = nullptr) {
  Rng env_rng = episode_rng.derive(0);
  Rng act_rng = episode_rng.derive(1);
  std::size_t pdi = policy.domain_index(domain.name);
  const ActionSpace& space = policy.action_space(pdi);

  DialogEnv env(domain, rcfg, noise_p, std::move(env_rng));
  auto [greet_sys, greet_usr] = env.greeting_exchange();
  (void)greet_usr;

  DialogState st = dst.new_dialog_state();
  TokenSeq sys_toks = render_utterance(greet_sys, domain.nlg_style, domain);
  TokenSeq usr_toks = render_user_greeting(
      domain.nlg_style, domain, env.state().goal.requested_system_slots);
  Observation obs = dst.encode_turn(sys_toks, usr_toks, st);

  Trajectory tr;
  tr.domain = domain.name;
  tr.policy_domain = pdi;
  while (!env.state().done) {
    std::vector<double> probs = policy.action_probs(obs, pdi, p);
    std::size_t a = sample_action(probs, act_rng);
    BeliefState beliefs = dst.predict_slots(obs, domain.name);
    DialogAct act = ground_action(a, beliefs, domain, space);
    StepResult r = env.step(act);

    tr.obs.push_back(obs);
    tr.actions.push_back(a);
    tr.rewards.push_back(r.reward);
    tr.old_log_probs.push_back(log_prob(probs, a));
    tr.old_probs.push_back(std::move(probs));
    tr.episode_return += r.reward;

    if (!env.state().done) {
      TokenSeq s_toks = render_utterance(act, domain.nlg_style, domain);
      TokenSeq u_toks =
          render_utterance(r.user_act, domain.nlg_style, domain);
      obs = dst.encode_turn(s_toks, u_toks, st);
    }
  }
  tr.success = env.state().success;
  tr.check();
  return tr;
}

// Episode streams are derived from (wave rng, episode index) so a fixed seed
// reproduces the whole trajectory set regardless of scheduling.
inline std::vector<Trajectory> collect_rollouts(const MultiDomainPolicy& policy,
                                                const DstModel& dst,
                                                const DomainSpec& domain,
                                                const RewardConfig& rcfg,
                                                double noise_p,
                                                std::size_t n_dialogs,
                                                Rng wave_rng) {
  if (n_dialogs < 1) throw config_error("collect_rollouts: n must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(n_dialogs);
  for (std::size_t i = 0; i < n_dialogs; ++i)
    out.push_back(run_policy_episode(policy, dst, domain, rcfg, noise_p,
                                     wave_rng.derive(i)));
  return out;
}

struct EvalStats {
  double success_rate = 0.0;
  double mean_length = 0.0;
  double mean_return = 0.0;
};

inline EvalStats evaluate_policy(const MultiDomainPolicy& policy,
                                 const DstModel& dst, const DomainSpec& domain,
                                 const RewardConfig& rcfg, double noise_p,
                                 std::size_t n_dialogs, Rng rng) {
  EvalStats s;
  for (std::size_t i = 0; i < n_dialogs; ++i) {
    Trajectory tr = run_policy_episode(policy, dst, domain, rcfg, noise_p,
                                       rng.derive(i));
    s.success_rate += tr.success ? 1.0 : 0.0;
    s.mean_length += double(tr.turns());
    s.mean_return += tr.episode_return;
  }
  s.success_rate /= double(n_dialogs);
  s.mean_length /= double(n_dialogs);
  s.mean_return /= double(n_dialogs);
  return s;
}

}  // namespace mdrl
