#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mdrl/adam.hpp"
#include "mdrl/cg.hpp"
#include "mdrl/common.hpp"
#include "mdrl/dst.hpp"
#include "mdrl/gae.hpp"
#include "mdrl/policy_net.hpp"
#include "mdrl/rollout.hpp"
#include "mdrl/vecmath.hpp"

namespace mdrl {

struct TrpoConfig {
  double max_kl = 0.01;
  std::size_t dialogs_per_iteration = 50;
  std::size_t cg_iterations = 10;
  double cg_damping = 0.1;
  std::size_t backtrack_steps = 10;
  double backtrack_coefficient = 0.5;
  double discount = 0.99;
  double gae_lambda = 0.97;
  std::size_t value_fit_epochs = 5;
  bool per_task_kl = false;  // constrain the worst per-task KL instead of
                             // the pooled mean

  void validate() const {
    if (!(max_kl > 0.0)) throw config_error("max_kl must be > 0");
    if (dialogs_per_iteration < 1 || cg_iterations < 1 ||
        backtrack_steps < 1 || value_fit_epochs < 1)
      throw config_error("TrpoConfig counts must be >= 1");
    if (!(discount > 0.0 && discount <= 1.0))
      throw config_error("discount must be in (0,1]");
    if (!(gae_lambda > 0.0 && gae_lambda <= 1.0))
      throw config_error("gae_lambda must be in (0,1]");
    if (!(backtrack_coefficient > 0.0 && backtrack_coefficient < 1.0))
      throw config_error("backtrack_coefficient must be in (0,1)");
    if (!(cg_damping > 0.0)) throw config_error("cg_damping must be > 0");
  }
};

// Hyper-parameter search grids.
inline const std::vector<double>& max_kl_grid() {
  static const std::vector<double> g = {0.001, 0.003, 0.005, 0.01, 0.03,
                                        0.05,  0.1,   0.3,   0.5};
  return g;
}
inline const std::vector<std::size_t>& dialogs_per_iteration_grid() {
  static const std::vector<std::size_t> g = {10, 20, 50, 100, 200, 500, 1000};
  return g;
}

// One task's update batch: rollouts plus GAE advantages (normalized within
// this batch) and value-regression targets.
struct TaskBatch {
  std::size_t pdi = 0;  // policy domain index
  std::vector<Trajectory> trajs;
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> targets;

  std::size_t total_turns() const {
    std::size_t n = 0;
    for (const auto& t : trajs) n += t.turns();
    return n;
  }
};

inline void compute_advantages(const MultiDomainPolicy& policy,
                               TaskBatch& task, double gamma, double lambda) {
  if (task.trajs.empty())
    throw config_error("compute_advantages: empty batch");
  task.advantages.clear();
  task.targets.clear();
  for (const auto& tr : task.trajs) {
    std::vector<double> values(tr.turns());
    for (std::size_t t = 0; t < tr.turns(); ++t)
      values[t] = policy.value(tr.obs[t], task.pdi);
    std::vector<double> adv, tgt;
    gae_episode(tr.rewards, values, gamma, lambda, adv, tgt);
    task.advantages.push_back(std::move(adv));
    task.targets.push_back(std::move(tgt));
  }
  normalize_advantages(task.advantages);
}

// L_t = mean over turns of (pi_new(a|s)/pi_old(a|s)) * A. The gradient (when
// requested) is exact and touches only the shared layer and this task's head.
inline double surrogate_and_gradient(const MultiDomainPolicy& policy,
                                     const double* p, const TaskBatch& task,
                                     double* grad = nullptr) {
  std::size_t W = task.total_turns();
  if (W == 0) throw config_error("surrogate_and_gradient: no turns");
  if (task.advantages.size() != task.trajs.size())
    throw contract_error("surrogate_and_gradient: advantages not computed");
  const DenseView& shared = policy.shared_layer();
  const DenseView& head = policy.head(task.pdi);
  std::size_t E = shared.out_width, A = head.out_width;
  std::vector<double> emb(E), emb_pre(E), demb(E);
  std::vector<double> logits(A), probs(A), dlogits(A);
  double wgt = 1.0 / double(W);
  double L = 0.0;
  for (std::size_t ti = 0; ti < task.trajs.size(); ++ti) {
    const Trajectory& tr = task.trajs[ti];
    for (std::size_t t = 0; t < tr.turns(); ++t) {
      dense_forward(p, shared, tr.obs[t].data(), emb.data(), emb_pre.data());
      dense_forward(p, head, emb.data(), logits.data());
      softmax(logits.data(), A, probs.data());
      std::size_t a = tr.actions[t];
      double ratio = probs[a] / tr.old_probs[t][a];
      double adv = task.advantages[ti][t];
      L += wgt * ratio * adv;
      if (grad) {
        double c = wgt * adv * ratio;
        for (std::size_t j = 0; j < A; ++j)
          dlogits[j] = c * ((j == a ? 1.0 : 0.0) - probs[j]);
        dense_backward(p, head, emb.data(), logits.data(), dlogits.data(),
                       grad, demb.data());
        dense_backward(p, shared, tr.obs[t].data(), emb_pre.data(),
                       demb.data(), grad, nullptr);
      }
    }
  }
  return L;
}

// Measured KL(old || new) against the distributions recorded at collection
// time: pooled mean by default, worst per-task mean under per_task_kl.
inline double measured_kl(const MultiDomainPolicy& policy, const double* p_new,
                          const std::vector<TaskBatch>& tasks,
                          bool per_task) {
  double pooled = 0.0, worst = 0.0;
  std::size_t pooled_n = 0;
  for (const auto& task : tasks) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& tr : task.trajs)
      for (std::size_t t = 0; t < tr.turns(); ++t) {
        std::vector<double> probs =
            policy.action_probs(tr.obs[t], task.pdi, p_new);
        s += kl_divergence(tr.old_probs[t], probs);
        ++n;
      }
    if (n == 0) continue;
    worst = std::max(worst, s / double(n));
    pooled += s;
    pooled_n += n;
  }
  if (pooled_n == 0) throw config_error("measured_kl: no turns");
  return per_task ? worst : pooled / double(pooled_n);
}

struct StepDiag {
  bool accepted = false;
  double mean_kl = 0.0;         // of the accepted (or last tried) candidate
  double surrogate_gain = 0.0;  // mean over tasks
  double step_scale = 0.0;
  std::size_t line_search_steps = 0;
  double cg_residual = 0.0;
  double grad_norm = 0.0;
};

// Composite update direction across tasks: shared coordinates take the
// arithmetic mean of per-task gradients, each head keeps its own task's
// gradient unaveraged (a single task composes to its plain gradient).
// Returns the mean surrogate over tasks.
inline double composite_gradient(const MultiDomainPolicy& policy,
                                 const double* p,
                                 const std::vector<TaskBatch>& tasks,
                                 std::vector<double>& grad) {
  if (tasks.empty()) throw config_error("composite_gradient: no tasks");
  std::size_t n = policy.n_params();
  grad.assign(n, 0.0);
  std::vector<double> gt(n);
  double L = 0.0;
  for (const auto& task : tasks) {
    std::fill(gt.begin(), gt.end(), 0.0);
    L += surrogate_and_gradient(policy, p, task, gt.data());
    for (std::size_t i = 0; i < n; ++i) grad[i] += gt[i];
  }
  L /= double(tasks.size());
  auto [s_off, s_len] = policy.shared_span();
  if (tasks.size() > 1) {
    double inv = 1.0 / double(tasks.size());
    for (std::size_t i = 0; i < s_len; ++i) grad[s_off + i] *= inv;
  }
  return L;
}

// Natural-gradient trust-region update. The trust region is enforced on
// measured KL over the pooled state batch; a candidate is accepted only with
// KL <= max_kl and strictly positive surrogate gain, and rejection leaves
// the parameters bit-identical.
inline StepDiag trpo_step(MultiDomainPolicy& policy,
                          const std::vector<TaskBatch>& tasks,
                          const TrpoConfig& cfg) {
  cfg.validate();
  if (tasks.empty()) throw config_error("trpo_step: no tasks");
  std::size_t n = policy.n_params();
  std::vector<double> g;
  double L0 = composite_gradient(policy, policy.params().data(), tasks, g);

  StepDiag diag;
  diag.grad_norm = norm2(g);
  if (diag.grad_norm < 1e-12) return diag;

  std::vector<Observation> states;
  std::vector<std::size_t> sdomains;
  for (const auto& task : tasks)
    for (const auto& tr : task.trajs)
      for (std::size_t t = 0; t < tr.turns(); ++t) {
        states.push_back(tr.obs[t]);
        sdomains.push_back(task.pdi);
      }

  auto fvp = [&](const std::vector<double>& v, std::vector<double>& out) {
    policy.fisher_vector_product(states, sdomains, v, cfg.cg_damping, out);
  };
  CgResult cg = conjugate_gradient(fvp, g, cfg.cg_iterations);
  diag.cg_residual = cg.residual_norm;

  std::vector<double> fx(n);
  fvp(cg.x, fx);
  double xfx = dot(cg.x, fx);
  if (!(xfx > 0.0) || !std::isfinite(xfx)) return diag;
  double scale = std::sqrt(2.0 * cfg.max_kl / xfx);

  const std::vector<double>& theta = policy.params().values();
  std::vector<double> cand(n);
  for (std::size_t k = 0; k < cfg.backtrack_steps; ++k) {
    for (std::size_t i = 0; i < n; ++i) cand[i] = theta[i] + scale * cg.x[i];
    double kl = measured_kl(policy, cand.data(), tasks, cfg.per_task_kl);
    double L = 0.0;
    for (const auto& task : tasks)
      L += surrogate_and_gradient(policy, cand.data(), task);
    L /= double(tasks.size());
    diag.mean_kl = kl;
    diag.surrogate_gain = L - L0;
    diag.step_scale = scale;
    diag.line_search_steps = k + 1;
    if (kl <= cfg.max_kl && L - L0 > 0.0) {
      policy.params().values() = cand;
      diag.accepted = true;
      return diag;
    }
    scale *= cfg.backtrack_coefficient;
  }
  diag.accepted = false;
  diag.surrogate_gain = 0.0;
  return diag;
}

// Squared-error regression of the per-domain value baselines toward the
// discounted returns-to-go. Optimizer moments persist across iterations.
class ValueFitter {
 public:
  explicit ValueFitter(double step = 1e-3) : step_(step) {}

  void fit(MultiDomainPolicy& policy, const std::vector<TaskBatch>& tasks,
           std::size_t epochs, Rng& rng) {
    for (const auto& task : tasks) {
      auto [off, len] = policy.value_span(task.pdi);
      auto it = opts_.find(task.pdi);
      if (it == opts_.end())
        it = opts_.emplace(task.pdi, AdamOptimizer(len, step_)).first;
      AdamOptimizer& opt = it->second;

      std::vector<std::pair<const Observation*, double>> samples;
      for (std::size_t ti = 0; ti < task.trajs.size(); ++ti)
        for (std::size_t t = 0; t < task.trajs[ti].turns(); ++t)
          samples.push_back(
              {&task.trajs[ti].obs[t], task.targets[ti][t]});
      if (samples.empty()) continue;

      std::vector<double> full_grad(policy.n_params(), 0.0);
      std::vector<double> small_g(len), small_p(len);
      std::vector<std::size_t> order(samples.size());
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.raw());
        for (std::size_t start = 0; start < order.size(); start += kBatch) {
          std::size_t end = std::min(order.size(), start + kBatch);
          std::fill(full_grad.begin() + off, full_grad.begin() + off + len,
                    0.0);
          for (std::size_t i = start; i < end; ++i)
            policy.value_loss_grad(*samples[order[i]].first, task.pdi,
                                   samples[order[i]].second,
                                   full_grad.data());
          double inv = 1.0 / double(end - start);
          for (std::size_t i = 0; i < len; ++i)
            small_g[i] = full_grad[off + i] * inv;
          std::copy(policy.params().values().begin() + off,
                    policy.params().values().begin() + off + len,
                    small_p.begin());
          opt.update(small_p, small_g);
          std::copy(small_p.begin(), small_p.end(),
                    policy.params().values().begin() + off);
        }
      }
    }
  }

 private:
  static constexpr std::size_t kBatch = 64;
  double step_;
  std::map<std::size_t, AdamOptimizer> opts_;
};

// ---------------------------------------------------------------------------
// Training drivers.

struct TrainSettings {
  TrpoConfig trpo;
  RewardConfig reward;
  double noise_p = 0.2;
  std::size_t budget = 3000;  // training dialogs per domain
  std::size_t checkpoint_interval = 250;
  std::size_t eval_dialogs = 200;  // held-out eval size; 0 disables

  void validate() const {
    trpo.validate();
    if (budget < checkpoint_interval)
      throw config_error("budget must be >= checkpoint interval");
    if (checkpoint_interval < 1)
      throw config_error("checkpoint interval must be >= 1");
  }
};

struct IterationRow {
  std::string run_id, mode, domain;
  std::uint64_t seed = 0;
  std::size_t dialogs_seen = 0;
  double success_rate = 0.0;
  double avg_length = 0.0;
  double mean_kl = 0.0;
  double surrogate_gain = 0.0;
  bool accepted = false;
  // rows at checkpoint marks carry held-out evaluation numbers; others carry
  // training-batch estimates
  bool is_checkpoint = false;
};

struct TrainRun {
  std::string run_id, mode;
  std::vector<std::string> domains;
  std::uint64_t seed = 0;
  std::vector<IterationRow> rows;
  std::size_t source_dialogs = 0;  // transfer mode only
};

inline void train_loop(MultiDomainPolicy& policy, const DstModel& dst,
                       const std::vector<DomainSpec>& domains,
                       const TrainSettings& s, Rng& rng, TrainRun& run) {
  s.validate();
  if (domains.empty()) throw config_error("train_loop: no domains");
  std::vector<std::size_t> pdis;
  for (const auto& d : domains) pdis.push_back(policy.domain_index(d.name));

  ValueFitter fitter;
  std::size_t seen = 0, next_mark = s.checkpoint_interval, iter = 0;
  while (seen < s.budget) {
    std::size_t n_dialogs =
        std::min(s.trpo.dialogs_per_iteration, s.budget - seen);
    Rng iter_rng = rng.derive(iter);
    std::vector<TaskBatch> tasks(domains.size());
    for (std::size_t ti = 0; ti < domains.size(); ++ti) {
      tasks[ti].pdi = pdis[ti];
      tasks[ti].trajs =
          collect_rollouts(policy, dst, domains[ti], s.reward, s.noise_p,
                           n_dialogs, iter_rng.derive(ti));
      compute_advantages(policy, tasks[ti], s.trpo.discount,
                         s.trpo.gae_lambda);
    }
    Rng fit_rng = iter_rng.derive(domains.size());
    fitter.fit(policy, tasks, s.trpo.value_fit_epochs, fit_rng);
    StepDiag diag = trpo_step(policy, tasks, s.trpo);

    seen += n_dialogs;
    bool checkpoint = seen >= next_mark || seen >= s.budget;
    if (checkpoint)
      while (next_mark <= seen) next_mark += s.checkpoint_interval;

    for (std::size_t ti = 0; ti < domains.size(); ++ti) {
      IterationRow row;
      row.run_id = run.run_id;
      row.mode = run.mode;
      row.domain = domains[ti].name;
      row.seed = run.seed;
      row.dialogs_seen = seen;
      row.mean_kl = diag.mean_kl;
      row.surrogate_gain = diag.surrogate_gain;
      row.accepted = diag.accepted;
      row.is_checkpoint = checkpoint && s.eval_dialogs > 0;
      if (row.is_checkpoint) {
        EvalStats es = evaluate_policy(policy, dst, domains[ti], s.reward,
                                       s.noise_p, s.eval_dialogs,
                                       iter_rng.derive(100 + ti));
        row.success_rate = es.success_rate;
        row.avg_length = es.mean_length;
      } else {
        double succ = 0.0, len = 0.0;
        for (const auto& tr : tasks[ti].trajs) {
          succ += tr.success ? 1.0 : 0.0;
          len += double(tr.turns());
        }
        row.success_rate = succ / double(tasks[ti].trajs.size());
        row.avg_length = len / double(tasks[ti].trajs.size());
      }
      run.rows.push_back(std::move(row));
    }
    ++iter;
  }
}

inline std::string make_run_id(const std::string& mode,
                               const std::string& tag, std::uint64_t seed) {
  return mode + "_" + tag + "_s" + std::to_string(seed);
}

inline std::string domain_set_tag(const std::vector<DomainSpec>& domains) {
  std::string tag;
  for (const auto& d : domains) tag += d.name.substr(0, 1);
  return tag;
}

inline TrainRun train_single(MultiDomainPolicy& policy, const DstModel& dst,
                             const DomainSpec& domain, const TrainSettings& s,
                             std::uint64_t seed,
                             const std::string& mode = "single") {
  TrainRun run;
  run.mode = mode;
  run.domains = {domain.name};
  run.seed = seed;
  run.run_id = make_run_id(mode, domain.name, seed);
  Rng rng(mix_seed(seed, hash_string("train:" + run.run_id)));
  train_loop(policy, dst, {domain}, s, rng, run);
  return run;
}

inline TrainRun train_mtl(MultiDomainPolicy& policy, const DstModel& dst,
                          const std::vector<DomainSpec>& domains,
                          const TrainSettings& s, std::uint64_t seed) {
  if (domains.size() < 2) throw config_error("train_mtl needs >= 2 domains");
  TrainRun run;
  run.mode = "mtl";
  run.seed = seed;
  for (const auto& d : domains) run.domains.push_back(d.name);
  run.run_id = make_run_id("mtl", domain_set_tag(domains), seed);
  Rng rng(mix_seed(seed, hash_string("train:" + run.run_id)));
  train_loop(policy, dst, domains, s, rng, run);
  return run;
}

struct TlRun {
  TrainRun target_run;
  TrainRun source_run;
  std::size_t source_dialogs = 0;
  std::optional<MultiDomainPolicy> policy;  // final network incl. target head
};

// Transfer: multi-task pretraining on the sources at the same budget, clone
// with a fresh target head, then single-domain training on the target. Only
// target dialogs count toward the reported run.
inline TlRun train_tl(const DstModel& dst,
                      const std::vector<DomainSpec>& sources,
                      const DomainSpec& target, const PolicyConfig& pcfg,
                      const TrainSettings& s, std::uint64_t seed) {
  for (const auto& d : sources)
    if (d.name == target.name)
      throw config_error("transfer target must not be a source: " + d.name);
  TlRun out;

  Rng init_rng(mix_seed(seed, hash_string("tl:init:" + target.name)));
  MultiDomainPolicy source_policy(sources, pcfg, init_rng);
  TrainSettings src_settings = s;
  src_settings.eval_dialogs = 0;  // sources need no held-out curves
  out.source_run.mode = "mtl";
  out.source_run.seed = seed;
  for (const auto& d : sources) out.source_run.domains.push_back(d.name);
  out.source_run.run_id =
      "tlsrc_" + target.name + "_s" + std::to_string(seed);
  Rng src_rng(mix_seed(seed, hash_string("train:" + out.source_run.run_id)));
  train_loop(source_policy, dst, sources, src_settings, src_rng,
             out.source_run);
  out.source_dialogs = s.budget * sources.size();

  Rng clone_rng(mix_seed(seed, hash_string("tl:clone:" + target.name)));
  out.policy.emplace(source_policy.clone_for_transfer(target, clone_rng));
  out.target_run = train_single(*out.policy, dst, target, s, seed, "tl");
  out.target_run.source_dialogs = out.source_dialogs;
  return out;
}

}  // namespace mdrl
