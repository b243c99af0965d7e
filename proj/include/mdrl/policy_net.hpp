#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/dialog.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/dst.hpp"
#include "mdrl/kb.hpp"
#include "mdrl/nn.hpp"
#include "mdrl/param_vector.hpp"

namespace mdrl {

// Ordered system action list for one domain: request and confirm per user
// slot, inform per system slot. Greet/goodbye are environment-level.
struct ActionDef {
  ActType type = ActType::request;
  std::string slot;
};

class ActionSpace {
 public:
  explicit ActionSpace(const DomainSpec& d) {
    for (const auto& s : d.user_slots)
      actions_.push_back({ActType::request, s.name});
    for (const auto& s : d.user_slots)
      actions_.push_back({ActType::confirm, s.name});
    for (const auto& s : d.system_slots)
      actions_.push_back({ActType::inform, s});
  }
  std::size_t size() const { return actions_.size(); }
  const ActionDef& def(std::size_t a) const { return actions_.at(a); }

 private:
  std::vector<ActionDef> actions_;
};

// Pure function of (action index, beliefs, domain): the policy acts on what
// the tracker believes, never on the hidden goal.
inline DialogAct ground_action(std::size_t a, const BeliefState& beliefs,
                               const DomainSpec& domain,
                               const ActionSpace& space) {
  const ActionDef& d = space.def(a);
  switch (d.type) {
    case ActType::request: return DialogAct::sys(ActType::request, d.slot);
    case ActType::confirm:
      return DialogAct::sys(ActType::confirm, d.slot,
                            beliefs.at(d.slot).value);
    case ActType::inform: {
      std::map<std::string, int> assignment;
      for (const auto& s : domain.user_slots)
        assignment[s.name] = beliefs.at(s.name).value;
      auto answers = kb_lookup(domain, assignment);
      return DialogAct::sys(ActType::inform, d.slot, answers.at(d.slot));
    }
    default: break;
  }
  throw contract_error("ActionSpace holds a non-system act");
}

// KL(p_old || p_new) over a shared categorical support. Returns +inf when
// p_new has zero mass where p_old does not (such a candidate step is then
// rejected by the trust-region test).
inline double kl_divergence(const std::vector<double>& p_old,
                            const std::vector<double>& p_new) {
  if (p_old.size() != p_new.size())
    throw config_error("kl_divergence: support mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p_old.size(); ++i) {
    if (p_old[i] <= 0.0) continue;
    if (p_new[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p_old[i] * std::log(p_old[i] / p_new[i]);
  }
  return kl < 0.0 ? 0.0 : kl;  // clamp the tiny negative round-off
}

inline std::size_t sample_action(const std::vector<double>& probs, Rng& rng) {
  double u = rng.uniform_real();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

inline double log_prob(const std::vector<double>& probs, std::size_t a) {
  double p = probs.at(a);
  if (p <= 0.0)
    throw numeric_error("log_prob of a zero-probability action");
  return std::log(p);
}

inline double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

struct PolicyConfig {
  std::size_t obs_width = 32;
  std::size_t embedding_width = 32;  // paper-scale preset 100
  std::size_t value_hidden = 32;
  double head_init_scale = 0.01;  // near-uniform initial action distribution

  static PolicyConfig desk_scale(std::size_t obs) {
    PolicyConfig c;
    c.obs_width = obs;
    return c;
  }
  static PolicyConfig paper_scale(std::size_t obs) {
    PolicyConfig c;
    c.obs_width = obs;
    c.embedding_width = 100;
    return c;
  }
};

// Adds one checkpoint entry shaped as the augmented matrix [W | b] of size
// out x (in+1), so a whole dense layer lives under a single layout name.
inline DenseView make_dense_packed(ParamVector& pv, const std::string& name,
                                   std::size_t in, std::size_t out,
                                   Activation act) {
  std::size_t off = pv.add(name, {out, in + 1});
  DenseView v;
  v.w_off = off;
  v.b_off = off + out * in;
  v.in_width = in;
  v.out_width = out;
  v.act = act;
  return v;
}

// Shared action-embedding layer with per-domain categorical heads, plus a
// per-domain two-layer value baseline in the same flat parameter vector.
// Layout names: "shared.embed", "head.<domain>", "value.<domain>".
class MultiDomainPolicy {
 public:
  MultiDomainPolicy(std::vector<DomainSpec> domains, PolicyConfig cfg,
                    Rng& rng)
      : domains_(std::move(domains)), cfg_(cfg) {
    shared_ = make_dense_packed(params_, "shared.embed", cfg_.obs_width,
                                cfg_.embedding_width, Activation::relu);
    for (const auto& d : domains_) {
      spaces_.emplace_back(d);
      heads_.push_back(make_dense_packed(params_, "head." + d.name,
                                         cfg_.embedding_width,
                                         spaces_.back().size(),
                                         Activation::identity));
    }
    for (const auto& d : domains_) {
      std::size_t off = params_.add(
          "value." + d.name,
          {cfg_.value_hidden * (cfg_.obs_width + 1) + cfg_.value_hidden + 1});
      DenseView l1, l2;
      l1.w_off = off;
      l1.b_off = off + cfg_.value_hidden * cfg_.obs_width;
      l1.in_width = cfg_.obs_width;
      l1.out_width = cfg_.value_hidden;
      l1.act = Activation::relu;
      std::size_t off2 = off + cfg_.value_hidden * (cfg_.obs_width + 1);
      l2.w_off = off2;
      l2.b_off = off2 + cfg_.value_hidden;
      l2.in_width = cfg_.value_hidden;
      l2.out_width = 1;
      l2.act = Activation::identity;
      value_l1_.push_back(l1);
      value_l2_.push_back(l2);
    }
    params_.check_layout();
    double* p = params_.data();
    init_dense(p, shared_, rng);
    for (const auto& h : heads_) init_dense(p, h, rng, cfg_.head_init_scale);
    for (std::size_t i = 0; i < domains_.size(); ++i) {
      init_dense(p, value_l1_[i], rng);
      init_dense(p, value_l2_[i], rng);
    }
  }

  const std::vector<DomainSpec>& domains() const { return domains_; }
  const PolicyConfig& config() const { return cfg_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }
  std::size_t n_params() const { return params_.size(); }

  std::size_t domain_index(const std::string& name) const {
    for (std::size_t i = 0; i < domains_.size(); ++i)
      if (domains_[i].name == name) return i;
    throw config_error("policy has no head for domain " + name);
  }
  bool has_domain(const std::string& name) const {
    for (const auto& d : domains_)
      if (d.name == name) return true;
    return false;
  }

  const ActionSpace& action_space(std::size_t di) const {
    return spaces_.at(di);
  }
  const DenseView& shared_layer() const { return shared_; }
  const DenseView& head(std::size_t di) const { return heads_.at(di); }

  // Contiguous coordinate spans, used for MTL gradient composition.
  std::pair<std::size_t, std::size_t> shared_span() const {
    const auto& e = params_.entry("shared.embed");
    return {e.offset, e.size()};
  }
  std::pair<std::size_t, std::size_t> head_span(std::size_t di) const {
    const auto& e = params_.entry("head." + domains_.at(di).name);
    return {e.offset, e.size()};
  }
  std::pair<std::size_t, std::size_t> value_span(std::size_t di) const {
    const auto& e = params_.entry("value." + domains_.at(di).name);
    return {e.offset, e.size()};
  }

  std::vector<double> action_probs(const Observation& obs, std::size_t di,
                                   const double* p = nullptr) const {
    if (!p) p = params_.data();
    if (obs.size() != cfg_.obs_width)
      throw config_error("observation width mismatch");
    std::vector<double> emb(cfg_.embedding_width);
    dense_forward(p, shared_, obs.data(), emb.data());
    std::vector<double> logits(heads_.at(di).out_width);
    dense_forward(p, heads_[di], emb.data(), logits.data());
    return softmax(logits);
  }

  double value(const Observation& obs, std::size_t di,
               const double* p = nullptr) const {
    if (!p) p = params_.data();
    std::vector<double> h(cfg_.value_hidden);
    dense_forward(p, value_l1_.at(di), obs.data(), h.data());
    double v = 0.0;
    dense_forward(p, value_l2_.at(di), h.data(), &v);
    return v;
  }

  // Accumulates d/dp of 0.5*(V(obs) - target)^2 into grad; returns the
  // squared-error term.
  double value_loss_grad(const Observation& obs, std::size_t di,
                         double target, double* grad) const {
    const double* p = params_.data();
    std::vector<double> h(cfg_.value_hidden), pre(cfg_.value_hidden);
    dense_forward(p, value_l1_.at(di), obs.data(), h.data(), pre.data());
    double v = 0.0, pre2 = 0.0;
    dense_forward(p, value_l2_.at(di), h.data(), &v, &pre2);
    double err = v - target;
    double dv = err;
    std::vector<double> dh(cfg_.value_hidden);
    dense_backward(p, value_l2_[di], h.data(), &pre2, &dv, grad, dh.data());
    dense_backward(p, value_l1_[di], obs.data(), pre.data(), dh.data(), grad,
                   nullptr);
    return 0.5 * err * err;
  }

  // Gauss-Newton Fisher-vector product averaged over a state batch:
  // J^T (diag(p) - p p^T) J v per state, plus damping * v. Equals the
  // Hessian of mean KL(old||new) at new = old for categorical softmax heads.
  void fisher_vector_product(const std::vector<Observation>& states,
                             const std::vector<std::size_t>& state_domains,
                             const std::vector<double>& v, double damping,
                             std::vector<double>& out) const {
    if (states.size() != state_domains.size() || states.empty())
      throw config_error("fisher_vector_product: bad state batch");
    if (v.size() != params_.size())
      throw config_error("fisher_vector_product: vector length mismatch");
    const double* p = params_.data();
    out.assign(params_.size(), 0.0);
    std::size_t E = cfg_.embedding_width;
    std::vector<double> emb(E), emb_pre(E), t_emb(E);
    for (std::size_t s = 0; s < states.size(); ++s) {
      const Observation& obs = states[s];
      std::size_t di = state_domains[s];
      const DenseView& head = heads_.at(di);
      std::size_t A = head.out_width;
      std::vector<double> logits(A), probs(A), t_logits(A), u(A);
      dense_forward(p, shared_, obs.data(), emb.data(), emb_pre.data());
      dense_forward(p, head, emb.data(), logits.data());
      softmax(logits.data(), A, probs.data());
      // forward tangent in direction v
      dense_jvp(p, shared_, obs.data(), nullptr, v.data(), emb_pre.data(),
                t_emb.data());
      dense_jvp(p, head, emb.data(), t_emb.data(), v.data(), logits.data(),
                t_logits.data());
      // logit-space Fisher of the categorical distribution
      double mean_t = 0.0;
      for (std::size_t a = 0; a < A; ++a) mean_t += probs[a] * t_logits[a];
      for (std::size_t a = 0; a < A; ++a)
        u[a] = probs[a] * (t_logits[a] - mean_t);
      // reverse pass with u as the output gradient
      std::vector<double> d_emb(E);
      dense_backward(p, head, emb.data(), logits.data(), u.data(), out.data(),
                     d_emb.data());
      dense_backward(p, shared_, obs.data(), emb_pre.data(), d_emb.data(),
                     out.data(), nullptr);
    }
    double inv_n = 1.0 / double(states.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = out[i] * inv_n + damping * v[i];
  }

  void save(const std::string& path) const { params_.save(path); }

  void load_values(const std::string& path) {
    ParamVector loaded = ParamVector::load(path);
    if (!loaded.same_layout(params_))
      throw config_error(
          "policy checkpoint does not match the configured architecture: " +
          path);
    params_.values() = loaded.values();
  }

  // MTL-pretrained network as initialization for a new task: shared layer
  // and source heads copied bit-exactly, fresh near-uniform head and fresh
  // value baseline for the target domain.
  MultiDomainPolicy clone_for_transfer(const DomainSpec& target,
                                       Rng& rng) const {
    if (has_domain(target.name))
      throw config_error("transfer target already registered: " +
                         target.name);
    std::vector<DomainSpec> all = domains_;
    all.push_back(target);
    MultiDomainPolicy fresh(std::move(all), cfg_, rng);
    auto copy_entry = [&](const std::string& name) {
      const LayoutEntry& src = params_.entry(name);
      const LayoutEntry& dst = fresh.params_.entry(name);
      if (src.size() != dst.size())
        throw contract_error("transfer clone: span mismatch at " + name);
      std::copy(params_.data() + src.offset,
                params_.data() + src.offset + src.size(),
                fresh.params_.data() + dst.offset);
    };
    copy_entry("shared.embed");
    for (const auto& d : domains_) {
      copy_entry("head." + d.name);
      copy_entry("value." + d.name);
    }
    return fresh;
  }

 private:
  std::vector<DomainSpec> domains_;
  PolicyConfig cfg_;
  ParamVector params_;
  DenseView shared_;
  std::vector<ActionSpace> spaces_;
  std::vector<DenseView> heads_;
  std::vector<DenseView> value_l1_, value_l2_;
};

}  // namespace mdrl
