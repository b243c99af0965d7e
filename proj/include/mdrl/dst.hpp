#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mdrl/adam.hpp"
#include "mdrl/common.hpp"
#include "mdrl/corpus.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/nlg.hpp"
#include "mdrl/nn.hpp"
#include "mdrl/param_vector.hpp"

namespace mdrl {

using Observation = std::vector<double>;

struct DstConfig {
  std::size_t word_emb_width = 32;
  std::size_t utt_hidden_width = 32;   // per direction
  std::size_t dialog_hidden_width = 32;
  std::size_t shared_dense_width = 32;
  // high-cardinality slots need long training before the tracker copies
  // confirmed corrections reliably; validation-best selection guards the tail
  std::size_t epochs = 120;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;  // dialogs
  double val_fraction = 0.2;
  double weight_decay = 0.0;  // decoupled, skips bias rows

  static DstConfig desk_scale() { return DstConfig{}; }
  static DstConfig paper_scale() {
    DstConfig c;
    c.word_emb_width = 400;
    c.utt_hidden_width = 300;
    c.dialog_hidden_width = 200;
    c.shared_dense_width = 200;
    c.epochs = 10;
    return c;
  }
};

struct BeliefSlot {
  int value = 0;
  double confidence = 0.0;
};
using BeliefState = std::map<std::string, BeliefSlot>;

// Dialog-level recurrent state carried across turns.
struct DialogState {
  std::vector<double> h, c;
};

// Multi-domain dialog state tracker: shared word/utterance/dialog encoders
// with one classification head per (domain, user slot). The dialog-level
// hidden state is the RL observation.
class DstModel {
 public:
  DstModel(std::vector<DomainSpec> domains, DstConfig cfg, Rng& rng)
      : domains_(std::move(domains)), cfg_(cfg),
        vocab_(build_vocabulary(domains_)) {
    embed_ = make_embedding(params_, "dst.word_emb", vocab_.size(),
                            cfg_.word_emb_width);
    utt_fwd_ = make_lstm(params_, "dst.utt_fwd", cfg_.word_emb_width,
                         cfg_.utt_hidden_width);
    utt_bwd_ = make_lstm(params_, "dst.utt_bwd", cfg_.word_emb_width,
                         cfg_.utt_hidden_width);
    dialog_ = make_lstm(params_, "dst.dialog", 2 * cfg_.utt_hidden_width,
                        cfg_.dialog_hidden_width);
    shared_ = make_dense(params_, "dst.shared", cfg_.dialog_hidden_width,
                         cfg_.shared_dense_width, Activation::relu);
    for (const auto& d : domains_) {
      std::vector<DenseView> heads;
      for (const auto& s : d.user_slots)
        heads.push_back(make_dense(params_,
                                   "dst.head." + d.name + "." + s.name,
                                   cfg_.shared_dense_width, s.cardinality,
                                   Activation::identity));
      heads_.push_back(std::move(heads));
    }
    params_.check_layout();
    double* p = params_.data();
    init_embedding(p, embed_, rng);
    init_lstm(p, utt_fwd_, rng);
    init_lstm(p, utt_bwd_, rng);
    init_lstm(p, dialog_, rng);
    init_dense(p, shared_, rng);
    for (auto& hs : heads_)
      for (auto& h : hs) init_dense(p, h, rng);
  }

  const std::vector<DomainSpec>& domains() const { return domains_; }
  const DstConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t obs_width() const { return cfg_.dialog_hidden_width; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  std::size_t domain_index(const std::string& name) const {
    for (std::size_t i = 0; i < domains_.size(); ++i)
      if (domains_[i].name == name) return i;
    throw config_error("DST has no heads for domain " + name);
  }

  DialogState new_dialog_state() const {
    return {std::vector<double>(cfg_.dialog_hidden_width, 0.0),
            std::vector<double>(cfg_.dialog_hidden_width, 0.0)};
  }

  // Full per-turn intermediate record; only needed for training.
  struct TurnCache {
    std::vector<std::size_t> tokens;
    std::vector<LstmCache> fwd, bwd;
    std::vector<double> utt;  // concat of final fwd/bwd hidden
    LstmCache dlg;
    std::vector<double> obs;
  };

  // tokens -> embeddings -> bi-LSTM utterance encoding -> one dialog
  // recurrence step. Empty input stands in as the reserved empty token.
  Observation encode_turn(const std::vector<std::size_t>& tokens_in,
                          DialogState& st, const double* p = nullptr,
                          TurnCache* cache = nullptr) const {
    if (!p) p = params_.data();
    static const std::vector<std::size_t> kEmptySeq{Vocabulary::kEmpty};
    const std::vector<std::size_t>& tokens =
        tokens_in.empty() ? kEmptySeq : tokens_in;
    std::size_t n = tokens.size();
    std::size_t U = cfg_.utt_hidden_width;

    std::vector<double> h(U, 0.0), c(U, 0.0), h2(U), c2(U);
    if (cache) {
      cache->tokens = tokens;
      cache->fwd.resize(n);
      cache->bwd.resize(n);
    }
    std::vector<double> utt(2 * U);
    for (std::size_t i = 0; i < n; ++i) {
      const double* e = embedding_row(p, embed_, tokens[i]);
      lstm_forward(p, utt_fwd_, e, h.data(), c.data(), h2.data(), c2.data(),
                   cache ? &cache->fwd[i] : nullptr);
      std::swap(h, h2);
      std::swap(c, c2);
    }
    std::copy(h.begin(), h.end(), utt.begin());
    std::fill(h.begin(), h.end(), 0.0);
    std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = n; i-- > 0;) {
      const double* e = embedding_row(p, embed_, tokens[i]);
      lstm_forward(p, utt_bwd_, e, h.data(), c.data(), h2.data(), c2.data(),
                   cache ? &cache->bwd[i] : nullptr);
      std::swap(h, h2);
      std::swap(c, c2);
    }
    std::copy(h.begin(), h.end(), utt.begin() + U);

    std::vector<double> nh(cfg_.dialog_hidden_width),
        nc(cfg_.dialog_hidden_width);
    lstm_forward(p, dialog_, utt.data(), st.h.data(), st.c.data(), nh.data(),
                 nc.data(), cache ? &cache->dlg : nullptr);
    st.h = nh;
    st.c = nc;
    if (cache) {
      cache->utt = std::move(utt);
      cache->obs = st.h;
    }
    return st.h;
  }

  Observation encode_turn(const TokenSeq& sys, const TokenSeq& user,
                          DialogState& st) const {
    TokenSeq joined = sys;
    joined.insert(joined.end(), user.begin(), user.end());
    return encode_turn(vocab_.encode(joined), st);
  }

  BeliefState predict_slots(const Observation& obs, const std::string& domain,
                            const double* p = nullptr) const {
    if (!p) p = params_.data();
    std::size_t di = domain_index(domain);
    std::vector<double> x(cfg_.shared_dense_width),
        pre(cfg_.shared_dense_width);
    dense_forward(p, shared_, obs.data(), x.data(), pre.data());
    BeliefState out;
    const auto& slots = domains_[di].user_slots;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const DenseView& head = heads_[di][s];
      std::vector<double> logits(head.out_width), probs(head.out_width);
      dense_forward(p, head, x.data(), logits.data());
      softmax(logits.data(), logits.size(), probs.data());
      std::size_t best = 0;
      for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
      out[slots[s].name] = {int(best), probs[best]};
    }
    return out;
  }

  void save(const std::string& path) const { params_.save(path); }

  void load_values(const std::string& path) {
    ParamVector loaded = ParamVector::load(path);
    if (!loaded.same_layout(params_))
      throw config_error(
          "DST checkpoint does not match the configured architecture: " +
          path);
    params_.values() = loaded.values();
  }

  const EmbeddingView& embed() const { return embed_; }
  const LstmView& utt_fwd() const { return utt_fwd_; }
  const LstmView& utt_bwd() const { return utt_bwd_; }
  const LstmView& dialog_cell() const { return dialog_; }
  const DenseView& shared_dense() const { return shared_; }
  const DenseView& head(std::size_t domain_idx, std::size_t slot_idx) const {
    return heads_[domain_idx][slot_idx];
  }

 private:
  std::vector<DomainSpec> domains_;
  DstConfig cfg_;
  Vocabulary vocab_;
  ParamVector params_;
  EmbeddingView embed_;
  LstmView utt_fwd_, utt_bwd_, dialog_;
  DenseView shared_;
  std::vector<std::vector<DenseView>> heads_;
};

// ---------------------------------------------------------------------------
// Supervised MTL training.

struct EncodedDialog {
  std::size_t domain_idx = 0;
  std::vector<std::vector<std::size_t>> turns;  // token ids, sys ++ user
  std::vector<int> labels;                      // by user-slot order
};

inline EncodedDialog encode_dialog(const DstModel& model,
                                   const LabeledDialog& d) {
  EncodedDialog e;
  e.domain_idx = model.domain_index(d.domain);
  const DomainSpec& spec = model.domains()[e.domain_idx];
  for (const auto& t : d.turns) {
    TokenSeq joined = t.sys_tokens;
    joined.insert(joined.end(), t.user_tokens.begin(), t.user_tokens.end());
    e.turns.push_back(model.vocab().encode(joined));
  }
  for (const auto& s : spec.user_slots) e.labels.push_back(d.labels.at(s.name));
  return e;
}

// Loss of one batch: mean over the domains present of the per-domain mean
// over slots of the per-turn cross-entropy. When grad is non-null the exact
// reverse-mode gradient is accumulated into it.
inline double dst_batch_loss(const DstModel& model, const double* p,
                             const std::vector<const EncodedDialog*>& batch,
                             double* grad = nullptr) {
  std::size_t n_domains = model.domains().size();
  std::vector<std::size_t> domain_turns(n_domains, 0);
  for (const auto* d : batch) domain_turns[d->domain_idx] += d->turns.size();
  std::size_t present = 0;
  for (std::size_t t : domain_turns)
    if (t > 0) ++present;
  if (present == 0) throw config_error("dst_batch_loss: empty batch");

  std::size_t U = model.config().utt_hidden_width;
  std::size_t D = model.config().dialog_hidden_width;
  std::size_t S = model.config().shared_dense_width;

  double total = 0.0;
  std::vector<DstModel::TurnCache> caches;
  std::vector<std::vector<double>> shared_pre, shared_out;
  for (const auto* dlg : batch) {
    const DomainSpec& spec = model.domains()[dlg->domain_idx];
    std::size_t n_slots = spec.user_slots.size();
    double w = 1.0 / double(present * n_slots *
                            domain_turns[dlg->domain_idx]);
    DialogState st = model.new_dialog_state();
    std::size_t T = dlg->turns.size();
    caches.assign(T, {});
    shared_pre.assign(T, std::vector<double>(S));
    shared_out.assign(T, std::vector<double>(S));
    // per turn: d(loss)/d(shared_out)
    std::vector<std::vector<double>> d_shared(
        grad ? T : 0, std::vector<double>(S, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
      model.encode_turn(dlg->turns[t], st, p, &caches[t]);
      dense_forward(p, model.shared_dense(), caches[t].obs.data(),
                    shared_out[t].data(), shared_pre[t].data());
      for (std::size_t s = 0; s < n_slots; ++s) {
        const DenseView& head = model.head(dlg->domain_idx, s);
        std::vector<double> logits(head.out_width), probs(head.out_width);
        dense_forward(p, head, shared_out[t].data(), logits.data());
        std::size_t target = std::size_t(dlg->labels[s]);
        total += w * cross_entropy_from_logits(logits.data(), logits.size(),
                                               target, probs.data());
        if (grad) {
          std::vector<double> dlogits(head.out_width);
          for (std::size_t i = 0; i < head.out_width; ++i)
            dlogits[i] = w * (probs[i] - (i == target ? 1.0 : 0.0));
          std::vector<double> dx(S);
          // head has identity activation so logits are the pre-activation
          dense_backward(p, head, shared_out[t].data(), logits.data(),
                         dlogits.data(), grad, dx.data());
          for (std::size_t i = 0; i < S; ++i) d_shared[t][i] += dx[i];
        }
      }
    }
    if (!grad) continue;

    // reverse pass through the dialog recurrence, then each utterance
    std::vector<double> dh(D, 0.0), dc(D, 0.0);
    std::vector<double> d_utt(2 * U), dh_prev(D), dc_prev(D);
    std::vector<double> du_h(U), du_c(U), du_hprev(U), du_cprev(U);
    std::vector<double> dx_emb(model.config().word_emb_width);
    for (std::size_t t = T; t-- > 0;) {
      std::vector<double> dobs(D);
      dense_backward(p, model.shared_dense(), caches[t].obs.data(),
                     shared_pre[t].data(), d_shared[t].data(), grad,
                     dobs.data());
      for (std::size_t i = 0; i < D; ++i) dh[i] += dobs[i];
      lstm_backward(p, model.dialog_cell(), caches[t].dlg, dh.data(),
                    dc.data(), grad, d_utt.data(), dh_prev.data(),
                    dc_prev.data());
      dh = dh_prev;
      dc = dc_prev;

      std::size_t n_tok = caches[t].tokens.size();
      // forward-direction LSTM: gradient enters at the last step
      std::fill(du_h.begin(), du_h.end(), 0.0);
      std::fill(du_c.begin(), du_c.end(), 0.0);
      std::copy(d_utt.begin(), d_utt.begin() + U, du_h.begin());
      for (std::size_t i = n_tok; i-- > 0;) {
        lstm_backward(p, model.utt_fwd(), caches[t].fwd[i], du_h.data(),
                      du_c.data(), grad, dx_emb.data(), du_hprev.data(),
                      du_cprev.data());
        embedding_backward(model.embed(), caches[t].tokens[i], dx_emb.data(),
                           grad);
        du_h = du_hprev;
        du_c = du_cprev;
      }
      // backward-direction LSTM: its final step is token 0
      std::fill(du_h.begin(), du_h.end(), 0.0);
      std::fill(du_c.begin(), du_c.end(), 0.0);
      std::copy(d_utt.begin() + U, d_utt.end(), du_h.begin());
      for (std::size_t i = 0; i < n_tok; ++i) {
        lstm_backward(p, model.utt_bwd(), caches[t].bwd[i], du_h.data(),
                      du_c.data(), grad, dx_emb.data(), du_hprev.data(),
                      du_cprev.data());
        embedding_backward(model.embed(), caches[t].tokens[i], dx_emb.data(),
                           grad);
        du_h = du_hprev;
        du_c = du_cprev;
      }
    }
  }
  return total;
}

// Final-turn accuracy, counting an instance only when every slot is right.
inline double joint_accuracy(const DstModel& model,
                             const std::vector<EncodedDialog>& test,
                             std::size_t domain_idx,
                             const double* p = nullptr) {
  std::size_t n = 0, correct = 0;
  for (const auto& d : test) {
    if (d.domain_idx != domain_idx) continue;
    ++n;
    DialogState st = model.new_dialog_state();
    Observation obs;
    for (const auto& t : d.turns) obs = model.encode_turn(t, st, p);
    const DomainSpec& spec = model.domains()[domain_idx];
    BeliefState b = model.predict_slots(obs, spec.name, p);
    bool all = true;
    for (std::size_t s = 0; s < spec.user_slots.size(); ++s)
      if (b.at(spec.user_slots[s].name).value != d.labels[s]) all = false;
    if (all) ++correct;
  }
  if (n == 0) throw config_error("joint_accuracy: empty test set");
  return double(correct) / double(n);
}

inline double joint_accuracy(const DstModel& model,
                             const std::vector<LabeledDialog>& test,
                             const std::string& domain) {
  std::vector<EncodedDialog> enc;
  for (const auto& d : test)
    if (d.domain == domain) enc.push_back(encode_dialog(model, d));
  return joint_accuracy(model, enc, model.domain_index(domain));
}

struct DstTrainInfo {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val_joint;  // mean over domains
  std::size_t best_epoch = 0;
};

// Mini-batch MTL training; keeps the parameters of the epoch with the best
// mean validation joint accuracy.
inline DstTrainInfo train_dst(DstModel& model,
                              const std::map<std::string,
                                             std::vector<LabeledDialog>>&
                                  corpora,
                              Rng& rng) {
  const DstConfig& cfg = model.config();
  std::vector<EncodedDialog> train, val;
  for (const auto& [domain, dialogs] : corpora) {
    if (dialogs.empty())
      throw config_error("train_dst: empty corpus for " + domain);
    std::vector<std::size_t> idx(dialogs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.raw());
    std::size_t n_val = std::size_t(double(dialogs.size()) * cfg.val_fraction);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      EncodedDialog e = encode_dialog(model, dialogs[idx[i]]);
      (i < n_val ? val : train).push_back(std::move(e));
    }
  }
  if (val.empty()) val = train;  // tiny corpora: validate on train

  DstTrainInfo info;
  AdamOptimizer opt(model.params().size(), cfg.learning_rate);
  std::vector<double> grad(model.params().size());
  std::vector<double> best = model.params().values();
  double best_val = -1.0;

  std::vector<char> decay_mask;
  if (cfg.weight_decay > 0.0) {
    decay_mask.assign(model.params().size(), 1);
    for (const LayoutEntry& e : model.params().layout())
      if (e.name.size() >= 2 && e.name.rfind(".b") == e.name.size() - 2)
        std::fill_n(decay_mask.begin() + std::ptrdiff_t(e.offset), e.size(),
                    0);
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.raw());
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::vector<const EncodedDialog*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&train[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss =
          dst_batch_loss(model, model.params().data(), batch, grad.data());
      if (!std::isfinite(loss))
        throw numeric_error("DST training loss is not finite");
      opt.update(model.params().values(), grad);
      if (cfg.weight_decay > 0.0) {
        double shrink = cfg.learning_rate * cfg.weight_decay;
        std::vector<double>& v = model.params().values();
        for (std::size_t i = 0; i < v.size(); ++i)
          if (decay_mask[i]) v[i] -= shrink * v[i];
      }
      loss_sum += loss;
      ++n_batches;
    }
    info.epoch_loss.push_back(loss_sum / double(n_batches));

    double val_acc = 0.0;
    std::size_t n_domains = model.domains().size();
    std::size_t present = 0;
    for (std::size_t di = 0; di < n_domains; ++di) {
      bool any = false;
      for (const auto& d : val)
        if (d.domain_idx == di) any = true;
      if (!any) continue;
      val_acc += joint_accuracy(model, val, di);
      ++present;
    }
    val_acc /= double(present);
    info.epoch_val_joint.push_back(val_acc);
    if (val_acc > best_val) {
      best_val = val_acc;
      best = model.params().values();
      info.best_epoch = epoch;
    }
  }
  model.params().values() = best;
  return info;
}

}  // namespace mdrl
