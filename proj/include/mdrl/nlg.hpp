#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/dialog.hpp"
#include "mdrl/domain.hpp"

namespace mdrl {

using TokenSeq = std::vector<std::string>;

// Value tokens are qualified by the domain's value vocabulary and the slot,
// so rest/rest_style share user-facing values while rest_slot draws its own.
inline std::string value_token(const DomainSpec& d, const std::string& slot,
                               int value) {
  return "v" + std::to_string(d.value_vocab_seed) + ":" + slot + ":" +
         std::to_string(value);
}

inline std::string answer_token(const DomainSpec& d, const std::string& slot,
                                int value) {
  return "a" + std::to_string(d.value_vocab_seed) + ":" + slot + ":" +
         std::to_string(value);
}

namespace nlg_detail {

// Per-style surface forms. rest_style is token-disjoint from rest by
// construction (checked in tests); other styles may share function words.
struct StyleTemplates {
  TokenSeq sys_greet, usr_greet;
  TokenSeq sys_goodbye, usr_goodbye;
  TokenSeq usr_affirm, usr_deny;
  // request/confirm/inform patterns use "%s" for the slot-mention token and
  // "%v" for the value token
  TokenSeq sys_request, sys_confirm, sys_inform;
  TokenSeq usr_inform, usr_reinform;
  std::string ask_word;          // prefix for requested-slot mentions in the
                                 // user greeting
  std::string slot_suffix;       // decoration of slot-mention tokens
};

inline const StyleTemplates& style_templates(const std::string& style) {
  static const std::unordered_map<std::string, StyleTemplates> styles = {
      {"rest",
       {{"hello", "restaurant", "assistant"},
        {"hi", "i", "need", "a", "restaurant"},
        {"goodbye"},
        {"thanks", "bye"},
        {"yes", "exactly"},
        {"no", "wrong"},
        {"which", "%s", "do", "you", "prefer"},
        {"you", "said", "%v", "right"},
        {"the", "%s", "is", "%v"},
        {"i", "want", "%v"},
        {"no", "i", "want", "%v"},
        "need",
        ""}},
      {"rest_style",
       {{"welcome", "dining", "service"},
        {"greetings", "seeking", "dinner"},
        {"farewell"},
        {"that", "helps", "farewell"},
        {"correct", "indeed"},
        {"incorrect", "answer"},
        {"tell", "me", "%s"},
        {"confirming", "%v", "yeah"},
        {"our", "%s", "reads", "%v"},
        {"give", "preference", "%v"},
        {"incorrect", "preference", "%v"},
        "require",
        "_kind"}},
      {"bus",
       {{"bus", "info", "line"},
        {"hey", "bus", "question"},
        {"bye", "now"},
        {"cheers"},
        {"yep"},
        {"nope"},
        {"where", "%s", "please"},
        {"confirm", "%v", "ok"},
        {"your", "%s", "answer", "%v"},
        {"it", "is", "%v"},
        {"not", "that", "%v"},
        "need",
        ""}},
      {"movie",
       {{"movie", "desk"},
        {"hello", "movie", "help"},
        {"enjoy"},
        {"thank", "you"},
        {"right"},
        {"wrong"},
        {"what", "%s", "interests", "you"},
        {"did", "you", "mean", "%v"},
        {"that", "%s", "shows", "%v"},
        {"looking", "for", "%v"},
        {"actually", "want", "%v"},
        "need",
        ""}},
      {"weather",
       {{"weather", "service"},
        {"hi", "weather", "check"},
        {"bye"},
        {"stay", "dry"},
        {"sure"},
        {"negative"},
        {"for", "which", "%s"},
        {"so", "%v", "then"},
        {"expect", "%s", "%v"},
        {"about", "%v"},
        {"rather", "%v", "instead"},
        "need",
        ""}},
  };
  auto it = styles.find(style);
  if (it == styles.end()) throw config_error("unknown NLG style: " + style);
  return it->second;
}

inline TokenSeq expand(const TokenSeq& pattern, const std::string& slot_tok,
                       const std::string& value_tok) {
  TokenSeq out;
  out.reserve(pattern.size());
  for (const auto& t : pattern) {
    if (t == "%s")
      out.push_back(slot_tok);
    else if (t == "%v")
      out.push_back(value_tok);
    else
      out.push_back(t);
  }
  return out;
}

}  // namespace nlg_detail

// Deterministic template expansion of one act into tokens.
inline TokenSeq render_utterance(const DialogAct& act, const std::string& style,
                                 const DomainSpec& domain) {
  validate_act(act);
  const auto& tpl = nlg_detail::style_templates(style);
  std::string slot_tok = act.slot.empty() ? "" : act.slot + tpl.slot_suffix;
  switch (act.type) {
    case ActType::greet:
      return act.actor == Actor::system ? tpl.sys_greet : tpl.usr_greet;
    case ActType::goodbye:
      return act.actor == Actor::system ? tpl.sys_goodbye : tpl.usr_goodbye;
    case ActType::affirm: return tpl.usr_affirm;
    case ActType::deny: return tpl.usr_deny;
    case ActType::request:
      return nlg_detail::expand(tpl.sys_request, slot_tok, "");
    case ActType::confirm:
      return nlg_detail::expand(tpl.sys_confirm, slot_tok,
                                value_token(domain, act.slot, act.value));
    case ActType::inform: {
      bool system_side = act.actor == Actor::system;
      std::string vtok = system_side
                             ? answer_token(domain, act.slot, act.value)
                             : value_token(domain, act.slot, act.value);
      if (act.actor == Actor::user)
        return nlg_detail::expand(
            act.reinform ? tpl.usr_reinform : tpl.usr_inform, slot_tok, vtok);
      return nlg_detail::expand(tpl.sys_inform, slot_tok, vtok);
    }
  }
  throw config_error("unhandled act type");
}

// The user's opening line also names the system slots the user wants
// answered.
inline TokenSeq render_user_greeting(const std::string& style,
                                     const DomainSpec& domain,
                                     const std::vector<std::string>& requested) {
  const auto& tpl = nlg_detail::style_templates(style);
  TokenSeq out = tpl.usr_greet;
  for (const auto& s : requested) {
    out.push_back(tpl.ask_word);
    out.push_back(s + tpl.slot_suffix);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token vocabulary shared by all domains. Index 0 is the unknown token and
// index 1 stands in for an empty utterance.

class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kEmpty = 1;

  Vocabulary() {
    intern("<unk>");
    intern("<empty>");
  }

  std::size_t intern(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return it->second;
    std::size_t id = tokens_.size();
    index_[tok] = id;
    tokens_.push_back(tok);
    return id;
  }

  std::size_t lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }

  std::vector<std::size_t> encode(const TokenSeq& toks) const {
    if (toks.empty()) return {kEmpty};
    std::vector<std::size_t> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(lookup(t));
    return ids;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One shared vocabulary across domains: all template surface forms plus every
// value and answer token each domain can produce.
inline Vocabulary build_vocabulary(const std::vector<DomainSpec>& domains) {
  Vocabulary v;
  for (const auto& d : domains) {
    const auto& tpl = nlg_detail::style_templates(d.nlg_style);
    for (const TokenSeq* seq :
         {&tpl.sys_greet, &tpl.usr_greet, &tpl.sys_goodbye, &tpl.usr_goodbye,
          &tpl.usr_affirm, &tpl.usr_deny, &tpl.sys_request, &tpl.sys_confirm,
          &tpl.sys_inform, &tpl.usr_inform, &tpl.usr_reinform})
      for (const auto& t : *seq)
        if (t != "%s" && t != "%v") v.intern(t);
    v.intern(tpl.ask_word);
    for (const auto& s : d.user_slots) {
      v.intern(s.name + tpl.slot_suffix);
      for (std::size_t val = 0; val < s.cardinality; ++val)
        v.intern(value_token(d, s.name, int(val)));
    }
    for (const auto& s : d.system_slots) {
      v.intern(s + tpl.slot_suffix);
      for (std::size_t val = 0; val < kAnswerCardinality; ++val)
        v.intern(answer_token(d, s, int(val)));
    }
  }
  return v;
}

}  // namespace mdrl
