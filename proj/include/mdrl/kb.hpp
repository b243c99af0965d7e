#pragma once

#include <map>
#include <string>

#include "mdrl/common.hpp"
#include "mdrl/domain.hpp"

namespace mdrl {

// Deterministic knowledge base: the answer for each system slot is a stable
// hash of (domain name, value vocab seed, sorted user slot assignment)
// reduced modulo the fixed answer cardinality. Same inputs, same outputs,
// across runs and platforms.
inline std::map<std::string, int> kb_lookup(
    const DomainSpec& domain, const std::map<std::string, int>& user_values) {
  std::string key = domain.name;
  key += '\x1f';
  key += std::to_string(domain.value_vocab_seed);
  for (const auto& s : domain.user_slots) {
    auto it = user_values.find(s.name);
    if (it == user_values.end())
      throw config_error("kb_lookup: missing user slot value " + s.name);
    // std::map iteration is already sorted by slot name, but the canonical
    // key walks the declared slots so extraneous entries are ignored.
    key += '\x1f';
    key += s.name;
    key += '=';
    key += std::to_string(it->second);
  }
  std::uint64_t base = hash_string(key);
  std::map<std::string, int> answers;
  for (const auto& sys_slot : domain.system_slots) {
    std::uint64_t h = splitmix64(base ^ hash_string(sys_slot));
    answers[sys_slot] = int(h % kAnswerCardinality);
  }
  return answers;
}

inline int kb_answer(const DomainSpec& domain,
                     const std::map<std::string, int>& user_values,
                     const std::string& system_slot) {
  auto all = kb_lookup(domain, user_values);
  auto it = all.find(system_slot);
  if (it == all.end())
    throw config_error("kb_answer: unknown system slot " + system_slot);
  return it->second;
}

}  // namespace mdrl
