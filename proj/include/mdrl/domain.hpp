#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mdrl/common.hpp"

namespace mdrl {

struct SlotDef {
  std::string name;
  std::size_t cardinality = 0;  // >= 2
};

// A slot-filling domain: user slots carry the user's constraints, system
// slots carry the answers the system can provide.
struct DomainSpec {
  std::string name;
  std::vector<SlotDef> user_slots;
  std::vector<std::string> system_slots;
  std::string nlg_style;
  std::uint64_t value_vocab_seed = 0;

  std::size_t user_slot_index(const std::string& slot) const {
    for (std::size_t i = 0; i < user_slots.size(); ++i)
      if (user_slots[i].name == slot) return i;
    throw config_error("unknown user slot " + slot + " in domain " + name);
  }

  bool has_user_slot(const std::string& slot) const {
    for (const auto& s : user_slots)
      if (s.name == slot) return true;
    return false;
  }

  bool has_system_slot(const std::string& slot) const {
    for (const auto& s : system_slots)
      if (s == slot) return true;
    return false;
  }

  std::size_t cardinality(const std::string& slot) const {
    return user_slots[user_slot_index(slot)].cardinality;
  }

  void validate() const {
    if (name.empty()) throw config_error("domain name empty");
    std::vector<std::string> seen;
    for (const auto& s : user_slots) {
      if (s.cardinality < 2)
        throw config_error("slot cardinality must be >= 2: " + s.name);
      seen.push_back(s.name);
    }
    for (const auto& s : system_slots) seen.push_back(s);
    for (std::size_t i = 0; i < seen.size(); ++i)
      for (std::size_t j = i + 1; j < seen.size(); ++j)
        if (seen[i] == seen[j])
          throw config_error("duplicate slot name " + seen[i] + " in " + name);
  }
};

// KB answers are drawn from a fixed per-slot answer range; values never need
// to be learned.
inline constexpr std::size_t kAnswerCardinality = 20;

// The six built-in domains. rest and rest_style share one value vocabulary
// while rest_slot draws a different one, and rest_style renders through its
// own template set.
inline std::vector<DomainSpec> builtin_domains() {
  std::vector<DomainSpec> d;
  d.push_back({"bus",
               {{"origin", 13}, {"destination", 13}, {"time", 30}},
               {"route", "duration"},
               "bus",
               101});
  d.push_back({"movie",
               {{"genre", 15}, {"year", 7}, {"country", 10}},
               {"title", "rating", "showtime"},
               "movie",
               102});
  d.push_back({"rest",
               {{"food", 11}, {"area", 13}},
               {"restaurant", "price", "hours"},
               "rest",
               103});
  d.push_back({"rest_slot",
               {{"food", 11}, {"area", 13}},
               {"restaurant", "price", "hours"},
               "rest",
               104});
  d.push_back({"rest_style",
               {{"food", 11}, {"area", 13}},
               {"restaurant", "price", "hours"},
               "rest_style",
               103});
  d.push_back({"weather",
               {{"city", 11}, {"day", 7}},
               {"temperature", "wind"},
               "weather",
               105});
  for (auto& spec : d) spec.validate();
  return d;
}

inline DomainSpec builtin_domain(const std::string& name) {
  for (auto& d : builtin_domains())
    if (d.name == name) return d;
  throw config_error("unknown built-in domain: " + name);
}

// Tiny single-slot domain used for optimizer contract checks.
inline DomainSpec micro_domain() {
  DomainSpec d{"micro", {{"need", 2}}, {"answer"}, "weather", 901};
  d.validate();
  return d;
}

// --- domain definition files -----------------------------------------------
//
//   name = rest
//   style = rest
//   vocab_seed = 103
//   user_slot = food 11
//   user_slot = area 13
//   system_slot = price

inline DomainSpec parse_domain_file(std::istream& in) {
  DomainSpec d;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key, eq;
    if (!(ls >> key)) continue;
    if (!(ls >> eq) || eq != "=")
      throw config_error("domain file line " + std::to_string(lineno) +
                         ": expected 'key = value'");
    if (key == "name") {
      ls >> d.name;
    } else if (key == "style") {
      ls >> d.nlg_style;
    } else if (key == "vocab_seed") {
      ls >> d.value_vocab_seed;
    } else if (key == "user_slot") {
      SlotDef s;
      if (!(ls >> s.name >> s.cardinality))
        throw config_error("domain file line " + std::to_string(lineno) +
                           ": user_slot needs 'name cardinality'");
      d.user_slots.push_back(s);
    } else if (key == "system_slot") {
      std::string s;
      ls >> s;
      d.system_slots.push_back(s);
    } else {
      throw config_error("domain file: unknown key " + key);
    }
  }
  d.validate();
  return d;
}

inline DomainSpec load_domain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw artifact_missing_error("cannot open domain file: " + path);
  return parse_domain_file(in);
}

inline void write_domain_file(const DomainSpec& d, std::ostream& out) {
  out << "name = " << d.name << "\n";
  out << "style = " << d.nlg_style << "\n";
  out << "vocab_seed = " << d.value_vocab_seed << "\n";
  for (const auto& s : d.user_slots)
    out << "user_slot = " << s.name << " " << s.cardinality << "\n";
  for (const auto& s : d.system_slots) out << "system_slot = " << s << "\n";
}

}  // namespace mdrl
