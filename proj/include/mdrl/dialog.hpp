#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/domain.hpp"

namespace mdrl {

enum class Actor { system, user };
enum class ActType { greet, request, inform, confirm, affirm, deny, goodbye };

inline const char* act_type_name(ActType t) {
  switch (t) {
    case ActType::greet: return "greet";
    case ActType::request: return "request";
    case ActType::inform: return "inform";
    case ActType::confirm: return "confirm";
    case ActType::affirm: return "affirm";
    case ActType::deny: return "deny";
    case ActType::goodbye: return "goodbye";
  }
  return "?";
}

// Structured act exchanged between system and simulated user. A user inform
// that corrects a rejected confirmation carries reinform = true; it renders
// with a denial prefix but is otherwise an ordinary inform.
struct DialogAct {
  Actor actor = Actor::system;
  ActType type = ActType::greet;
  std::string slot;  // set for request/confirm/inform
  int value = -1;    // set for confirm/inform
  bool reinform = false;

  static DialogAct sys(ActType t, std::string slot = "", int value = -1) {
    return {Actor::system, t, std::move(slot), value, false};
  }
  static DialogAct usr(ActType t, std::string slot = "", int value = -1,
                       bool reinform = false) {
    return {Actor::user, t, std::move(slot), value, reinform};
  }
};

inline void validate_act(const DialogAct& a) {
  switch (a.type) {
    case ActType::request:
      if (a.slot.empty()) throw config_error("request act without slot");
      break;
    case ActType::confirm:
      if (a.slot.empty() || a.value < 0)
        throw config_error("confirm act needs slot and value");
      break;
    case ActType::inform:
      if (a.slot.empty() || a.value < 0)
        throw config_error("inform act needs slot and value");
      break;
    case ActType::affirm:
    case ActType::deny:
      if (a.value >= 0) throw config_error("affirm/deny must not carry value");
      break;
    default: break;
  }
}

inline std::string to_string(const DialogAct& a) {
  std::string s = a.reinform ? "deny+inform" : act_type_name(a.type);
  if (!a.slot.empty()) {
    s += "(" + a.slot;
    if (a.value >= 0) s += "=" + std::to_string(a.value);
    s += ")";
  }
  return s;
}

// The user's fixed objective for one dialog.
struct UserGoal {
  std::map<std::string, int> user_slot_values;
  std::vector<std::string> requested_system_slots;  // non-empty

  void validate(const DomainSpec& d) const {
    for (const auto& s : d.user_slots) {
      auto it = user_slot_values.find(s.name);
      if (it == user_slot_values.end())
        throw contract_error("goal missing user slot " + s.name);
      if (it->second < 0 || std::size_t(it->second) >= s.cardinality)
        throw contract_error("goal value out of range for " + s.name);
    }
    if (requested_system_slots.empty())
      throw contract_error("goal requests no system slots");
  }
};

struct RewardConfig {
  double step_reward = -1.0;
  double success_bonus = 30.0;
  int max_turns = 15;
};

struct EnvState {
  std::string domain;
  UserGoal goal;
  int turn_index = 0;
  std::vector<std::pair<DialogAct, DialogAct>> history;
  std::set<std::string> informed_correct;
  bool done = false;
  bool success = false;
};

}  // namespace mdrl
