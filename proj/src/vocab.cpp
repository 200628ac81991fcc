#include "puma/vocab.hpp"

#include <map>

namespace puma::vocab {

const std::vector<std::string>& ttm_stages() {
  static const std::vector<std::string> v{kPrecontemplation, kContemplation, kPreparation};
  return v;
}

const std::vector<std::string>& talk_types() {
  static const std::vector<std::string> v{kChange, kNeutral, kSustain};
  return v;
}

const std::vector<std::string>& misc17() {
  static const std::vector<std::string> v{
      "Open Question",      "Closed Question",          "Simple Reflection",
      "Complex Reflection", "Affirm",                   "Reframe",
      "Support",            "Emphasize Control",        "Advise with Permission",
      "Facilitate",         "Give Information",         "Structure",
      "Raise Concern",      "Confront",                 "Direct",
      "Warn",               "Advise without Permission"};
  return v;
}

const std::vector<std::string>& client_actions() {
  static const std::vector<std::string> v{"Inform",      "Engage",   "Downplay", "Blame",
                                          "Deny",        "Acknowledge", "Hesitate", "Doubt",
                                          "Plan",        "Accept",   "Reject"};
  return v;
}

const std::vector<std::string>& behavioral_cues() {
  static const std::vector<std::string> v{"short_ack", "deflection", "hedging", "plan_statement"};
  return v;
}

SpacePtr ttm_space() {
  static const SpacePtr s = LabelSpace::make(ttm_stages(), true);
  return s;
}

SpacePtr talk_type_space() {
  static const SpacePtr s = LabelSpace::make(talk_types());
  return s;
}

SpacePtr misc_space() {
  static const SpacePtr s = LabelSpace::make(misc17());
  return s;
}

SpacePtr client_action_space() {
  static const SpacePtr s = LabelSpace::make(client_actions());
  return s;
}

SpacePtr default_cue_space(const LabelSpace& states) {
  std::vector<std::string> cues = states.labels();
  for (const auto& c : behavioral_cues())
    if (!states.contains(c)) cues.push_back(c);
  return LabelSpace::make(std::move(cues));
}

std::string cue_talk_type(const std::string& cue) {
  static const std::map<std::string, std::string> table{
      {kPrecontemplation, kSustain}, {kContemplation, kNeutral}, {kPreparation, kChange},
      {kChange, kChange},            {kNeutral, kNeutral},       {kSustain, kSustain},
      {"short_ack", kNeutral},       {"deflection", kSustain},   {"hedging", kNeutral},
      {"plan_statement", kChange}};
  auto it = table.find(cue);
  return it == table.end() ? kNeutral : it->second;
}

int stage_ordinal(const std::string& stage) {
  if (stage == kPrecontemplation) return 0;
  if (stage == kContemplation) return 1;
  if (stage == kPreparation) return 2;
  throw Error(ErrorCode::UnknownLabel, "'" + stage + "' is not a TTM stage");
}

}  // namespace puma::vocab
