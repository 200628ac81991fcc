#pragma once

#include <string>
#include <vector>

#include "puma/prob.hpp"

namespace puma::vocab {

// Transtheoretical Model stages, ordinal.
inline const std::string kPrecontemplation = "precontemplation";
inline const std::string kContemplation = "contemplation";
inline const std::string kPreparation = "preparation";

// Client talk types.
inline const std::string kChange = "change";
inline const std::string kNeutral = "neutral";
inline const std::string kSustain = "sustain";

const std::vector<std::string>& ttm_stages();
const std::vector<std::string>& talk_types();
/// The 17 MISC counselor behavior codes used as the agent action set.
const std::vector<std::string>& misc17();
/// The 11 simulated-client actions.
const std::vector<std::string>& client_actions();
/// Behavioral cues appended to the state labels in the default cue vocabulary.
const std::vector<std::string>& behavioral_cues();

SpacePtr ttm_space();
SpacePtr talk_type_space();
SpacePtr misc_space();
SpacePtr client_action_space();
/// State labels followed by behavioral_cues().
SpacePtr default_cue_space(const LabelSpace& states);

/// Talk type a cue label signals (change, neutral or sustain).
std::string cue_talk_type(const std::string& cue);

/// Ordinal rank of a TTM stage: pre = 0, cont = 1, prep = 2.
int stage_ordinal(const std::string& stage);

}  // namespace puma::vocab
