#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "puma/backend.hpp"
#include "puma/config.hpp"
#include "puma/dynpatient.hpp"
#include "puma/world_model.hpp"

namespace testing_support {

inline puma::DataPaths data() { return {puma::default_data_dir()}; }

inline puma::BackendConfig scripted_config() {
  return puma::backend_config(puma::RunConfig{}, data());
}

inline std::unique_ptr<puma::ScriptedBackend> scripted() {
  return std::make_unique<puma::ScriptedBackend>(scripted_config());
}

/// World model whose smoothed rows equal the given matrices up to kappa = 1e-12.
/// trans[a][s][s'], obs[s][o].
inline puma::WorldModel exact_model(puma::SpacePtr states, puma::SpacePtr actions,
                                    puma::SpacePtr cues,
                                    const std::vector<std::vector<std::vector<double>>>& trans,
                                    const std::vector<std::vector<double>>& obs) {
  const double kappa = 1e-12;
  puma::WorldModel wm(states, actions, cues, kappa, kappa);
  const double ns = static_cast<double>(states->size()), nc = static_cast<double>(cues->size());
  for (std::size_t a = 0; a < trans.size(); ++a)
    for (std::size_t s = 0; s < trans[a].size(); ++s)
      for (std::size_t s2 = 0; s2 < trans[a][s].size(); ++s2) {
        const double c = trans[a][s][s2] * (1.0 + kappa) - kappa / ns;
        if (c > 0) wm.add_transition_count(s, a, s2, c);
      }
  for (std::size_t s = 0; s < obs.size(); ++s)
    for (std::size_t o = 0; o < obs[s].size(); ++o) {
      const double c = obs[s][o] * (1.0 + kappa) - kappa / nc;
      if (c > 0) wm.add_observation_count(s, o, c);
    }
  return wm;
}

/// Three states, two actions. The observation model tells s1 apart from
/// {s2, s3} but cannot separate s2 from s3. "probe" leads to {s1, s2} where
/// the next observation identifies the state; "drift" leads to {s2, s3} where
/// it reveals nothing. "drift" puts 0.8 of the predicted cue mass on o2,
/// "probe" only 0.4.
struct DiscriminationFixture {
  puma::SpacePtr states = puma::LabelSpace::make({"s1", "s2", "s3"});
  puma::SpacePtr actions = puma::LabelSpace::make({"drift", "probe"});
  puma::SpacePtr cues = puma::LabelSpace::make({"o1", "o2", "o3"});
  puma::WorldModel wm = exact_model(
      states, actions, cues,
      {{{0, 0.5, 0.5}, {0, 0.5, 0.5}, {0, 0.5, 0.5}},   // drift
       {{0.5, 0.5, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0}}},  // probe
      {{1, 0, 0}, {0, 0.8, 0.2}, {0, 0.8, 0.2}});
};

/// Trigger sentences of a profile, one category after another per round
/// (belief, motivation, plan, belief, ...), as a counselor who names them.
inline std::vector<std::string> oracle_lines(const puma::ClientProfile& p, puma::TextBackend& b) {
  const auto triggers = puma::build_triggers(p, b);
  std::vector<std::vector<std::string>> by_cat(3);
  for (const auto& t : triggers) by_cat[static_cast<int>(t.category)].push_back(t.text);
  std::vector<std::string> out;
  for (std::size_t round = 0; out.size() < triggers.size(); ++round)
    for (const auto& cat : by_cat)
      if (round < cat.size()) out.push_back(cat[round]);
  return out;
}

/// Short acknowledgments that share no token with any shipped trigger.
inline std::vector<std::string> generic_lines() { return {"Mm-hmm.", "Okay.", "Uh-huh.", "Hmm."}; }

/// Scripted backend that starts failing after a number of generate() calls.
class FailingBackend final : public puma::TextBackend {
 public:
  FailingBackend(puma::BackendConfig cfg, int ok_calls) : inner_(std::move(cfg)), left_(ok_calls) {}
  std::string generate(const puma::GenerationRequest& r) override {
    if (left_-- <= 0) throw puma::Error(puma::ErrorCode::BackendUnavailable, "injected failure");
    return inner_.generate(r);
  }
  std::string choose(const puma::GenerationRequest& r) override { return inner_.choose(r); }
  std::string classify_counselor_action(std::string_view u, std::string_view c) override {
    return inner_.classify_counselor_action(u, c);
  }
  std::string classify_talk_type(std::string_view u, std::string_view c, const puma::LabelSpace& s) override {
    return inner_.classify_talk_type(u, c, s);
  }
  std::vector<double> embed(std::string_view t) override { return inner_.embed(t); }
  std::string summarize(const std::vector<std::string>& t) override { return inner_.summarize(t); }

 private:
  puma::ScriptedBackend inner_;
  int left_;
};

inline std::filesystem::path fixtures() { return PUMA_TEST_DIR "/fixtures"; }

}  // namespace testing_support
