#pragma once

// The PUMA counselor loop and the baseline counselors.
//
// One agent turn:
//   perceive:  cue = talk type of the client utterance
//              p_obs from the observation model column of that cue
//              widen by utterance length, fuse with the cached planner prior
//              exact posterior against the predictive prior (audit)
//              world-model update with the previous action
//   plan:      EFE argmin over the action vocabulary (or round-robin when off)
//   commit:    cache planner prior for the next turn's fusion
//   respond:   retrieve memories, generate text for the action

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "puma/backend.hpp"
#include "puma/belief.hpp"
#include "puma/config.hpp"
#include "puma/efe.hpp"
#include "puma/memory.hpp"
#include "puma/world_model.hpp"

namespace puma {

struct AgentConfig {
  SpacePtr states;
  SpacePtr actions;
  SpacePtr cues;
  EfeWeights weights;
  double beta = 0.35;
  double repeat_penalty = 0.0;
  bool disable_planner = false;
  bool efe_action = true;
  CountMode count_mode = CountMode::Soft;
  double kappa_t = 1.0;
  double kappa_o = 1.0;
  /// Pseudo-counts placed on (s, cue == s) so a cue that names a state is
  /// initially most likely under that state.
  double obs_prior_strength = 4.0;
  RetrieveParams retrieve;
  int consolidate_every = 12;
  std::vector<std::string> hedges = default_hedge_words();
  std::optional<PreferenceModel> preference;  // default: talk-type preference over cues

  static AgentConfig from_run_config(const RunConfig& cfg);
};

/// Actions used when EFE selection is switched off.
const std::vector<std::string>& round_robin_actions();

struct Perception {
  std::string utterance;
  std::string cue;
  int n_words = 0;
  bool hedge = false;
  Categorical p_obs;
  Categorical widened;
  double alpha = 0.0;
  std::optional<Categorical> planner_prior;  // fusion prior actually used
  Categorical predictive_prior;
  Categorical fused;
  Categorical posterior;        // exact Bayes posterior against the predictive prior
  double free_energy = 0.0;     // F(fused) under (predictive prior, widened likelihood)
  double neg_log_evidence = 0.0;
};

struct AgentTurn {
  int turn = 0;
  std::optional<Perception> perception;
  std::optional<EfeReport> efe;
  std::string action;
  Categorical belief;
  std::vector<std::string> memories;
  std::string text;
};

class PumaAgent {
 public:
  PumaAgent(AgentConfig cfg, TextBackend& backend, std::shared_ptr<MemoryStore> memory,
            std::string session_id, std::optional<std::string> initial_stage = std::nullopt);

  /// Updates belief and world model from one client utterance.
  Perception perceive(const std::string& client_utterance);
  EfeReport plan() const;
  /// EFE argmin, or the round-robin action when EFE selection is off.
  std::string choose_action(std::optional<EfeReport>* report = nullptr);
  /// Records the executed action and caches the planner prior it implies.
  void commit_action(const std::string& action);

  /// Full turn. Without an utterance (session opening) perception is skipped.
  AgentTurn turn(const std::optional<std::string>& client_utterance, const Vars& extra = {});

  const Categorical& belief() const noexcept { return belief_; }
  const std::optional<Categorical>& cached_prior() const noexcept { return planner_prior_; }
  const std::optional<std::string>& last_action() const noexcept { return last_action_; }
  const WorldModel& world_model() const noexcept { return wm_; }
  const AgentConfig& config() const noexcept { return cfg_; }
  int turn_index() const noexcept { return turn_; }

 private:
  AgentConfig cfg_;
  TextBackend* backend_;
  std::shared_ptr<MemoryStore> memory_;
  std::string session_;
  WorldModel wm_;
  PreferenceModel pref_;
  Categorical initial_;
  Categorical belief_;
  std::optional<Categorical> planner_prior_;
  std::optional<std::string> last_action_;
  std::size_t round_robin_ = 0;
  int turn_ = 0;
};

struct CounselorTurn {
  std::string intended_action;
  std::string text;
  std::optional<AgentTurn> agent;
};

class Counselor {
 public:
  virtual ~Counselor() = default;
  virtual std::string name() const = 0;
  virtual CounselorTurn respond(const std::optional<std::string>& client_utterance) = 0;
  /// Action label the utterance was classified as.
  virtual void executed(const std::string& action) { (void)action; }
};

class PumaCounselor final : public Counselor {
 public:
  PumaCounselor(PumaAgent agent, Vars extra) : agent_(std::move(agent)), extra_(std::move(extra)) {}
  std::string name() const override { return "puma"; }
  CounselorTurn respond(const std::optional<std::string>& client_utterance) override;
  void executed(const std::string& action) override;
  const PumaAgent& agent() const noexcept { return agent_; }

 private:
  PumaAgent agent_;
  Vars extra_;
};

/// Uniform over MISC-17, seeded.
class RandomCounselor final : public Counselor {
 public:
  RandomCounselor(TextBackend& backend, std::uint64_t seed, Vars extra);
  std::string name() const override { return "random"; }
  CounselorTurn respond(const std::optional<std::string>& client_utterance) override;

 private:
  TextBackend* backend_;
  std::mt19937_64 rng_;
  Vars extra_;
};

/// Round-robin over round_robin_actions().
class FixedCounselor final : public Counselor {
 public:
  FixedCounselor(TextBackend& backend, Vars extra);
  std::string name() const override { return "fixed"; }
  CounselorTurn respond(const std::optional<std::string>& client_utterance) override;

 private:
  TextBackend* backend_;
  std::size_t next_ = 0;
  Vars extra_;
};

/// Replays a fixed list of utterances cyclically. Used as the trigger oracle
/// (profile trigger sentences) and the generic counselor in tests.
class ScriptedCounselor final : public Counselor {
 public:
  ScriptedCounselor(std::string name, std::vector<std::string> lines)
      : name_(std::move(name)), lines_(std::move(lines)) {}
  std::string name() const override { return name_; }
  CounselorTurn respond(const std::optional<std::string>& client_utterance) override;

 private:
  std::string name_;
  std::vector<std::string> lines_;
  std::size_t next_ = 0;
};

}  // namespace puma
