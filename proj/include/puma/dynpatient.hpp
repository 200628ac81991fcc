#pragma once

// Profile-grounded client simulator.
//
// Per counselor turn:
//   1. match the utterance against profile triggers (cosine >= tau)
//   2. content gate g from the best match and its hit count
//   3. r += E[dr | stage, counselor action] * g + bonuses of newly discovered triggers
//   4. stage transition (coverage for pre -> cont with readiness reset,
//      readiness threshold for cont -> prep)
//   5. client action from the Dirichlet-smoothed profile prior via the backend
//   6. client reply via the backend

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "puma/backend.hpp"
#include "puma/prob.hpp"

namespace puma {

struct ClientProfile {
  std::string id;
  std::string topic;
  std::string behavior;
  std::vector<std::string> personas;
  std::vector<std::string> beliefs;
  std::vector<std::string> motivations;
  std::vector<std::string> plans;
  std::string initial_stage = "precontemplation";
  /// n_{p,s,a}: stage -> client action -> count.
  std::map<std::string, std::map<std::string, double>> action_counts;
  std::optional<double> prep_threshold;

  nlohmann::json to_json() const;
  static ClientProfile from_json(const nlohmann::json& j);
  static ClientProfile load(const std::filesystem::path& file);
};

/// Profiles in a directory, sorted by file name.
std::vector<ClientProfile> load_profiles(const std::filesystem::path& dir);

enum class TriggerCategory { Beliefs, Motivation, Plans };
std::string_view to_string(TriggerCategory c);

struct Trigger {
  std::string id;
  TriggerCategory category = TriggerCategory::Beliefs;
  std::string text;
  double bonus = 0.0;
  std::vector<double> embedding;
  int hit_count = 0;
  bool discovered = false;
};

struct TriggerRules {
  std::size_t min_len_beliefs = 10;
  std::size_t min_len_motivation = 20;
  std::size_t min_len_plans = 10;
  double bonus_beliefs = 0.2;
  double bonus_motivation = 0.4;
  double bonus_plans = 0.5;
};

/// Trigger set from beliefs, motivations and plans; personas are excluded.
/// Sentence length is measured in characters and must strictly exceed the minimum.
std::vector<Trigger> build_triggers(const ClientProfile& profile, TextBackend& backend,
                                    const TriggerRules& rules = {});

struct TriggerMatch {
  std::size_t index = 0;
  double similarity = 0.0;
  int hit_count = 0;  // including this hit
  bool newly_discovered = false;
};

/// Increments hit counts of every trigger with cosine >= tau.
std::vector<TriggerMatch> match_triggers(std::vector<Trigger>& triggers,
                                         const std::vector<double>& utterance_embedding, double tau);

/// 0.1 without a match, else 0.1 + 0.9 * rho_max * 0.5^(h - 1) with h the
/// smallest hit count among the matched triggers.
double content_gate(const std::vector<TriggerMatch>& matched);

struct TalkTypeWeights {
  double change = 1.0;
  double neutral = 0.3;
  double sustain = -1.0;
};

/// Row over {change, neutral, sustain}.
double expected_delta_r(const Categorical& tt_row, const TalkTypeWeights& w = {});

double update_readiness(double r, double delta_r_bar, double g,
                        const std::vector<double>& new_trigger_bonuses);

/// P(talk type | stage, counselor action) estimated from counts, with cells
/// below min_support backed off to the stage marginal.
class TalkTypeTable {
 public:
  TalkTypeTable() = default;
  explicit TalkTypeTable(int min_support) : min_support_(min_support) {}

  void add(const std::string& stage, const std::string& action, const std::string& talk_type,
           double count = 1.0);
  double support(const std::string& stage, const std::string& action) const;
  Categorical row(const std::string& stage, const std::string& action) const;
  int min_support() const noexcept { return min_support_; }

  nlohmann::json to_json() const;
  static TalkTypeTable from_json(const nlohmann::json& j, int min_support = 3);

 private:
  using Counts = std::array<double, 3>;
  int min_support_ = 3;
  std::map<std::string, std::map<std::string, Counts>> counts_;
};

/// Population-level tables shared by all simulated clients.
struct SimTables {
  TalkTypeTable talk_types;
  std::map<std::string, Categorical> population_action_prior;  // stage -> over client actions
  std::map<std::string, std::string> action_instructions;

  Categorical pop_prior(const std::string& stage) const;

  static SimTables from_json(const nlohmann::json& j, int min_support = 3);
  static SimTables load(const std::filesystem::path& file, int min_support = 3);
};

struct SimParams {
  double tau = 0.45;
  double theta_cov = 0.3;
  double theta_prep_default = 0.5;
  double alpha_dirichlet = 5.0;
  TalkTypeWeights weights;
  TriggerRules trigger_rules;
};

struct SimState {
  std::string stage;
  double readiness = 0.0;
  std::vector<Trigger> triggers;
  int turn = 0;
  std::uint64_t rng_seed = 42;

  std::size_t discovered_count() const;
  double coverage() const;
};

struct StageStep {
  std::string stage;
  double readiness;
  bool transitioned;
};

/// Applies at most one transition. Throws EmptyTriggerSet in precontemplation
/// when there are no triggers.
StageStep stage_transition(const SimState& sim, double theta_cov, double theta_prep);

/// (n_{p,s,a} + alpha * P_pop(a|s)) / (n_{p,s,.} + alpha) over the client actions.
Categorical dirichlet_action_dist(const ClientProfile& profile, const std::string& stage,
                                  const Categorical& pop_prior, double alpha);

struct ClientActionChoice {
  std::string action;
  Categorical dist;
  bool fallback = false;  // backend output was unparsable
};

struct DialogueLine {
  std::string speaker;  // "counselor" or "client"
  std::string text;
};

std::string format_context(const std::vector<DialogueLine>& history, std::size_t last_n);

ClientActionChoice select_client_action(const ClientProfile& profile, const std::string& stage,
                                        const Categorical& pop_prior, double alpha,
                                        TextBackend& backend, const Vars& context);

std::string generate_client_response(const SimState& sim, const ClientProfile& profile,
                                     TextBackend& backend, const std::string& counselor_utterance,
                                     const std::string& client_action,
                                     const std::vector<TriggerMatch>& matched,
                                     const std::map<std::string, std::string>& instructions,
                                     const std::vector<DialogueLine>& history);

/// Turn of an annotated session (offline evaluation, calibration, validation).
struct AnnotatedTurn {
  std::string client;
  std::string counselor;
  std::optional<std::string> counselor_action;
  std::optional<std::string> gold_stage;
  std::optional<std::string> client_action;
};

struct AnnotatedSession {
  std::string id;
  std::optional<std::string> profile_id;
  std::optional<std::string> initial_stage;
  std::vector<AnnotatedTurn> turns;
};

std::vector<AnnotatedSession> load_annotated_sessions(const std::filesystem::path& file);
std::vector<AnnotatedSession> annotated_sessions_from_json(const nlohmann::json& j);

/// Replays readiness dynamics with gold stages and returns the readiness at
/// the first gold contemplation -> preparation transition, or the default.
double calibrate_prep_threshold(const ClientProfile& profile,
                                const std::vector<AnnotatedTurn>& trajectory,
                                const SimTables& tables, TextBackend& backend,
                                const SimParams& params = {});

/// KL(sim || gold) after epsilon-smoothing both distributions.
double act_kl(const Categorical& sim_action_dist, const Categorical& gold_action_dist,
              double eps = 1e-6);

struct SimTurn {
  int turn = 0;
  std::vector<TriggerMatch> matched;
  double gate = 0.1;
  double delta_r_bar = 0.0;
  std::string stage_before;
  std::string stage;
  double readiness = 0.0;
  bool transitioned = false;
  ClientActionChoice client_action;
  std::string client_text;
};

class DynPatient {
 public:
  DynPatient(ClientProfile profile, std::shared_ptr<const SimTables> tables, SimParams params,
             TextBackend& backend, std::uint64_t seed = 42);

  /// counselor_action is the MISC label of the utterance.
  SimTurn step(const std::string& counselor_utterance, const std::string& counselor_action);

  const SimState& state() const noexcept { return state_; }
  const ClientProfile& profile() const noexcept { return profile_; }
  double theta_prep() const noexcept { return theta_prep_; }
  const std::vector<DialogueLine>& history() const noexcept { return history_; }

 private:
  ClientProfile profile_;
  std::shared_ptr<const SimTables> tables_;
  SimParams params_;
  TextBackend* backend_;
  SimState state_;
  double theta_prep_;
  std::vector<DialogueLine> history_;
};

}  // namespace puma
