#pragma once

// Count-based generative model of user dynamics:
//   p(s' | s, a)  action-conditioned transitions
//   p(cue | s)    state-conditioned observation cues
// Each row is a Dirichlet-smoothed estimate with a uniform base measure.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "puma/prob.hpp"

namespace puma {

/// One turn of evidence (s_{t-1}, a_{t-1}, s_t, o_t). The first turn of a
/// session has no previous action and contributes only to the observation table.
struct TurnEvidence {
  std::optional<Categorical> q_prev;
  std::optional<std::string> action;
  Categorical q_curr;
  std::string cue;
};

enum class CountMode { Soft, Hard };

class WorldModel {
 public:
  WorldModel(SpacePtr states, SpacePtr actions, SpacePtr cues, double kappa_t = 1.0,
             double kappa_o = 1.0);

  const SpacePtr& states() const noexcept { return states_; }
  const SpacePtr& actions() const noexcept { return actions_; }
  const SpacePtr& cues() const noexcept { return cues_; }
  double kappa_t() const noexcept { return kappa_t_; }
  double kappa_o() const noexcept { return kappa_o_; }

  Categorical transition_prob(std::size_t s, std::size_t a) const;
  Categorical transition_prob(const std::string& s, const std::string& a) const;
  Categorical observation_prob(std::size_t s) const;
  Categorical observation_prob(const std::string& s) const;
  /// p(cue | s) for every s; unnormalized over s.
  std::vector<double> cue_likelihood(std::size_t cue) const;

  double transition_count(std::size_t s, std::size_t a, std::size_t s_next) const;
  double observation_count(std::size_t s, std::size_t cue) const;
  void add_transition_count(std::size_t s, std::size_t a, std::size_t s_next, double mass);
  void add_observation_count(std::size_t s, std::size_t cue, double mass);

  double total_transition_mass() const;
  double total_observation_mass() const;

  /// Adds one unit of evidence mass to each table the evidence licenses.
  void update(const TurnEvidence& ev, CountMode mode = CountMode::Soft);
  WorldModel updated(const TurnEvidence& ev, CountMode mode = CountMode::Soft) const;

  nlohmann::json to_json() const;
  static WorldModel from_json(const nlohmann::json& j);

 private:
  std::size_t t_index(std::size_t s, std::size_t a, std::size_t s_next) const {
    return (s * actions_->size() + a) * states_->size() + s_next;
  }
  std::size_t o_index(std::size_t s, std::size_t cue) const { return s * cues_->size() + cue; }
  std::size_t action_index(const std::string& a) const;

  SpacePtr states_;
  SpacePtr actions_;
  SpacePtr cues_;
  double kappa_t_;
  double kappa_o_;
  std::vector<double> transition_counts_;
  std::vector<double> observation_counts_;
};

/// Observation NLL plus lambda-weighted transition NLL, both expected under
/// the beliefs carried by the trajectory.
double wm_loss(const WorldModel& wm, std::span<const TurnEvidence> trajectory, double lambda);

}  // namespace puma
