#pragma once

// One-step expected-free-energy action selection.
//
//   G(a) = lambda_e * E_{q(o'|a)}[ H(q(s'|o',a)) ] + lambda_p * E_{q(o'|a)}[ -log p_pref(o') ]
//
// q(s'|a) is the predictive prior under the transition model and q(o'|a) its
// push-forward through the observation model. The argmin over the action
// vocabulary is chosen, ties resolved by vocabulary order.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "puma/prob.hpp"
#include "puma/world_model.hpp"

namespace puma {

class PreferenceModel {
 public:
  /// From unnormalized log preferences, one per cue.
  PreferenceModel(SpacePtr cues, std::vector<double> log_pref);
  static PreferenceModel from_probs(const Categorical& pref);

  /// Cue weights by signalled talk type (change 0.70, neutral 0.25, sustain 0.05),
  /// renormalized over the cue vocabulary.
  static PreferenceModel talk_type_default(const SpacePtr& cues);
  static PreferenceModel talk_type_weighted(const SpacePtr& cues,
                                            const std::map<std::string, double>& weights);

  const std::vector<double>& log_pref() const noexcept { return log_pref_; }
  const Categorical& normalized() const noexcept { return normalized_; }

 private:
  std::vector<double> log_pref_;
  Categorical normalized_;
};

struct ActionScore {
  std::string action;
  double epistemic = 0.0;
  double pragmatic = 0.0;
  double total = 0.0;  // weighted G(a), before any repeat penalty
  double penalized = 0.0;
  Categorical q_next_prior;
};

struct EfeReport {
  std::vector<ActionScore> scores;  // vocabulary order
  std::string chosen;

  const ActionScore& score(const std::string& action) const;
};

struct EfeWeights {
  double lambda_e = 0.4;
  double lambda_p = 0.6;
};

Categorical predict_obs_dist(const Categorical& belief, const WorldModel& wm,
                             const std::string& action);
/// Push a next-state distribution through the observation model.
Categorical push_forward_obs(const Categorical& q_next, const WorldModel& wm);

double epistemic_value(const Categorical& belief, const WorldModel& wm, const std::string& action);
/// Expected posterior entropy given an explicit next-state distribution.
double expected_posterior_entropy(const Categorical& q_next, const WorldModel& wm);

double pragmatic_value(const Categorical& belief, const WorldModel& wm, const std::string& action,
                       const PreferenceModel& pref);
double expected_neg_log_pref(const Categorical& q_obs, const PreferenceModel& pref);

/// Throws InvalidWeights when a weight is negative or both are zero.
double combine_efe(double epistemic, double pragmatic, const EfeWeights& w);
double expected_free_energy(const Categorical& belief, const WorldModel& wm,
                            const std::string& action, const PreferenceModel& pref,
                            const EfeWeights& w);

/// Throws EmptyActionSet.
EfeReport select_action(const Categorical& belief, const WorldModel& wm, const LabelSpace& actions,
                        const PreferenceModel& pref, const EfeWeights& w,
                        double repeat_penalty = 0.0,
                        const std::optional<std::string>& last_action = std::nullopt);

Categorical planner_prior(const Categorical& belief, const WorldModel& wm,
                          const std::string& chosen);

}  // namespace puma
