#pragma once

// Per-turn belief over the hidden user state: predictive prior, exact
// Bayesian update, variational free energy, and the observation/planner
// soft fusion with an utterance-length-aware width.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "puma/prob.hpp"
#include "puma/world_model.hpp"

namespace puma {

/// p(o_t | s) for each state s. Need not sum to one.
struct ObservationLikelihood {
  std::vector<double> values;
};

Categorical predictive_prior(const Categorical& prev, const WorldModel& wm,
                             const std::string& action);

/// Posterior proportional to prior * likelihood. Throws ZeroEvidence.
Categorical bayes_update(const Categorical& prior, const ObservationLikelihood& lik);

/// log sum_s prior[s] lik[s].
double log_evidence(const Categorical& prior, const ObservationLikelihood& lik);

/// KL(q || prior) - E_q[log lik]. Throws SupportViolation.
double free_energy(const Categorical& q, const Categorical& prior,
                   const ObservationLikelihood& lik);

inline constexpr std::array<double, 4> kWidthAlphas{0.50, 0.65, 0.75, 0.85};

/// Retained observation mass for an utterance of n_words words.
double width_alpha(int n_words, bool hedge);

struct Widened {
  Categorical dist;
  double alpha;
};

/// alpha * p_obs + (1 - alpha) * uniform.
Widened widen_observation(const Categorical& p_obs, int n_words, bool hedge);
Categorical widen_with_alpha(const Categorical& p_obs, double alpha);

/// Widened observation alone when no planner prior is available, otherwise
/// mix(p_obs_widened, p_prior, beta).
Categorical fuse(const Categorical& p_obs_widened, const std::optional<Categorical>& p_prior,
                 double beta);

const std::vector<std::string>& default_hedge_words();
bool contains_hedge(std::string_view text, const std::vector<std::string>& hedges);
int count_words(std::string_view text);

/// Uniform, or 0.8 on the declared stage with the remainder spread evenly.
Categorical initial_belief(const SpacePtr& states, const std::optional<std::string>& stage);

struct FusionProvenance {
  Categorical p_obs;
  std::optional<Categorical> p_prior;
  double alpha_used;
  double beta_used;
};

struct BeliefState {
  int turn = 0;
  Categorical dist;
  std::optional<FusionProvenance> provenance;
};

}  // namespace puma
