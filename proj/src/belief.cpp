#include "puma/belief.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace puma {

Categorical predictive_prior(const Categorical& prev, const WorldModel& wm,
                             const std::string& action) {
  if (!wm.actions()->contains(action)) throw Error(ErrorCode::UnknownAction, "'" + action + "'");
  if (!same_space(prev.space(), wm.states()))
    throw Error(ErrorCode::DimensionMismatch, "belief is not over the model's state space");
  const std::size_t a = wm.actions()->index(action);
  const std::size_t n = prev.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    if (prev[s] == 0.0) continue;
    const Categorical row = wm.transition_prob(s, a);
    for (std::size_t s2 = 0; s2 < n; ++s2) out[s2] += prev[s] * row[s2];
  }
  return normalize(out, prev.space());
}

namespace {

void check_lik(const Categorical& d, const ObservationLikelihood& lik) {
  if (lik.values.size() != d.size())
    throw Error(ErrorCode::DimensionMismatch, "likelihood length does not match state space");
  for (double v : lik.values)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::InvalidDistribution, "likelihood must be finite and non-negative");
}

}  // namespace

Categorical bayes_update(const Categorical& prior, const ObservationLikelihood& lik) {
  check_lik(prior, lik);
  const auto p = prior.probs();
  if (std::all_of(p.begin(), p.end(), [&](double v) { return v == p[0]; })) {
    // Uniform prior: the posterior is the normalized likelihood.
    double total = 0.0;
    for (double v : lik.values) total += v;
    if (total <= 0.0) throw Error(ErrorCode::ZeroEvidence, "likelihood is zero everywhere");
    return normalize(lik.values, prior.space());
  }
  std::vector<double> joint(prior.size());
  double evidence = 0.0;
  for (std::size_t s = 0; s < joint.size(); ++s) {
    joint[s] = prior[s] * lik.values[s];
    evidence += joint[s];
  }
  if (evidence <= 0.0) throw Error(ErrorCode::ZeroEvidence, "prior and likelihood share no support");
  for (double& v : joint) v /= evidence;
  return Categorical(prior.space(), std::move(joint));
}

double log_evidence(const Categorical& prior, const ObservationLikelihood& lik) {
  check_lik(prior, lik);
  double evidence = 0.0;
  for (std::size_t s = 0; s < prior.size(); ++s) evidence += prior[s] * lik.values[s];
  if (evidence <= 0.0) throw Error(ErrorCode::ZeroEvidence, "prior and likelihood share no support");
  return std::log(evidence);
}

double free_energy(const Categorical& q, const Categorical& prior,
                   const ObservationLikelihood& lik) {
  check_lik(q, lik);
  double expected_loglik = 0.0;
  for (std::size_t s = 0; s < q.size(); ++s) {
    if (q[s] == 0.0) continue;
    if (lik.values[s] == 0.0)
      throw Error(ErrorCode::SupportViolation,
                  "q has mass on '" + q.space()->label(s) + "' where the likelihood is zero");
    expected_loglik += q[s] * std::log(lik.values[s]);
  }
  return kl_divergence(q, prior) - expected_loglik;
}

double width_alpha(int n_words, bool hedge) {
  if (n_words < 6) return kWidthAlphas[0];
  if (n_words < 12 || hedge) return kWidthAlphas[1];
  if (n_words < 25) return kWidthAlphas[2];
  return kWidthAlphas[3];
}

Categorical widen_with_alpha(const Categorical& p_obs, double alpha) {
  return mix(Categorical::uniform(p_obs.space()), p_obs, alpha);
}

Widened widen_observation(const Categorical& p_obs, int n_words, bool hedge) {
  const double alpha = width_alpha(n_words, hedge);
  return {widen_with_alpha(p_obs, alpha), alpha};
}

Categorical fuse(const Categorical& p_obs_widened, const std::optional<Categorical>& p_prior,
                 double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw Error(ErrorCode::WeightOutOfRange, "beta " + std::to_string(beta));
  if (!p_prior) return p_obs_widened;
  return mix(p_obs_widened, *p_prior, beta);
}

const std::vector<std::string>& default_hedge_words() {
  static const std::vector<std::string> words{"maybe",       "guess",    "kind of",
                                              "sort of",     "i don't know", "not sure",
                                              "perhaps",     "possibly"};
  return words;
}

bool contains_hedge(std::string_view text, const std::vector<std::string>& hedges) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::any_of(hedges.begin(), hedges.end(), [&](const std::string& h) {
    return !h.empty() && lower.find(h) != std::string::npos;
  });
}

int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

Categorical initial_belief(const SpacePtr& states, const std::optional<std::string>& stage) {
  if (!stage || states->size() == 1) return Categorical::uniform(states);
  const std::size_t k = states->index(*stage);
  const double rest = 0.2 / static_cast<double>(states->size() - 1);
  std::vector<double> p(states->size(), rest);
  p[k] = 0.8;
  return Categorical(states, std::move(p));
}

}  // namespace puma
