#include "puma/efe.hpp"

#include <cmath>
#include <limits>

#include "puma/belief.hpp"
#include "puma/vocab.hpp"

namespace puma {

namespace {

std::vector<double> normalized_from_logs(const std::vector<double>& logs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : logs) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidDistribution, "log preference not finite");
    hi = std::max(hi, v);
  }
  std::vector<double> p(logs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) sum += p[i] = std::exp(logs[i] - hi);
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

PreferenceModel::PreferenceModel(SpacePtr cues, std::vector<double> log_pref)
    : log_pref_(std::move(log_pref)), normalized_(Categorical::uniform(cues)) {
  if (log_pref_.size() != cues->size())
    throw Error(ErrorCode::DimensionMismatch, "preference length does not match cue vocabulary");
  normalized_ = normalize(normalized_from_logs(log_pref_), cues);
  for (double p : normalized_.probs())
    if (!(p > 0.0)) throw Error(ErrorCode::InvalidDistribution, "preference underflows to zero");
}

PreferenceModel PreferenceModel::from_probs(const Categorical& pref) {
  std::vector<double> logs(pref.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    if (!(pref[i] > 0.0))
      throw Error(ErrorCode::InvalidDistribution, "preference must be positive on every cue");
    logs[i] = std::log(pref[i]);
  }
  return PreferenceModel(pref.space(), std::move(logs));
}

PreferenceModel PreferenceModel::talk_type_weighted(const SpacePtr& cues,
                                                    const std::map<std::string, double>& weights) {
  std::vector<double> w(cues->size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto it = weights.find(vocab::cue_talk_type(cues->label(i)));
    if (it == weights.end() || !(it->second > 0.0))
      throw Error(ErrorCode::InvalidConfig, "missing or non-positive talk-type preference");
    w[i] = it->second;
  }
  return from_probs(normalize(w, cues));
}

PreferenceModel PreferenceModel::talk_type_default(const SpacePtr& cues) {
  return talk_type_weighted(cues, {{vocab::kChange, 0.70}, {vocab::kNeutral, 0.25},
                                   {vocab::kSustain, 0.05}});
}

const ActionScore& EfeReport::score(const std::string& action) const {
  for (const auto& s : scores)
    if (s.action == action) return s;
  throw Error(ErrorCode::UnknownAction, "'" + action + "' not in report");
}

Categorical push_forward_obs(const Categorical& q_next, const WorldModel& wm) {
  std::vector<double> q_obs(wm.cues()->size(), 0.0);
  for (std::size_t s = 0; s < q_next.size(); ++s) {
    if (q_next[s] == 0.0) continue;
    const Categorical row = wm.observation_prob(s);
    for (std::size_t o = 0; o < q_obs.size(); ++o) q_obs[o] += q_next[s] * row[o];
  }
  return normalize(q_obs, wm.cues());
}

Categorical predict_obs_dist(const Categorical& belief, const WorldModel& wm,
                             const std::string& action) {
  return push_forward_obs(predictive_prior(belief, wm, action), wm);
}

double expected_posterior_entropy(const Categorical& q_next, const WorldModel& wm) {
  const Categorical q_obs = push_forward_obs(q_next, wm);
  double h = 0.0;
  for (std::size_t o = 0; o < q_obs.size(); ++o) {
    if (q_obs[o] == 0.0) continue;
    const Categorical post = bayes_update(q_next, {wm.cue_likelihood(o)});
    h += q_obs[o] * entropy(post);
  }
  return h;
}

double epistemic_value(const Categorical& belief, const WorldModel& wm, const std::string& action) {
  return expected_posterior_entropy(predictive_prior(belief, wm, action), wm);
}

double expected_neg_log_pref(const Categorical& q_obs, const PreferenceModel& pref) {
  if (!same_space(q_obs.space(), pref.normalized().space()))
    throw Error(ErrorCode::DimensionMismatch, "preference is not over the cue vocabulary");
  double v = 0.0;
  for (std::size_t o = 0; o < q_obs.size(); ++o)
    if (q_obs[o] > 0.0) v -= q_obs[o] * std::log(pref.normalized()[o]);
  return v;
}

double pragmatic_value(const Categorical& belief, const WorldModel& wm, const std::string& action,
                       const PreferenceModel& pref) {
  return expected_neg_log_pref(predict_obs_dist(belief, wm, action), pref);
}

double combine_efe(double epistemic, double pragmatic, const EfeWeights& w) {
  if (!(w.lambda_e >= 0.0) || !(w.lambda_p >= 0.0) || (w.lambda_e == 0.0 && w.lambda_p == 0.0))
    throw Error(ErrorCode::InvalidWeights, "lambda_e and lambda_p must be >= 0 and not both 0");
  return w.lambda_e * epistemic + w.lambda_p * pragmatic;
}

double expected_free_energy(const Categorical& belief, const WorldModel& wm,
                            const std::string& action, const PreferenceModel& pref,
                            const EfeWeights& w) {
  return combine_efe(epistemic_value(belief, wm, action),
                     pragmatic_value(belief, wm, action, pref), w);
}

EfeReport select_action(const Categorical& belief, const WorldModel& wm, const LabelSpace& actions,
                        const PreferenceModel& pref, const EfeWeights& w, double repeat_penalty,
                        const std::optional<std::string>& last_action) {
  if (actions.size() == 0) throw Error(ErrorCode::EmptyActionSet, "no candidate actions");
  if (!(repeat_penalty >= 0.0))
    throw Error(ErrorCode::InvalidWeights, "repeat_penalty must be non-negative");
  combine_efe(0.0, 0.0, w);

  EfeReport report;
  report.scores.reserve(actions.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const std::string& a = actions.label(i);
    Categorical q_next = predictive_prior(belief, wm, a);
    const Categorical q_obs = push_forward_obs(q_next, wm);
    ActionScore sc{a, expected_posterior_entropy(q_next, wm), expected_neg_log_pref(q_obs, pref),
                   0.0, 0.0, std::move(q_next)};
    sc.total = combine_efe(sc.epistemic, sc.pragmatic, w);
    sc.penalized = sc.total + ((last_action && *last_action == a) ? repeat_penalty : 0.0);
    // Strict less-than keeps the earliest action on ties.
    if (i == 0 || sc.penalized < report.scores[best].penalized) best = i;
    report.scores.push_back(std::move(sc));
  }
  report.chosen = report.scores[best].action;
  return report;
}

Categorical planner_prior(const Categorical& belief, const WorldModel& wm,
                          const std::string& chosen) {
  return predictive_prior(belief, wm, chosen);
}

}  // namespace puma
