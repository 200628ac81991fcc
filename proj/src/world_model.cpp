#include "puma/world_model.hpp"

#include <cmath>
#include <numeric>

namespace puma {

namespace {

void check_kappa(double k, const char* name) {
  if (!(k > 0.0) || !std::isfinite(k))
    throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be positive");
}

void check_mass(double m) {
  if (!(m >= 0.0) || !std::isfinite(m))
    throw Error(ErrorCode::InvalidConfig, "count mass must be finite and non-negative");
}

}  // namespace

WorldModel::WorldModel(SpacePtr states, SpacePtr actions, SpacePtr cues, double kappa_t,
                       double kappa_o)
    : states_(std::move(states)),
      actions_(std::move(actions)),
      cues_(std::move(cues)),
      kappa_t_(kappa_t),
      kappa_o_(kappa_o),
      transition_counts_(states_->size() * actions_->size() * states_->size(), 0.0),
      observation_counts_(states_->size() * cues_->size(), 0.0) {
  check_kappa(kappa_t_, "kappa_t");
  check_kappa(kappa_o_, "kappa_o");
}

std::size_t WorldModel::action_index(const std::string& a) const {
  if (!actions_->contains(a)) throw Error(ErrorCode::UnknownAction, "'" + a + "'");
  return actions_->index(a);
}

Categorical WorldModel::transition_prob(std::size_t s, std::size_t a) const {
  const std::size_t n = states_->size();
  if (s >= n || a >= actions_->size()) throw Error(ErrorCode::UnknownLabel, "index out of range");
  double row_total = 0.0;
  for (std::size_t j = 0; j < n; ++j) row_total += transition_counts_[t_index(s, a, j)];
  const double base = kappa_t_ / static_cast<double>(n);
  std::vector<double> p(n);
  for (std::size_t j = 0; j < n; ++j)
    p[j] = (transition_counts_[t_index(s, a, j)] + base) / (row_total + kappa_t_);
  return Categorical(states_, std::move(p));
}

Categorical WorldModel::transition_prob(const std::string& s, const std::string& a) const {
  return transition_prob(states_->index(s), actions_->index(a));
}

Categorical WorldModel::observation_prob(std::size_t s) const {
  const std::size_t n = cues_->size();
  if (s >= states_->size()) throw Error(ErrorCode::UnknownLabel, "index out of range");
  double row_total = 0.0;
  for (std::size_t c = 0; c < n; ++c) row_total += observation_counts_[o_index(s, c)];
  const double base = kappa_o_ / static_cast<double>(n);
  std::vector<double> p(n);
  for (std::size_t c = 0; c < n; ++c)
    p[c] = (observation_counts_[o_index(s, c)] + base) / (row_total + kappa_o_);
  return Categorical(cues_, std::move(p));
}

Categorical WorldModel::observation_prob(const std::string& s) const {
  return observation_prob(states_->index(s));
}

std::vector<double> WorldModel::cue_likelihood(std::size_t cue) const {
  std::vector<double> lik(states_->size());
  for (std::size_t s = 0; s < lik.size(); ++s) lik[s] = observation_prob(s)[cue];
  return lik;
}

double WorldModel::transition_count(std::size_t s, std::size_t a, std::size_t s_next) const {
  return transition_counts_.at(t_index(s, a, s_next));
}

double WorldModel::observation_count(std::size_t s, std::size_t cue) const {
  return observation_counts_.at(o_index(s, cue));
}

void WorldModel::add_transition_count(std::size_t s, std::size_t a, std::size_t s_next,
                                      double mass) {
  check_mass(mass);
  transition_counts_.at(t_index(s, a, s_next)) += mass;
}

void WorldModel::add_observation_count(std::size_t s, std::size_t cue, double mass) {
  check_mass(mass);
  observation_counts_.at(o_index(s, cue)) += mass;
}

double WorldModel::total_transition_mass() const {
  return std::accumulate(transition_counts_.begin(), transition_counts_.end(), 0.0);
}

double WorldModel::total_observation_mass() const {
  return std::accumulate(observation_counts_.begin(), observation_counts_.end(), 0.0);
}

void WorldModel::update(const TurnEvidence& ev, CountMode mode) {
  if (!same_space(ev.q_curr.space(), states_))
    throw Error(ErrorCode::DimensionMismatch, "q_curr is not over the model's state space");
  const std::size_t cue = cues_->index(ev.cue);
  std::size_t a = 0;
  if (ev.action) {
    a = actions_->index(*ev.action);
    if (!ev.q_prev) throw Error(ErrorCode::InvalidDistribution, "action given without q_prev");
    if (!same_space(ev.q_prev->space(), states_))
      throw Error(ErrorCode::DimensionMismatch, "q_prev is not over the model's state space");
  }

  const std::size_t n = states_->size();
  if (mode == CountMode::Hard) {
    const std::size_t s_curr = ev.q_curr.argmax();
    observation_counts_[o_index(s_curr, cue)] += 1.0;
    if (ev.action) transition_counts_[t_index(ev.q_prev->argmax(), a, s_curr)] += 1.0;
    return;
  }

  for (std::size_t s = 0; s < n; ++s) observation_counts_[o_index(s, cue)] += ev.q_curr[s];
  if (ev.action) {
    for (std::size_t s = 0; s < n; ++s) {
      const double w = (*ev.q_prev)[s];
      if (w == 0.0) continue;
      for (std::size_t s2 = 0; s2 < n; ++s2)
        transition_counts_[t_index(s, a, s2)] += w * ev.q_curr[s2];
    }
  }
}

WorldModel WorldModel::updated(const TurnEvidence& ev, CountMode mode) const {
  WorldModel copy = *this;
  copy.update(ev, mode);
  return copy;
}

nlohmann::json WorldModel::to_json() const {
  using nlohmann::json;
  const std::size_t ns = states_->size(), na = actions_->size(), nc = cues_->size();
  json t = json::array();
  for (std::size_t s = 0; s < ns; ++s) {
    json by_action = json::array();
    for (std::size_t a = 0; a < na; ++a) {
      json row = json::array();
      for (std::size_t s2 = 0; s2 < ns; ++s2) row.push_back(transition_counts_[t_index(s, a, s2)]);
      by_action.push_back(std::move(row));
    }
    t.push_back(std::move(by_action));
  }
  json o = json::array();
  for (std::size_t s = 0; s < ns; ++s) {
    json row = json::array();
    for (std::size_t c = 0; c < nc; ++c) row.push_back(observation_counts_[o_index(s, c)]);
    o.push_back(std::move(row));
  }
  json j;
  j["state_space"] = states_->labels();
  j["action_vocab"] = actions_->labels();
  j["cue_vocab"] = cues_->labels();
  j["transition_counts"] = std::move(t);
  j["observation_counts"] = std::move(o);
  j["kappa_t"] = kappa_t_;
  j["kappa_o"] = kappa_o_;
  return j;
}

WorldModel WorldModel::from_json(const nlohmann::json& j) {
  try {
    WorldModel wm(LabelSpace::make(j.at("state_space").get<std::vector<std::string>>(), true),
                  LabelSpace::make(j.at("action_vocab").get<std::vector<std::string>>()),
                  LabelSpace::make(j.at("cue_vocab").get<std::vector<std::string>>()),
                  j.at("kappa_t").get<double>(), j.at("kappa_o").get<double>());
    const auto& t = j.at("transition_counts");
    const auto& o = j.at("observation_counts");
    const std::size_t ns = wm.states_->size(), na = wm.actions_->size(), nc = wm.cues_->size();
    if (t.size() != ns || o.size() != ns)
      throw Error(ErrorCode::DimensionMismatch, "count table shape does not match vocabularies");
    for (std::size_t s = 0; s < ns; ++s) {
      if (t[s].size() != na || o[s].size() != nc)
        throw Error(ErrorCode::DimensionMismatch, "count table shape does not match vocabularies");
      for (std::size_t a = 0; a < na; ++a) {
        if (t[s][a].size() != ns)
          throw Error(ErrorCode::DimensionMismatch, "count table shape does not match vocabularies");
        for (std::size_t s2 = 0; s2 < ns; ++s2)
          wm.add_transition_count(s, a, s2, t[s][a][s2].get<double>());
      }
      for (std::size_t c = 0; c < nc; ++c) wm.add_observation_count(s, c, o[s][c].get<double>());
    }
    return wm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("world model json: ") + e.what());
  }
}

double wm_loss(const WorldModel& wm, std::span<const TurnEvidence> trajectory, double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidWeights, "lambda must be non-negative");
  const std::size_t n = wm.states()->size();
  double obs_nll = 0.0;
  double trans_nll = 0.0;
  for (const auto& ev : trajectory) {
    const std::size_t cue = wm.cues()->index(ev.cue);
    for (std::size_t s = 0; s < n; ++s) {
      if (ev.q_curr[s] == 0.0) continue;
      obs_nll -= ev.q_curr[s] * std::log(wm.observation_prob(s)[cue]);
    }
    if (!ev.action || !ev.q_prev || lambda == 0.0) continue;
    const std::size_t a = wm.actions()->index(*ev.action);
    for (std::size_t s = 0; s < n; ++s) {
      const double w = (*ev.q_prev)[s];
      if (w == 0.0) continue;
      const Categorical row = wm.transition_prob(s, a);
      for (std::size_t s2 = 0; s2 < n; ++s2)
        if (ev.q_curr[s2] > 0.0) trans_nll -= w * ev.q_curr[s2] * std::log(row[s2]);
    }
  }
  return obs_nll + lambda * trans_nll;
}

}  // namespace puma
