#include "puma/agent.hpp"

#include <cmath>

#include "puma/vocab.hpp"

namespace puma {

AgentConfig AgentConfig::from_run_config(const RunConfig& cfg) {
  AgentConfig a;
  a.states = vocab::ttm_space();
  a.actions = vocab::misc_space();
  a.cues = vocab::default_cue_space(*a.states);
  a.weights = {cfg.lambda_e, cfg.lambda_p};
  a.beta = cfg.beta;
  a.repeat_penalty = cfg.repeat_penalty;
  a.disable_planner = cfg.disable_planner;
  a.efe_action = cfg.efe_action;
  a.count_mode = cfg.hard_counts ? CountMode::Hard : CountMode::Soft;
  a.kappa_t = cfg.kappa_t;
  a.kappa_o = cfg.kappa_o;
  a.obs_prior_strength = cfg.obs_prior_strength;
  a.retrieve = {static_cast<std::size_t>(cfg.k_relevant), cfg.dist_thres,
                static_cast<std::size_t>(cfg.context_n)};
  a.consolidate_every = cfg.consolidate_every;
  return a;
}

const std::vector<std::string>& round_robin_actions() {
  static const std::vector<std::string> v{"Open Question", "Complex Reflection", "Give Information"};
  return v;
}

namespace {

WorldModel seeded_world_model(const AgentConfig& cfg) {
  WorldModel wm(cfg.states, cfg.actions, cfg.cues, cfg.kappa_t, cfg.kappa_o);
  if (cfg.obs_prior_strength > 0.0)
    for (std::size_t s = 0; s < cfg.states->size(); ++s)
      if (cfg.cues->contains(cfg.states->label(s)))
        wm.add_observation_count(s, cfg.cues->index(cfg.states->label(s)), cfg.obs_prior_strength);
  return wm;
}

}  // namespace

PumaAgent::PumaAgent(AgentConfig cfg, TextBackend& backend, std::shared_ptr<MemoryStore> memory,
                     std::string session_id, std::optional<std::string> initial_stage)
    : cfg_(std::move(cfg)),
      backend_(&backend),
      memory_(std::move(memory)),
      session_(std::move(session_id)),
      wm_(seeded_world_model(cfg_)),
      pref_(cfg_.preference ? *cfg_.preference : PreferenceModel::talk_type_default(cfg_.cues)),
      initial_(initial_belief(cfg_.states, initial_stage)),
      belief_(initial_) {
  if (!memory_) memory_ = std::make_shared<MemoryStore>();
}

Perception PumaAgent::perceive(const std::string& client_utterance) {
  const std::string cue = classify_talk_type(*backend_, client_utterance, *cfg_.states);
  const std::vector<double> lik = wm_.cue_likelihood(cfg_.cues->index(cue));
  const Categorical p_obs = normalize(lik, cfg_.states);
  const int n_words = count_words(client_utterance);
  const bool hedge = contains_hedge(client_utterance, cfg_.hedges);
  Widened widened = widen_observation(p_obs, n_words, hedge);

  Categorical predictive = last_action_ ? predictive_prior(belief_, wm_, *last_action_) : belief_;
  std::optional<Categorical> fusion_prior =
      cfg_.disable_planner ? std::nullopt : planner_prior_;
  Categorical fused = fuse(widened.dist, fusion_prior, cfg_.beta);

  const ObservationLikelihood as_lik{
      std::vector<double>(widened.dist.probs().begin(), widened.dist.probs().end())};
  Categorical posterior = bayes_update(predictive, as_lik);
  const double fe = free_energy(fused, predictive, as_lik);
  const double nle = -log_evidence(predictive, as_lik);

  TurnEvidence ev{last_action_ ? std::optional<Categorical>(belief_) : std::nullopt, last_action_,
                  fused, cue};
  wm_.update(ev, cfg_.count_mode);
  belief_ = fused;

  return Perception{client_utterance, cue,       n_words,      hedge,   p_obs,
                    widened.dist,     widened.alpha, fusion_prior, predictive, fused,
                    posterior,        fe,        nle};
}

EfeReport PumaAgent::plan() const {
  return select_action(belief_, wm_, *cfg_.actions, pref_, cfg_.weights, cfg_.repeat_penalty,
                       last_action_);
}

std::string PumaAgent::choose_action(std::optional<EfeReport>* report) {
  if (cfg_.efe_action) {
    EfeReport r = plan();
    std::string chosen = r.chosen;
    if (report) *report = std::move(r);
    return chosen;
  }
  const auto& rr = round_robin_actions();
  return rr[round_robin_++ % rr.size()];
}

void PumaAgent::commit_action(const std::string& action) {
  planner_prior_ = planner_prior(belief_, wm_, action);
  last_action_ = action;
}

AgentTurn PumaAgent::turn(const std::optional<std::string>& client_utterance, const Vars& extra) {
  AgentTurn out{++turn_, std::nullopt, std::nullopt, {}, belief_, {}, {}};
  const bool has_utterance = client_utterance && !client_utterance->empty();
  if (has_utterance) out.perception = perceive(*client_utterance);

  out.action = choose_action(&out.efe);
  commit_action(out.action);

  if (has_utterance) {
    const Retrieval r = memory_->retrieve(*backend_, session_, *client_utterance, cfg_.retrieve);
    for (const auto& e : r.relevant) out.memories.push_back(e.entry.text);
    memory_->add(*backend_, Tier::STM, *client_utterance, turn_, session_);
    memory_->consolidate(*backend_, session_, turn_, cfg_.consolidate_every);
  }

  out.belief = belief_;
  out.text = generate_response(*backend_, out.action, belief_, out.memories,
                               has_utterance ? *client_utterance : std::string(),
                               "counselor_response", extra);
  return out;
}

// ---------------------------------------------------------------------------

CounselorTurn PumaCounselor::respond(const std::optional<std::string>& client_utterance) {
  AgentTurn t = agent_.turn(client_utterance, extra_);
  CounselorTurn out{t.action, t.text, std::nullopt};
  out.agent = std::move(t);
  return out;
}

void PumaCounselor::executed(const std::string& action) {
  if (agent_.last_action() != action) agent_.commit_action(action);
}

namespace {

std::string counselor_text(TextBackend& backend, const std::string& action,
                           const std::optional<std::string>& client_utterance, const Vars& extra) {
  return generate_response(backend, action, Categorical::uniform(vocab::ttm_space()), {},
                           client_utterance.value_or(""), "counselor_response", extra);
}

}  // namespace

RandomCounselor::RandomCounselor(TextBackend& backend, std::uint64_t seed, Vars extra)
    : backend_(&backend), rng_(seed), extra_(std::move(extra)) {}

CounselorTurn RandomCounselor::respond(const std::optional<std::string>& client_utterance) {
  const auto& actions = vocab::misc17();
  // Raw engine output keeps the draw identical across standard libraries.
  const std::string& a = actions[static_cast<std::size_t>(rng_() % actions.size())];
  return {a, counselor_text(*backend_, a, client_utterance, extra_), std::nullopt};
}

FixedCounselor::FixedCounselor(TextBackend& backend, Vars extra)
    : backend_(&backend), extra_(std::move(extra)) {}

CounselorTurn FixedCounselor::respond(const std::optional<std::string>& client_utterance) {
  const auto& rr = round_robin_actions();
  const std::string& a = rr[next_++ % rr.size()];
  return {a, counselor_text(*backend_, a, client_utterance, extra_), std::nullopt};
}

CounselorTurn ScriptedCounselor::respond(const std::optional<std::string>&) {
  if (lines_.empty()) throw Error(ErrorCode::EmptyInput, "scripted counselor has no lines");
  return {"", lines_[next_++ % lines_.size()], std::nullopt};
}

}  // namespace puma
