#include "puma/dynpatient.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "puma/vocab.hpp"

namespace puma {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, file.string() + ": " + e.what());
  }
}

std::size_t talk_type_index(const std::string& tt) {
  if (tt == vocab::kChange) return 0;
  if (tt == vocab::kNeutral) return 1;
  if (tt == vocab::kSustain) return 2;
  throw Error(ErrorCode::UnknownLabel, "'" + tt + "' is not a talk type");
}

std::string join(const std::vector<std::string>& v, std::size_t max_n, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size() && i < max_n; ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Profiles

json ClientProfile::to_json() const {
  json j;
  j["id"] = id;
  j["topic"] = topic;
  j["behavior"] = behavior;
  j["personas"] = personas;
  j["beliefs"] = beliefs;
  j["motivations"] = motivations;
  j["plans"] = plans;
  j["initial_stage"] = initial_stage;
  j["action_counts"] = action_counts;
  if (prep_threshold) j["prep_threshold"] = *prep_threshold;
  return j;
}

ClientProfile ClientProfile::from_json(const json& j) {
  try {
    ClientProfile p;
    p.id = j.at("id").get<std::string>();
    p.topic = j.value("topic", "");
    p.behavior = j.value("behavior", "");
    p.personas = j.value("personas", std::vector<std::string>{});
    p.beliefs = j.value("beliefs", std::vector<std::string>{});
    p.motivations = j.value("motivations", std::vector<std::string>{});
    p.plans = j.value("plans", std::vector<std::string>{});
    p.initial_stage = j.value("initial_stage", vocab::kPrecontemplation);
    vocab::stage_ordinal(p.initial_stage);
    if (j.contains("action_counts")) {
      for (const auto& [stage, row] : j["action_counts"].items()) {
        vocab::stage_ordinal(stage);
        for (const auto& [action, count] : row.items()) {
          if (!vocab::client_action_space()->contains(action))
            throw Error(ErrorCode::UnknownLabel, "'" + action + "' is not a client action");
          const double c = count.get<double>();
          if (!(c >= 0.0) || c != std::floor(c))
            throw Error(ErrorCode::InvalidConfig, "action counts must be non-negative integers");
          p.action_counts[stage][action] = c;
        }
      }
    }
    if (j.contains("prep_threshold") && !j["prep_threshold"].is_null())
      p.prep_threshold = j["prep_threshold"].get<double>();
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("profile: ") + e.what());
  }
}

ClientProfile ClientProfile::load(const std::filesystem::path& file) {
  return from_json(read_json(file));
}

std::vector<ClientProfile> load_profiles(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::IoError, "profile directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ClientProfile> out;
  for (const auto& f : files) out.push_back(ClientProfile::load(f));
  return out;
}

// ---------------------------------------------------------------------------
// Triggers

std::string_view to_string(TriggerCategory c) {
  switch (c) {
    case TriggerCategory::Beliefs: return "beliefs";
    case TriggerCategory::Motivation: return "motivation";
    case TriggerCategory::Plans: return "plans";
  }
  return "unknown";
}

std::vector<Trigger> build_triggers(const ClientProfile& profile, TextBackend& backend,
                                    const TriggerRules& rules) {
  std::vector<Trigger> out;
  auto add = [&](const std::vector<std::string>& sentences, TriggerCategory cat, std::size_t min_len,
                 double bonus, const char* prefix) {
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (sentences[i].size() <= min_len) continue;
      Trigger t;
      t.id = std::string(prefix) + std::to_string(i);
      t.category = cat;
      t.text = sentences[i];
      t.bonus = bonus;
      t.embedding = backend.embed(t.text);
      out.push_back(std::move(t));
    }
  };
  add(profile.beliefs, TriggerCategory::Beliefs, rules.min_len_beliefs, rules.bonus_beliefs, "b");
  add(profile.motivations, TriggerCategory::Motivation, rules.min_len_motivation,
      rules.bonus_motivation, "m");
  add(profile.plans, TriggerCategory::Plans, rules.min_len_plans, rules.bonus_plans, "p");
  return out;
}

std::vector<TriggerMatch> match_triggers(std::vector<Trigger>& triggers,
                                         const std::vector<double>& utterance_embedding,
                                         double tau) {
  std::vector<TriggerMatch> matched;
  for (std::size_t i = 0; i < triggers.size(); ++i) {
    Trigger& t = triggers[i];
    const double sim = cosine(t.embedding, utterance_embedding);
    if (sim < tau) continue;
    ++t.hit_count;
    const bool first = !t.discovered;
    t.discovered = true;
    matched.push_back({i, sim, t.hit_count, first});
  }
  return matched;
}

double content_gate(const std::vector<TriggerMatch>& matched) {
  if (matched.empty()) return 0.1;
  double rho = 0.0;
  int h = matched.front().hit_count;
  for (const auto& m : matched) {
    rho = std::max(rho, m.similarity);
    h = std::min(h, m.hit_count);
  }
  const double delta = std::pow(0.5, h - 1);
  return std::clamp(0.1 + 0.9 * rho * delta, 0.1, 1.0);
}

double expected_delta_r(const Categorical& tt_row, const TalkTypeWeights& w) {
  if (tt_row.size() != 3) throw Error(ErrorCode::DimensionMismatch, "talk-type row must have 3 entries");
  const auto& sp = *tt_row.space();
  return tt_row[sp.index(vocab::kChange)] * w.change +
         tt_row[sp.index(vocab::kNeutral)] * w.neutral +
         tt_row[sp.index(vocab::kSustain)] * w.sustain;
}

double update_readiness(double r, double delta_r_bar, double g,
                        const std::vector<double>& new_trigger_bonuses) {
  if (!(g >= 0.1 - 1e-12 && g <= 1.0 + 1e-12))
    throw Error(ErrorCode::WeightOutOfRange, "content gate " + std::to_string(g));
  double out = r + delta_r_bar * g;
  for (double b : new_trigger_bonuses) out += b;
  return out;
}

// ---------------------------------------------------------------------------
// Tables

void TalkTypeTable::add(const std::string& stage, const std::string& action,
                        const std::string& talk_type, double count) {
  if (!(count >= 0.0)) throw Error(ErrorCode::InvalidConfig, "negative talk-type count");
  counts_[stage][action][talk_type_index(talk_type)] += count;
}

double TalkTypeTable::support(const std::string& stage, const std::string& action) const {
  auto s = counts_.find(stage);
  if (s == counts_.end()) return 0.0;
  auto a = s->second.find(action);
  if (a == s->second.end()) return 0.0;
  return a->second[0] + a->second[1] + a->second[2];
}

Categorical TalkTypeTable::row(const std::string& stage, const std::string& action) const {
  const SpacePtr space = vocab::talk_type_space();
  auto to_row = [&](const Counts& c) {
    return normalize(std::vector<double>(c.begin(), c.end()), space);
  };
  auto s = counts_.find(stage);
  if (s != counts_.end()) {
    if (auto a = s->second.find(action);
        a != s->second.end() && support(stage, action) >= static_cast<double>(min_support_))
      return to_row(a->second);
    Counts marginal{0, 0, 0};
    for (const auto& [_, c] : s->second)
      for (int i = 0; i < 3; ++i) marginal[i] += c[i];
    if (marginal[0] + marginal[1] + marginal[2] > 0.0) return to_row(marginal);
  }
  Counts global{0, 0, 0};
  for (const auto& [_, by_action] : counts_)
    for (const auto& [__, c] : by_action)
      for (int i = 0; i < 3; ++i) global[i] += c[i];
  if (global[0] + global[1] + global[2] > 0.0) return to_row(global);
  return Categorical::uniform(space);
}

json TalkTypeTable::to_json() const {
  json j = json::object();
  for (const auto& [stage, by_action] : counts_)
    for (const auto& [action, c] : by_action) j[stage][action] = {c[0], c[1], c[2]};
  return j;
}

TalkTypeTable TalkTypeTable::from_json(const json& j, int min_support) {
  TalkTypeTable t(min_support);
  for (const auto& [stage, by_action] : j.items()) {
    for (const auto& [action, c] : by_action.items()) {
      if (!c.is_array() || c.size() != 3)
        throw Error(ErrorCode::ParseError, "talk-type cell must be [change, neutral, sustain]");
      for (std::size_t i = 0; i < 3; ++i) t.add(stage, action, vocab::talk_types()[i], c[i].get<double>());
    }
  }
  return t;
}

Categorical SimTables::pop_prior(const std::string& stage) const {
  auto it = population_action_prior.find(stage);
  if (it == population_action_prior.end()) return Categorical::uniform(vocab::client_action_space());
  return it->second;
}

SimTables SimTables::from_json(const json& j, int min_support) {
  try {
    SimTables t;
    t.talk_types = TalkTypeTable::from_json(j.at("talk_type_counts"), min_support);
    const SpacePtr actions = vocab::client_action_space();
    if (j.contains("population_action_prior")) {
      for (const auto& [stage, row] : j["population_action_prior"].items()) {
        std::vector<double> w(actions->size(), 0.0);
        for (const auto& [action, p] : row.items()) w[actions->index(action)] = p.get<double>();
        t.population_action_prior.emplace(stage, normalize(w, actions));
      }
    }
    if (j.contains("action_instructions"))
      t.action_instructions = j["action_instructions"].get<std::map<std::string, std::string>>();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("sim tables: ") + e.what());
  }
}

SimTables SimTables::load(const std::filesystem::path& file, int min_support) {
  return from_json(read_json(file), min_support);
}

// ---------------------------------------------------------------------------
// Stage dynamics

std::size_t SimState::discovered_count() const {
  return static_cast<std::size_t>(
      std::count_if(triggers.begin(), triggers.end(), [](const Trigger& t) { return t.discovered; }));
}

double SimState::coverage() const {
  if (triggers.empty()) return 0.0;
  return static_cast<double>(discovered_count()) / static_cast<double>(triggers.size());
}

StageStep stage_transition(const SimState& sim, double theta_cov, double theta_prep) {
  if (sim.stage == vocab::kPrecontemplation) {
    if (sim.triggers.empty())
      throw Error(ErrorCode::EmptyTriggerSet, "coverage undefined without triggers");
    if (sim.coverage() >= theta_cov) return {vocab::kContemplation, 0.0, true};
    return {sim.stage, sim.readiness, false};
  }
  if (sim.stage == vocab::kContemplation && sim.readiness >= theta_prep)
    return {vocab::kPreparation, sim.readiness, true};
  return {sim.stage, sim.readiness, false};
}

Categorical dirichlet_action_dist(const ClientProfile& profile, const std::string& stage,
                                  const Categorical& pop_prior, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "Dirichlet alpha must be positive");
  const SpacePtr actions = vocab::client_action_space();
  if (!same_space(pop_prior.space(), actions))
    throw Error(ErrorCode::DimensionMismatch, "population prior is not over client actions");
  std::vector<double> n(actions->size(), 0.0);
  if (auto it = profile.action_counts.find(stage); it != profile.action_counts.end())
    for (const auto& [a, c] : it->second) n[actions->index(a)] = c;
  double total = 0.0;
  for (double c : n) total += c;
  std::vector<double> p(n.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (n[i] + alpha * pop_prior[i]) / (total + alpha);
  return Categorical(actions, std::move(p));
}

std::string format_context(const std::vector<DialogueLine>& history, std::size_t last_n) {
  const std::size_t start = history.size() > last_n ? history.size() - last_n : 0;
  std::string out;
  for (std::size_t i = start; i < history.size(); ++i) {
    if (!out.empty()) out += "\n";
    out += (history[i].speaker == "counselor" ? "Counselor: " : "Client: ") + history[i].text;
  }
  return out;
}

ClientActionChoice select_client_action(const ClientProfile& profile, const std::string& stage,
                                        const Categorical& pop_prior, double alpha,
                                        TextBackend& backend, const Vars& context) {
  Categorical dist = dirichlet_action_dist(profile, stage, pop_prior, alpha);
  GenerationRequest req;
  req.template_id = "client_action";
  req.vars = context;
  req.vars["stage"] = stage;
  req.vars["dist_str"] = format_distribution(dist);
  req.vars.try_emplace("topic", profile.topic);
  req.vars.try_emplace("behavior", profile.behavior);
  req.vars.try_emplace("personas_str", join(profile.personas, 5, " "));
  req.vars.try_emplace("context", "");
  req.vars.try_emplace("counselor_utt", "");
  req.vars.try_emplace("matched_triggers", "");
  req.rule_key = stage;
  req.rule_text = req.vars["counselor_utt"];
  const std::string reply = backend.choose(req);
  if (auto label = parse_label(reply, vocab::client_actions()))
    return {*label, std::move(dist), false};
  std::string fallback = dist.argmax_label();
  return {std::move(fallback), std::move(dist), true};
}

std::string generate_client_response(const SimState& sim, const ClientProfile& profile,
                                     TextBackend& backend, const std::string& counselor_utterance,
                                     const std::string& client_action,
                                     const std::vector<TriggerMatch>& matched,
                                     const std::map<std::string, std::string>& instructions,
                                     const std::vector<DialogueLine>& history) {
  std::vector<std::string> sentences;
  for (const auto* v : {&profile.beliefs, &profile.motivations, &profile.plans})
    sentences.insert(sentences.end(), v->begin(), v->end());

  std::string trigger_context;
  for (const auto& m : matched) {
    const Trigger& t = sim.triggers.at(m.index);
    trigger_context += (trigger_context.empty() ? "The counselor touched on your " : "; ") +
                       std::string(to_string(t.category)) + ": " + t.text;
  }

  GenerationRequest req;
  req.template_id = "client_response";
  auto inst = instructions.find(client_action);
  req.vars = {{"topic", profile.topic},
              {"behavior", profile.behavior},
              {"personas_str", join(profile.personas, 5, " ")},
              {"beliefs_str", join(profile.beliefs, 4, " ")},
              {"trigger_context", trigger_context},
              {"context", format_context(history, 6)},
              {"counselor_utt", counselor_utterance},
              {"patient_action", client_action},
              {"instruction", inst == instructions.end() ? std::string() : inst->second},
              {"stage", sim.stage},
              {"profile_sentence",
               sentences.empty() ? profile.topic
                                 : sentences[static_cast<std::size_t>(std::max(sim.turn - 1, 0)) %
                                             sentences.size()]}};
  req.rule_key = client_action;
  req.rule_text = counselor_utterance;
  std::string text = backend.generate(req);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(ErrorCode::BackendUnavailable, "client response is empty");
  return text;
}

// ---------------------------------------------------------------------------
// Sessions, calibration, metrics

std::vector<AnnotatedSession> annotated_sessions_from_json(const json& j) {
  try {
    const json& arr = j.is_object() ? j.at("sessions") : j;
    std::vector<AnnotatedSession> out;
    for (const auto& s : arr) {
      AnnotatedSession sess;
      sess.id = s.at("id").get<std::string>();
      if (s.contains("profile_id")) sess.profile_id = s["profile_id"].get<std::string>();
      if (s.contains("initial_stage")) sess.initial_stage = s["initial_stage"].get<std::string>();
      for (const auto& t : s.at("turns")) {
        AnnotatedTurn turn;
        turn.client = t.value("client", "");
        turn.counselor = t.value("counselor", "");
        auto opt = [&](const char* key) -> std::optional<std::string> {
          if (t.contains(key) && !t[key].is_null()) return t[key].get<std::string>();
          return std::nullopt;
        };
        turn.counselor_action = opt("counselor_action");
        turn.gold_stage = opt("gold_stage");
        turn.client_action = opt("client_action");
        sess.turns.push_back(std::move(turn));
      }
      out.push_back(std::move(sess));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("annotated sessions: ") + e.what());
  }
}

std::vector<AnnotatedSession> load_annotated_sessions(const std::filesystem::path& file) {
  return annotated_sessions_from_json(read_json(file));
}

double calibrate_prep_threshold(const ClientProfile& profile,
                                const std::vector<AnnotatedTurn>& trajectory,
                                const SimTables& tables, TextBackend& backend,
                                const SimParams& params) {
  std::vector<Trigger> triggers = build_triggers(profile, backend, params.trigger_rules);
  double r = 0.0;
  std::string prev = profile.initial_stage;
  for (const auto& turn : trajectory) {
    if (!turn.gold_stage) continue;
    std::vector<TriggerMatch> matched;
    if (!turn.counselor.empty())
      matched = match_triggers(triggers, backend.embed(turn.counselor), params.tau);
    const std::string action =
        turn.counselor_action ? *turn.counselor_action
        : turn.counselor.empty() ? std::string("Facilitate")
                                 : classify_counselor_action(backend, turn.counselor);
    std::vector<double> bonuses;
    for (const auto& m : matched)
      if (m.newly_discovered) bonuses.push_back(triggers[m.index].bonus);
    r = update_readiness(r, expected_delta_r(tables.talk_types.row(prev, action), params.weights),
                         content_gate(matched), bonuses);
    const std::string& gold = *turn.gold_stage;
    if (prev == vocab::kPrecontemplation && gold == vocab::kContemplation) r = 0.0;
    if (prev == vocab::kContemplation && gold == vocab::kPreparation) return r;
    prev = gold;
  }
  return params.theta_prep_default;
}

double act_kl(const Categorical& sim_action_dist, const Categorical& gold_action_dist, double eps) {
  auto smooth = [eps](const Categorical& d) {
    const double denom = 1.0 + eps * static_cast<double>(d.size());
    std::vector<double> p(d.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = (d[i] + eps) / denom;
    return Categorical(d.space(), std::move(p));
  };
  return kl_divergence(smooth(sim_action_dist), smooth(gold_action_dist));
}

// ---------------------------------------------------------------------------
// Simulator

DynPatient::DynPatient(ClientProfile profile, std::shared_ptr<const SimTables> tables,
                       SimParams params, TextBackend& backend, std::uint64_t seed)
    : profile_(std::move(profile)),
      tables_(std::move(tables)),
      params_(params),
      backend_(&backend),
      theta_prep_(profile_.prep_threshold.value_or(params.theta_prep_default)) {
  state_.stage = profile_.initial_stage;
  state_.triggers = build_triggers(profile_, backend, params_.trigger_rules);
  state_.rng_seed = seed;
}

SimTurn DynPatient::step(const std::string& counselor_utterance,
                         const std::string& counselor_action) {
  const int turn = ++state_.turn;
  const std::string stage_before = state_.stage;

  auto matched = match_triggers(state_.triggers, backend_->embed(counselor_utterance), params_.tau);
  const double gate = content_gate(matched);
  const double delta_r_bar = expected_delta_r(
      tables_->talk_types.row(state_.stage, counselor_action), params_.weights);
  std::vector<double> bonuses;
  for (const auto& m : matched)
    if (m.newly_discovered) bonuses.push_back(state_.triggers[m.index].bonus);
  state_.readiness = update_readiness(state_.readiness, delta_r_bar, gate, bonuses);

  bool transitioned = false;
  if (state_.stage != vocab::kPreparation) {
    const StageStep step = stage_transition(state_, params_.theta_cov, theta_prep_);
    state_.stage = step.stage;
    state_.readiness = step.readiness;
    transitioned = step.transitioned;
  }

  history_.push_back({"counselor", counselor_utterance});
  std::string matched_texts;
  for (std::size_t i = 0; i < matched.size() && i < 2; ++i)
    matched_texts += (i ? "; " : "") + state_.triggers[matched[i].index].text;
  const Vars ctx{{"context", format_context(history_, 8)},
                 {"counselor_utt", counselor_utterance},
                 {"matched_triggers", matched_texts}};
  ClientActionChoice choice = select_client_action(
      profile_, state_.stage, tables_->pop_prior(state_.stage), params_.alpha_dirichlet,
      *backend_, ctx);
  std::string client_text =
      generate_client_response(state_, profile_, *backend_, counselor_utterance, choice.action,
                               matched, tables_->action_instructions, history_);
  history_.push_back({"client", client_text});
  return SimTurn{turn,         std::move(matched), gate,     delta_r_bar,
                 stage_before, state_.stage,       state_.readiness, transitioned,
                 std::move(choice), std::move(client_text)};
}

}  // namespace puma
