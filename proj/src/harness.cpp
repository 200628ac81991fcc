#include "puma/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "puma/vocab.hpp"

namespace puma {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<double> to_vec(const Categorical& c) { return {c.probs().begin(), c.probs().end()}; }

template <typename T>
ordered_json opt(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

// --- records ---------------------------------------------------------------

ordered_json TurnRecord::to_json() const {
  ordered_json j;
  j["type"] = "turn";
  j["turn"] = turn;
  j["counselor_action"] = counselor_action;
  j["intended_action"] = intended_action;
  j["counselor_text"] = counselor_text;
  j["client_action"] = client_action;
  j["client_action_fallback"] = client_action_fallback;
  j["client_text"] = client_text;
  j["gold_stage"] = opt(gold_stage);
  j["sim_stage"] = sim_stage;
  j["readiness"] = readiness;
  j["gate"] = gate;
  j["delta_r_bar"] = delta_r_bar;
  j["matched_trigger_ids"] = matched_trigger_ids;
  j["discovered_triggers"] = discovered_triggers;
  j["total_triggers"] = total_triggers;
  j["belief"] = opt(belief);
  j["p_obs_widened"] = opt(p_obs_widened);
  j["planner_prior_used"] = planner_prior_used;
  j["alpha"] = opt(alpha);
  if (efe) {
    ordered_json e;
    e["chosen"] = efe->chosen;
    ordered_json scores = ordered_json::array();
    for (const auto& s : efe->scores)
      scores.push_back({{"action", s.action},
                        {"epistemic", s.epistemic},
                        {"pragmatic", s.pragmatic},
                        {"total", s.total}});
    e["scores"] = std::move(scores);
    j["efe"] = std::move(e);
  } else {
    j["efe"] = nullptr;
  }
  return j;
}

TurnRecord TurnRecord::from_json(const json& j) {
  TurnRecord r;
  r.turn = j.at("turn").get<int>();
  r.counselor_action = j.at("counselor_action").get<std::string>();
  r.intended_action = j.value("intended_action", std::string());
  r.counselor_text = j.at("counselor_text").get<std::string>();
  r.client_action = j.at("client_action").get<std::string>();
  r.client_action_fallback = j.value("client_action_fallback", false);
  r.client_text = j.at("client_text").get<std::string>();
  r.gold_stage = opt_get<std::string>(j, "gold_stage");
  r.sim_stage = j.at("sim_stage").get<std::string>();
  r.readiness = j.at("readiness").get<double>();
  r.gate = j.value("gate", 0.0);
  r.delta_r_bar = j.value("delta_r_bar", 0.0);
  r.matched_trigger_ids = j.value("matched_trigger_ids", std::vector<std::string>{});
  r.discovered_triggers = j.at("discovered_triggers").get<int>();
  r.total_triggers = j.at("total_triggers").get<int>();
  r.belief = opt_get<std::vector<double>>(j, "belief");
  r.p_obs_widened = opt_get<std::vector<double>>(j, "p_obs_widened");
  r.planner_prior_used = j.value("planner_prior_used", false);
  r.alpha = opt_get<double>(j, "alpha");
  if (j.contains("efe") && !j.at("efe").is_null()) {
    EfeSummary e;
    e.chosen = j.at("efe").at("chosen").get<std::string>();
    for (const auto& s : j.at("efe").at("scores"))
      e.scores.push_back({s.at("action").get<std::string>(), s.at("epistemic").get<double>(),
                          s.at("pragmatic").get<double>(), s.at("total").get<double>()});
    r.efe = std::move(e);
  }
  return r;
}

ordered_json SessionHeader::to_json() const {
  ordered_json j;
  j["type"] = "session";
  j["profile_id"] = profile_id;
  j["counselor"] = counselor;
  j["initial_stage"] = initial_stage;
  j["total_triggers"] = total_triggers;
  j["theta_prep"] = theta_prep;
  j["seed"] = seed;
  return j;
}

SessionHeader SessionHeader::from_json(const json& j) {
  SessionHeader h;
  h.profile_id = j.at("profile_id").get<std::string>();
  h.counselor = j.value("counselor", std::string());
  h.initial_stage = j.at("initial_stage").get<std::string>();
  h.total_triggers = j.at("total_triggers").get<int>();
  h.theta_prep = j.value("theta_prep", 0.5);
  h.seed = j.value("seed", std::uint64_t{42});
  return h;
}

std::string Transcript::final_stage() const {
  return turns.empty() ? header.initial_stage : turns.back().sim_stage;
}

std::string Transcript::to_jsonl() const {
  std::string s = header.to_json().dump() + "\n";
  for (const auto& t : turns) s += t.to_json().dump() + "\n";
  return s;
}

TranscriptWriter::TranscriptWriter(const std::filesystem::path& path, const SessionHeader& header)
    : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out_ << header.to_json().dump() << '\n' << std::flush;
}

void TranscriptWriter::append(const TurnRecord& rec) {
  out_ << rec.to_json().dump() << '\n' << std::flush;
  if (!out_) throw Error(ErrorCode::IoError, "write failed: " + path_.string());
}

Transcript parse_transcript(const std::string& jsonl) {
  Transcript t;
  bool have_header = false;
  std::istringstream in(jsonl);
  std::string line;
  int lineno = 0;
  int last_turn = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.value("type", std::string("turn"));
      if (type == "session") {
        t.header = SessionHeader::from_json(j);
        have_header = true;
      } else {
        TurnRecord r = TurnRecord::from_json(j);
        if (r.turn <= last_turn)
          throw Error(ErrorCode::ParseError, "turn numbers must increase strictly");
        last_turn = r.turn;
        t.turns.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "transcript line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::ParseError, "transcript has no session header");
  return t;
}

Transcript read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_transcript(ss.str());
}

// --- dialogue --------------------------------------------------------------

Transcript run_dialogue(Counselor& counselor, DynPatient& sim, TextBackend& backend,
                        const RunConfig& cfg, const std::optional<std::filesystem::path>& out) {
  Transcript t;
  t.header.profile_id = sim.profile().id;
  t.header.counselor = counselor.name();
  t.header.initial_stage = sim.state().stage;
  t.header.total_triggers = static_cast<int>(sim.state().triggers.size());
  t.header.theta_prep = sim.theta_prep();
  t.header.seed = cfg.seed;

  std::optional<TranscriptWriter> writer;
  if (out) writer.emplace(*out, t.header);

  std::optional<std::string> client;
  for (int i = 0; i < cfg.max_turns; ++i) {
    if (cfg.early_stop && sim.state().stage == vocab::kPreparation) break;

    CounselorTurn ct = counselor.respond(client);
    const std::string action = classify_counselor_action(backend, ct.text, client.value_or(""));
    counselor.executed(action);
    const SimTurn st = sim.step(ct.text, action);

    TurnRecord r;
    r.turn = st.turn;
    r.counselor_action = action;
    r.intended_action = ct.intended_action;
    r.counselor_text = ct.text;
    r.client_action = st.client_action.action;
    r.client_action_fallback = st.client_action.fallback;
    r.client_text = st.client_text;
    r.sim_stage = st.stage;
    r.readiness = st.readiness;
    r.gate = st.gate;
    r.delta_r_bar = st.delta_r_bar;
    for (const auto& m : st.matched) r.matched_trigger_ids.push_back(sim.state().triggers[m.index].id);
    r.discovered_triggers = static_cast<int>(sim.state().discovered_count());
    r.total_triggers = static_cast<int>(sim.state().triggers.size());
    if (ct.agent) {
      const AgentTurn& a = *ct.agent;
      r.belief = to_vec(a.belief);
      if (a.perception) {
        r.p_obs_widened = to_vec(a.perception->widened);
        r.planner_prior_used = a.perception->planner_prior.has_value();
        r.alpha = a.perception->alpha;
      }
      if (a.efe) {
        EfeSummary e;
        e.chosen = a.efe->chosen;
        for (const auto& s : a.efe->scores) e.scores.push_back({s.action, s.epistemic, s.pragmatic, s.total});
        r.efe = std::move(e);
      }
    }
    if (writer) writer->append(r);
    t.turns.push_back(std::move(r));
    client = st.client_text;
  }
  return t;
}

CounselorKind counselor_kind_from_string(const std::string& s) {
  if (s == "puma") return CounselorKind::Puma;
  if (s == "random") return CounselorKind::Random;
  if (s == "fixed") return CounselorKind::Fixed;
  throw Error(ErrorCode::InvalidConfig, "unknown counselor '" + s + "' (puma, random, fixed)");
}

std::string to_string(CounselorKind k) {
  switch (k) {
    case CounselorKind::Puma: return "puma";
    case CounselorKind::Random: return "random";
    case CounselorKind::Fixed: return "fixed";
  }
  return "puma";
}

std::unique_ptr<Counselor> make_counselor(CounselorKind kind, const RunConfig& cfg,
                                          TextBackend& backend, const ClientProfile& profile,
                                          const std::string& session_id) {
  Vars extra{{"topic", profile.topic}, {"behavior", profile.behavior}};
  switch (kind) {
    case CounselorKind::Puma:
      return std::make_unique<PumaCounselor>(
          PumaAgent(AgentConfig::from_run_config(cfg), backend, std::make_shared<MemoryStore>(),
                    session_id),
          std::move(extra));
    case CounselorKind::Random:
      return std::make_unique<RandomCounselor>(backend, cfg.seed, std::move(extra));
    case CounselorKind::Fixed:
      return std::make_unique<FixedCounselor>(backend, std::move(extra));
  }
  throw Error(ErrorCode::InvalidConfig, "unknown counselor kind");
}

DynamicRun run_dynamic(const std::vector<ClientProfile>& profiles, CounselorKind kind,
                       const RunConfig& cfg, const BackendConfig& backend_cfg,
                       std::shared_ptr<const SimTables> tables,
                       const std::optional<std::filesystem::path>& out_dir, int jobs) {
  if (profiles.empty()) throw Error(ErrorCode::EmptyInput, "no client profiles");
  const std::size_t n = profiles.size();
  std::vector<std::optional<Transcript>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const ClientProfile& p = profiles[i];
        auto backend = make_backend(backend_cfg);
        DynPatient sim(p, tables, cfg.sim_params(), *backend, cfg.seed);
        auto counselor = make_counselor(kind, cfg, *backend, p, p.id);
        std::optional<std::filesystem::path> path;
        if (out_dir) path = *out_dir / (p.id + ".jsonl");
        results[i] = run_dialogue(*counselor, sim, *backend, cfg, path);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t n_workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  DynamicRun run;
  for (auto& r : results) run.transcripts.push_back(std::move(*r));
  return run;
}

// --- metrics ---------------------------------------------------------------

ordered_json DynamicMetrics::to_json() const {
  return {{"lift", lift},
          {"prep_rate", prep_rate},
          {"trig_cov", trig_cov},
          {"avg_turns", avg_turns},
          {"sessions", sessions}};
}

DynamicMetrics dynamic_metrics(const std::vector<Transcript>& transcripts) {
  if (transcripts.empty()) throw Error(ErrorCode::EmptyInput, "no transcripts");
  DynamicMetrics m;
  m.sessions = transcripts.size();
  double lift = 0.0, prep = 0.0, cov = 0.0, turns = 0.0;
  for (const auto& t : transcripts) {
    const std::string final_stage = t.final_stage();
    lift += vocab::stage_ordinal(final_stage) - vocab::stage_ordinal(t.header.initial_stage);
    if (final_stage == vocab::kPreparation) prep += 1.0;
    const int total = t.turns.empty() ? t.header.total_triggers : t.turns.back().total_triggers;
    const int found = t.turns.empty() ? 0 : t.turns.back().discovered_triggers;
    if (total > 0) cov += static_cast<double>(found) / total;
    turns += static_cast<double>(t.turns.size());
  }
  const double n = static_cast<double>(transcripts.size());
  m.lift = lift / n;
  m.prep_rate = prep / n;
  m.trig_cov = cov / n;
  m.avg_turns = turns / n;
  return m;
}

ordered_json OfflineMetrics::to_json() const {
  return {{"curr_acc", curr_acc},     {"next_acc", next_acc},     {"sessions_scored", sessions_scored},
          {"sessions_skipped", sessions_skipped}, {"curr_turns", curr_turns}, {"next_turns", next_turns}};
}

OfflineMetrics offline_eval(const std::vector<AnnotatedSession>& sessions, const RunConfig& cfg,
                            TextBackend& backend, std::vector<OfflineTurn>* trace) {
  OfflineMetrics m;
  std::size_t curr_hits = 0, next_hits = 0;
  const AgentConfig acfg = AgentConfig::from_run_config(cfg);

  for (const auto& s : sessions) {
    const std::size_t n = s.turns.size();
    const auto warm = static_cast<std::size_t>(std::floor(cfg.warmup_ratio * static_cast<double>(n)));
    if (n - warm < static_cast<std::size_t>(std::max(0, cfg.min_eval_turns)) || n == warm) {
      ++m.sessions_skipped;
      continue;
    }
    for (const auto& t : s.turns)
      if (!t.gold_stage)
        throw Error(ErrorCode::NoGoldLabels, "session '" + s.id + "' has turns without a gold stage");
    ++m.sessions_scored;

    PumaAgent agent(acfg, backend, nullptr, s.id, s.initial_stage);
    for (std::size_t t = 0; t < n; ++t) {
      const AnnotatedTurn& at = s.turns[t];
      const Perception p = agent.perceive(at.client);
      const std::string action = at.counselor_action
                                     ? *at.counselor_action
                                     : classify_counselor_action(backend, at.counselor, at.client);
      agent.commit_action(action);

      OfflineTurn rec{s.id, static_cast<int>(t + 1), t >= warm, p.fused.argmax_label(),
                      *at.gold_stage, std::nullopt, std::nullopt, p.cue};
      if (t + 1 < n) {
        rec.predicted_next = agent.cached_prior()->argmax_label();
        rec.gold_next = *s.turns[t + 1].gold_stage;
      }
      if (rec.scored) {
        ++m.curr_turns;
        if (rec.predicted_curr == rec.gold_curr) ++curr_hits;
        if (rec.gold_next) {
          ++m.next_turns;
          if (*rec.predicted_next == *rec.gold_next) ++next_hits;
        }
      }
      if (trace) trace->push_back(std::move(rec));
    }
  }
  if (m.curr_turns == 0)
    throw Error(ErrorCode::EmptyInput, "no session has enough evaluation turns");
  m.curr_acc = static_cast<double>(curr_hits) / static_cast<double>(m.curr_turns);
  m.next_acc = m.next_turns ? static_cast<double>(next_hits) / static_cast<double>(m.next_turns) : 0.0;
  return m;
}

// --- simulator validation --------------------------------------------------

ordered_json SimValidation::to_json() const {
  ordered_json j;
  j["act_kl"] = act_kl;
  j["deterministic"] = deterministic;
  j["turns"] = turns;
  ordered_json sim, gold;
  for (std::size_t i = 0; i < sim_actions.size(); ++i) {
    sim[sim_actions.space()->label(i)] = sim_actions[i];
    gold[gold_actions.space()->label(i)] = gold_actions[i];
  }
  j["sim_action_dist"] = std::move(sim);
  j["gold_action_dist"] = std::move(gold);
  ordered_json th = ordered_json::object();
  for (const auto& [id, v] : calibrated_thresholds) th[id] = v;
  j["calibrated_theta_prep"] = std::move(th);
  return j;
}

namespace {

struct Replay {
  std::vector<double> sim_counts;
  std::vector<double> gold_counts;
  std::vector<std::pair<std::string, double>> thresholds;
  std::string log;
  std::size_t turns = 0;
};

Replay replay_sessions(const std::vector<AnnotatedSession>& sessions,
                       const std::map<std::string, const ClientProfile*>& by_id,
                       const SimTables& tables, const RunConfig& cfg,
                       const BackendConfig& backend_cfg) {
  const auto space = vocab::client_action_space();
  Replay out{std::vector<double>(space->size(), 0.0), std::vector<double>(space->size(), 0.0), {}, {}, 0};
  auto shared_tables = std::make_shared<const SimTables>(tables);
  const SimParams params = cfg.sim_params();

  for (const auto& s : sessions) {
    if (!s.profile_id) continue;
    auto it = by_id.find(*s.profile_id);
    if (it == by_id.end())
      throw Error(ErrorCode::InvalidConfig, "session '" + s.id + "' names unknown profile '" + *s.profile_id + "'");
    auto backend = make_backend(backend_cfg);
    ClientProfile profile = *it->second;
    if (s.initial_stage) profile.initial_stage = *s.initial_stage;
    const double theta = calibrate_prep_threshold(profile, s.turns, tables, *backend, params);
    profile.prep_threshold = theta;
    out.thresholds.emplace_back(s.id, theta);

    DynPatient sim(profile, shared_tables, params, *backend, cfg.seed);
    for (const auto& t : s.turns) {
      if (t.counselor.empty()) continue;
      const std::string action =
          t.counselor_action ? *t.counselor_action : classify_counselor_action(*backend, t.counselor);
      const SimTurn st = sim.step(t.counselor, action);
      out.sim_counts[space->index(st.client_action.action)] += 1.0;
      if (t.client_action) out.gold_counts[space->index(*t.client_action)] += 1.0;
      ++out.turns;
      out.log += s.id + "\t" + std::to_string(st.turn) + "\t" + st.stage + "\t" +
                 nlohmann::json(st.readiness).dump() + "\t" + st.client_action.action + "\t" +
                 st.client_text + "\n";
    }
  }
  return out;
}

}  // namespace

SimValidation validate_sim(const std::vector<AnnotatedSession>& sessions,
                           const std::vector<ClientProfile>& profiles, const SimTables& tables,
                           const RunConfig& cfg, const BackendConfig& backend_cfg) {
  std::map<std::string, const ClientProfile*> by_id;
  for (const auto& p : profiles) by_id[p.id] = &p;

  const Replay a = replay_sessions(sessions, by_id, tables, cfg, backend_cfg);
  const Replay b = replay_sessions(sessions, by_id, tables, cfg, backend_cfg);
  if (a.turns == 0) throw Error(ErrorCode::EmptyInput, "no replayable session (profile_id and counselor turns required)");
  double gold_total = 0.0;
  for (double c : a.gold_counts) gold_total += c;
  if (gold_total == 0.0) throw Error(ErrorCode::NoGoldLabels, "sessions carry no gold client actions");

  const auto space = vocab::client_action_space();
  Categorical sim_d = normalize(a.sim_counts, space);
  Categorical gold_d = normalize(a.gold_counts, space);
  SimValidation v{act_kl(sim_d, gold_d), sim_d, gold_d, a.log == b.log, a.thresholds, a.turns};
  return v;
}

}  // namespace puma
