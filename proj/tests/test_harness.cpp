#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "puma/harness.hpp"
#include "puma/vocab.hpp"
#include "support.hpp"

using namespace puma;
namespace fs = std::filesystem;
using testing_support::fixtures;

namespace {

std::shared_ptr<const SimTables> tables() {
  return std::make_shared<const SimTables>(SimTables::load(testing_support::data().sim_tables()));
}

std::vector<ClientProfile> profiles() { return load_profiles(testing_support::data().profiles()); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("puma_harness_" + name);
  fs::remove_all(p);
  return p;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

// Recomputes the dynamic metrics from raw JSONL without the library's types.
std::array<double, 4> recompute(const std::vector<fs::path>& files) {
  auto ord = [](const std::string& s) { return s == "preparation" ? 2 : s == "contemplation" ? 1 : 0; };
  double lift = 0, prep = 0, cov = 0, turns = 0;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line, initial, last_stage;
    int total = 0, found = 0, n = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      if (j["type"] == "session") {
        initial = j["initial_stage"];
        last_stage = initial;
        total = j["total_triggers"];
      } else {
        ++n;
        last_stage = j["sim_stage"];
        found = j["discovered_triggers"];
      }
    }
    lift += ord(last_stage) - ord(initial);
    prep += last_stage == "preparation";
    cov += total ? static_cast<double>(found) / total : 0.0;
    turns += n;
  }
  const double k = static_cast<double>(files.size());
  return {lift / k, prep / k, cov / k, turns / k};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("transcript round trip and schema errors") {
  const auto t = read_transcript(fixtures() / "metrics" / "a.jsonl");
  CHECK(t.header.profile_id == "fx_a");
  CHECK(t.turns.size() == 5);
  CHECK(t.final_stage() == "preparation");
  CHECK(t.to_jsonl() == slurp(fixtures() / "metrics" / "a.jsonl"));

  CHECK(code_of([] { parse_transcript(R"({"type":"turn","turn":1})"); }) == ErrorCode::ParseError);
  std::string lines = slurp(fixtures() / "metrics" / "a.jsonl");
  const auto first_turn = lines.find('\n') + 1;
  const auto second_turn = lines.find('\n', first_turn) + 1;
  const std::string dup = lines.substr(0, second_turn) + lines.substr(first_turn, second_turn - first_turn);
  CHECK(code_of([&] { parse_transcript(dup); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_transcript("{not json"); }) == ErrorCode::ParseError);
}

TEST_CASE("hand-counted dynamic metrics") {
  const std::vector<Transcript> ts{read_transcript(fixtures() / "metrics" / "a.jsonl"),
                                   read_transcript(fixtures() / "metrics" / "b.jsonl")};
  const auto m = dynamic_metrics(ts);
  CHECK(std::abs(m.lift - 1.5) < 1e-12);
  CHECK(std::abs(m.prep_rate - 0.5) < 1e-12);
  CHECK(std::abs(m.trig_cov - 0.5) < 1e-12);
  CHECK(std::abs(m.avg_turns - 5.0) < 1e-12);
  const auto r = recompute({fixtures() / "metrics" / "a.jsonl", fixtures() / "metrics" / "b.jsonl"});
  CHECK(r == std::array<double, 4>{m.lift, m.prep_rate, m.trig_cov, m.avg_turns});
  CHECK(code_of([] { dynamic_metrics({}); }) == ErrorCode::EmptyInput);

  Transcript flat;
  flat.header.initial_stage = "precontemplation";
  flat.header.total_triggers = 6;
  const auto z = dynamic_metrics({flat, flat});
  CHECK(z.lift == 0.0);
  CHECK(z.prep_rate == 0.0);
}

TEST_CASE("offline evaluation on hand-counted sessions") {
  auto b = testing_support::scripted();
  std::vector<OfflineTurn> trace;
  const auto m = offline_eval(load_annotated_sessions(fixtures() / "annotated_metrics.json"), RunConfig{}, *b, &trace);
  CHECK(m.sessions_scored == 1);
  CHECK(m.sessions_skipped == 1);
  CHECK(m.curr_turns == 3);
  CHECK(std::abs(m.curr_acc - 2.0 / 3.0) < 1e-12);
  REQUIRE(trace.size() == 6);
  for (int t = 0; t < 3; ++t) CHECK_FALSE(trace[t].scored);
  // The miss is the turn where the gold label disagrees with the client's talk.
  CHECK(trace[5].predicted_curr == "preparation");
  CHECK(trace[5].gold_curr == "contemplation");

  auto b2 = testing_support::scripted();
  const auto perfect = offline_eval(load_annotated_sessions(fixtures() / "annotated_perfect.json"), RunConfig{}, *b2);
  CHECK(perfect.curr_acc == 1.0);
  CHECK(perfect.next_acc == 1.0);
}

TEST_CASE("offline evaluation guards") {
  auto b = testing_support::scripted();
  auto sessions = load_annotated_sessions(fixtures() / "annotated_metrics.json");
  sessions[0].turns[4].gold_stage.reset();
  CHECK(code_of([&] { offline_eval(sessions, RunConfig{}, *b); }) == ErrorCode::NoGoldLabels);
  auto short_only = load_annotated_sessions(fixtures() / "annotated_metrics.json");
  short_only.erase(short_only.begin());
  CHECK(code_of([&] { offline_eval(short_only, RunConfig{}, *b); }) == ErrorCode::EmptyInput);

  RunConfig loose;
  loose.min_eval_turns = 2;
  const auto m = offline_eval(load_annotated_sessions(fixtures() / "annotated_metrics.json"), loose, *b);
  CHECK(m.sessions_scored == 2);
}

TEST_CASE("empty run reports the initial stage") {
  RunConfig cfg;
  cfg.max_turns = 0;
  auto b = testing_support::scripted();
  DynPatient sim(profiles()[0], tables(), cfg.sim_params(), *b, 42);
  auto c = make_counselor(CounselorKind::Puma, cfg, *b, profiles()[0], "p");
  const auto t = run_dialogue(*c, sim, *b, cfg);
  CHECK(t.turns.empty());
  CHECK(t.final_stage() == "precontemplation");
}

TEST_CASE("trigger oracle and generic counselor") {
  RunConfig cfg;
  int reached_prep = 0;
  for (const auto& p : profiles()) {
    auto b = testing_support::scripted();
    DynPatient sim(p, tables(), cfg.sim_params(), *b, 42);
    ScriptedCounselor oracle("oracle", testing_support::oracle_lines(p, *b));
    const auto t = run_dialogue(oracle, sim, *b, cfg);
    REQUIRE(t.turns.size() >= 2);
    CHECK(t.turns[1].sim_stage == "contemplation");
    reached_prep += t.final_stage() == "preparation";

    auto b2 = testing_support::scripted();
    DynPatient sim2(p, tables(), cfg.sim_params(), *b2, 42);
    ScriptedCounselor generic("generic", testing_support::generic_lines());
    const auto g = run_dialogue(generic, sim2, *b2, cfg);
    CHECK(g.turns.size() == 20);
    for (const auto& r : g.turns) {
      CHECK(r.sim_stage == "precontemplation");
      CHECK(r.matched_trigger_ids.empty());
    }
  }
  CHECK(reached_prep >= 4);
}

TEST_CASE("runs are byte-identical and metrics recompute from disk") {
  RunConfig cfg;
  const auto bcfg = testing_support::scripted_config();
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  const auto r1 = run_dynamic(profiles(), CounselorKind::Puma, cfg, bcfg, tables(), d1, 1);
  const auto r2 = run_dynamic(profiles(), CounselorKind::Puma, cfg, bcfg, tables(), d2, 3);
  std::vector<fs::path> files;
  for (const auto& p : profiles()) {
    const auto a = slurp(d1 / (p.id + ".jsonl"));
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(d2 / (p.id + ".jsonl")));
    files.push_back(d1 / (p.id + ".jsonl"));
  }
  const auto m = dynamic_metrics(r1.transcripts);
  const auto r = recompute(files);
  CHECK(std::abs(r[0] - m.lift) < 1e-12);
  CHECK(std::abs(r[1] - m.prep_rate) < 1e-12);
  CHECK(std::abs(r[2] - m.trig_cov) < 1e-12);
  CHECK(std::abs(r[3] - m.avg_turns) < 1e-12);
  for (std::size_t i = 0; i < r1.transcripts.size(); ++i)
    CHECK(r1.transcripts[i].to_jsonl() == r2.transcripts[i].to_jsonl());
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("baselines") {
  RunConfig cfg;
  cfg.max_turns = 6;
  cfg.early_stop = false;
  const auto bcfg = testing_support::scripted_config();
  const auto fixed = run_dynamic(profiles(), CounselorKind::Fixed, cfg, bcfg, tables(), std::nullopt);
  const auto& rr = round_robin_actions();
  for (const auto& t : fixed.transcripts) {
    REQUIRE(t.turns.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(t.turns[i].intended_action == rr[i % 3]);
      CHECK_FALSE(t.turns[i].belief);
    }
  }
  const auto rnd1 = run_dynamic(profiles(), CounselorKind::Random, cfg, bcfg, tables(), std::nullopt);
  const auto rnd2 = run_dynamic(profiles(), CounselorKind::Random, cfg, bcfg, tables(), std::nullopt);
  const std::set<std::string> misc(vocab::misc17().begin(), vocab::misc17().end());
  for (std::size_t i = 0; i < rnd1.transcripts.size(); ++i) {
    CHECK(rnd1.transcripts[i].to_jsonl() == rnd2.transcripts[i].to_jsonl());
    for (const auto& r : rnd1.transcripts[i].turns) CHECK(misc.count(r.intended_action) == 1);
  }
  CHECK(counselor_kind_from_string("fixed") == CounselorKind::Fixed);
  CHECK(code_of([] { counselor_kind_from_string("cami"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("agent turn records") {
  RunConfig cfg;
  cfg.max_turns = 5;
  cfg.early_stop = false;
  const auto run = run_dynamic({profiles()[0]}, CounselorKind::Puma, cfg, testing_support::scripted_config(),
                               tables(), std::nullopt);
  const auto& turns = run.transcripts[0].turns;
  REQUIRE(turns.size() == 5);
  // Opening turn: no client utterance yet, so no perception and no fusion prior.
  CHECK_FALSE(turns[0].p_obs_widened);
  CHECK_FALSE(turns[0].planner_prior_used);
  REQUIRE(turns[0].efe);
  CHECK(turns[0].efe->scores.size() == 17);
  CHECK(turns[0].efe->chosen == turns[0].intended_action);
  for (std::size_t i = 1; i < turns.size(); ++i) {
    CHECK(turns[i].p_obs_widened);
    CHECK(turns[i].planner_prior_used);
    REQUIRE(turns[i].alpha);
    CHECK(std::find(kWidthAlphas.begin(), kWidthAlphas.end(), *turns[i].alpha) != kWidthAlphas.end());
    double best = INFINITY;
    for (const auto& s : turns[i].efe->scores) best = std::min(best, s.total);
    const auto& sc = turns[i].efe->scores;
    const auto chosen = std::find_if(sc.begin(), sc.end(), [&](const auto& e) { return e.action == turns[i].efe->chosen; });
    REQUIRE(chosen != sc.end());
    CHECK(chosen->total == best);
  }
}

TEST_CASE("disable planner leaves the belief at the widened observation") {
  RunConfig cfg;
  cfg.disable_planner = true;
  cfg.early_stop = false;
  cfg.max_turns = 8;
  const auto run = run_dynamic(profiles(), CounselorKind::Puma, cfg, testing_support::scripted_config(),
                               tables(), std::nullopt);
  for (const auto& t : run.transcripts)
    for (const auto& r : t.turns) {
      CHECK_FALSE(r.planner_prior_used);
      if (r.p_obs_widened) CHECK(*r.belief == *r.p_obs_widened);
    }
}

TEST_CASE("efe selection off uses the round robin") {
  RunConfig cfg;
  cfg.efe_action = false;
  cfg.early_stop = false;
  cfg.max_turns = 6;
  const auto run = run_dynamic({profiles()[1]}, CounselorKind::Puma, cfg, testing_support::scripted_config(),
                               tables(), std::nullopt);
  const auto& rr = round_robin_actions();
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(run.transcripts[0].turns[i].intended_action == rr[i % 3]);
    CHECK_FALSE(run.transcripts[0].turns[i].efe);
  }
}

TEST_CASE("backend failure leaves a parseable prefix") {
  RunConfig cfg;
  cfg.early_stop = false;
  const auto p = profiles()[0];
  // Each turn makes two generate calls (counselor and client).
  testing_support::FailingBackend b(testing_support::scripted_config(), 7);
  DynPatient sim(p, tables(), cfg.sim_params(), b, 42);
  auto c = make_counselor(CounselorKind::Puma, cfg, b, p, p.id);
  const auto out = scratch("partial") / "p.jsonl";
  CHECK(code_of([&] { run_dialogue(*c, sim, b, cfg, out); }) == ErrorCode::BackendUnavailable);
  const auto t = read_transcript(out);
  CHECK(t.header.profile_id == p.id);
  CHECK(t.turns.size() == 3);
  fs::remove_all(out.parent_path());
}

TEST_CASE("simulator validation") {
  const auto sessions = load_annotated_sessions(testing_support::data().sessions());
  const auto v = validate_sim(sessions, profiles(), *tables(), RunConfig{}, testing_support::scripted_config());
  CHECK(v.deterministic);
  CHECK(v.turns > 0);
  CHECK(v.act_kl >= 0.0);
  CHECK(std::isfinite(v.act_kl));
  CHECK(v.calibrated_thresholds.size() == 3);
  for (const auto& [id, th] : v.calibrated_thresholds) CHECK(std::isfinite(th));

  auto no_gold = sessions;
  for (auto& s : no_gold)
    for (auto& t : s.turns) t.client_action.reset();
  CHECK(code_of([&] { validate_sim(no_gold, profiles(), *tables(), RunConfig{}, testing_support::scripted_config()); }) ==
        ErrorCode::NoGoldLabels);
}

}  // TEST_SUITE
