// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "puma/belief.hpp"
#include "puma/checks.hpp"
#include "puma/config.hpp"
#include "puma/dynpatient.hpp"
#include "puma/efe.hpp"
#include "puma/harness.hpp"
#include "puma/vocab.hpp"
#include "support.hpp"

using namespace puma;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string num(double v, int prec = 6) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

int failures = 0;

void criterion(int n, const std::string& title, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.notes.push_back(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs >= budget_s) {
    o.pass = false;
    o.notes.push_back("runtime " + num(secs, 3) + " s over budget " + num(budget_s, 3) + " s");
  }
  std::string detail;
  for (const auto& s : o.notes) detail += (detail.empty() ? "" : "; ") + s;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << title << " [" << num(secs, 3)
            << " s]" << (detail.empty() ? "" : " -- " + detail) << std::endl;
  if (!o.pass) ++failures;
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

bool close(const Categorical& c, const std::vector<double>& v, double tol) {
  if (c.size() != v.size()) return false;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!close(c[i], v[i], tol)) return false;
  return true;
}

std::vector<double> vec(const Categorical& c) { return {c.probs().begin(), c.probs().end()}; }

std::shared_ptr<const SimTables> tables() {
  return std::make_shared<const SimTables>(SimTables::load(testing_support::data().sim_tables()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main() {
  criterion(1, "free-energy bound, posterior optimality and mutual-information identity on 1000 random models",
            10.0, [](Outcome& o) {
              const auto fe = checks::free_energy_bound(42, 1000, 100);
              const auto mi = checks::mutual_information_identity(42, 1000);
              o.require(fe.pass, fe.detail);
              o.require(mi.pass, mi.detail);
              o.note(fe.detail);
              o.note(mi.detail);
            });

  criterion(2, "hand-derived arithmetic fixtures reproduced to 1e-9", 1.0, [](Outcome& o) {
    const double tol = 1e-9;
    const auto s3 = LabelSpace::make({"s1", "s2", "s3"});

    const Categorical prior(s3, {0.5, 0.3, 0.2});
    const std::vector<double> lik{0.1, 0.6, 0.3};
    const auto post = bayes_update(prior, {lik});
    const auto post_o = oracle::bayes(vec(prior), lik);
    o.require(close(post, post_o, tol), "bayes posterior vs oracle");
    o.require(close(post, {0.172414, 0.620690, 0.206897}, 5e-7), "bayes posterior vs quoted digits");

    const Categorical a(s3, {0.7, 0.2, 0.1}), b(s3, {0.1, 0.8, 0.1});
    const auto fused = fuse(a, b, 0.35);
    o.require(close(fused, oracle::mix(vec(a), vec(b), 0.35), tol), "fusion vs oracle");
    o.require(close(fused, {0.49, 0.41, 0.10}, tol), "fusion [0.49, 0.41, 0.10]");

    o.require(close(content_gate({{0, 0.6, 1, true}}), oracle::gate(0.6, 1), tol) &&
                  close(content_gate({{0, 0.6, 1, true}}), 0.64, tol),
              "gate 0.64");
    o.require(close(content_gate({{0, 0.6, 2, false}}), oracle::gate(0.6, 2), tol) &&
                  close(content_gate({{0, 0.6, 2, false}}), 0.37, tol),
              "gate 0.37");

    const double dr = expected_delta_r(Categorical(vocab::talk_type_space(), {0.5, 0.3, 0.2}));
    o.require(close(dr, oracle::delta_r(0.5, 0.3, 0.2), tol) && close(dr, 0.39, tol), "delta r 0.39");

    o.require(close(update_readiness(0.0, 0.39, 0.1, {}), 0.039, tol), "readiness 0.039");
    o.require(close(update_readiness(0.0, 0.39, 0.64, {0.5}), 0.7496, tol), "readiness 0.7496");

    ClientProfile p;
    p.action_counts["contemplation"] = {{"Inform", 3}, {"Deny", 2}};
    const auto space = vocab::client_action_space();
    std::vector<double> pop(space->size(), 0.08);
    pop[space->index("Inform")] = 0.2;
    const auto d = dirichlet_action_dist(p, "contemplation", Categorical(space, pop), 5.0);
    o.require(close(d.at("Inform"), (3 + 5.0 * 0.2) / (5 + 5.0), tol) && close(d.at("Inform"), 0.4, tol),
              "dirichlet 0.4");

    const auto w = widen_observation(Categorical::point_mass(s3, 0), 3, false);
    o.require(w.alpha == 0.50, "alpha 0.50 for a short utterance");
    o.require(close(w.dist, oracle::widen({1, 0, 0}, 0.5), tol) &&
                  close(w.dist, {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0}, tol),
              "widen [0.6667, 0.1667, 0.1667]");
    o.note("11 values checked");
  });

  criterion(3, "published constants are the defaults and match the selftest config dump", 0.0, [](Outcome& o) {
    std::ifstream in(fs::path(PUMA_TEST_DIR) / "golden" / "config_defaults.json");
    o.require(static_cast<bool>(in), "golden file readable");
    const json golden = json::parse(in);
    const json cfg = RunConfig{}.to_json();
    o.require(cfg == golden["config"], "RunConfig defaults equal the golden dump");
    o.require(json(constants_json()) == golden["constants"], "constants equal the golden dump");

    const std::vector<std::pair<const char*, json>> published{
        {"tau", 0.45},          {"theta_cov", 0.3},        {"theta_prep", 0.5},       {"w_change", 1.0},
        {"w_neutral", 0.3},     {"w_sustain", -1.0},       {"alpha_dirichlet", 5.0},  {"lambda_e", 0.4},
        {"lambda_p", 0.6},      {"beta", 0.35},            {"bonus_beliefs", 0.2},    {"bonus_motivation", 0.4},
        {"bonus_plans", 0.5},   {"dist_thres", 1.5},       {"k_relevant", 1},         {"context_n", 30},
        {"consolidate_every", 12}, {"warmup_ratio", 0.5},  {"min_eval_turns", 3},     {"max_turns", 20},
        {"seed", 42}};
    for (const auto& [k, v] : published) o.require(golden["config"][k] == v, std::string("published value of ") + k);
    o.require(golden["constants"]["width_alphas"] == json({0.50, 0.65, 0.75, 0.85}), "width alpha set");

#ifdef PUMA_CLI_PATH
    FILE* pipe = popen(PUMA_CLI_PATH " selftest --dump-config", "r");
    o.require(pipe != nullptr, "launch selftest");
    std::string out;
    char buf[4096];
    while (pipe && fgets(buf, sizeof buf, pipe)) out += buf;
    const int rc = pipe ? pclose(pipe) : -1;
    o.require(rc == 0, "selftest exit status 0");
    o.require(json::parse(out) == golden, "selftest dump equals golden");
    o.note(std::to_string(published.size() + 1) + " published values; selftest dump matches");
#else
    o.note(std::to_string(published.size() + 1) + " published values (CLI not built)");
#endif
  });

  criterion(4, "trigger oracle reaches contemplation by turn 2 and preparation on >= 4/5 profiles; generic counselor stays put; runs byte-identical",
            5.0, [](Outcome& o) {
              const RunConfig cfg;
              const auto tabs = tables();
              const auto profiles = load_profiles(testing_support::data().profiles());
              o.require(profiles.size() == 5, "five fixture profiles");
              int cont_by_2 = 0, prep = 0, generic_stayed = 0, identical = 0;
              for (const auto& p : profiles) {
                std::string logs[2];
                for (int rep = 0; rep < 2; ++rep) {
                  auto b = testing_support::scripted();
                  DynPatient sim(p, tabs, cfg.sim_params(), *b, cfg.seed);
                  o.require(sim.state().triggers.size() == 6, p.id + " has 6 triggers");
                  ScriptedCounselor oracle("oracle", testing_support::oracle_lines(p, *b));
                  const auto t = run_dialogue(oracle, sim, *b, cfg);
                  logs[rep] = t.to_jsonl();
                  if (rep == 0) {
                    bool cont = false;
                    for (std::size_t i = 0; i < t.turns.size() && i < 2; ++i)
                      cont = cont || vocab::stage_ordinal(t.turns[i].sim_stage) >= 1;
                    cont_by_2 += cont;
                    prep += t.final_stage() == vocab::kPreparation;
                  }
                }
                identical += logs[0] == logs[1];

                auto b = testing_support::scripted();
                DynPatient sim(p, tabs, cfg.sim_params(), *b, cfg.seed);
                ScriptedCounselor generic("generic", testing_support::generic_lines());
                const auto g = run_dialogue(generic, sim, *b, cfg);
                bool stayed = g.turns.size() == 20;
                for (const auto& r : g.turns) stayed = stayed && r.sim_stage == vocab::kPrecontemplation;
                generic_stayed += stayed;
              }
              o.require(cont_by_2 == 5, "oracle contemplation by turn 2 on every profile");
              o.require(prep >= 4, "oracle preparation on >= 4 profiles");
              o.require(generic_stayed == 5, "generic counselor precontemplation for 20 turns on all profiles");
              o.require(identical == 5, "repeat runs byte-identical");
              o.note("contemplation by turn 2: " + std::to_string(cont_by_2) + "/5, preparation: " +
                     std::to_string(prep) + "/5, generic stayed: " + std::to_string(generic_stayed) +
                     "/5, identical: " + std::to_string(identical) + "/5");

              // End-to-end: the CLI path writes identical files for identical seeds.
              const auto d1 = fs::temp_directory_path() / "puma_accept_det1";
              const auto d2 = fs::temp_directory_path() / "puma_accept_det2";
              fs::remove_all(d1);
              fs::remove_all(d2);
              run_dynamic(profiles, CounselorKind::Puma, cfg, testing_support::scripted_config(), tabs, d1, 1);
              run_dynamic(profiles, CounselorKind::Puma, cfg, testing_support::scripted_config(), tabs, d2, 4);
              for (const auto& p : profiles)
                o.require(slurp(d1 / (p.id + ".jsonl")) == slurp(d2 / (p.id + ".jsonl")),
                          p.id + " transcript identical across runs");
              fs::remove_all(d1);
              fs::remove_all(d2);
            });

  criterion(5, "planner picks the state-identifying action (explore), the preferred-cue action (exploit), and is scale invariant on 1000 fixtures",
            5.0, [](Outcome& o) {
              testing_support::DiscriminationFixture f;
              const auto b = Categorical::uniform(f.states);
              const auto pref = PreferenceModel::from_probs(Categorical(f.cues, {0.1, 0.7, 0.2}));
              const auto explore = select_action(b, f.wm, *f.actions, pref, {1.0, 0.0});
              const auto exploit = select_action(b, f.wm, *f.actions, pref, {0.0, 1.0});
              o.require(explore.chosen == "probe", "lambda_e=1, lambda_p=0 selects the identifying action");
              o.require(exploit.chosen == "drift", "lambda_e=0, lambda_p=1 selects the preferred-cue action");
              const auto mass = [&](const std::string& a) { return predict_obs_dist(b, f.wm, a).at("o2"); };
              o.require(mass("drift") > mass("probe"), "drift carries more preferred-cue mass");
              const auto sc = checks::efe_scale_invariance(42, 1000);
              o.require(sc.pass, sc.detail);
              o.note("explore=" + explore.chosen + " exploit=" + exploit.chosen + "; " + sc.detail);
            });

  criterion(6, "metrics reproduce hand counts (lift, prep rate, coverage, curr acc) and act kl endpoints", 0.0,
            [](Outcome& o) {
              const auto dir = testing_support::fixtures();
              const std::vector<Transcript> ts{read_transcript(dir / "metrics" / "a.jsonl"),
                                               read_transcript(dir / "metrics" / "b.jsonl")};
              const auto m = dynamic_metrics(ts);
              o.require(close(m.lift, 1.5, 1e-12), "lift 1.5");
              o.require(close(m.prep_rate, 0.5, 1e-12), "prep_rate 0.5");
              o.require(close(m.trig_cov, 0.5, 1e-12), "trig_cov 0.5");

              auto b = testing_support::scripted();
              const auto sessions = load_annotated_sessions(dir / "annotated_metrics.json");
              std::size_t turns = 0;
              for (const auto& s : sessions) turns += s.turns.size();
              o.require(turns == 10, "annotated fixture has 10 turns");
              const auto off = offline_eval(sessions, RunConfig{}, *b);
              o.require(close(off.curr_acc, 2.0 / 3.0, 1e-12), "curr_acc 2/3");

              const auto space = vocab::client_action_space();
              const auto u = Categorical::uniform(space);
              const double same = act_kl(u, u);
              const double point = act_kl(Categorical::point_mass(space, 0), u);
              o.require(same == 0.0, "act_kl identical = 0");
              o.require(close(point, std::log(11.0), 1e-3), "act_kl point vs uniform = ln 11");
              o.note("lift=" + num(m.lift) + " prep=" + num(m.prep_rate) + " cov=" + num(m.trig_cov) +
                     " curr_acc=" + num(off.curr_acc) + " act_kl(point,uniform)=" + num(point));
            });

  criterion(7, "ablation flags give distinct metric vectors and disable_planner bypasses the fusion prior", 0.0,
            [](Outcome& o) {
              const auto profiles = load_profiles(testing_support::data().profiles());
              const auto tabs = tables();
              struct Variant {
                const char* name;
                std::function<void(RunConfig&)> apply;
              };
              const std::vector<Variant> variants{
                  {"full", [](RunConfig&) {}},
                  {"disable_planner", [](RunConfig& c) { c.disable_planner = true; }},
                  {"efe_action_off", [](RunConfig& c) { c.efe_action = false; }},
                  {"hard_counts", [](RunConfig& c) { c.hard_counts = true; }},
              };
              std::set<std::array<double, 4>> distinct;
              std::string summary;
              for (const auto& v : variants) {
                RunConfig cfg;
                v.apply(cfg);
                const auto dir = fs::temp_directory_path() / (std::string("puma_accept_") + v.name);
                fs::remove_all(dir);
                run_dynamic(profiles, CounselorKind::Puma, cfg, testing_support::scripted_config(), tabs, dir, 2);
                std::vector<Transcript> ts;
                for (const auto& p : profiles) ts.push_back(read_transcript(dir / (p.id + ".jsonl")));
                const auto m = dynamic_metrics(ts);
                distinct.insert({m.lift, m.prep_rate, m.trig_cov, m.avg_turns});
                summary += std::string(summary.empty() ? "" : ", ") + v.name + "=(" + num(m.lift, 3) + "," +
                           num(m.prep_rate, 3) + "," + num(m.trig_cov, 3) + "," + num(m.avg_turns, 3) + ")";

                if (cfg.disable_planner) {
                  std::size_t checked = 0;
                  for (const auto& t : ts)
                    for (const auto& r : t.turns) {
                      o.require(!r.planner_prior_used, "no planner prior used at turn " + std::to_string(r.turn));
                      if (!r.p_obs_widened) continue;
                      o.require(r.belief && *r.belief == *r.p_obs_widened,
                                t.header.profile_id + " turn " + std::to_string(r.turn) + " belief equals widened p_obs");
                      ++checked;
                    }
                  o.require(checked > 0, "some turns carry observations");
                  o.note("disable_planner: belief == widened p_obs on " + std::to_string(checked) + " turns");
                }
                fs::remove_all(dir);
              }
              o.require(distinct.size() >= 2, "at least two distinct metric vectors");
              o.note(std::to_string(distinct.size()) + " distinct vectors: " + summary);
            });

  return failures == 0 ? 0 : 1;
}
