// puma: dynamic runs against the client simulator, offline state inference,
// simulator validation, an interactive REPL and the self-test suites.
//
// Exit codes: 0 ok, 1 check failed / runtime error, 2 usage or config error,
// 3 backend failure.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "puma/agent.hpp"
#include "puma/checks.hpp"
#include "puma/config.hpp"
#include "puma/harness.hpp"
#include "puma/vocab.hpp"

namespace {

using nlohmann::ordered_json;
using puma::ErrorCode;
using puma::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;

int exit_code_for(const puma::Error& e) {
  switch (e.code()) {
    case ErrorCode::BackendUnavailable: return kExitBackend;
    case ErrorCode::InvalidConfig:
    case ErrorCode::ParseError:
    case ErrorCode::TemplateMissing:
    case ErrorCode::PlaceholderUnresolved:
    case ErrorCode::UnknownLabel:
    case ErrorCode::IoError: return kExitConfig;
    default: return kExitFailed;
  }
}

/// Run options shared by the subcommands. Flags override the --config file,
/// which overrides the defaults.
struct RunOptions {
  std::string config_file;
  std::string data_dir;
  RunConfig flags;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> set;

  template <typename T>
  void bind(CLI::App* app, const std::string& name, T RunConfig::*field, const std::string& help) {
    CLI::Option* opt = app->add_option(name, flags.*field, help);
    set.emplace_back(opt, [this, field](RunConfig& c) { c.*field = flags.*field; });
  }
  void flag(CLI::App* app, const std::string& name, bool RunConfig::*field, bool value,
            const std::string& help) {
    CLI::Option* opt = app->add_flag(name, help);
    set.emplace_back(opt, [field, value](RunConfig& c) { c.*field = value; });
  }

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file merged under the flags");
    app->add_option("--data-dir", data_dir, "Data directory (profiles, scripts, templates, tables)");
    bind(app, "--max-turns", &RunConfig::max_turns, "Turn budget per session");
    bind(app, "--seed", &RunConfig::seed, "Run seed");
    bind(app, "--lambda-e", &RunConfig::lambda_e, "Epistemic weight");
    bind(app, "--lambda-p", &RunConfig::lambda_p, "Pragmatic weight");
    bind(app, "--beta", &RunConfig::beta, "Planner-prior fusion weight");
    bind(app, "--repeat-penalty", &RunConfig::repeat_penalty, "Penalty on repeating the last action");
    flag(app, "--disable-planner", &RunConfig::disable_planner, true, "Skip planner-prior fusion");
    flag(app, "--no-efe-action", &RunConfig::efe_action, false, "Round-robin actions instead of EFE");
    bind(app, "--lambda-wm", &RunConfig::lambda_wm, "Transition weight in the world-model loss");
    bind(app, "--kappa-t", &RunConfig::kappa_t, "Transition smoothing");
    bind(app, "--kappa-o", &RunConfig::kappa_o, "Observation smoothing");
    bind(app, "--obs-prior-strength", &RunConfig::obs_prior_strength, "Diagonal observation pseudo-counts");
    flag(app, "--hard-counts", &RunConfig::hard_counts, true, "Argmax world-model counts");
    bind(app, "--dist-thres", &RunConfig::dist_thres, "Memory retrieval distance threshold");
    bind(app, "--k-relevant", &RunConfig::k_relevant, "Relevant memories per turn");
    bind(app, "--context-n", &RunConfig::context_n, "Recency context size");
    bind(app, "--consolidate-every", &RunConfig::consolidate_every, "Memory consolidation period");
    bind(app, "--warmup-ratio", &RunConfig::warmup_ratio, "Offline warm-up fraction");
    bind(app, "--min-eval-turns", &RunConfig::min_eval_turns, "Minimum scored turns per session");
    bind(app, "--tau", &RunConfig::tau, "Trigger match threshold");
    bind(app, "--theta-cov", &RunConfig::theta_cov, "Coverage threshold for contemplation");
    bind(app, "--theta-prep", &RunConfig::theta_prep, "Default readiness threshold for preparation");
    bind(app, "--alpha-dirichlet", &RunConfig::alpha_dirichlet, "Client-action prior strength");
    bind(app, "--min-support", &RunConfig::min_support, "Talk-type cell back-off support");
    flag(app, "--no-early-stop", &RunConfig::early_stop, false, "Run to max-turns even after preparation");
    bind(app, "--backend", &RunConfig::backend, "scripted or http");
    bind(app, "--endpoint", &RunConfig::endpoint, "OpenAI-compatible base URL (http backend)");
    bind(app, "--model", &RunConfig::model_name, "Model name sent to the endpoint");
    bind(app, "--max-output-tokens", &RunConfig::max_output_tokens, "Completion token cap");
    bind(app, "--retries", &RunConfig::retries, "Retries per backend request");
    bind(app, "--timeout", &RunConfig::timeout_s, "Backend timeout in seconds");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_file.empty() ? RunConfig{} : RunConfig::load(config_file);
    for (const auto& [opt, apply] : set)
      if (opt->count() > 0) apply(cfg);
    cfg.validate();
    return cfg;
  }

  puma::DataPaths data() const {
    return {data_dir.empty() ? puma::default_data_dir() : std::filesystem::path(data_dir)};
  }
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw puma::Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

int cmd_run_dynamic(const RunOptions& o, const std::string& counselor, const std::string& profiles_dir,
                    const std::string& out_dir, int jobs) {
  const RunConfig cfg = o.resolve();
  const puma::DataPaths data = o.data();
  const auto kind = puma::counselor_kind_from_string(counselor);
  const auto profiles =
      puma::load_profiles(profiles_dir.empty() ? data.profiles() : std::filesystem::path(profiles_dir));
  auto tables = std::make_shared<const puma::SimTables>(puma::SimTables::load(data.sim_tables(), cfg.min_support));
  const auto bcfg = puma::backend_config(cfg, data);

  std::optional<std::filesystem::path> out;
  if (!out_dir.empty()) out = std::filesystem::path(out_dir);
  const auto run = puma::run_dynamic(profiles, kind, cfg, bcfg, tables, out, jobs);
  const auto m = puma::dynamic_metrics(run.transcripts);

  ordered_json j;
  j["counselor"] = counselor;
  j["metrics"] = m.to_json();
  ordered_json per = ordered_json::array();
  for (const auto& t : run.transcripts) {
    ordered_json s;
    s["profile_id"] = t.header.profile_id;
    s["initial_stage"] = t.header.initial_stage;
    s["final_stage"] = t.final_stage();
    s["turns"] = t.turns.size();
    s["discovered_triggers"] = t.turns.empty() ? 0 : t.turns.back().discovered_triggers;
    s["total_triggers"] = t.header.total_triggers;
    per.push_back(std::move(s));
  }
  j["sessions"] = std::move(per);
  j["config"] = cfg.to_json();
  const std::string text = j.dump(2) + "\n";
  if (out) write_file(*out / "metrics.json", text);
  std::cout << text;
  return kExitOk;
}

int cmd_eval_offline(const RunOptions& o, const std::string& sessions_path) {
  const RunConfig cfg = o.resolve();
  const puma::DataPaths data = o.data();
  const auto sessions = puma::load_annotated_sessions(sessions_path.empty() ? data.sessions() : std::filesystem::path(sessions_path));
  auto backend = puma::make_backend(puma::backend_config(cfg, data));
  const auto m = puma::offline_eval(sessions, cfg, *backend);
  ordered_json j;
  j["metrics"] = m.to_json();
  j["config"] = cfg.to_json();
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_validate_sim(const RunOptions& o, const std::string& sessions_path, const std::string& profiles_dir) {
  const RunConfig cfg = o.resolve();
  const puma::DataPaths data = o.data();
  const auto sessions = puma::load_annotated_sessions(sessions_path.empty() ? data.sessions() : std::filesystem::path(sessions_path));
  const auto profiles =
      puma::load_profiles(profiles_dir.empty() ? data.profiles() : std::filesystem::path(profiles_dir));
  const auto tables = puma::SimTables::load(data.sim_tables(), cfg.min_support);
  const auto v = puma::validate_sim(sessions, profiles, tables, cfg, puma::backend_config(cfg, data));
  std::cout << v.to_json().dump(2) << "\n";
  if (!v.deterministic) {
    std::cerr << "determinism check failed: two replays differ\n";
    return kExitFailed;
  }
  return kExitOk;
}

void print_dist(const puma::Categorical& d) {
  for (std::size_t i = 0; i < d.size(); ++i)
    std::printf("    %-18s %.3f\n", d.space()->label(i).c_str(), d[i]);
}

int cmd_repl(const RunOptions& o, const std::string& profile_id, bool show_belief) {
  const RunConfig cfg = o.resolve();
  const puma::DataPaths data = o.data();
  const auto profiles = puma::load_profiles(data.profiles());
  const puma::ClientProfile* profile = profiles.empty() ? nullptr : &profiles.front();
  for (const auto& p : profiles)
    if (p.id == profile_id) profile = &p;
  if (!profile || (!profile_id.empty() && profile->id != profile_id))
    throw puma::Error(ErrorCode::InvalidConfig, "no profile '" + profile_id + "'");

  auto backend = puma::make_backend(puma::backend_config(cfg, data));
  auto tables = std::make_shared<const puma::SimTables>(puma::SimTables::load(data.sim_tables(), cfg.min_support));
  puma::DynPatient sim(*profile, tables, cfg.sim_params(), *backend, cfg.seed);
  auto advisor = puma::make_counselor(puma::CounselorKind::Puma, cfg, *backend, *profile, profile->id);

  std::cout << "Client: " << profile->id << " (" << profile->topic << ", " << profile->behavior << ")\n"
            << "Stage: " << sim.state().stage << ", triggers: " << sim.state().triggers.size()
            << ". Type counselor turns; :quit to leave.\n";
  std::optional<std::string> last_client;
  for (int turn = 0; turn < cfg.max_turns || cfg.max_turns == 0; ++turn) {
    if (show_belief) {
      const puma::CounselorTurn advice = advisor->respond(last_client);
      if (advice.agent) {
        std::cout << "  [advisory] belief:\n";
        print_dist(advice.agent->belief);
        if (advice.agent->efe)
          for (const auto& s : advice.agent->efe->scores)
            std::printf("    G(%s) = %.4f  (epi %.4f, prag %.4f)%s\n", s.action.c_str(), s.total,
                        s.epistemic, s.pragmatic, s.action == advice.agent->efe->chosen ? "  <" : "");
        std::cout << "  [advisory] " << advice.intended_action << ": " << advice.text << "\n";
      }
    }
    std::cout << "counselor> " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line) || line == ":quit" || line == ":q") break;
    if (line.find_first_not_of(" \t") == std::string::npos) {
      --turn;
      continue;
    }
    const std::string action = puma::classify_counselor_action(*backend, line, last_client.value_or(""));
    advisor->executed(action);
    const puma::SimTurn st = sim.step(line, action);
    std::cout << "client> " << st.client_text << "\n";
    std::cout << "  action " << action << " | client " << st.client_action.action << " | stage "
              << st.stage << " | readiness " << st.readiness << " | gate " << st.gate;
    if (!st.matched.empty()) {
      std::cout << " | matched";
      for (const auto& m : st.matched) std::cout << " " << sim.state().triggers[m.index].id;
    }
    std::cout << "\n";
    last_client = st.client_text;
    if (cfg.early_stop && st.stage == puma::vocab::kPreparation) {
      std::cout << "Client reached preparation.\n";
      break;
    }
  }
  return kExitOk;
}

int cmd_selftest(const RunOptions& o, bool dump_only) {
  const RunConfig cfg = o.resolve();
  ordered_json j;
  j["config"] = cfg.to_json();
  j["constants"] = puma::constants_json();
  if (dump_only) {
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  bool ok = true;
  ordered_json suites = ordered_json::array();
  for (const auto& r : puma::checks::run_all(cfg.seed)) {
    ok = ok && r.pass;
    suites.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}, {"seconds", r.seconds}});
  }
  j["suites"] = std::move(suites);
  j["pass"] = ok;
  std::cout << j.dump(2) << "\n";
  return ok ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PUMA counselor agent and client simulator"};
  app.require_subcommand(1);

  RunOptions run_opts, eval_opts, val_opts, repl_opts, self_opts;

  auto* run = app.add_subcommand("run-dynamic", "Run counselor sessions against simulated clients");
  std::string counselor = "puma", profiles_dir, out_dir = "runs";
  int jobs = 1;
  run->add_option("--counselor", counselor, "puma, random or fixed")
      ->check(CLI::IsMember({"puma", "random", "fixed"}));
  run->add_option("--profiles", profiles_dir, "Profile directory");
  run->add_option("--out", out_dir, "Output directory for transcripts and metrics (empty: none)");
  run->add_option("--jobs", jobs, "Parallel sessions")->check(CLI::PositiveNumber);
  run_opts.add_to(run);

  auto* eval = app.add_subcommand("eval-offline", "Current/next state accuracy on annotated sessions");
  std::string sessions_path;
  eval->add_option("--sessions", sessions_path, "Annotated sessions JSON");
  eval_opts.add_to(eval);

  auto* val = app.add_subcommand("validate-sim", "Replay annotated sessions through the simulator");
  std::string val_sessions, val_profiles;
  val->add_option("--sessions", val_sessions, "Annotated sessions JSON");
  val->add_option("--profiles", val_profiles, "Profile directory");
  val_opts.add_to(val);

  auto* repl = app.add_subcommand("repl", "Type counselor turns against a simulated client");
  std::string profile_id;
  bool show_belief = false;
  repl->add_option("--profile", profile_id, "Profile id (default: first profile)");
  repl->add_flag("--show-belief", show_belief, "Show the agent's belief and EFE scores each turn");
  repl_opts.add_to(repl);

  auto* self = app.add_subcommand("selftest", "Print resolved config and run the property suites");
  bool dump_only = false;
  self->add_flag("--dump-config", dump_only, "Only print config and constants");
  self_opts.add_to(self);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run_dynamic(run_opts, counselor, profiles_dir, out_dir, jobs);
    if (*eval) return cmd_eval_offline(eval_opts, sessions_path);
    if (*val) return cmd_validate_sim(val_opts, val_sessions, val_profiles);
    if (*repl) return cmd_repl(repl_opts, profile_id, show_belief);
    if (*self) return cmd_selftest(self_opts, dump_only);
  } catch (const puma::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitConfig;
}
