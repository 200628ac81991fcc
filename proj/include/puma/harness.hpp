#pragma once

// Dialogue runs, transcripts and evaluation metrics.
//
// Transcript files are JSONL. The first line is a session header
// ({"type":"session", ...}); every following line is one turn record with a
// fixed key order, so two runs with the same seed diff byte-for-byte.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "puma/agent.hpp"
#include "puma/config.hpp"
#include "puma/dynpatient.hpp"

namespace puma {

struct EfeSummary {
  struct Entry {
    std::string action;
    double epistemic = 0.0;
    double pragmatic = 0.0;
    double total = 0.0;
  };
  std::string chosen;
  std::vector<Entry> scores;
};

struct TurnRecord {
  int turn = 0;
  std::string counselor_action;           // classified label of counselor_text
  std::string intended_action;            // empty for counselors without a policy
  std::string counselor_text;
  std::string client_action;
  bool client_action_fallback = false;
  std::string client_text;
  std::optional<std::string> gold_stage;
  std::string sim_stage;
  double readiness = 0.0;
  double gate = 0.0;
  double delta_r_bar = 0.0;
  std::vector<std::string> matched_trigger_ids;
  int discovered_triggers = 0;
  int total_triggers = 0;
  std::optional<std::vector<double>> belief;
  std::optional<std::vector<double>> p_obs_widened;
  bool planner_prior_used = false;
  std::optional<double> alpha;
  std::optional<EfeSummary> efe;

  nlohmann::ordered_json to_json() const;
  static TurnRecord from_json(const nlohmann::json& j);
};

struct SessionHeader {
  std::string profile_id;
  std::string counselor;
  std::string initial_stage;
  int total_triggers = 0;
  double theta_prep = 0.5;
  std::uint64_t seed = 42;

  nlohmann::ordered_json to_json() const;
  static SessionHeader from_json(const nlohmann::json& j);
};

struct Transcript {
  SessionHeader header;
  std::vector<TurnRecord> turns;

  std::string final_stage() const;
  std::string to_jsonl() const;
};

/// Appends records and flushes after each line so a failed run leaves a
/// parseable prefix behind.
class TranscriptWriter {
 public:
  TranscriptWriter(const std::filesystem::path& path, const SessionHeader& header);
  void append(const TurnRecord& rec);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

Transcript read_transcript(const std::filesystem::path& path);
Transcript parse_transcript(const std::string& jsonl);

/// Counselor speaks first; the client reply is fed back on the next turn.
/// Stops at preparation when cfg.early_stop, otherwise after cfg.max_turns.
/// With `out` set, every record is flushed to that file as it is produced.
Transcript run_dialogue(Counselor& counselor, DynPatient& sim, TextBackend& backend,
                        const RunConfig& cfg,
                        const std::optional<std::filesystem::path>& out = std::nullopt);

enum class CounselorKind { Puma, Random, Fixed };
CounselorKind counselor_kind_from_string(const std::string& s);
std::string to_string(CounselorKind k);

std::unique_ptr<Counselor> make_counselor(CounselorKind kind, const RunConfig& cfg,
                                          TextBackend& backend, const ClientProfile& profile,
                                          const std::string& session_id);

struct DynamicRun {
  std::vector<Transcript> transcripts;  // profile order
};

/// One session per profile, evaluated by `jobs` workers with their own
/// backends. Transcripts go to out_dir/<profile_id>.jsonl when out_dir is set.
DynamicRun run_dynamic(const std::vector<ClientProfile>& profiles, CounselorKind kind,
                       const RunConfig& cfg, const BackendConfig& backend_cfg,
                       std::shared_ptr<const SimTables> tables,
                       const std::optional<std::filesystem::path>& out_dir, int jobs = 1);

struct DynamicMetrics {
  double lift = 0.0;
  double prep_rate = 0.0;
  double trig_cov = 0.0;
  double avg_turns = 0.0;
  std::size_t sessions = 0;

  nlohmann::ordered_json to_json() const;
};

/// Throws EmptyInput on an empty list.
DynamicMetrics dynamic_metrics(const std::vector<Transcript>& transcripts);

struct OfflineMetrics {
  double curr_acc = 0.0;
  double next_acc = 0.0;
  std::size_t sessions_scored = 0;
  std::size_t sessions_skipped = 0;
  std::size_t curr_turns = 0;
  std::size_t next_turns = 0;

  nlohmann::ordered_json to_json() const;
};

/// Per-turn predictions behind OfflineMetrics, for inspection.
struct OfflineTurn {
  std::string session_id;
  int turn = 0;
  bool scored = false;
  std::string predicted_curr;
  std::string gold_curr;
  std::optional<std::string> predicted_next;
  std::optional<std::string> gold_next;
  std::string cue;
};

/// Warm-up turns feed belief and world model without scoring. Throws
/// NoGoldLabels when a session lacks gold stages and EmptyInput when no
/// session has enough evaluation turns.
OfflineMetrics offline_eval(const std::vector<AnnotatedSession>& sessions, const RunConfig& cfg,
                            TextBackend& backend, std::vector<OfflineTurn>* trace = nullptr);

struct SimValidation {
  double act_kl = 0.0;
  Categorical sim_actions;
  Categorical gold_actions;
  bool deterministic = false;
  std::vector<std::pair<std::string, double>> calibrated_thresholds;  // session id -> theta_prep
  std::size_t turns = 0;

  nlohmann::ordered_json to_json() const;
};

/// Replays annotated counselor turns through the simulator (twice, to check
/// determinism) and compares simulated and gold client-action frequencies.
SimValidation validate_sim(const std::vector<AnnotatedSession>& sessions,
                           const std::vector<ClientProfile>& profiles, const SimTables& tables,
                           const RunConfig& cfg, const BackendConfig& backend_cfg);

}  // namespace puma
