#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "puma/backend.hpp"
#include "puma/dynpatient.hpp"

namespace puma {

struct RunConfig {
  int max_turns = 20;
  std::uint64_t seed = 42;

  // Planner
  double lambda_e = 0.4;
  double lambda_p = 0.6;
  double beta = 0.35;
  double repeat_penalty = 0.0;
  bool disable_planner = false;
  bool efe_action = true;

  // World model
  double lambda_wm = 1.0;
  double kappa_t = 1.0;
  double kappa_o = 1.0;
  double obs_prior_strength = 4.0;
  bool hard_counts = false;

  // Memory
  double dist_thres = 1.5;
  int k_relevant = 1;
  int context_n = 30;
  int consolidate_every = 12;

  // Offline evaluation split
  double warmup_ratio = 0.5;
  int min_eval_turns = 3;

  // Simulator
  double tau = 0.45;
  double theta_cov = 0.3;
  double theta_prep = 0.5;
  double alpha_dirichlet = 5.0;
  double w_change = 1.0;
  double w_neutral = 0.3;
  double w_sustain = -1.0;
  double bonus_beliefs = 0.2;
  double bonus_motivation = 0.4;
  double bonus_plans = 0.5;
  int min_support = 3;

  bool early_stop = true;

  // Backend
  std::string backend = "scripted";
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  int max_output_tokens = 1024;
  int retries = 2;
  double timeout_s = 30.0;

  /// Throws InvalidConfig.
  void validate() const;

  SimParams sim_params() const;

  /// Stable key order; used for dumps and golden tests.
  nlohmann::ordered_json to_json() const;
  /// Overrides fields present in j. Unknown keys throw InvalidConfig.
  void merge_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& file);
};

/// Fixed values that are not run-time options: the observation width set.
nlohmann::ordered_json constants_json();

/// Root of the shipped data directory (profiles, scripts, templates, tables).
std::filesystem::path default_data_dir();

struct DataPaths {
  std::filesystem::path root;
  std::filesystem::path profiles() const { return root / "profiles"; }
  std::filesystem::path script() const { return root / "scripts" / "default.json"; }
  std::filesystem::path templates() const { return root / "templates"; }
  std::filesystem::path sim_tables() const { return root / "sim_tables.json"; }
  std::filesystem::path sessions() const { return root / "sessions" / "annotated_fixture.json"; }
};

BackendConfig backend_config(const RunConfig& cfg, const DataPaths& data);

}  // namespace puma
