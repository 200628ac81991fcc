#include "puma/config.hpp"

#include <cmath>
#include <fstream>

#include "puma/belief.hpp"

#ifndef PUMA_DATA_DIR
#define PUMA_DATA_DIR "data"
#endif

namespace puma {

using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  auto unit = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must be in [0, 1]");
  };
  if (max_turns < 0) fail("max_turns must be >= 0");
  if (!(lambda_e >= 0.0) || !(lambda_p >= 0.0) || (lambda_e == 0.0 && lambda_p == 0.0))
    fail("lambda_e and lambda_p must be >= 0 and not both zero");
  unit(beta, "beta");
  unit(warmup_ratio, "warmup_ratio");
  unit(theta_cov, "theta_cov");
  if (!(repeat_penalty >= 0.0)) fail("repeat_penalty must be >= 0");
  if (!(lambda_wm >= 0.0)) fail("lambda_wm must be >= 0");
  if (!(kappa_t > 0.0) || !(kappa_o > 0.0)) fail("kappa_t and kappa_o must be > 0");
  if (!(obs_prior_strength >= 0.0)) fail("obs_prior_strength must be >= 0");
  if (!(dist_thres >= 0.0)) fail("dist_thres must be >= 0");
  if (k_relevant < 0 || context_n < 0) fail("k_relevant and context_n must be >= 0");
  if (consolidate_every <= 0) fail("consolidate_every must be > 0");
  if (min_eval_turns < 0) fail("min_eval_turns must be >= 0");
  if (!(alpha_dirichlet > 0.0)) fail("alpha_dirichlet must be > 0");
  if (!(tau >= -1.0 && tau <= 1.0)) fail("tau must be in [-1, 1]");
  if (!std::isfinite(theta_prep)) fail("theta_prep must be finite");
  if (min_support < 0) fail("min_support must be >= 0");
  if (backend != "scripted" && backend != "http") fail("backend must be 'scripted' or 'http'");
  if (backend == "http" && (!endpoint || endpoint->empty())) fail("http backend requires --endpoint");
  if (max_output_tokens <= 0) fail("max_output_tokens must be > 0");
  if (retries < 0) fail("retries must be >= 0");
  if (!(timeout_s > 0.0)) fail("timeout_s must be > 0");
}

SimParams RunConfig::sim_params() const {
  SimParams p;
  p.tau = tau;
  p.theta_cov = theta_cov;
  p.theta_prep_default = theta_prep;
  p.alpha_dirichlet = alpha_dirichlet;
  p.weights = {w_change, w_neutral, w_sustain};
  p.trigger_rules.bonus_beliefs = bonus_beliefs;
  p.trigger_rules.bonus_motivation = bonus_motivation;
  p.trigger_rules.bonus_plans = bonus_plans;
  return p;
}

#define PUMA_CONFIG_FIELDS(X)                                                                  \
  X(max_turns) X(seed) X(lambda_e) X(lambda_p) X(beta) X(repeat_penalty) X(disable_planner)     \
  X(efe_action) X(lambda_wm) X(kappa_t) X(kappa_o) X(obs_prior_strength) X(hard_counts)         \
  X(dist_thres) X(k_relevant) X(context_n) X(consolidate_every) X(warmup_ratio)                \
  X(min_eval_turns) X(tau) X(theta_cov) X(theta_prep) X(alpha_dirichlet) X(w_change)            \
  X(w_neutral) X(w_sustain) X(bonus_beliefs) X(bonus_motivation) X(bonus_plans) X(min_support)  \
  X(early_stop) X(backend) X(endpoint) X(model_name) X(max_output_tokens) X(retries) X(timeout_s)

namespace {

template <typename T>
void put(ordered_json& j, const char* key, const T& v) { j[key] = v; }

template <typename T>
void put(ordered_json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v; else j[key] = nullptr;
}

template <typename T>
void take(const json& j, T& v) { v = j.get<T>(); }

template <typename T>
void take(const json& j, std::optional<T>& v) {
  if (j.is_null()) v.reset(); else v = j.get<T>();
}

}  // namespace

ordered_json RunConfig::to_json() const {
  ordered_json j;
#define X(name) put(j, #name, name);
  PUMA_CONFIG_FIELDS(X)
#undef X
  return j;
}

void RunConfig::merge_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
#define X(name)              \
  if (key == #name) {        \
    take(value, name);       \
    known = true;            \
  }
      PUMA_CONFIG_FIELDS(X)
#undef X
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "config key '" + key + "': " + e.what());
    }
    if (!known) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config " + file.string());
  RunConfig cfg;
  try {
    cfg.merge_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, file.string() + ": " + e.what());
  }
  return cfg;
}

ordered_json constants_json() {
  ordered_json j;
  j["width_alphas"] = std::vector<double>(kWidthAlphas.begin(), kWidthAlphas.end());
  j["width_word_cutoffs"] = {6, 12, 25};
  j["gate_floor"] = 0.1;
  j["gate_decay"] = 0.5;
  j["talk_type_preference"] = {{"change", 0.70}, {"neutral", 0.25}, {"sustain", 0.05}};
  j["initial_stage_mass"] = 0.8;
  j["act_kl_epsilon"] = 1e-6;
  return j;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("PUMA_DATA_DIR"); env && *env) return env;
  return PUMA_DATA_DIR;
}

BackendConfig backend_config(const RunConfig& cfg, const DataPaths& data) {
  BackendConfig b;
  b.kind = cfg.backend == "http" ? BackendKind::Http : BackendKind::Scripted;
  b.endpoint = cfg.endpoint;
  b.model_name = cfg.model_name;
  b.max_output_tokens = cfg.max_output_tokens;
  b.seed = cfg.seed;
  b.retries = cfg.retries;
  b.timeout_s = cfg.timeout_s;
  b.prompt_templates = load_templates(data.templates());
  b.script = Script::load(data.script());
  return b;
}

}  // namespace puma
