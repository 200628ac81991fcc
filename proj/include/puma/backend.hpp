#pragma once

// Boundary for every natural-language operation: response generation,
// counselor-action and talk-type classification, summarization, embeddings.
//
// Two implementations: a deterministic scripted backend driven by rule
// tables (used by tests and offline runs) and an HTTP client for any
// OpenAI-compatible chat-completions / embeddings server.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "puma/prob.hpp"

namespace puma {

using Vars = std::map<std::string, std::string>;

/// Renders `{name}` placeholders. Braces not enclosing an identifier are kept
/// verbatim. Throws PlaceholderUnresolved.
std::string render_template(std::string_view text, const Vars& vars);

/// Loads every `*.txt` file in dir as a template keyed by its stem.
std::map<std::string, std::string> load_templates(const std::filesystem::path& dir);

/// Lowercased, punctuation-stripped whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);
std::size_t token_bucket(std::string_view token, std::uint64_t seed, std::size_t dim);
/// L2-normalized hashed bag of tokens. Token-less text hashes a sentinel token.
std::vector<double> hashed_embedding(std::string_view text, std::uint64_t seed,
                                     std::size_t dim = 256);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// First-match rule. Conditions left empty are ignored; a rule with no
/// conditions is a catch-all.
struct Rule {
  std::optional<std::string> key;       // exact match against the request key
  std::vector<std::string> any;         // some substring present (case-insensitive)
  std::vector<std::string> starts_any;  // text starts with one of these
  std::optional<bool> question;         // trimmed text ends with '?'
  std::optional<int> max_words;
  std::string output;

  bool catch_all() const;
  bool matches(std::string_view key_value, std::string_view text) const;
};

/// Ordered rule list whose last rule must be a catch-all.
class RuleTable {
 public:
  RuleTable() = default;
  explicit RuleTable(std::vector<Rule> rules);
  static RuleTable from_json(const nlohmann::json& j);

  const std::string& apply(std::string_view key, std::string_view text) const;
  bool empty() const noexcept { return rules_.empty(); }
  const std::vector<Rule>& rules() const noexcept { return rules_; }

 private:
  std::vector<Rule> rules_;
};

/// Fixture data for the scripted backend.
struct Script {
  std::vector<std::string> playback;
  RuleTable responses;         // keyed by GenerationRequest::rule_key
  RuleTable counselor_action;  // MISC-17 classification
  RuleTable talk_type_ttm;     // precontemplation / contemplation / preparation
  RuleTable talk_type_annomi;  // change / neutral / sustain
  RuleTable choice;            // free-form choice calls (client action selection)
  std::size_t summary_max_chars = 400;

  static Script from_json(const nlohmann::json& j);
  static Script load(const std::filesystem::path& file);
};

enum class BackendKind { Scripted, Http };

struct BackendConfig {
  BackendKind kind = BackendKind::Scripted;
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  int max_output_tokens = 1024;
  std::map<std::string, std::string> prompt_templates;
  std::uint64_t seed = 42;
  std::size_t embedding_dim = 256;
  int retries = 2;
  double timeout_s = 30.0;
  std::string api_key_env = "PUMA_API_KEY";
  Script script;

  /// Throws InvalidConfig.
  void validate() const;
};

struct GenerationRequest {
  std::string template_id;
  Vars vars;
  std::string rule_key;  // scripted matching key, e.g. the action label
  std::string rule_text; // scripted matching text, e.g. the user utterance
};

class TextBackend {
 public:
  virtual ~TextBackend() = default;

  /// Non-empty text; throws TemplateMissing, BackendUnavailable.
  virtual std::string generate(const GenerationRequest& req) = 0;
  /// Raw completion for choice prompts; may be unparsable.
  virtual std::string choose(const GenerationRequest& req) = 0;
  virtual std::string classify_counselor_action(std::string_view utterance,
                                                std::string_view context) = 0;
  /// A label of `states`.
  virtual std::string classify_talk_type(std::string_view utterance, std::string_view context,
                                         const LabelSpace& states) = 0;
  virtual std::vector<double> embed(std::string_view text) = 0;
  virtual std::string summarize(const std::vector<std::string>& texts) = 0;
};

class ScriptedBackend final : public TextBackend {
 public:
  explicit ScriptedBackend(BackendConfig cfg);

  std::string generate(const GenerationRequest& req) override;
  std::string choose(const GenerationRequest& req) override;
  std::string classify_counselor_action(std::string_view utterance,
                                        std::string_view context) override;
  std::string classify_talk_type(std::string_view utterance, std::string_view context,
                                 const LabelSpace& states) override;
  std::vector<double> embed(std::string_view text) override;
  std::string summarize(const std::vector<std::string>& texts) override;

  const std::string& last_prompt() const noexcept { return last_prompt_; }
  std::size_t playback_remaining() const noexcept { return playback_.size(); }

 private:
  std::string render(const GenerationRequest& req);

  BackendConfig cfg_;
  std::deque<std::string> playback_;
  std::string last_prompt_;
};

class HttpBackend final : public TextBackend {
 public:
  explicit HttpBackend(BackendConfig cfg);

  std::string generate(const GenerationRequest& req) override;
  std::string choose(const GenerationRequest& req) override;
  std::string classify_counselor_action(std::string_view utterance,
                                        std::string_view context) override;
  std::string classify_talk_type(std::string_view utterance, std::string_view context,
                                 const LabelSpace& states) override;
  std::vector<double> embed(std::string_view text) override;
  std::string summarize(const std::vector<std::string>& texts) override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);
  std::string chat(const std::string& template_id, const Vars& vars);

  BackendConfig cfg_;
  std::string base_;    // scheme://host:port
  std::string prefix_;  // path prefix, e.g. /v1
};

std::unique_ptr<TextBackend> make_backend(const BackendConfig& cfg);

/// Builds the counselor prompt variables and calls generate().
std::string generate_response(TextBackend& backend, const std::string& action,
                              const Categorical& belief, const std::vector<std::string>& memories,
                              const std::string& user_utterance,
                              const std::string& template_id = "counselor_response",
                              const Vars& extra = {});

/// Empty utterances violate the precondition (EmptyText).
std::string classify_counselor_action(TextBackend& backend, std::string_view utterance,
                                      std::string_view context = {});
std::string classify_talk_type(TextBackend& backend, std::string_view utterance,
                               const LabelSpace& states, std::string_view context = {});

std::string format_distribution(const Categorical& d);

/// Earliest (then longest) vocabulary label found in free text, case-insensitive.
std::optional<std::string> parse_label(std::string_view text, const std::vector<std::string>& labels);

}  // namespace puma
