#include "puma/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "puma/belief.hpp"
#include "puma/vocab.hpp"

namespace puma {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string require_non_empty(std::string text, const char* what) {
  if (trim(text).empty())
    throw Error(ErrorCode::BackendUnavailable, std::string(what) + " returned empty text");
  return text;
}

std::string truncate_utf8(std::string s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return s;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  s.resize(cut);
  return s;
}

}  // namespace

std::optional<std::string> parse_label(std::string_view text, const std::vector<std::string>& labels) {
  const std::string hay = lower(text);
  std::optional<std::string> best;
  std::size_t best_pos = std::string::npos;
  for (const auto& l : labels) {
    const std::size_t pos = hay.find(lower(l));
    if (pos == std::string::npos) continue;
    if (!best || pos < best_pos || (pos == best_pos && l.size() > best->size())) {
      best = l;
      best_pos = pos;
    }
  }
  return best;
}

std::string render_template(std::string_view text, const Vars& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{' && i + 1 < text.size() && is_ident_start(text[i + 1])) {
      std::size_t j = i + 1;
      while (j < text.size() && is_ident(text[j])) ++j;
      if (j < text.size() && text[j] == '}') {
        const std::string name(text.substr(i + 1, j - i - 1));
        auto it = vars.find(name);
        if (it == vars.end())
          throw Error(ErrorCode::PlaceholderUnresolved, "no value for {" + name + "}");
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

std::map<std::string, std::string> load_templates(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::IoError, "template directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    out[entry.path().stem().string()] = read_file(entry.path());
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::size_t token_bucket(std::string_view token, std::uint64_t seed, std::size_t dim) {
  // FNV-1a with the seed folded into the offset basis.
  std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h % dim);
}

std::vector<double> hashed_embedding(std::string_view text, std::uint64_t seed, std::size_t dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding dimension must be positive");
  std::vector<double> v(dim, 0.0);
  auto tokens = tokenize(text);
  if (tokens.empty()) tokens.emplace_back("<empty>");
  for (const auto& t : tokens) v[token_bucket(t, seed, dim)] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "embedding sizes differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

bool Rule::catch_all() const {
  return !key && any.empty() && starts_any.empty() && !question && !max_words;
}

bool Rule::matches(std::string_view key_value, std::string_view text) const {
  if (key && *key != key_value) return false;
  const std::string t = lower(trim(text));
  if (question && (!t.empty() && t.back() == '?') != *question) return false;
  if (max_words && count_words(t) > *max_words) return false;
  if (!starts_any.empty() &&
      std::none_of(starts_any.begin(), starts_any.end(),
                   [&](const std::string& p) { return t.rfind(lower(p), 0) == 0; }))
    return false;
  if (!any.empty() && std::none_of(any.begin(), any.end(), [&](const std::string& w) {
        return t.find(lower(w)) != std::string::npos;
      }))
    return false;
  return true;
}

RuleTable::RuleTable(std::vector<Rule> rules) : rules_(std::move(rules)) {
  if (rules_.empty() || !rules_.back().catch_all())
    throw Error(ErrorCode::InvalidConfig, "rule table must end with a catch-all rule");
}

RuleTable RuleTable::from_json(const json& j) {
  std::vector<Rule> rules;
  for (const auto& r : j) {
    Rule rule;
    if (r.contains("key")) rule.key = r["key"].get<std::string>();
    if (r.contains("any")) rule.any = r["any"].get<std::vector<std::string>>();
    if (r.contains("starts_any")) rule.starts_any = r["starts_any"].get<std::vector<std::string>>();
    if (r.contains("question")) rule.question = r["question"].get<bool>();
    if (r.contains("max_words")) rule.max_words = r["max_words"].get<int>();
    rule.output = r.at("output").get<std::string>();
    rules.push_back(std::move(rule));
  }
  return RuleTable(std::move(rules));
}

const std::string& RuleTable::apply(std::string_view key, std::string_view text) const {
  if (rules_.empty()) throw Error(ErrorCode::InvalidConfig, "rule table is empty");
  for (const auto& r : rules_)
    if (r.matches(key, text)) return r.output;
  return rules_.back().output;
}

Script Script::from_json(const json& j) {
  try {
    Script s;
    if (j.contains("playback")) s.playback = j["playback"].get<std::vector<std::string>>();
    s.responses = RuleTable::from_json(j.at("responses"));
    s.counselor_action = RuleTable::from_json(j.at("counselor_action"));
    s.talk_type_ttm = RuleTable::from_json(j.at("talk_type_ttm"));
    s.talk_type_annomi = RuleTable::from_json(j.at("talk_type_annomi"));
    s.choice = RuleTable::from_json(j.at("choice"));
    if (j.contains("summary_max_chars")) s.summary_max_chars = j["summary_max_chars"].get<std::size_t>();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("script json: ") + e.what());
  }
}

Script Script::load(const std::filesystem::path& file) {
  try {
    return from_json(json::parse(read_file(file)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, file.string() + ": " + e.what());
  }
}

void BackendConfig::validate() const {
  if (max_output_tokens <= 0) throw Error(ErrorCode::InvalidConfig, "max_output_tokens must be > 0");
  if (embedding_dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding_dim must be > 0");
  if (retries < 0) throw Error(ErrorCode::InvalidConfig, "retries must be >= 0");
  if (kind == BackendKind::Http) {
    if (!endpoint || endpoint->empty())
      throw Error(ErrorCode::InvalidConfig, "http backend requires an endpoint");
    if (endpoint->rfind("http://", 0) != 0)
      throw Error(ErrorCode::InvalidConfig, "endpoint must be an http:// URL");
  }
}

// ---------------------------------------------------------------------------
// Scripted

ScriptedBackend::ScriptedBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  playback_.assign(cfg_.script.playback.begin(), cfg_.script.playback.end());
}

std::string ScriptedBackend::render(const GenerationRequest& req) {
  auto it = cfg_.prompt_templates.find(req.template_id);
  if (it == cfg_.prompt_templates.end())
    throw Error(ErrorCode::TemplateMissing, "'" + req.template_id + "'");
  last_prompt_ = render_template(it->second, req.vars);
  return last_prompt_;
}

std::string ScriptedBackend::generate(const GenerationRequest& req) {
  render(req);
  if (!playback_.empty()) {
    std::string line = std::move(playback_.front());
    playback_.pop_front();
    return require_non_empty(std::move(line), "scripted playback");
  }
  const std::string& rule = cfg_.script.responses.apply(req.rule_key, req.rule_text);
  return require_non_empty(render_template(rule, req.vars), "scripted rule");
}

std::string ScriptedBackend::choose(const GenerationRequest& req) {
  render(req);
  return render_template(cfg_.script.choice.apply(req.rule_key, req.rule_text), req.vars);
}

std::string ScriptedBackend::classify_counselor_action(std::string_view utterance,
                                                       std::string_view) {
  return cfg_.script.counselor_action.apply("", utterance);
}

std::string ScriptedBackend::classify_talk_type(std::string_view utterance, std::string_view,
                                                const LabelSpace& states) {
  const RuleTable& table =
      states.contains(vocab::kPrecontemplation) ? cfg_.script.talk_type_ttm
                                                : cfg_.script.talk_type_annomi;
  std::string label = table.apply("", utterance);
  if (!states.contains(label))
    throw Error(ErrorCode::InvalidConfig, "talk-type rule produced '" + label +
                                              "' which is not in the state space");
  return label;
}

std::vector<double> ScriptedBackend::embed(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  return hashed_embedding(text, cfg_.seed, cfg_.embedding_dim);
}

std::string ScriptedBackend::summarize(const std::vector<std::string>& texts) {
  std::string joined;
  for (const auto& t : texts) {
    if (!joined.empty()) joined += " | ";
    joined += t;
  }
  return truncate_utf8(std::move(joined), cfg_.script.summary_max_chars);
}

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::string& ep = *cfg_.endpoint;
  const std::size_t host_start = ep.find("://") + 3;
  const std::size_t slash = ep.find('/', host_start);
  base_ = slash == std::string::npos ? ep : ep.substr(0, slash);
  prefix_ = slash == std::string::npos ? "" : ep.substr(slash);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

json HttpBackend::post(const std::string& path, const json& body) {
  httplib::Client cli(base_);
  const auto secs = static_cast<time_t>(cfg_.timeout_s);
  const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  const int attempts = cfg_.retries + 1;
  std::string last_error;
  for (int i = 0; i < attempts; ++i) {
    auto res = cli.Post(prefix_ + path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
    }
  }
  throw Error(ErrorCode::BackendUnavailable, base_ + prefix_ + path + " failed after " +
                                                 std::to_string(cfg_.retries) + " retries (" +
                                                 last_error + ")");
}

std::string HttpBackend::chat(const std::string& template_id, const Vars& vars) {
  auto it = cfg_.prompt_templates.find(template_id);
  if (it == cfg_.prompt_templates.end())
    throw Error(ErrorCode::TemplateMissing, "'" + template_id + "'");
  json messages = json::array();
  if (auto sys = cfg_.prompt_templates.find(template_id + "_system");
      sys != cfg_.prompt_templates.end())
    messages.push_back({{"role", "system"}, {"content", render_template(sys->second, vars)}});
  messages.push_back({{"role", "user"}, {"content", render_template(it->second, vars)}});

  json body{{"messages", std::move(messages)},
            {"temperature", 0},
            {"max_tokens", cfg_.max_output_tokens},
            {"seed", cfg_.seed}};
  if (cfg_.model_name) body["model"] = *cfg_.model_name;
  const json res = post("/chat/completions", body);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("unexpected chat response: ") + e.what());
  }
}

std::string HttpBackend::generate(const GenerationRequest& req) {
  return require_non_empty(chat(req.template_id, req.vars), "chat completion");
}

std::string HttpBackend::choose(const GenerationRequest& req) {
  return chat(req.template_id, req.vars);
}

std::string HttpBackend::classify_counselor_action(std::string_view utterance,
                                                   std::string_view context) {
  const std::string ctx(context.size() > 500 ? context.substr(context.size() - 500) : context);
  const std::string reply =
      chat("misc_classifier", {{"context", ctx}, {"counselor_utt", std::string(utterance)},
                               {"state", "unknown"}});
  std::string label;
  try {
    const auto start = reply.find('{');
    const auto end = reply.rfind('}');
    if (start != std::string::npos && end != std::string::npos && end > start)
      label = json::parse(reply.substr(start, end - start + 1)).value("label", "");
  } catch (const json::exception&) {
  }
  if (vocab::misc_space()->contains(label)) return label;
  if (auto found = parse_label(reply, vocab::misc17())) return *found;
  return cfg_.script.counselor_action.empty()
             ? std::string("Give Information")
             : cfg_.script.counselor_action.apply("", utterance);
}

std::string HttpBackend::classify_talk_type(std::string_view utterance, std::string_view context,
                                            const LabelSpace& states) {
  std::string labels;
  for (const auto& l : states.labels()) labels += (labels.empty() ? "" : ", ") + l;
  const std::string reply = chat(
      "talk_type_classifier",
      {{"context", std::string(context)}, {"utterance", std::string(utterance)}, {"labels", labels}});
  if (auto found = parse_label(reply, states.labels())) return *found;
  const RuleTable& table = states.contains(vocab::kPrecontemplation) ? cfg_.script.talk_type_ttm
                                                                     : cfg_.script.talk_type_annomi;
  if (!table.empty()) {
    std::string label = table.apply("", utterance);
    if (states.contains(label)) return label;
  }
  return states.label(0);
}

std::vector<double> HttpBackend::embed(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  json body{{"input", std::string(text)}};
  if (cfg_.model_name) body["model"] = *cfg_.model_name;
  const json res = post("/embeddings", body);
  std::vector<double> v;
  try {
    v = res.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("unexpected embeddings response: ") + e.what());
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (!(norm > 0.0)) throw Error(ErrorCode::BackendUnavailable, "zero embedding vector");
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::string HttpBackend::summarize(const std::vector<std::string>& texts) {
  std::string joined;
  for (const auto& t : texts) joined += "- " + t + "\n";
  return require_non_empty(chat("summarize", {{"texts", joined}}), "summarize");
}

std::unique_ptr<TextBackend> make_backend(const BackendConfig& cfg) {
  if (cfg.kind == BackendKind::Http) return std::make_unique<HttpBackend>(cfg);
  return std::make_unique<ScriptedBackend>(cfg);
}

// ---------------------------------------------------------------------------

std::string format_distribution(const Categorical& d) {
  std::ostringstream ss;
  ss.precision(3);
  ss << std::fixed;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i) ss << ", ";
    ss << d.space()->label(i) << ": " << d[i];
  }
  return ss.str();
}

std::string generate_response(TextBackend& backend, const std::string& action,
                              const Categorical& belief, const std::vector<std::string>& memories,
                              const std::string& user_utterance, const std::string& template_id,
                              const Vars& extra) {
  std::string memory_text;
  for (const auto& m : memories) memory_text += (memory_text.empty() ? "" : "\n") + m;
  GenerationRequest req;
  req.template_id = template_id;
  req.vars = extra;
  req.vars["action"] = action;
  req.vars["belief"] = format_distribution(belief);
  req.vars["belief_argmax"] = belief.argmax_label();
  req.vars["memories"] = memory_text;
  req.vars["memory"] = memories.empty() ? std::string() : memories.front();
  req.vars["user_utterance"] = user_utterance;
  req.rule_key = action;
  req.rule_text = user_utterance;
  return backend.generate(req);
}

std::string classify_counselor_action(TextBackend& backend, std::string_view utterance,
                                      std::string_view context) {
  if (trim(utterance).empty()) throw Error(ErrorCode::EmptyText, "empty counselor utterance");
  std::string label = backend.classify_counselor_action(utterance, context);
  if (!vocab::misc_space()->contains(label))
    throw Error(ErrorCode::InvalidConfig, "classifier produced non-MISC label '" + label + "'");
  return label;
}

std::string classify_talk_type(TextBackend& backend, std::string_view utterance,
                               const LabelSpace& states, std::string_view context) {
  if (trim(utterance).empty()) throw Error(ErrorCode::EmptyText, "empty client utterance");
  return backend.classify_talk_type(utterance, context, states);
}

}  // namespace puma
