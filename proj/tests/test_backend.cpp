#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "puma/backend.hpp"
#include "puma/vocab.hpp"
#include "support.hpp"

using namespace puma;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

std::set<std::size_t> buckets(const std::string& text) {
  std::set<std::size_t> out;
  for (const auto& t : tokenize(text)) out.insert(token_bucket(t, 42, 256));
  return out;
}

}  // namespace

TEST_SUITE("backend") {

TEST_CASE("templates") {
  CHECK(render_template("Hi {name}, {x}!", {{"name", "Ann"}, {"x", "1"}}) == "Hi Ann, 1!");
  CHECK(render_template("json {\"a\": 1} and { spaced }", {}) == "json {\"a\": 1} and { spaced }");
  CHECK(code_of([] { render_template("{missing}", {}); }) == ErrorCode::PlaceholderUnresolved);

  const auto t = load_templates(testing_support::data().templates());
  for (const char* id : {"counselor_response", "client_action", "client_response", "misc_classifier",
                         "talk_type_classifier", "summarize"})
    CHECK(t.count(id) == 1);
}

TEST_CASE("rule tables") {
  Rule q;
  q.question = true;
  q.output = "Q";
  Rule any;
  any.output = "other";
  const RuleTable table({q, any});
  CHECK(table.apply("", "really?") == "Q");
  CHECK(table.apply("", "really.") == "other");
  CHECK(code_of([&] { RuleTable({q}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { RuleTable(std::vector<Rule>{}); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("shipped script tables are total") {
  const auto script = Script::load(testing_support::data().script());
  for (const RuleTable* t : {&script.responses, &script.counselor_action, &script.talk_type_ttm,
                             &script.talk_type_annomi, &script.choice})
    CHECK(t->rules().back().catch_all());
}

TEST_CASE("counselor action classification") {
  auto b = testing_support::scripted();
  CHECK(classify_counselor_action(*b, "What would make you feel more ready?") == "Open Question");
  CHECK(classify_counselor_action(*b, "Mm-hmm.") == "Facilitate");
  CHECK(classify_counselor_action(*b, "Do you drink every day?") == "Closed Question");
  CHECK(classify_counselor_action(*b, "Alcohol raises blood pressure.") == "Give Information");
  CHECK(code_of([&] { classify_counselor_action(*b, ""); }) == ErrorCode::EmptyText);
  const std::set<std::string> vocab(vocab::misc17().begin(), vocab::misc17().end());
  for (const char* u : {"Hmm", "You did well.", "Would it be ok if I shared an idea?", "Stop that now!",
                        "It sounds like you're torn.", "???", "x"})
    CHECK(vocab.count(classify_counselor_action(*b, u)) == 1);
}

TEST_CASE("talk type classification") {
  auto b = testing_support::scripted();
  const auto& ttm = *vocab::ttm_space();
  CHECK(classify_talk_type(*b, "I could cut down to two a day.", ttm) == "preparation");
  CHECK(classify_talk_type(*b, "I guess it does affect my daughter.", ttm) == "contemplation");
  CHECK(classify_talk_type(*b, "There's nothing wrong with how I live.", ttm) == "precontemplation");
  CHECK(code_of([&] { classify_talk_type(*b, "", ttm); }) == ErrorCode::EmptyText);
  const auto& annomi = *vocab::talk_type_space();
  for (const char* u : {"I want to change.", "Whatever.", "I like how things are."})
    CHECK(annomi.contains(classify_talk_type(*b, u, annomi)));
}

TEST_CASE("generation") {
  auto cfg = testing_support::scripted_config();
  cfg.script.playback = {"Tell me more about that."};
  ScriptedBackend b(cfg);
  const auto belief = Categorical::uniform(vocab::ttm_space());
  CHECK(generate_response(b, "Open Question", belief, {}, "I drink.") == "Tell me more about that.");
  CHECK(b.playback_remaining() == 0);
  const auto text = generate_response(b, "Open Question", belief, {}, "I drink.");
  CHECK_FALSE(text.empty());
  CHECK(b.last_prompt().find("Open Question") != std::string::npos);
  CHECK(code_of([&] { generate_response(b, "Open Question", belief, {}, "x", "no_such_template"); }) ==
        ErrorCode::TemplateMissing);
}

TEST_CASE("embeddings") {
  auto b = testing_support::scripted();
  const auto e1 = b->embed("I drink most evenings");
  CHECK(e1 == b->embed("I drink most evenings"));
  CHECK(e1.size() == 256);
  for (const char* t : {"a", "The quick brown fox", "...", "x y z x y z"}) {
    double n = 0;
    for (double x : b->embed(t)) n += x * x;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  }
  CHECK(code_of([&] { b->embed(""); }) == ErrorCode::EmptyText);
  CHECK(tokenize("Hello, World!  it's") == std::vector<std::string>{"hello", "world", "its"});

  // Disjoint tokens hashed to disjoint buckets.
  const std::string u = "apples bananas", v = "rivers mountains";
  const auto bu = buckets(u), bv = buckets(v);
  for (auto x : bu) REQUIRE(bv.count(x) == 0);
  CHECK(cosine(b->embed(u), b->embed(v)) == 0.0);
  CHECK(std::abs(cosine(b->embed(u), b->embed(u)) - 1.0) < 1e-12);
}

TEST_CASE("label parsing") {
  const auto& v = vocab::client_actions();
  CHECK(parse_label("I choose: Deny.", v) == std::optional<std::string>("Deny"));
  CHECK(parse_label("plan then deny", v) == std::optional<std::string>("Plan"));
  CHECK_FALSE(parse_label("gibberish", v));
}

TEST_CASE("config validation") {
  BackendConfig c;
  c.kind = BackendKind::Http;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c.endpoint = "https://example.invalid";
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c.endpoint = "http://127.0.0.1:1";
  c.max_output_tokens = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("http backend against a local server") {
  httplib::Server srv;
  std::atomic<int> chat_calls{0};
  std::string last_body;
  srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++chat_calls;
    last_body = req.body;
    res.set_content(R"({"choices":[{"message":{"content":"{\"label\": \"Affirm\"}"}}]})", "application/json");
  });
  srv.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"embedding":[3.0, 4.0]}]})", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  auto cfg = testing_support::scripted_config();
  cfg.kind = BackendKind::Http;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.model_name = "test-model";
  HttpBackend b(cfg);
  CHECK(b.classify_counselor_action("Well done.", "") == "Affirm");
  const auto body = nlohmann::json::parse(last_body);
  CHECK(body["temperature"] == 0);
  CHECK(body["model"] == "test-model");
  CHECK(body["max_tokens"] == 1024);
  const auto e = b.embed("hello");
  CHECK(std::abs(e[0] - 0.6) < 1e-12);
  CHECK(std::abs(e[1] - 0.8) < 1e-12);
  CHECK(chat_calls == 1);

  srv.stop();
  th.join();
}

TEST_CASE("http backend failure surfaces as a typed error") {
  auto cfg = testing_support::scripted_config();
  cfg.kind = BackendKind::Http;
  cfg.endpoint = "http://127.0.0.1:9";
  cfg.retries = 1;
  cfg.timeout_s = 0.5;
  HttpBackend b(cfg);
  CHECK(code_of([&] {
          b.generate({"counselor_response", {{"action", "x"}, {"belief", ""}, {"belief_argmax", ""},
                                             {"memories", ""}, {"user_utterance", ""}}, "", ""});
        }) == ErrorCode::BackendUnavailable);
  CHECK(code_of([&] { b.embed("x"); }) == ErrorCode::BackendUnavailable);
}

}  // TEST_SUITE
