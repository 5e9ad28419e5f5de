#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"
#include "sleicl/llm_gateway.hpp"

using namespace sleicl;
namespace fs = std::filesystem;

namespace {

constexpr const char* kRuleSentence =
    "If the text contains the token 'zyx', answer flag; otherwise answer clear.";

MockRule demo_rule() { return {"zyx", "flag", "clear", kRuleSentence}; }

TaskSpec demo_task() {
  TaskSpec t;
  t.name = "tone-watch";
  t.task_type = TaskType::hate_speech;
  t.description = "Flag messages that contain the escalation marker.";
  t.labels = {"flag", "clear"};
  return t;
}

ModelSpec mock_weak(double noncompliance = 0.0) {
  ModelSpec m;
  m.id = "mock-weak";
  m.role = ModelRole::weak;
  m.param_count_billions = 7;
  m.endpoint = "mock";
  m.mock_behavior = "rule";
  m.noncompliance_p = noncompliance;
  m.mock_seed = 13;
  return m;
}

Gateway demo_gateway() {
  return Gateway({{demo_task().name, demo_rule()}}, 2);
}

}  // namespace

TEST_SUITE("llm_gateway") {

TEST_CASE("parse_label handles normalization, longest-first and ambiguity") {
  const std::vector<std::string> labels{"hate", "no hate"};
  CHECK(parse_label("Answer: hate", labels) == "hate");
  CHECK(parse_label("no hate.", labels) == "no hate");
  CHECK(parse_label("it is both hate and no hate", labels) == std::nullopt);
  CHECK(parse_label("HATE", labels) == "hate");
  CHECK(parse_label("I think...\n\nNo Hate!", labels) == "no hate");
  CHECK(parse_label("nothing relevant", labels) == std::nullopt);
  CHECK(parse_label("", labels) == std::nullopt);
  // Final line wins over earlier chatter.
  CHECK(parse_label("could be no hate\nhate", labels) == "hate");
  // Total on empty label sets.
  CHECK(parse_label("anything", {}) == std::nullopt);

  // Idempotence: re-parsing the parsed label yields itself.
  const auto first = parse_label("the verdict is: no hate", labels);
  REQUIRE(first.has_value());
  CHECK(parse_label(*first, labels) == first);
}

TEST_CASE("mock echo model returns the user prompt") {
  Gateway gateway({}, 1);
  ModelSpec echo;
  echo.id = "mock-echo";
  echo.endpoint = "mock";
  echo.mock_behavior = "echo";
  const auto result = gateway.chat_complete(echo, "system", "ping");
  CHECK(result.text == "ping");
}

TEST_CASE("context overflow is detected pre-flight with no backend call") {
  Gateway gateway = demo_gateway();
  ModelSpec tiny = mock_weak();
  tiny.max_context_tokens = 5;
  const size_t calls_before = gateway.backend_for(tiny).call_count();
  CHECK_THROWS_AS(gateway.chat_complete(
                      tiny, "a very long system prompt with many tokens",
                      "and an even longer user prompt body here"),
                  ContextOverflowError);
  CHECK(gateway.backend_for(tiny).call_count() == calls_before);
}

TEST_CASE("remote backend retries 429 and records the retry count") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions",
              [&](const httplib::Request&, httplib::Response& res) {
                const int n = ++hits;
                if (n <= 2) {
                  res.status = 429;
                  res.set_content("slow down", "text/plain");
                  return;
                }
                nlohmann::json body{
                    {"choices",
                     {{{"message", {{"role", "assistant"}, {"content", "clear"}}}}}}};
                res.set_content(body.dump(), "application/json");
              });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread serving([&]() { server.listen_after_bind(); });
  server.wait_until_ready();

  ModelSpec remote;
  remote.id = "stub-model";
  remote.endpoint =
      "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  Gateway gateway({}, 1);
  const auto result = gateway.chat_complete(remote, "sys", "user");
  CHECK(result.text == "clear");
  CHECK(result.retry_count == 2);
  CHECK(hits.load() == 3);

  server.stop();
  serving.join();
}

TEST_CASE("rule mock answers correctly iff the preamble carries the rule") {
  Gateway gateway = demo_gateway();
  const TaskSpec task = demo_task();
  const ModelSpec weak = mock_weak();

  const Sample trigger = make_sample("s1", "status zyx escalation", "flag");
  const Sample plain = make_sample("s2", "routine status update", "clear");

  // Rule-bearing preamble: correct on both.
  const std::string preamble = std::string("Skills: ") + kRuleSentence;
  const Prediction p1 = gateway.predict(weak, task, trigger, preamble);
  CHECK(p1.valid);
  CHECK(p1.parsed_label == "flag");
  const Prediction p2 = gateway.predict(weak, task, plain, preamble);
  CHECK(p2.valid);
  CHECK(p2.parsed_label == "clear");

  // No preamble: majority label regardless of the text.
  const Prediction p3 = gateway.predict(weak, task, trigger, "");
  CHECK(p3.valid);
  CHECK(p3.parsed_label == "clear");
}

TEST_CASE("low-compliance mock emits unparseable output") {
  Gateway gateway = demo_gateway();
  const Prediction p = gateway.predict(mock_weak(/*noncompliance=*/1.0),
                                       demo_task(),
                                       make_sample("s", "anything", "clear"), "");
  CHECK_FALSE(p.valid);
  CHECK(p.parsed_label.empty());
}

TEST_CASE("predictions are deterministic and fingerprinted") {
  Gateway gateway = demo_gateway();
  const Sample s = make_sample("s9", "text zyx body", "flag");
  const Prediction a = gateway.predict(mock_weak(), demo_task(), s, "p");
  const Prediction b = gateway.predict(mock_weak(), demo_task(), s, "p");
  CHECK(a.raw_response == b.raw_response);
  CHECK(a.prompt_fingerprint == b.prompt_fingerprint);
  CHECK(a.prompt_fingerprint.size() == 16);
  CHECK(a.latency_ms == 0.0);
}

TEST_CASE("annotate_training_set counts mispredictions as hard and caches") {
  const auto cache_dir = fs::temp_directory_path() / "sleicl_annotations";
  fs::remove_all(cache_dir);
  Gateway gateway = demo_gateway();
  const TaskSpec task = demo_task();
  const ModelSpec weak = mock_weak();

  // Zero-shot mock answers "clear" everywhere: the 8 trigger samples whose
  // gold is "flag" are mispredicted.
  std::vector<Sample> train;
  for (int i = 0; i < 12; ++i)
    train.push_back(make_sample("easy" + std::to_string(i),
                                "calm message " + std::to_string(i), "clear"));
  for (int i = 0; i < 8; ++i)
    train.push_back(make_sample("hard" + std::to_string(i),
                                "alert zyx " + std::to_string(i), "flag"));

  const auto annotations =
      gateway.annotate_training_set(weak, task, train, cache_dir);
  REQUIRE(annotations.size() == 20);
  size_t hard = 0;
  for (const auto& a : annotations) hard += a.is_hard ? 1 : 0;
  CHECK(hard == 8);

  // Warm cache: zero new model calls.
  const size_t calls = gateway.backend_for(weak).call_count();
  const auto again = gateway.annotate_training_set(weak, task, train, cache_dir);
  CHECK(gateway.backend_for(weak).call_count() == calls);
  REQUIRE(again.size() == 20);
  for (size_t i = 0; i < 20; ++i) {
    CHECK(again[i].sample_id == annotations[i].sample_id);
    CHECK(again[i].is_hard == annotations[i].is_hard);
  }

  CHECK(gateway.annotate_training_set(weak, task, {}, cache_dir).empty());
}

TEST_CASE("predict_batch preserves input order") {
  Gateway gateway = demo_gateway();
  std::vector<Sample> samples;
  for (int i = 0; i < 7; ++i)
    samples.push_back(make_sample("b" + std::to_string(i),
                                  i % 2 == 0 ? "zyx ping" : "pong", "clear"));
  const auto preds = gateway.predict_batch(
      mock_weak(), demo_task(), samples,
      [](const Sample&) { return std::string(kRuleSentence); });
  REQUIRE(preds.size() == samples.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].sample_id == samples[i].id);
    CHECK(preds[i].parsed_label == (i % 2 == 0 ? "flag" : "clear"));
  }
}

TEST_CASE("api key env name sanitizes model ids") {
  CHECK(api_key_env_name("gpt3.5-turbo") == "GPT3_5_TURBO_API_KEY");
  CHECK(api_key_env_name("mock") == "MOCK_API_KEY");
}

}  // TEST_SUITE
