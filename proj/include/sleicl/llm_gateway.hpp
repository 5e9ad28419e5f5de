#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sleicl/corpus.hpp"
#include "sleicl/selector.hpp"

// Uniform chat interface over remote language models and deterministic mock
// models, plus the machinery that turns free-text completions into validated
// label predictions.

namespace sleicl {

enum class ModelRole { strong, weak };

struct ModelSpec {
  std::string id;
  ModelRole role = ModelRole::weak;
  double param_count_billions = std::numeric_limits<double>::quiet_NaN();  // NaN = unknown
  std::string endpoint;  // URL, or "mock"
  int max_context_tokens = 4096;
  double temperature = 0.0;
  int max_output_tokens = 1024;

  // Mock-only knobs.
  std::string mock_behavior = "rule";  // echo | rule | strong
  double noncompliance_p = 0.0;        // "low-compliance" gibberish probability
  uint64_t mock_seed = 0;

  bool is_mock() const { return endpoint == "mock"; }
};

struct ChatResult {
  std::string text;
  int retry_count = 0;
  double latency_ms = 0.0;
};

struct Prediction {
  std::string sample_id;
  std::string raw_response;
  std::string parsed_label;  // empty when invalid
  bool valid = false;
  double latency_ms = 0.0;
  std::string prompt_fingerprint;  // SHA-256 of system + user prompt
};

/// A task's hidden lexical rule, used by the mock models: the gold label is
/// `trigger_label` iff the text contains `trigger_token`, else
/// `default_label` (the majority class). `rule_sentence` is the one-line
/// description a useful grimoire would carry.
struct MockRule {
  std::string trigger_token;
  std::string trigger_label;
  std::string default_label;
  std::string rule_sentence;

  std::string apply(const std::string& text) const {
    return text.find(trigger_token) != std::string::npos ? trigger_label
                                                         : default_label;
  }
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResult complete(const ModelSpec& model, const std::string& system,
                              const std::string& user) = 0;
  size_t call_count() const { return calls_.load(); }

 protected:
  std::atomic<size_t> calls_{0};
};

/// Deterministic offline models. The prompt layout written by predict() and
/// the grimoire templates is part of the contract:
///   - a "Task: <name>" line in the system prompt selects the MockRule;
///   - the question is the text after the last "Text:" marker in the user
///     prompt, up to the next line break;
///   - behavior "echo" returns the user prompt verbatim;
///   - behavior "rule" answers MockRule::apply(question) when the user
///     prompt contains the task's rule_sentence, else default_label; with
///     noncompliance_p > 0 it instead emits unparseable output on a seeded
///     per-prompt draw;
///   - behavior "strong" answers grimoire-generation prompts: it emits the
///     standard framing plus numbered skill lines, includes the
///     rule_sentence iff some example line shows the trigger token labeled
///     trigger_label, and condenses an existing grimoire down to its
///     framing and numbered lines when asked to simplify.
class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(std::map<std::string, MockRule> rules_by_task);
  ChatResult complete(const ModelSpec& model, const std::string& system,
                      const std::string& user) override;

 private:
  std::map<std::string, MockRule> rules_;
};

/// OpenAI-style chat-completions endpoint. Request: {"model", "messages",
/// "temperature", "max_tokens"}; response: choices[0].message.content.
/// Retries per http_post_json. The bearer token comes from the environment
/// variable named `<MODEL_ID>_API_KEY` (uppercased, non-alphanumerics as _).
class RemoteChatBackend : public ChatBackend {
 public:
  ChatResult complete(const ModelSpec& model, const std::string& system,
                      const std::string& user) override;
};

std::string api_key_env_name(const std::string& model_id);

class Gateway {
 public:
  /// Mock rules are keyed by task name. `worker_width` bounds the request
  /// parallelism of predict_batch for remote models.
  Gateway(std::map<std::string, MockRule> mock_rules, int worker_width = 4);

  /// Pre-flight checks the context budget (whitespace-token estimate), then
  /// routes to the model's backend.
  ChatResult chat_complete(const ModelSpec& model, const std::string& system,
                           const std::string& user);

  /// Composes instruction + preamble + question, calls the model, parses the
  /// label. Provider failures become invalid predictions with an error
  /// marker; context overflow likewise (no network call).
  Prediction predict(const ModelSpec& model, const TaskSpec& task,
                     const Sample& sample, const std::string& preamble);

  /// predict() over samples, preamble chosen per sample. Output order matches
  /// input; remote models fan out over the worker pool.
  std::vector<Prediction> predict_batch(
      const ModelSpec& model, const TaskSpec& task,
      const std::vector<Sample>& samples,
      const std::function<std::string(const Sample&)>& preamble_for);

  /// Zero-shot over the train split; one annotation per sample, disk-cached
  /// by (model id, task, sample id) under cache_dir. Invalid predictions are
  /// hard.
  std::vector<HardnessAnnotation> annotate_training_set(
      const ModelSpec& weak, const TaskSpec& task, const std::vector<Sample>& train,
      const std::filesystem::path& cache_dir);

  const ChatBackend& backend_for(const ModelSpec& model) const;
  MockBackend& mock_backend() { return *mock_; }

 private:
  std::shared_ptr<MockBackend> mock_;
  std::shared_ptr<RemoteChatBackend> remote_;
  int worker_width_;
};

/// Case-insensitive, punctuation-trimmed label extraction: longest labels
/// are matched first (masking what they cover), on the final line and then
/// anywhere; exactly one distinct label must match. Total: returns
/// std::nullopt instead of raising.
std::optional<std::string> parse_label(const std::string& response,
                                       const std::vector<std::string>& labels);

/// System/user prompt pair used for every classification call.
struct PromptParts {
  std::string system;
  std::string user;
};
PromptParts compose_prompt(const TaskSpec& task, const Sample& sample,
                           const std::string& preamble);

}  // namespace sleicl
