#include "sleicl/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"
#include "sleicl/grimoire.hpp"
#include "sleicl/http.hpp"

namespace sleicl {

using nlohmann::json;

namespace {

constexpr std::string_view kTaskMarker = "Task: ";
constexpr std::string_view kTextMarker = "Text: ";

std::string find_line_value(const std::string& text, std::string_view marker) {
  const auto pos = text.find(marker);
  if (pos == std::string::npos) return {};
  const auto start = pos + marker.size();
  const auto end = text.find('\n', start);
  return trim(text.substr(start, end == std::string::npos ? std::string::npos
                                                          : end - start));
}

std::string find_last_line_value(const std::string& text, std::string_view marker) {
  const auto pos = text.rfind(marker);
  if (pos == std::string::npos) return {};
  const auto start = pos + marker.size();
  const auto end = text.find('\n', start);
  return trim(text.substr(start, end == std::string::npos ? std::string::npos
                                                          : end - start));
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool is_numbered_line(const std::string& line) {
  const std::string t = trim(line);
  return t.size() > 1 && std::isdigit(static_cast<unsigned char>(t[0])) && t[1] == '.';
}

}  // namespace

MockBackend::MockBackend(std::map<std::string, MockRule> rules_by_task)
    : rules_(std::move(rules_by_task)) {}

ChatResult MockBackend::complete(const ModelSpec& model, const std::string& system,
                                 const std::string& user) {
  ++calls_;
  ChatResult out;

  if (model.mock_behavior == "echo") {
    out.text = user;
    return out;
  }

  const std::string task_name = find_line_value(system, kTaskMarker);
  auto rule_it = rules_.find(task_name);

  if (model.mock_behavior == "strong") {
    if (user.find(kSgInstructionMarker) != std::string::npos) {
      // Condense: keep the framing plus the numbered skill lines.
      std::string kept(kGrimoireFraming);
      for (const auto& line : split_lines(user)) {
        if (is_numbered_line(line)) kept += "\n" + trim(line);
      }
      out.text = kept;
      return out;
    }
    if (user.find(kPgInstructionMarker) != std::string::npos) {
      bool discovered = false;
      if (rule_it != rules_.end()) {
        // The strong model "learns" the rule when some example shows the
        // trigger token under the trigger label.
        const auto& rule = rule_it->second;
        const auto lines = split_lines(user);
        for (size_t i = 0; i + 1 < lines.size(); ++i) {
          if (lines[i].rfind(kTextMarker.data(), 0) == 0 &&
              lines[i].find(rule.trigger_token) != std::string::npos &&
              lines[i + 1].find("Label: " + rule.trigger_label) != std::string::npos) {
            discovered = true;
            break;
          }
        }
      }
      std::string text(kGrimoireFraming);
      text += "\n\n1. Read the text carefully and look for decisive keywords.";
      if (discovered) text += "\n2. " + rule_it->second.rule_sentence;
      text += discovered ? "\n3." : "\n2.";
      text += " When no decisive cue is present, prefer the most common label.";
      text += "\n\nApply these steps to every text and answer with exactly one label.";
      out.text = text;
      return out;
    }
    out.text = "Understood.";
    return out;
  }

  // behavior "rule": the offline weak model.
  if (rule_it == rules_.end())
    throw ProviderError("mock model " + model.id + ": no rule for task '" +
                        task_name + "'");
  const MockRule& rule = rule_it->second;

  if (model.noncompliance_p > 0.0) {
    uint64_t state = detrand::derive_seed(model.mock_seed, detrand::fnv1a64(user));
    std::mt19937_64 rng(state);
    if (detrand::uniform01(rng) < model.noncompliance_p) {
      out.text = "[[[ ??? ]]]";  // no label substring: unparseable
      return out;
    }
  }

  const std::string question = find_last_line_value(user, kTextMarker);
  if (user.find(rule.rule_sentence) != std::string::npos) {
    out.text = rule.apply(question);
  } else {
    out.text = rule.default_label;
  }
  return out;
}

std::string api_key_env_name(const std::string& model_id) {
  std::string out;
  for (char c : model_id) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c))
                      ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                      : '_');
  }
  return out + "_API_KEY";
}

ChatResult RemoteChatBackend::complete(const ModelSpec& model,
                                       const std::string& system,
                                       const std::string& user) {
  ++calls_;
  json request{{"model", model.id},
               {"messages",
                json::array({json{{"role", "system"}, {"content", system}},
                             json{{"role", "user"}, {"content", user}}})},
               {"temperature", model.temperature},
               {"max_tokens", model.max_output_tokens}};
  std::string bearer;
  if (const char* key = std::getenv(api_key_env_name(model.id).c_str())) bearer = key;

  const auto start = std::chrono::steady_clock::now();
  const HttpResult result = http_post_json(model.endpoint, request.dump(), bearer);
  const auto elapsed = std::chrono::steady_clock::now() - start;

  json parsed = json::parse(result.body);
  ChatResult out;
  out.text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  out.retry_count = result.retry_count;
  out.latency_ms =
      std::chrono::duration<double, std::milli>(elapsed).count();
  return out;
}

Gateway::Gateway(std::map<std::string, MockRule> mock_rules, int worker_width)
    : mock_(std::make_shared<MockBackend>(std::move(mock_rules))),
      remote_(std::make_shared<RemoteChatBackend>()),
      worker_width_(std::max(1, worker_width)) {}

ChatResult Gateway::chat_complete(const ModelSpec& model, const std::string& system,
                                  const std::string& user) {
  const size_t prompt_tokens =
      whitespace_token_count(system) + whitespace_token_count(user);
  if (prompt_tokens > static_cast<size_t>(model.max_context_tokens))
    throw ContextOverflowError("prompt estimate " + std::to_string(prompt_tokens) +
                               " tokens exceeds context window of model " + model.id);
  if (model.is_mock()) return mock_->complete(model, system, user);
  return remote_->complete(model, system, user);
}

const ChatBackend& Gateway::backend_for(const ModelSpec& model) const {
  if (model.is_mock()) return *mock_;
  return *remote_;
}

PromptParts compose_prompt(const TaskSpec& task, const Sample& sample,
                           const std::string& preamble) {
  PromptParts parts;
  std::ostringstream sys;
  sys << "Task: " << task.name << "\n"
      << task.description << "\n"
      << "Classify the text into exactly one of these labels: ";
  for (size_t i = 0; i < task.labels.size(); ++i) {
    if (i > 0) sys << ", ";
    sys << task.labels[i];
  }
  sys << ".\nRespond with the label only.";
  parts.system = sys.str();

  std::ostringstream usr;
  if (!preamble.empty()) usr << preamble << "\n\n";
  usr << "Text: " << sample.text << "\nAnswer with exactly one label.";
  parts.user = usr.str();
  return parts;
}

std::optional<std::string> parse_label(const std::string& response,
                                       const std::vector<std::string>& labels) {
  if (labels.empty()) return std::nullopt;

  // Longest labels first so e.g. "no hate" is claimed before "hate".
  std::vector<std::string> ordered = labels;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const std::string& a, const std::string& b) {
                     if (a.size() != b.size()) return a.size() > b.size();
                     return a < b;
                   });

  auto strip = [](std::string s) {
    const auto is_junk = [](unsigned char c) {
      return std::isspace(c) || std::ispunct(c);
    };
    size_t b = 0, e = s.size();
    while (b < e && is_junk(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_junk(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  };

  // Matches labels longest-first, masking matched spans so shorter labels
  // cannot re-match inside them. Succeeds on exactly one distinct label.
  auto match_region = [&](const std::string& region) -> std::optional<std::string> {
    const std::string haystack = to_lower(strip(region));
    if (haystack.empty()) return std::nullopt;
    std::vector<bool> masked(haystack.size(), false);
    std::vector<std::string> found;
    for (const auto& label : ordered) {
      const std::string needle = to_lower(label);
      if (needle.empty()) continue;
      bool hit = false;
      size_t pos = 0;
      while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        bool clear = true;
        for (size_t i = pos; i < pos + needle.size(); ++i) {
          if (masked[i]) {
            clear = false;
            break;
          }
        }
        if (clear) {
          hit = true;
          for (size_t i = pos; i < pos + needle.size(); ++i) masked[i] = true;
        }
        pos += needle.size();
      }
      if (hit) found.push_back(label);
    }
    if (found.size() == 1) return found.front();
    return std::nullopt;
  };

  // Final non-empty line first, then the whole response.
  const auto lines = split_lines(response);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (trim(*it).empty()) continue;
    if (auto hit = match_region(*it)) return hit;
    break;
  }
  return match_region(response);
}

Prediction Gateway::predict(const ModelSpec& model, const TaskSpec& task,
                            const Sample& sample, const std::string& preamble) {
  const PromptParts parts = compose_prompt(task, sample, preamble);
  Prediction pred;
  pred.sample_id = sample.id;
  pred.prompt_fingerprint = sha256_hex(parts.system + "\x1f" + parts.user).substr(0, 16);

  try {
    const ChatResult chat = chat_complete(model, parts.system, parts.user);
    pred.raw_response = chat.text;
    pred.latency_ms = chat.latency_ms;
    if (auto label = parse_label(chat.text, task.labels)) {
      pred.parsed_label = *label;
      pred.valid = true;
    }
  } catch (const ContextOverflowError& e) {
    pred.raw_response = std::string("[context-overflow: ") + e.what() + "]";
  } catch (const ProviderError& e) {
    pred.raw_response = std::string("[transport-error: ") + e.what() + "]";
  }
  return pred;
}

std::vector<Prediction> Gateway::predict_batch(
    const ModelSpec& model, const TaskSpec& task, const std::vector<Sample>& samples,
    const std::function<std::string(const Sample&)>& preamble_for) {
  std::vector<Prediction> out(samples.size());
  const int width = model.is_mock() ? 1 : worker_width_;
  if (width <= 1 || samples.size() < 2) {
    for (size_t i = 0; i < samples.size(); ++i)
      out[i] = predict(model, task, samples[i], preamble_for(samples[i]));
    return out;
  }

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= samples.size()) return;
      out[i] = predict(model, task, samples[i], preamble_for(samples[i]));
    }
  };
  std::vector<std::thread> threads;
  const int spawn = std::min<int>(width, static_cast<int>(samples.size()));
  threads.reserve(static_cast<size_t>(spawn));
  for (int t = 0; t < spawn; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return out;
}

std::vector<HardnessAnnotation> Gateway::annotate_training_set(
    const ModelSpec& weak, const TaskSpec& task, const std::vector<Sample>& train,
    const std::filesystem::path& cache_dir) {
  std::filesystem::create_directories(cache_dir);
  const auto cache_file = cache_dir / (weak.id + "__" + task.name + ".jsonl");

  std::map<std::string, HardnessAnnotation> cached;
  if (std::filesystem::exists(cache_file)) {
    for_each_line(cache_file, [&](std::string_view line) {
      json obj = json::parse(line);
      HardnessAnnotation a;
      a.sample_id = obj.at("sample_id").get<std::string>();
      a.predicted_label = obj.value("predicted_label", std::string{});
      a.is_hard = obj.at("is_hard").get<bool>();
      cached[a.sample_id] = std::move(a);
    });
  }

  std::vector<Sample> missing;
  for (const auto& s : train) {
    if (cached.find(s.id) == cached.end()) missing.push_back(s);
  }

  if (!missing.empty()) {
    const auto preds = predict_batch(weak, task, missing,
                                     [](const Sample&) { return std::string{}; });
    std::ofstream out(cache_file, std::ios::binary | std::ios::app);
    for (size_t i = 0; i < missing.size(); ++i) {
      HardnessAnnotation a;
      a.sample_id = missing[i].id;
      a.predicted_label = preds[i].valid ? preds[i].parsed_label : std::string{};
      a.is_hard = !preds[i].valid || preds[i].parsed_label != missing[i].label;
      json obj{{"sample_id", a.sample_id},
               {"predicted_label", a.predicted_label},
               {"is_hard", a.is_hard}};
      out << obj.dump() << '\n';
      cached[a.sample_id] = std::move(a);
    }
  }

  std::vector<HardnessAnnotation> result;
  result.reserve(train.size());
  for (const auto& s : train) result.push_back(cached.at(s.id));
  return result;
}

}  // namespace sleicl
