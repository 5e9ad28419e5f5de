#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

// Dataset ingestion: unified sample format, length filtering, train/eval
// splitting and label stratification.

namespace sleicl {

enum class TaskType { sentiment, topic, nli, hate_speech, other };

TaskType task_type_from_string(const std::string& s);
std::string to_string(TaskType t);

struct TaskSpec {
  std::string name;
  TaskType task_type = TaskType::other;
  std::string description;
  std::vector<std::string> labels;  // non-empty, distinct, ordered
  int few_shot_n = 4;
  int k_per_label = 4;

  bool has_label(const std::string& label) const;
  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct Sample {
  std::string id;
  std::string text;
  std::string label;
  size_t token_estimate = 0;  // whitespace tokens of `text`
};

Sample make_sample(std::string id, std::string text, std::string label);

struct SampleSet {
  std::string task;  // TaskSpec.name
  std::vector<Sample> train;
  std::vector<Sample> eval;
  int64_t split_seed = 0;
};

// Column mapping for raw files. When premise/hypothesis are both set the
// text is assembled as "premise: {p}\nhypothesis: {h}".
struct FieldMap {
  std::string text;
  std::string label;
  std::string id;  // optional; row index fallback
  std::string premise;
  std::string hypothesis;
};

struct LoadResult {
  std::vector<Sample> samples;
  size_t skipped_unknown_label = 0;
  std::map<std::string, size_t> unknown_label_tally;
};

/// Reads a JSON-lines (.jsonl/.ndjson/.json) or delimited (.csv comma,
/// anything else tab) file. Rows whose label is not in `task.labels` are
/// skipped and tallied.
LoadResult load_samples(const std::filesystem::path& path, const TaskSpec& task,
                        const FieldMap& field_map);

/// Keeps samples with token_estimate <= max_tokens, order preserved.
std::vector<Sample> filter_overlong(const std::vector<Sample>& samples,
                                    size_t max_tokens);

/// Seeded shuffle, then 2000 train / 1000 eval when at least 3000 samples
/// are available; otherwise the largest eval split that keeps
/// |train| > 2*|eval|. Requires at least 3 samples.
SampleSet split_train_eval(const std::vector<Sample>& samples,
                           const std::string& task_name, int64_t seed);

/// Eval size used by split_train_eval for a corpus of n samples.
size_t eval_count_for(size_t n);

/// Label -> samples, per-label input order preserved.
std::map<std::string, std::vector<Sample>> stratify_by_label(
    const std::vector<Sample>& samples);

/// Canonical JSON-lines form: one {"id","text","label"} object per line,
/// UTF-8, LF endings.
void write_canonical_jsonl(const std::filesystem::path& path,
                           const std::vector<Sample>& samples);
std::vector<Sample> read_canonical_jsonl(const std::filesystem::path& path);

}  // namespace sleicl
