#include "sleicl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"

namespace sleicl {

using nlohmann::json;

TaskType task_type_from_string(const std::string& s) {
  if (s == "sentiment") return TaskType::sentiment;
  if (s == "topic") return TaskType::topic;
  if (s == "nli") return TaskType::nli;
  if (s == "hate_speech") return TaskType::hate_speech;
  if (s == "other") return TaskType::other;
  throw ConfigError("unknown task_type: " + s);
}

std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::sentiment: return "sentiment";
    case TaskType::topic: return "topic";
    case TaskType::nli: return "nli";
    case TaskType::hate_speech: return "hate_speech";
    case TaskType::other: return "other";
  }
  return "other";
}

bool TaskSpec::has_label(const std::string& label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

void TaskSpec::validate() const {
  if (name.empty()) throw ConfigError("task name must be non-empty");
  if (labels.empty()) throw ConfigError("task " + name + ": labels must be non-empty");
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size())
    throw ConfigError("task " + name + ": labels must be distinct");
  if (few_shot_n < 1) throw ConfigError("task " + name + ": few_shot_n must be >= 1");
  if (k_per_label < 1) throw ConfigError("task " + name + ": k_per_label must be >= 1");
}

Sample make_sample(std::string id, std::string text, std::string label) {
  Sample s;
  s.id = std::move(id);
  s.text = std::move(text);
  s.label = std::move(label);
  s.token_estimate = whitespace_token_count(s.text);
  return s;
}

namespace {

std::string nli_join(const std::string& premise, const std::string& hypothesis) {
  return "premise: " + premise + "\nhypothesis: " + hypothesis;
}

// Minimal delimited parser: quoted fields, doubled quotes, no embedded
// newlines.
std::vector<std::string> split_delimited(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

bool is_jsonl_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return ext == ".jsonl" || ext == ".ndjson" || ext == ".json";
}

struct RowAccessor {
  // JSONL row or header-indexed delimited row.
  const json* obj = nullptr;
  const std::vector<std::string>* fields = nullptr;
  const std::map<std::string, size_t>* header = nullptr;

  std::optional<std::string> get(const std::string& key) const {
    if (key.empty()) return std::nullopt;
    if (obj != nullptr) {
      auto it = obj->find(key);
      if (it == obj->end()) return std::nullopt;
      if (it->is_string()) return it->get<std::string>();
      return it->dump();
    }
    auto it = header->find(key);
    if (it == header->end() || it->second >= fields->size()) return std::nullopt;
    return (*fields)[it->second];
  }
};

void append_row(const RowAccessor& row, const TaskSpec& task, const FieldMap& fm,
                size_t row_index, const std::string& stem, LoadResult& out) {
  std::string text;
  if (!fm.premise.empty() && !fm.hypothesis.empty()) {
    auto p = row.get(fm.premise);
    auto h = row.get(fm.hypothesis);
    if (!p || !h) throw ConfigError("row " + std::to_string(row_index) +
                                    ": missing premise/hypothesis column");
    text = nli_join(*p, *h);
  } else {
    auto t = row.get(fm.text);
    if (!t) throw ConfigError("row " + std::to_string(row_index) +
                              ": missing text column '" + fm.text + "'");
    text = *t;
  }
  auto label = row.get(fm.label);
  if (!label) throw ConfigError("row " + std::to_string(row_index) +
                                ": missing label column '" + fm.label + "'");
  if (!task.has_label(*label)) {
    ++out.skipped_unknown_label;
    ++out.unknown_label_tally[*label];
    return;
  }
  std::string id;
  if (auto explicit_id = row.get(fm.id)) {
    id = *explicit_id;
  } else {
    id = stem + "-" + std::to_string(row_index);
  }
  out.samples.push_back(make_sample(std::move(id), std::move(text), *label));
}

}  // namespace

LoadResult load_samples(const std::filesystem::path& path, const TaskSpec& task,
                        const FieldMap& field_map) {
  if (!std::filesystem::exists(path))
    throw ConfigError("dataset file does not exist: " + path.string());
  LoadResult out;
  const std::string stem = path.stem().string();
  size_t row_index = 0;

  if (is_jsonl_path(path)) {
    for_each_line(path, [&](std::string_view line) {
      json obj = json::parse(line);
      RowAccessor row;
      row.obj = &obj;
      append_row(row, task, field_map, row_index++, stem, out);
    });
    return out;
  }

  const char delim = path.extension() == ".csv" ? ',' : '\t';
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read dataset file: " + path.string());
  std::string line;
  std::map<std::string, size_t> header;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_delimited(line, delim);
    if (!have_header) {
      for (size_t i = 0; i < fields.size(); ++i) header[fields[i]] = i;
      have_header = true;
      continue;
    }
    RowAccessor row;
    row.fields = &fields;
    row.header = &header;
    append_row(row, task, field_map, row_index++, stem, out);
  }
  return out;
}

std::vector<Sample> filter_overlong(const std::vector<Sample>& samples,
                                    size_t max_tokens) {
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.token_estimate <= max_tokens) out.push_back(s);
  }
  return out;
}

size_t eval_count_for(size_t n) {
  if (n >= 3000) return 1000;
  // Largest eval size with train strictly more than twice eval.
  return (n + 2) / 3 - 1;
}

SampleSet split_train_eval(const std::vector<Sample>& samples,
                           const std::string& task_name, int64_t seed) {
  if (samples.size() < 3)
    throw std::invalid_argument("split_train_eval needs at least 3 samples");
  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(static_cast<uint64_t>(seed));
  detrand::shuffle(rng, order);

  const size_t eval_n = eval_count_for(samples.size());
  const size_t train_n = samples.size() >= 3000 ? 2000 : samples.size() - eval_n;

  SampleSet set;
  set.task = task_name;
  set.split_seed = seed;
  set.train.reserve(train_n);
  set.eval.reserve(eval_n);
  for (size_t i = 0; i < train_n; ++i) set.train.push_back(samples[order[i]]);
  for (size_t i = 0; i < eval_n; ++i) set.eval.push_back(samples[order[train_n + i]]);
  return set;
}

std::map<std::string, std::vector<Sample>> stratify_by_label(
    const std::vector<Sample>& samples) {
  std::map<std::string, std::vector<Sample>> groups;
  for (const auto& s : samples) groups[s.label].push_back(s);
  return groups;
}

void write_canonical_jsonl(const std::filesystem::path& path,
                           const std::vector<Sample>& samples) {
  std::ostringstream buf;
  for (const auto& s : samples) {
    json obj;
    obj["id"] = s.id;
    obj["text"] = s.text;
    obj["label"] = s.label;
    buf << obj.dump() << '\n';
  }
  write_file(path, buf.str());
}

std::vector<Sample> read_canonical_jsonl(const std::filesystem::path& path) {
  std::vector<Sample> out;
  for_each_line(path, [&](std::string_view line) {
    json obj = json::parse(line);
    out.push_back(make_sample(obj.at("id").get<std::string>(),
                              obj.at("text").get<std::string>(),
                              obj.at("label").get<std::string>()));
  });
  return out;
}

}  // namespace sleicl
