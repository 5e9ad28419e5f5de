#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sleicl/corpus.hpp"
#include "sleicl/grimoire.hpp"
#include "sleicl/llm_gateway.hpp"
#include "sleicl/ranker.hpp"
#include "sleicl/selector.hpp"

// Pipeline configuration: one JSON file (committed), secrets via environment
// variables only. Relative paths resolve against the config file's directory.

namespace sleicl {

struct DatasetConfig {
  std::filesystem::path path;
  FieldMap field_map{"text", "label", "id", "", ""};
  std::optional<std::filesystem::path> presplit_eval_path;
};

struct TaskConfig {
  TaskSpec spec;
  DatasetConfig dataset;
  size_t max_tokens = 512;  // length-exclusion threshold, whitespace tokens
  std::optional<MockRule> mock_rule;
};

struct EmbeddingConfig {
  std::string provider = "trigram-test";  // trigram-test | remote
  std::string url;
  std::string api_key_env;
  size_t max_input_bytes = 8192;
};

struct RunSettings {
  std::string weak_model;
  std::string strong_model;
  std::vector<std::string> modes{"zero_shot", "few_shot", "single_grimoire",
                                 "sleicl_similarity", "sleicl_classifier"};
  int min_valid = 500;
  int few_shot_n = 4;
  int worker_width = 4;
};

struct RankerConfig {
  NetConfig net;
  TrainHyper hyper;
};

struct PipelineConfig {
  int64_t global_seed = 0;
  std::filesystem::path base_dir;  // config file directory
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path runs_dir = "runs";
  std::filesystem::path grimoires_dir = "grimoires";
  std::filesystem::path processed_dir = "processed";
  std::filesystem::path selections_dir = "selections";
  std::filesystem::path models_dir = "models";

  EmbeddingConfig embedding;
  std::vector<ModelSpec> models;
  std::vector<TaskConfig> tasks;
  SelectionParams selection;
  std::vector<double> hss_ratios{1.0};
  GrimoireCaps grimoire_caps;
  RunSettings run;
  RankerConfig ranker;

  std::string config_hash;  // SHA-256 of the canonical parsed form

  const ModelSpec& model_by_id(const std::string& id) const;
  const TaskConfig& task_by_name(const std::string& name) const;
  const ModelSpec& strong_model() const;
  const ModelSpec& weak_model() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Parses and validates; every validation problem is reported in one
/// ConfigError message, not just the first.
PipelineConfig load_config(const std::filesystem::path& path);

/// Forces every model endpoint to "mock" and the embedding provider to the
/// offline trigram hasher (the --mock flag).
void force_mock(PipelineConfig& config);

}  // namespace sleicl
