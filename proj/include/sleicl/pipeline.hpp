#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "sleicl/config.hpp"
#include "sleicl/evalharness.hpp"

// Subcommand orchestration behind the CLI: preprocess, annotate, select,
// generate, train-ranker, evaluate, report. Every step is idempotent
// against warm caches and run artifacts.

namespace sleicl {

inline constexpr const char* kCodeVersion = "0.1.0";

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::string run_id, bool dry_run);

  void preprocess();
  void annotate();
  void select();
  void generate();
  void train_ranker();
  void evaluate();
  void report();

  /// Loads the processed partitions; DependencyError when preprocess has
  /// not run for the task.
  SampleSet load_processed(const TaskConfig& task) const;

  std::filesystem::path run_dir() const;
  std::filesystem::path model_artifact_path() const;

  EmbeddingProvider& provider();
  Gateway& gateway();
  GrimoireStore& store();
  const PipelineConfig& config() const { return config_; }

 private:
  std::map<std::string, Embedding> train_embeddings(const SampleSet& set);
  std::vector<HardnessAnnotation> cached_annotations(const TaskConfig& task,
                                                     const SampleSet& set) const;
  void check_manifest();

  PipelineConfig config_;
  std::string run_id_;
  bool dry_run_ = false;
  std::shared_ptr<CachingProvider> provider_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<GrimoireStore> store_;
};

/// Exclusive ownership of a run directory for the process lifetime.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path lock_path_;
  bool held_ = false;
};

}  // namespace sleicl
