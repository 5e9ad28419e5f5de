#pragma once

#include <filesystem>
#include <string>
#include <vector>

// Evaluation log records: one model prediction joined with its gold label
// and run coordinates. Persisted as JSON lines under
// runs/<run-id>/predictions/.

namespace sleicl {

struct EvalRecord {
  std::string run_id;
  std::string mode;        // zero_shot | few_shot | single_grimoire | sleicl_*
  std::string model_id;
  std::string task;
  std::string grimoire_id;  // empty for baseline modes
  std::string sample_id;
  std::string gold;
  std::string raw_response;
  std::string parsed_label;
  bool valid = false;
  bool correct = false;
  double latency_ms = 0.0;
  std::string prompt_fingerprint;
};

void write_eval_records(const std::filesystem::path& path,
                        const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path);

}  // namespace sleicl
