#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sleicl/grimoire.hpp"
#include "sleicl/llm_gateway.hpp"
#include "sleicl/ranker.hpp"
#include "sleicl/records.hpp"

// The comparison grid: zero-shot, few-shot, every single grimoire, and
// SLEICL with either scorer, reported with the validity/NaN rule.

namespace sleicl {

inline constexpr int kDefaultMinValid = 500;

struct RunConfig {
  std::string run_id;
  std::string weak_model_id;
  std::vector<std::string> task_names;
  std::vector<std::string> modes;  // subset of the five mode names
  int few_shot_n = 4;
  int min_valid = kDefaultMinValid;
  int64_t seed = 0;
};

// --- run modes -------------------------------------------------------------

std::vector<EvalRecord> run_zero_shot(Gateway& gateway, const ModelSpec& weak,
                                      const TaskSpec& task,
                                      const std::vector<Sample>& eval_set,
                                      const std::string& run_id);

/// Exemplars are redrawn per prediction from a seed derived from the run
/// seed and the sample id, so one unlucky draw cannot dominate the baseline.
std::vector<EvalRecord> run_few_shot(Gateway& gateway, const ModelSpec& weak,
                                     const TaskSpec& task,
                                     const std::vector<Sample>& eval_set,
                                     const std::vector<Sample>& train, int n,
                                     uint64_t seed, const std::string& run_id);

std::vector<EvalRecord> run_single_grimoire(Gateway& gateway, const ModelSpec& weak,
                                            const TaskSpec& task,
                                            const std::vector<Sample>& eval_set,
                                            const Grimoire& g,
                                            const std::string& run_id);

/// Per sample: pick the argmax grimoire, then predict as in single-grimoire
/// mode; the chosen id is logged on each record.
std::vector<EvalRecord> run_sleicl(Gateway& gateway, const ModelSpec& weak,
                                   const TaskSpec& task,
                                   const std::vector<Sample>& eval_set,
                                   const std::vector<Grimoire>& candidates,
                                   const UtilityFn& scorer,
                                   const std::string& mode_name,
                                   const std::string& run_id);

/// Preamble used for grimoire prompting: the framing line plus the grimoire
/// text (not doubled when the text already starts with it).
std::string grimoire_preamble(const Grimoire& g);

/// Few-shot exemplar block for one prediction.
std::string few_shot_preamble(const std::vector<Sample>& train, int n,
                              uint64_t sample_seed);

// --- accuracy and buckets -----------------------------------------------------

struct Accuracy {
  double value = std::numeric_limits<double>::quiet_NaN();  // fraction in [0,1]
  int valid = 0;
  int total = 0;
  int correct = 0;

  bool is_nan() const { return std::isnan(value); }
};

/// correct/valid when valid >= min_valid, else NaN.
Accuracy accuracy_with_validity(const std::vector<EvalRecord>& records,
                                int min_valid);

enum class DiffBucket {
  pos_lt_5,     // [0, 5)
  pos_5_10,     // [5, 10)
  pos_10_20,    // [10, 20)
  pos_20_30,    // [20, 30)
  pos_gt_30,    // [30, inf)
  neg_gt_m5,    // (-5, 0)
  neg_m5_m10,   // (-10, -5]
  neg_lt_m10,   // (-inf, -10]
  not_available
};

/// Buckets a percentage-point delta; NaN maps to not_available.
DiffBucket diff_bucket(double delta_pp);
std::string to_string(DiffBucket b);

// --- report ---------------------------------------------------------------------

struct ReportCell {
  Accuracy accuracy;
  bool best = false;
  bool second = false;
};

struct ReportRow {
  std::string label;  // "Zero-Shot", "KCS-PG (k=4)", "SLEICL (classifier)", ...
  std::string mode;
  std::string grimoire_id;
  std::map<std::string, ReportCell> cells;  // by task
  double avg = std::numeric_limits<double>::quiet_NaN();
  int avg_skipped = 0;  // NaN cells left out of the average
  bool avg_best = false;
  bool avg_second = false;
};

struct DiffCell {
  double delta_pp = std::numeric_limits<double>::quiet_NaN();
  DiffBucket bucket = DiffBucket::not_available;
};

struct DiffRow {
  std::string target;  // "Max(Single Grimoire)", "SLEICL (classifier)", ...
  std::string base;    // "Zero-Shot" or "Few-Shot"
  std::map<std::string, DiffCell> cells;
  DiffCell avg;
};

struct RunReport {
  std::string run_id;
  std::string weak_model;
  int min_valid = kDefaultMinValid;
  std::vector<std::string> tasks;
  std::vector<ReportRow> rows;
  std::vector<DiffRow> diffs;

  std::string to_json() const;
  std::string to_text() const;
  std::string to_csv() const;
};

/// Builds a report from grouped records: key = (mode, grimoire id), with a
/// display label per group. Best/second markers are computed per column
/// ignoring NaN.
struct RecordGroup {
  std::string label;
  std::string mode;
  std::string grimoire_id;
  std::map<std::string, std::vector<EvalRecord>> by_task;
};

RunReport build_report(const std::string& run_id, const std::string& weak_model,
                       const std::vector<std::string>& tasks,
                       const std::vector<RecordGroup>& groups, int min_valid);

}  // namespace sleicl
