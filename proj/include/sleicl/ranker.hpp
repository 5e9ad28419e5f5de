#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sleicl/embedder.hpp"
#include "sleicl/grimoire.hpp"
#include "sleicl/neuralnet.hpp"
#include "sleicl/records.hpp"

// Grimoire utility scoring: cosine similarity between query and grimoire, or
// a dual-tower classifier over engineered features trained on evaluation
// logs, with argmax selection over the candidate set.

namespace sleicl {

inline constexpr int kFeatureSchemaVersion = 1;

// Context features: llm parameter bucket (5), task type (5), description
// length bin (6), description embedding (768), question length bin (6),
// question embedding (768). Grimoire features: paradigm (2), length bin (6),
// selection method (5), grimoire embedding (768).
inline constexpr size_t kContextFeatureWidth = 5 + 5 + 6 + 768 + 6 + 768;
inline constexpr size_t kGrimoireFeatureWidth = 2 + 6 + 5 + 768;

struct FeatureVector {
  int schema_version = kFeatureSchemaVersion;
  std::vector<double> context;   // kContextFeatureWidth
  std::vector<double> grimoire;  // kGrimoireFeatureWidth
};

/// Parameter-count buckets: <=3B, (3,13], (13,100], >100, unknown(NaN).
size_t llm_param_bucket(double billions);

/// Whitespace-token length bins: [0,64) [64,128) [128,256) [256,512)
/// [512,1024) [1024,inf).
size_t length_bucket(size_t tokens);

FeatureVector encode_features(const ModelSpec& weak, const TaskSpec& task,
                              const Sample& question, const Grimoire& g,
                              EmbeddingProvider& provider);

/// Eq-style cosine utility between the query text and the grimoire text.
double utility_similarity(const Sample& question, const Grimoire& g,
                          EmbeddingProvider& provider);

// --- dual-tower classifier -----------------------------------------------------

struct NetConfig {
  size_t ctx_dim = kContextFeatureWidth;
  size_t grim_dim = kGrimoireFeatureWidth;
  size_t tower_hidden = 512;
  size_t d_model = 256;
  size_t res_hidden = 256;
  std::vector<size_t> head_hidden{256, 128, 64};  // final layer is -> 1
  double dropout = 0.1;
};

/// Two dense+residual towers, outputs stacked into a 2-row sequence, a
/// single self-attention head, three forward modules (dropout, dropout,
/// normalize), then a four-layer head and sigmoid.
class UtilityModel {
 public:
  UtilityModel() = default;
  UtilityModel(const NetConfig& config, uint64_t seed);

  /// Batched logits: ctx is B x ctx_dim, grim is B x grim_dim.
  std::vector<double> forward_batch(const nn::Tensor& ctx, const nn::Tensor& grim,
                                    nn::Phase phase, std::mt19937_64& rng);
  /// Backward from dL/dlogit per row; accumulates parameter grads.
  void backward_batch(const std::vector<double>& dlogits);

  std::vector<nn::ParamRef> params();
  const NetConfig& config() const { return config_; }

  /// Serialized with the feature schema version it was trained against;
  /// loading with a mismatched schema is a hard error.
  std::string to_json() const;
  static UtilityModel from_json(const std::string& text);

  int schema_version = kFeatureSchemaVersion;
  uint64_t seed = 0;
  int epochs_trained = 0;
  double lr = 0.001;

 private:
  NetConfig config_;
  nn::Dense ctx_fc1_, ctx_fc2_;
  nn::ResidualBlock ctx_res_;
  nn::Dense grim_fc1_, grim_fc2_;
  nn::ResidualBlock grim_res_;
  nn::SelfAttention attn_;
  nn::ForwardModule fm1_, fm2_, fm3_;
  std::vector<nn::Dense> head_;
  size_t last_batch_ = 0;
};

/// Probability that the weak model answers correctly under this grimoire.
double tower_forward(UtilityModel& model, const FeatureVector& f, nn::Phase phase);

// --- training data ---------------------------------------------------------------

struct RowProvenance {
  std::string run_id;
  std::string model_id;
  std::string task;
  std::string sample_id;
  std::string grimoire_id;
};

struct TrainingRow {
  FeatureVector feature;
  int label = 0;  // 1 iff the weak model answered correctly under the grimoire
  RowProvenance provenance;
};

/// Sample/task/model registries needed to (re-)encode rows from provenance.
struct RowContext {
  const ModelSpec* weak = nullptr;
  std::map<std::string, TaskSpec> tasks;                        // by task name
  std::map<std::string, std::map<std::string, Sample>> samples; // task -> id -> sample
};

struct BuildRowsResult {
  std::vector<TrainingRow> rows;
  size_t skipped = 0;  // dangling sample or grimoire references
};

/// One row per grimoire-mode prediction; label 1 iff valid and correct.
/// Rows are shuffled by `seed`. Records without a grimoire id are ignored.
BuildRowsResult build_training_rows(const std::vector<EvalRecord>& records,
                                    const RowContext& context,
                                    const GrimoireStore& store,
                                    EmbeddingProvider& provider, uint64_t seed);

/// JSON-lines persistence: provenance and label only; features are
/// re-encoded on load so schema changes stay cheap.
void save_training_rows(const std::filesystem::path& path,
                        const std::vector<TrainingRow>& rows);
BuildRowsResult load_training_rows(const std::filesystem::path& path,
                                   const RowContext& context,
                                   const GrimoireStore& store,
                                   EmbeddingProvider& provider);

// --- training ----------------------------------------------------------------------

struct TrainHyper {
  size_t batch = 1024;
  double lr = 0.001;
  int epochs = 500;
  uint64_t seed = 0;
  /// Stop once full-set (eval-phase) train accuracy reaches this; 0 disables.
  double early_stop_train_acc = 0.0;
};

struct TrainResult {
  UtilityModel model;
  std::vector<double> loss_curve;  // mean BCE per epoch
  std::vector<double> acc_curve;   // in-epoch train accuracy per epoch
  int epochs_run = 0;
};

/// Mini-batch BCE + Adam. Deterministic given the seed. Requires both
/// labels present; aborts on non-finite loss.
TrainResult train_utility_classifier(const std::vector<TrainingRow>& rows,
                                     const NetConfig& config,
                                     const TrainHyper& hyper);

/// Eval-phase accuracy of the model over rows (threshold 0.5).
double classifier_accuracy(UtilityModel& model, const std::vector<TrainingRow>& rows);

// --- selection ---------------------------------------------------------------------

using UtilityFn = std::function<double(const Sample&, const Grimoire&)>;

/// Argmax of the scorer; exact ties go to the lexicographically smallest
/// grimoire id. Throws on an empty candidate set.
const Grimoire& select_grimoire(const Sample& question,
                                const std::vector<Grimoire>& candidates,
                                const UtilityFn& scorer);

UtilityFn make_similarity_scorer(EmbeddingProvider& provider);
UtilityFn make_classifier_scorer(UtilityModel& model, const ModelSpec& weak,
                                 const TaskSpec& task, EmbeddingProvider& provider);

}  // namespace sleicl
