#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sleicl/corpus.hpp"
#include "sleicl/embedder.hpp"

// Representative-sample selection: k-means center sampling (KCS),
// hierarchical-cluster medoids (HCS), hard samples at a fixed ratio (HSS)
// and uniform random draw (RSS), each run per label group.

namespace sleicl {

enum class SelectionMethod { KCS, HCS, HSS, RSS, ZeroShot };

SelectionMethod selection_method_from_string(const std::string& s);
std::string to_string(SelectionMethod m);

struct SelectionParams {
  int c = 4;       // clusters per label (KCS/HCS)
  int n = 1;       // samples per cluster center (KCS)
  int k = 4;       // samples per label (HSS/RSS)
  double r = 1.0;  // hard-sample ratio in [0,1] (HSS)
  int64_t seed = 0;
  int kmeans_restarts = 1;
  int kmeans_max_iters = 100;
};

struct SampleSelection {
  std::string task;
  SelectionMethod method = SelectionMethod::ZeroShot;
  SelectionParams params;
  std::vector<std::string> sample_ids;  // empty iff ZeroShot
  size_t shortfall = 0;   // requested minus delivered, across labels
  size_t pool_deficit = 0;  // HSS draws filled from the complementary pool

  std::string to_json() const;
  static SampleSelection from_json(const std::string& text);
};

struct HardnessAnnotation {
  std::string sample_id;
  std::string predicted_label;  // empty when the prediction was invalid
  bool is_hard = false;         // mispredicted or invalid
};

// --- clustering -----------------------------------------------------------

using Point = std::vector<double>;

struct KMeansResult {
  std::vector<Point> centers;
  std::vector<int> assignments;  // per point, nearest center
  double sse = 0.0;
  int iterations = 0;
};

/// Lloyd iterations from a k-means++ seeded start. Assignments break ties
/// toward the smaller center index; iteration stops when assignments are
/// stable or max_iters is hit. SSE is checked to be non-increasing every
/// iteration. Deterministic given the seed.
KMeansResult lloyd_kmeans(const std::vector<Point>& points, int c, uint64_t seed,
                          int max_iters = 100);

/// Best of `restarts` seeded runs by SSE (seeds derived from `seed`).
KMeansResult lloyd_kmeans_best_of(const std::vector<Point>& points, int c,
                                  uint64_t seed, int restarts,
                                  int max_iters = 100);

/// Bottom-up average-linkage (UPGMA) merging over Euclidean distance until
/// c clusters remain. Tied merges pick the smallest cluster-index pair.
/// Returned labels are 0..c-1 ordered by each cluster's smallest member.
std::vector<int> agglomerative_clusters(const std::vector<Point>& points, int c);

/// Member of `members` minimizing summed Euclidean distance to the others;
/// ties go to the smaller index.
size_t medoid_index(const std::vector<Point>& points,
                    const std::vector<size_t>& members);

// --- per-label selectors ---------------------------------------------------

struct LabelGroup {
  std::vector<std::string> ids;
  std::vector<Point> points;  // embedding values, parallel to ids
};

struct GroupSelection {
  std::vector<std::string> ids;
  size_t shortfall = 0;
  size_t pool_deficit = 0;
};

/// k-means with c clusters; the n members nearest each center.
GroupSelection select_kcs(const LabelGroup& group, int c, int n, uint64_t seed,
                          int restarts = 1, int max_iters = 100);

/// Average-linkage clustering into c clusters; one medoid per cluster.
GroupSelection select_hcs(const LabelGroup& group, int c);

/// round(r*k) ids from the hard pool and the rest from the easy pool,
/// seeded-uniform without replacement; a short pool borrows from the other.
GroupSelection select_hss(const LabelGroup& group,
                          const std::vector<HardnessAnnotation>& annotations,
                          int k, double r, uint64_t seed);

/// k seeded-uniform ids without replacement (all of them when |group| < k).
GroupSelection select_rss(const LabelGroup& group, int k, uint64_t seed);

/// Half-up rounding used for the hard-sample count.
int hard_count(double r, int k);

// --- orchestration ----------------------------------------------------------

/// Runs the per-label selector over every label of the train partition, in
/// task label order. `embeddings` must cover the train ids. HSS requires
/// annotations.
SampleSelection make_selection(
    const TaskSpec& task, const SampleSet& set,
    const std::map<std::string, Embedding>& embeddings, SelectionMethod method,
    const SelectionParams& params,
    const std::vector<HardnessAnnotation>* annotations = nullptr);

}  // namespace sleicl
