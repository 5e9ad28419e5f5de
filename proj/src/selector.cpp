#include "sleicl/selector.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"
#include "sleicl/kernels.hpp"

namespace sleicl {

using nlohmann::json;

SelectionMethod selection_method_from_string(const std::string& s) {
  if (s == "KCS") return SelectionMethod::KCS;
  if (s == "HCS") return SelectionMethod::HCS;
  if (s == "HSS") return SelectionMethod::HSS;
  if (s == "RSS") return SelectionMethod::RSS;
  if (s == "ZeroShot" || s == "Zero-Shot") return SelectionMethod::ZeroShot;
  throw ConfigError("unknown selection method: " + s);
}

std::string to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::KCS: return "KCS";
    case SelectionMethod::HCS: return "HCS";
    case SelectionMethod::HSS: return "HSS";
    case SelectionMethod::RSS: return "RSS";
    case SelectionMethod::ZeroShot: return "ZeroShot";
  }
  return "ZeroShot";
}

std::string SampleSelection::to_json() const {
  json obj;
  obj["task"] = task;
  obj["method"] = to_string(method);
  obj["params"] = {{"c", params.c},       {"n", params.n},
                   {"k", params.k},       {"r", params.r},
                   {"seed", params.seed}, {"kmeans_restarts", params.kmeans_restarts},
                   {"kmeans_max_iters", params.kmeans_max_iters}};
  obj["sample_ids"] = sample_ids;
  obj["shortfall"] = shortfall;
  obj["pool_deficit"] = pool_deficit;
  return obj.dump(2);
}

SampleSelection SampleSelection::from_json(const std::string& text) {
  json obj = json::parse(text);
  SampleSelection sel;
  sel.task = obj.at("task").get<std::string>();
  sel.method = selection_method_from_string(obj.at("method").get<std::string>());
  const auto& p = obj.at("params");
  sel.params.c = p.at("c").get<int>();
  sel.params.n = p.at("n").get<int>();
  sel.params.k = p.at("k").get<int>();
  sel.params.r = p.at("r").get<double>();
  sel.params.seed = p.at("seed").get<int64_t>();
  sel.params.kmeans_restarts = p.value("kmeans_restarts", 1);
  sel.params.kmeans_max_iters = p.value("kmeans_max_iters", 100);
  sel.sample_ids = obj.at("sample_ids").get<std::vector<std::string>>();
  sel.shortfall = obj.value("shortfall", size_t{0});
  sel.pool_deficit = obj.value("pool_deficit", size_t{0});
  return sel;
}

namespace {

double sq_dist(const Point& a, const Point& b) {
  return kernels::squared_l2(a.data(), b.data(), a.size());
}

double total_sse(const std::vector<Point>& points, const std::vector<Point>& centers,
                 const std::vector<int>& assignments) {
  double sse = 0.0;
  for (size_t i = 0; i < points.size(); ++i)
    sse += sq_dist(points[i], centers[static_cast<size_t>(assignments[i])]);
  return sse;
}

// k-means++ seeding: first center uniform, later ones D^2-weighted.
std::vector<Point> kmeanspp_init(const std::vector<Point>& points, int c,
                                 std::mt19937_64& rng) {
  std::vector<Point> centers;
  centers.reserve(static_cast<size_t>(c));
  centers.push_back(points[detrand::bounded(rng, points.size())]);
  std::vector<double> d2(points.size());
  while (centers.size() < static_cast<size_t>(c)) {
    double sum = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& ctr : centers) best = std::min(best, sq_dist(points[i], ctr));
      d2[i] = best;
      sum += best;
    }
    size_t pick = 0;
    if (sum > 0.0) {
      const double target = detrand::uniform01(rng) * sum;
      double run = 0.0;
      pick = points.size() - 1;
      for (size_t i = 0; i < points.size(); ++i) {
        run += d2[i];
        if (run >= target) {
          pick = i;
          break;
        }
      }
    } else {
      // All remaining mass is on duplicated points.
      pick = detrand::bounded(rng, points.size());
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

}  // namespace

KMeansResult lloyd_kmeans(const std::vector<Point>& points, int c, uint64_t seed,
                          int max_iters) {
  if (c < 1 || static_cast<size_t>(c) > points.size())
    throw std::invalid_argument("lloyd_kmeans: need 1 <= c <= |points|");
  if (max_iters < 1) throw std::invalid_argument("lloyd_kmeans: max_iters >= 1");

  const size_t dim = points.front().size();
  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.centers = kmeanspp_init(points, c, rng);
  result.assignments.assign(points.size(), -1);

  double prev_sse = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = sq_dist(points[i], result.centers[0]);
      for (int j = 1; j < c; ++j) {
        const double d = sq_dist(points[i], result.centers[static_cast<size_t>(j)]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (result.assignments[i] != best) {
        result.assignments[i] = best;
        changed = true;
      }
    }

    // Keep empty clusters alive: re-seed each at the point farthest from its
    // current center. Re-seeding (rather than keeping the stale center)
    // zeroes that point's SSE term, preserving monotonicity.
    std::vector<size_t> counts(static_cast<size_t>(c), 0);
    for (int a : result.assignments) ++counts[static_cast<size_t>(a)];
    for (int j = 0; j < c; ++j) {
      if (counts[static_cast<size_t>(j)] > 0) continue;
      size_t worst = 0;
      double worst_d = -1.0;
      for (size_t i = 0; i < points.size(); ++i) {
        const size_t owner = static_cast<size_t>(result.assignments[i]);
        if (counts[owner] <= 1) continue;
        const double d = sq_dist(points[i], result.centers[owner]);
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      --counts[static_cast<size_t>(result.assignments[worst])];
      result.assignments[worst] = j;
      result.centers[static_cast<size_t>(j)] = points[worst];
      ++counts[static_cast<size_t>(j)];
      changed = true;
    }

    const double sse_after_assign =
        total_sse(points, result.centers, result.assignments);
    // Lloyd's step never raises SSE; allow only roundoff noise.
    if (sse_after_assign > prev_sse * (1.0 + 1e-12) + 1e-12)
      throw std::logic_error("lloyd_kmeans: SSE increased across an iteration");

    result.iterations = iter + 1;
    if (!changed && iter > 0) {
      result.sse = sse_after_assign;
      return result;
    }

    for (auto& ctr : result.centers) std::fill(ctr.begin(), ctr.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (size_t i = 0; i < points.size(); ++i) {
      const size_t owner = static_cast<size_t>(result.assignments[i]);
      kernels::axpy(1.0, points[i].data(), result.centers[owner].data(), dim);
      ++counts[owner];
    }
    for (int j = 0; j < c; ++j) {
      const double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(j)]);
      for (double& v : result.centers[static_cast<size_t>(j)]) v *= inv;
    }
    prev_sse = sse_after_assign;
  }
  result.sse = total_sse(points, result.centers, result.assignments);
  return result;
}

KMeansResult lloyd_kmeans_best_of(const std::vector<Point>& points, int c,
                                  uint64_t seed, int restarts, int max_iters) {
  if (restarts < 1) throw std::invalid_argument("lloyd_kmeans_best_of: restarts >= 1");
  KMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int run = 0; run < restarts; ++run) {
    KMeansResult r = lloyd_kmeans(points, c, detrand::derive_seed(seed, run), max_iters);
    if (r.sse < best.sse) best = std::move(r);
  }
  return best;
}

std::vector<int> agglomerative_clusters(const std::vector<Point>& points, int c) {
  const size_t n = points.size();
  if (c < 1 || static_cast<size_t>(c) > n)
    throw std::invalid_argument("agglomerative_clusters: need 1 <= c <= |points|");

  std::vector<std::vector<size_t>> members(n);
  std::vector<bool> active(n, true);
  for (size_t i = 0; i < n; ++i) members[i] = {i};

  // Average-linkage distances, updated with Lance-Williams weights.
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      dist[i][j] = dist[j][i] = std::sqrt(sq_dist(points[i], points[j]));

  size_t active_count = n;
  while (active_count > static_cast<size_t>(c)) {
    size_t best_i = 0, best_j = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (dist[i][j] < best_d) {
          best_d = dist[i][j];
          best_i = i;
          best_j = j;
        }
      }
    }
    const double wi = static_cast<double>(members[best_i].size());
    const double wj = static_cast<double>(members[best_j].size());
    for (size_t k = 0; k < n; ++k) {
      if (!active[k] || k == best_i || k == best_j) continue;
      const double d = (wi * dist[best_i][k] + wj * dist[best_j][k]) / (wi + wj);
      dist[best_i][k] = dist[k][best_i] = d;
    }
    members[best_i].insert(members[best_i].end(), members[best_j].begin(),
                           members[best_j].end());
    active[best_j] = false;
    --active_count;
  }

  // Label clusters by their smallest member index.
  std::vector<size_t> roots;
  for (size_t i = 0; i < n; ++i) {
    if (active[i]) roots.push_back(i);
  }
  std::sort(roots.begin(), roots.end(), [&](size_t a, size_t b) {
    return *std::min_element(members[a].begin(), members[a].end()) <
           *std::min_element(members[b].begin(), members[b].end());
  });
  std::vector<int> labels(n, -1);
  for (size_t cluster = 0; cluster < roots.size(); ++cluster) {
    for (size_t idx : members[roots[cluster]])
      labels[idx] = static_cast<int>(cluster);
  }
  return labels;
}

size_t medoid_index(const std::vector<Point>& points,
                    const std::vector<size_t>& members) {
  if (members.empty()) throw std::invalid_argument("medoid_index: empty cluster");
  size_t best = members.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (size_t candidate : members) {
    double sum = 0.0;
    for (size_t other : members) {
      if (other != candidate) sum += std::sqrt(sq_dist(points[candidate], points[other]));
    }
    if (sum < best_sum) {
      best_sum = sum;
      best = candidate;
    }
  }
  return best;
}

GroupSelection select_kcs(const LabelGroup& group, int c, int n, uint64_t seed,
                          int restarts, int max_iters) {
  if (group.ids.empty()) throw std::invalid_argument("select_kcs: empty group");
  if (c < 1 || n < 1) throw std::invalid_argument("select_kcs: c and n must be >= 1");
  const int effective_c = std::min<int>(c, static_cast<int>(group.points.size()));
  const KMeansResult km =
      lloyd_kmeans_best_of(group.points, effective_c, seed, restarts, max_iters);

  GroupSelection out;
  std::set<std::string> taken;
  for (int cluster = 0; cluster < effective_c; ++cluster) {
    std::vector<std::pair<double, size_t>> ranked;
    for (size_t i = 0; i < group.points.size(); ++i) {
      if (km.assignments[i] == cluster)
        ranked.emplace_back(sq_dist(group.points[i],
                                    km.centers[static_cast<size_t>(cluster)]),
                            i);
    }
    std::sort(ranked.begin(), ranked.end());
    for (int taken_here = 0;
         taken_here < n && static_cast<size_t>(taken_here) < ranked.size();
         ++taken_here) {
      const std::string& id = group.ids[ranked[static_cast<size_t>(taken_here)].second];
      if (taken.insert(id).second) out.ids.push_back(id);
    }
    if (ranked.size() < static_cast<size_t>(n))
      out.shortfall += static_cast<size_t>(n) - ranked.size();
  }
  out.shortfall += static_cast<size_t>(c - effective_c) * static_cast<size_t>(n);
  return out;
}

GroupSelection select_hcs(const LabelGroup& group, int c) {
  if (group.ids.empty()) throw std::invalid_argument("select_hcs: empty group");
  if (c < 1) throw std::invalid_argument("select_hcs: c must be >= 1");
  const int effective_c = std::min<int>(c, static_cast<int>(group.points.size()));
  const std::vector<int> labels = agglomerative_clusters(group.points, effective_c);

  GroupSelection out;
  for (int cluster = 0; cluster < effective_c; ++cluster) {
    std::vector<size_t> members;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cluster) members.push_back(i);
    }
    out.ids.push_back(group.ids[medoid_index(group.points, members)]);
  }
  out.shortfall = static_cast<size_t>(c - effective_c);
  return out;
}

int hard_count(double r, int k) {
  return static_cast<int>(std::floor(r * static_cast<double>(k) + 0.5));
}

GroupSelection select_hss(const LabelGroup& group,
                          const std::vector<HardnessAnnotation>& annotations,
                          int k, double r, uint64_t seed) {
  if (group.ids.empty()) throw std::invalid_argument("select_hss: empty group");
  if (r < 0.0 || r > 1.0) throw std::invalid_argument("select_hss: r in [0,1]");
  if (k < 1) throw std::invalid_argument("select_hss: k must be >= 1");

  std::map<std::string, bool> hardness;
  for (const auto& a : annotations) hardness[a.sample_id] = a.is_hard;

  std::vector<size_t> hard_pool, easy_pool;
  for (size_t i = 0; i < group.ids.size(); ++i) {
    auto it = hardness.find(group.ids[i]);
    if (it == hardness.end())
      throw std::invalid_argument("select_hss: annotation missing for sample " +
                                  group.ids[i]);
    (it->second ? hard_pool : easy_pool).push_back(i);
  }

  std::mt19937_64 rng(seed);
  GroupSelection out;
  int want_hard = std::min(hard_count(r, k), k);
  int want_easy = k - want_hard;

  // Borrow from the other pool when one runs short.
  if (static_cast<size_t>(want_hard) > hard_pool.size()) {
    out.pool_deficit += static_cast<size_t>(want_hard) - hard_pool.size();
    want_easy += want_hard - static_cast<int>(hard_pool.size());
    want_hard = static_cast<int>(hard_pool.size());
  }
  if (static_cast<size_t>(want_easy) > easy_pool.size()) {
    const int overflow = want_easy - static_cast<int>(easy_pool.size());
    out.pool_deficit += static_cast<size_t>(overflow);
    want_easy = static_cast<int>(easy_pool.size());
    want_hard = std::min(want_hard + overflow, static_cast<int>(hard_pool.size()));
  }

  for (size_t pick : detrand::sample_without_replacement(
           rng, hard_pool.size(), static_cast<size_t>(want_hard)))
    out.ids.push_back(group.ids[hard_pool[pick]]);
  for (size_t pick : detrand::sample_without_replacement(
           rng, easy_pool.size(), static_cast<size_t>(want_easy)))
    out.ids.push_back(group.ids[easy_pool[pick]]);
  if (out.ids.size() < static_cast<size_t>(k))
    out.shortfall = static_cast<size_t>(k) - out.ids.size();
  return out;
}

GroupSelection select_rss(const LabelGroup& group, int k, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("select_rss: k must be >= 1");
  std::mt19937_64 rng(seed);
  GroupSelection out;
  for (size_t pick : detrand::sample_without_replacement(
           rng, group.ids.size(), std::min<size_t>(static_cast<size_t>(k),
                                                   group.ids.size())))
    out.ids.push_back(group.ids[pick]);
  if (out.ids.size() < static_cast<size_t>(k))
    out.shortfall = static_cast<size_t>(k) - out.ids.size();
  return out;
}

SampleSelection make_selection(
    const TaskSpec& task, const SampleSet& set,
    const std::map<std::string, Embedding>& embeddings, SelectionMethod method,
    const SelectionParams& params,
    const std::vector<HardnessAnnotation>* annotations) {
  SampleSelection sel;
  sel.task = task.name;
  sel.method = method;
  sel.params = params;
  if (method == SelectionMethod::ZeroShot) return sel;
  if (method == SelectionMethod::HSS && annotations == nullptr)
    throw DependencyError("HSS selection requires hardness annotations for task " +
                          task.name);

  const auto groups = stratify_by_label(set.train);
  // Iterate labels in task order so output ordering is stable.
  for (size_t label_pos = 0; label_pos < task.labels.size(); ++label_pos) {
    const std::string& label = task.labels[label_pos];
    auto it = groups.find(label);
    if (it == groups.end()) continue;

    LabelGroup group;
    for (const auto& s : it->second) {
      auto emb = embeddings.find(s.id);
      if (method != SelectionMethod::RSS && method != SelectionMethod::HSS &&
          emb == embeddings.end())
        throw DependencyError("missing embedding for train sample " + s.id);
      group.ids.push_back(s.id);
      if (emb != embeddings.end()) group.points.push_back(emb->second.values);
    }

    const uint64_t label_seed = detrand::derive_seed(
        static_cast<uint64_t>(params.seed), detrand::fnv1a64(label));
    GroupSelection picked;
    switch (method) {
      case SelectionMethod::KCS:
        picked = select_kcs(group, params.c, params.n, label_seed,
                            params.kmeans_restarts, params.kmeans_max_iters);
        break;
      case SelectionMethod::HCS:
        picked = select_hcs(group, params.c);
        break;
      case SelectionMethod::HSS:
        picked = select_hss(group, *annotations, params.k, params.r, label_seed);
        break;
      case SelectionMethod::RSS:
        picked = select_rss(group, params.k, label_seed);
        break;
      case SelectionMethod::ZeroShot:
        break;
    }
    sel.sample_ids.insert(sel.sample_ids.end(), picked.ids.begin(), picked.ids.end());
    sel.shortfall += picked.shortfall;
    sel.pool_deficit += picked.pool_deficit;
  }
  return sel;
}

}  // namespace sleicl
