#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "sleicl/common.hpp"
#include "sleicl/selector.hpp"

using namespace sleicl;

namespace {

// --- oracles (independent of the implementation path) -----------------------

double partition_sse(const std::vector<Point>& points,
                     const std::vector<int>& labels, int c) {
  double sse = 0.0;
  for (int cluster = 0; cluster < c; ++cluster) {
    Point centroid(points.front().size(), 0.0);
    size_t count = 0;
    for (size_t i = 0; i < points.size(); ++i) {
      if (labels[i] != cluster) continue;
      for (size_t d = 0; d < centroid.size(); ++d) centroid[d] += points[i][d];
      ++count;
    }
    if (count == 0) return std::numeric_limits<double>::infinity();
    for (double& v : centroid) v /= static_cast<double>(count);
    for (size_t i = 0; i < points.size(); ++i) {
      if (labels[i] != cluster) continue;
      for (size_t d = 0; d < centroid.size(); ++d) {
        const double diff = points[i][d] - centroid[d];
        sse += diff * diff;
      }
    }
  }
  return sse;
}

// Exhaustive optimum over all 2-partitions (points.size() <= ~16).
double brute_force_best_sse_c2(const std::vector<Point>& points) {
  const size_t n = points.size();
  double best = std::numeric_limits<double>::infinity();
  for (uint64_t mask = 1; mask + 1 < (1ull << n); ++mask) {
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1;
    best = std::min(best, partition_sse(points, labels, 2));
  }
  return best;
}

double euclid(const Point& a, const Point& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

// From-scratch average-linkage trace: pairwise means recomputed every merge,
// same smallest-pair tie-break as the implementation.
std::vector<int> brute_force_average_linkage(const std::vector<Point>& points,
                                             int c) {
  const size_t n = points.size();
  std::vector<std::vector<size_t>> clusters(n);
  std::vector<bool> active(n, true);
  for (size_t i = 0; i < n; ++i) clusters[i] = {i};
  size_t active_count = n;
  while (active_count > static_cast<size_t>(c)) {
    double best = std::numeric_limits<double>::infinity();
    size_t bi = 0, bj = 0;
    for (size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        double sum = 0.0;
        for (size_t a : clusters[i])
          for (size_t b : clusters[j]) sum += euclid(points[a], points[b]);
        const double d = sum / static_cast<double>(clusters[i].size() *
                                                   clusters[j].size());
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(),
                        clusters[bj].end());
    active[bj] = false;
    --active_count;
  }
  std::vector<size_t> roots;
  for (size_t i = 0; i < n; ++i)
    if (active[i]) roots.push_back(i);
  std::sort(roots.begin(), roots.end(), [&](size_t a, size_t b) {
    return *std::min_element(clusters[a].begin(), clusters[a].end()) <
           *std::min_element(clusters[b].begin(), clusters[b].end());
  });
  std::vector<int> labels(n, -1);
  for (size_t k = 0; k < roots.size(); ++k)
    for (size_t idx : clusters[roots[k]]) labels[idx] = static_cast<int>(k);
  return labels;
}

std::vector<Point> random_points(std::mt19937_64& rng, size_t n, size_t dim) {
  std::vector<Point> points(n, Point(dim));
  for (auto& p : points)
    for (double& v : p) v = 4.0 * detrand::uniform01(rng) - 2.0;
  return points;
}

LabelGroup group_from(const std::vector<Point>& points) {
  LabelGroup g;
  for (size_t i = 0; i < points.size(); ++i) {
    g.ids.push_back("id" + std::to_string(i));
    g.points.push_back(points[i]);
  }
  return g;
}

}  // namespace

TEST_SUITE("selector") {

TEST_CASE("kmeans separates two tight pairs like the exhaustive oracle") {
  const std::vector<Point> points{{0, 0}, {0, 1}, {10, 10}, {10, 11}};
  const auto result = lloyd_kmeans(points, 2, 123);
  CHECK(result.assignments[0] == result.assignments[1]);
  CHECK(result.assignments[2] == result.assignments[3]);
  CHECK(result.assignments[0] != result.assignments[2]);
  CHECK(result.sse == doctest::Approx(brute_force_best_sse_c2(points)));
}

TEST_CASE("kmeans with c = n gives singleton clusters and zero SSE") {
  std::mt19937_64 rng(9);
  const auto points = random_points(rng, 6, 3);
  const auto result = lloyd_kmeans(points, 6, 77);
  CHECK(result.sse == doctest::Approx(0.0));
  std::set<int> owners(result.assignments.begin(), result.assignments.end());
  CHECK(owners.size() == 6);
}

TEST_CASE("kmeans recovers two planted gaussian blobs exactly") {
  std::mt19937_64 rng(2024);
  std::vector<Point> points;
  auto noise = [&]() {
    // Box-Muller from deterministic uniforms, sigma 0.1.
    const double u1 = std::max(detrand::uniform01(rng), 1e-12);
    const double u2 = detrand::uniform01(rng);
    return 0.1 * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586 * u2);
  };
  for (int i = 0; i < 12; ++i) points.push_back({0.0 + noise(), 0.0 + noise()});
  for (int i = 0; i < 12; ++i)
    points.push_back({10.0 + noise(), 10.0 + noise()});

  const auto result = lloyd_kmeans(points, 2, 5);
  for (int i = 1; i < 12; ++i)
    CHECK(result.assignments[i] == result.assignments[0]);
  for (int i = 13; i < 24; ++i)
    CHECK(result.assignments[i] == result.assignments[12]);
  CHECK(result.assignments[0] != result.assignments[12]);
}

TEST_CASE("kmeans restarts reach the exhaustive optimum on small instances") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 10; ++trial) {
    const size_t n = 4 + trial % 5;  // 4..8 points
    const auto points = random_points(rng, n, 3);
    const auto best = lloyd_kmeans_best_of(points, 2, trial, 10);
    const double oracle = brute_force_best_sse_c2(points);
    CHECK(best.sse <= oracle * (1.0 + 1e-9) + 1e-12);
    CHECK(best.sse >= oracle * (1.0 - 1e-9) - 1e-12);
  }
}

TEST_CASE("kmeans is deterministic given the seed and rejects c > n") {
  std::mt19937_64 rng(1);
  const auto points = random_points(rng, 9, 4);
  const auto a = lloyd_kmeans(points, 3, 42);
  const auto b = lloyd_kmeans(points, 3, 42);
  CHECK(a.assignments == b.assignments);
  CHECK(a.sse == b.sse);
  CHECK_THROWS_AS(lloyd_kmeans(points, 10, 1), std::invalid_argument);
}

TEST_CASE("agglomerative boundary cases") {
  std::mt19937_64 rng(8);
  const auto points = random_points(rng, 5, 2);
  const auto singletons = agglomerative_clusters(points, 5);
  std::set<int> distinct(singletons.begin(), singletons.end());
  CHECK(distinct.size() == 5);

  const auto one = agglomerative_clusters(points, 1);
  for (int label : one) CHECK(label == 0);

  CHECK_THROWS_AS(agglomerative_clusters(points, 0), std::invalid_argument);
  CHECK_THROWS_AS(agglomerative_clusters(points, 6), std::invalid_argument);
}

TEST_CASE("agglomerative groups three well-separated pairs") {
  const std::vector<Point> points{{0, 0},  {0, 0.5},  {50, 0},
                                  {50, 0.5}, {0, 50}, {0.5, 50}};
  const auto labels = agglomerative_clusters(points, 3);
  CHECK(labels[0] == labels[1]);
  CHECK(labels[2] == labels[3]);
  CHECK(labels[4] == labels[5]);
  CHECK(labels[0] != labels[2]);
  CHECK(labels[0] != labels[4]);
  CHECK(labels[2] != labels[4]);
}

TEST_CASE("agglomerative matches the from-scratch merge-trace oracle") {
  std::mt19937_64 rng(555);
  for (int trial = 0; trial < 8; ++trial) {
    const size_t n = 4 + trial % 4;  // 4..7 points
    const int c = 2 + trial % 2;
    const auto points = random_points(rng, n, 3);
    CHECK(agglomerative_clusters(points, c) ==
          brute_force_average_linkage(points, c));
  }
}

TEST_CASE("medoid minimizes summed distance, verified exhaustively") {
  std::mt19937_64 rng(99);
  const auto points = random_points(rng, 7, 3);
  std::vector<size_t> members{0, 2, 3, 5, 6};
  const size_t picked = medoid_index(points, members);

  double best = std::numeric_limits<double>::infinity();
  size_t expected = members.front();
  for (size_t candidate : members) {
    double sum = 0.0;
    for (size_t other : members)
      if (other != candidate) sum += euclid(points[candidate], points[other]);
    if (sum < best) {
      best = sum;
      expected = candidate;
    }
  }
  CHECK(picked == expected);
}

TEST_CASE("select_kcs picks one id per tight pair") {
  const std::vector<Point> points{{0, 0},  {0, 0.1},  {10, 0},  {10, 0.1},
                                  {0, 10}, {0, 10.1}, {10, 10}, {10, 10.1}};
  const auto group = group_from(points);
  const auto picked = select_kcs(group, 4, 1, 7, /*restarts=*/10);
  REQUIRE(picked.ids.size() == 4);
  std::set<std::string> distinct(picked.ids.begin(), picked.ids.end());
  CHECK(distinct.size() == 4);
  // One id from each pair: indices {0,1}, {2,3}, {4,5}, {6,7}.
  std::set<int> pairs;
  for (const auto& id : picked.ids) pairs.insert(std::stoi(id.substr(2)) / 2);
  CHECK(pairs.size() == 4);
}

TEST_CASE("select_kcs exhaustive and default shapes") {
  std::mt19937_64 rng(4);
  const auto points = random_points(rng, 6, 3);
  const auto group = group_from(points);
  const auto all = select_kcs(group, 1, 6, 3);
  CHECK(all.ids.size() == 6);
  const auto defaults = select_kcs(group, 4, 1, 3);
  CHECK(defaults.ids.size() == 4);
  CHECK_THROWS_AS(select_kcs(LabelGroup{}, 4, 1, 3), std::invalid_argument);
}

TEST_CASE("select_hcs returns medoids of each cluster") {
  const std::vector<Point> points{{0, 0},  {0, 0.5},  {50, 0},
                                  {50, 0.5}, {0, 50}, {0.5, 50}};
  const auto group = group_from(points);
  const auto picked = select_hcs(group, 3);
  REQUIRE(picked.ids.size() == 3);
  std::set<int> pair_of;
  for (const auto& id : picked.ids) pair_of.insert(std::stoi(id.substr(2)) / 2);
  CHECK(pair_of.size() == 3);

  const auto everything = select_hcs(group, 6);
  CHECK(everything.ids.size() == 6);
}

TEST_CASE("select_hss draws round(r*k) hard samples when pools suffice") {
  LabelGroup group;
  std::vector<HardnessAnnotation> annotations;
  for (int i = 0; i < 40; ++i) {
    const std::string id = "s" + std::to_string(i);
    group.ids.push_back(id);
    annotations.push_back({id, "x", i < 20});  // first 20 hard
  }
  auto count_hard = [&](const GroupSelection& sel) {
    size_t hard = 0;
    for (const auto& id : sel.ids) hard += std::stoi(id.substr(1)) < 20 ? 1 : 0;
    return hard;
  };

  const auto sel = select_hss(group, annotations, 10, 0.3, 11);
  REQUIRE(sel.ids.size() == 10);
  CHECK(count_hard(sel) == 3);
  CHECK(sel.pool_deficit == 0);

  const auto all_hard = select_hss(group, annotations, 10, 1.0, 11);
  CHECK(count_hard(all_hard) == 10);

  // Half-up rounding across the ratio grid.
  for (int k : {4, 10, 20}) {
    for (int r10 = 0; r10 <= 10; ++r10) {
      const double r = r10 / 10.0;
      const auto s = select_hss(group, annotations, k, r, 101 + r10);
      CHECK(count_hard(s) == static_cast<size_t>(hard_count(r, k)));
      CHECK(hard_count(r, k) == static_cast<int>(std::floor(r * k + 0.5)));
    }
  }
}

TEST_CASE("select_hss fills deficits from the complementary pool") {
  LabelGroup group;
  std::vector<HardnessAnnotation> annotations;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "s" + std::to_string(i);
    group.ids.push_back(id);
    annotations.push_back({id, "x", i < 2});  // only 2 hard samples
  }
  const auto sel = select_hss(group, annotations, 8, 1.0, 3);
  CHECK(sel.ids.size() == 8);
  CHECK(sel.pool_deficit == 6);

  // r=0 with an empty hard pool: no deficit at all.
  std::vector<HardnessAnnotation> all_easy;
  for (const auto& id : group.ids) all_easy.push_back({id, "x", false});
  const auto easy_sel = select_hss(group, all_easy, 5, 0.0, 3);
  CHECK(easy_sel.ids.size() == 5);
  CHECK(easy_sel.pool_deficit == 0);
}

TEST_CASE("select_rss is seeded-uniform without replacement") {
  std::mt19937_64 rng(12);
  const auto group = group_from(random_points(rng, 9, 2));
  const auto whole = select_rss(group, 9, 5);
  CHECK(whole.ids.size() == 9);
  std::set<std::string> distinct(whole.ids.begin(), whole.ids.end());
  CHECK(distinct.size() == 9);

  const auto a = select_rss(group, 4, 21);
  const auto b = select_rss(group, 4, 21);
  CHECK(a.ids == b.ids);
  std::set<std::string> four(a.ids.begin(), a.ids.end());
  CHECK(four.size() == 4);
}

TEST_CASE("make_selection stratifies per label and never leaves the train set") {
  TaskSpec task;
  task.name = "demo";
  task.labels = {"A", "B"};
  task.description = "demo";

  SampleSet set;
  set.task = "demo";
  std::map<std::string, Embedding> embeddings;
  TrigramHashProvider provider;
  for (int i = 0; i < 30; ++i) {
    const std::string label = i % 2 == 0 ? "A" : "B";
    auto s = make_sample("t" + std::to_string(i),
                         "train sample " + std::to_string(i) + " body", label);
    embeddings.emplace(s.id, provider.embed(s.text));
    set.train.push_back(std::move(s));
  }
  set.eval.push_back(make_sample("e0", "eval sample", "A"));

  std::set<std::string> train_ids;
  for (const auto& s : set.train) train_ids.insert(s.id);

  SelectionParams params;
  params.k = 4;
  params.c = 4;
  params.n = 1;
  params.seed = 3;

  for (auto method :
       {SelectionMethod::KCS, SelectionMethod::HCS, SelectionMethod::RSS}) {
    const auto sel = make_selection(task, set, embeddings, method, params);
    CHECK(sel.sample_ids.size() == 8);  // 4 per label
    std::set<std::string> distinct(sel.sample_ids.begin(), sel.sample_ids.end());
    CHECK(distinct.size() == sel.sample_ids.size());
    for (const auto& id : sel.sample_ids) CHECK(train_ids.count(id) == 1);
  }

  std::vector<HardnessAnnotation> annotations;
  for (const auto& s : set.train) annotations.push_back({s.id, "A", s.id < "t2"});
  params.r = 0.5;
  const auto hss = make_selection(task, set, embeddings, SelectionMethod::HSS,
                                  params, &annotations);
  CHECK(hss.sample_ids.size() == 8);

  const auto zero =
      make_selection(task, set, embeddings, SelectionMethod::ZeroShot, params);
  CHECK(zero.sample_ids.empty());

  CHECK_THROWS_AS(
      make_selection(task, set, embeddings, SelectionMethod::HSS, params),
      DependencyError);
}

TEST_CASE("selection records round-trip through json") {
  SampleSelection sel;
  sel.task = "demo";
  sel.method = SelectionMethod::HSS;
  sel.params.k = 4;
  sel.params.r = 0.5;
  sel.params.seed = 99;
  sel.sample_ids = {"a", "b", "c"};
  sel.shortfall = 1;
  const auto loaded = SampleSelection::from_json(sel.to_json());
  CHECK(loaded.task == sel.task);
  CHECK(loaded.method == sel.method);
  CHECK(loaded.params.r == sel.params.r);
  CHECK(loaded.params.seed == sel.params.seed);
  CHECK(loaded.sample_ids == sel.sample_ids);
  CHECK(loaded.shortfall == 1);
}

}  // TEST_SUITE
