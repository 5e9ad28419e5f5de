#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "sleicl/common.hpp"
#include "sleicl/embedder.hpp"
#include "sleicl/kernels.hpp"

using namespace sleicl;
namespace fs = std::filesystem;

namespace {

Embedding basis(size_t i, double scale = 1.0) {
  Embedding e;
  e.provider_id = "test";
  e.values.assign(kEmbeddingDim, 0.0);
  e.values[i] = scale;
  return e;
}

}  // namespace

TEST_SUITE("embedder") {

TEST_CASE("trigram provider is deterministic, unit-norm and 768-wide") {
  TrigramHashProvider provider;
  const Embedding a = provider.embed("hello");
  const Embedding b = provider.embed("hello");
  CHECK(a.values.size() == kEmbeddingDim);
  CHECK(a.values == b.values);  // bitwise
  const double norm = std::sqrt(
      kernels::scalar::dot(a.values.data(), a.values.data(), a.values.size()));
  CHECK(std::abs(norm - 1.0) <= 1e-6);
  for (double v : a.values) CHECK(std::isfinite(v));

  CHECK_THROWS_AS(provider.embed("   "), std::invalid_argument);
  CHECK_THROWS_AS(provider.embed(""), std::invalid_argument);
}

TEST_CASE("trigram provider separates a 1000-string corpus") {
  TrigramHashProvider provider;
  std::vector<Embedding> embeddings;
  embeddings.reserve(1000);
  for (int i = 0; i < 1000; ++i) {
    embeddings.push_back(provider.embed(
        "sample text " + std::to_string(i) + " with filler " +
        std::to_string(i * 7 + 13) + " tail"));
  }
  double max_sim = -1.0;
  for (size_t i = 0; i < embeddings.size(); ++i) {
    for (size_t j = i + 1; j < embeddings.size(); ++j) {
      max_sim = std::max(max_sim, cosine_similarity(embeddings[i], embeddings[j]));
    }
  }
  CHECK(max_sim < 0.999);
}

TEST_CASE("cosine similarity identities and derived value") {
  const Embedding e0 = basis(0);
  const Embedding e1 = basis(1);
  CHECK(cosine_similarity(e0, e0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(e0, e1) == doctest::Approx(0.0).epsilon(1e-12));

  Embedding diag = basis(0);
  diag.values[1] = 1.0;
  // dot = 1, |a| = sqrt(2), |b| = 1.
  CHECK(std::abs(cosine_similarity(diag, e0) - 0.70710678118654752) < 1e-9);

  Embedding zero;
  zero.values.assign(kEmbeddingDim, 0.0);
  CHECK_THROWS_AS(cosine_similarity(zero, e0), std::invalid_argument);
}

TEST_CASE("cosine similarity is symmetric and scale-invariant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Embedding a, b;
    a.values.resize(kEmbeddingDim);
    b.values.resize(kEmbeddingDim);
    for (size_t i = 0; i < kEmbeddingDim; ++i) {
      a.values[i] = 2.0 * detrand::uniform01(rng) - 1.0;
      b.values[i] = 2.0 * detrand::uniform01(rng) - 1.0;
    }
    const double ab = cosine_similarity(a, b);
    CHECK(ab == cosine_similarity(b, a));
    CHECK(ab >= -1.0);
    CHECK(ab <= 1.0);

    Embedding scaled = a;
    const double factor = 0.001 + 500.0 * detrand::uniform01(rng);
    for (double& v : scaled.values) v *= factor;
    CHECK(std::abs(cosine_similarity(scaled, b) - ab) <= 1e-9);
  }
}

TEST_CASE("nearest_indices orders by similarity with index tie-break") {
  Embedding q = basis(0);
  Embedding neg = basis(0, -1.0);
  std::vector<Embedding> pool{q, basis(1), neg};
  const auto top2 = nearest_indices(q, pool, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0] == 0);
  CHECK(top2[1] == 1);

  const auto all = nearest_indices(q, pool, pool.size());
  std::vector<size_t> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<size_t>{0, 1, 2});

  CHECK_THROWS_AS(nearest_indices(q, pool, 4), std::invalid_argument);
}

TEST_CASE("nearest_indices agrees with a full argsort oracle") {
  TrigramHashProvider provider;
  std::vector<Embedding> pool;
  for (int i = 0; i < 20; ++i)
    pool.push_back(provider.embed("pool entry number " + std::to_string(i)));
  const Embedding query = provider.embed("pool entry number 7");

  std::vector<double> sims(pool.size());
  for (size_t i = 0; i < pool.size(); ++i)
    sims[i] = cosine_similarity(query, pool[i]);
  std::vector<size_t> oracle(pool.size());
  std::iota(oracle.begin(), oracle.end(), size_t{0});
  std::stable_sort(oracle.begin(), oracle.end(),
                   [&](size_t a, size_t b) { return sims[a] > sims[b]; });
  oracle.resize(5);

  CHECK(nearest_indices(query, pool, 5) == oracle);
}

TEST_CASE("caching provider avoids recomputation and survives reopen") {
  const auto dir = fs::temp_directory_path() / "sleicl_embed_cache";
  fs::remove_all(dir);
  {
    CachingProvider cache(std::make_shared<TrigramHashProvider>(), dir);
    const Embedding first = cache.embed("cache me");
    CHECK(cache.miss_count() == 1);
    const Embedding again = cache.embed("cache me");
    CHECK(cache.miss_count() == 1);
    CHECK(first.values == again.values);
    cache.embed("another");
    CHECK(cache.miss_count() == 2);
  }
  {
    CachingProvider cache(std::make_shared<TrigramHashProvider>(), dir);
    cache.embed("cache me");
    cache.embed("another");
    CHECK(cache.miss_count() == 0);  // served from disk
  }
}

TEST_CASE("over-limit inputs are truncated and flagged") {
  TrigramHashProvider provider(/*max_input_bytes=*/16);
  const Embedding e = provider.embed(std::string(100, 'a') + " long tail");
  CHECK(e.truncated);
  const Embedding short_e = provider.embed("short");
  CHECK_FALSE(short_e.truncated);
}

}  // TEST_SUITE
