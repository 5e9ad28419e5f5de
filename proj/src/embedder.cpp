#include "sleicl/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"
#include "sleicl/http.hpp"
#include "sleicl/kernels.hpp"

namespace sleicl {

using nlohmann::json;

namespace {

void check_embedding(const std::vector<double>& values, const std::string& who) {
  if (values.size() != kEmbeddingDim)
    throw ProviderError(who + ": embedding has " + std::to_string(values.size()) +
                        " entries, expected " + std::to_string(kEmbeddingDim));
  for (double v : values) {
    if (!std::isfinite(v)) throw ProviderError(who + ": non-finite embedding entry");
  }
}

// Scalar-path normalization keeps vectors bit-exact across instruction sets.
void l2_normalize(std::vector<double>& values, const std::string& who) {
  const double sq = kernels::scalar::dot(values.data(), values.data(), values.size());
  if (sq <= 0.0) throw ProviderError(who + ": zero embedding cannot be normalized");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : values) v *= inv;
}

}  // namespace

TrigramHashProvider::TrigramHashProvider(size_t max_input_bytes)
    : max_input_bytes_(max_input_bytes) {}

Embedding TrigramHashProvider::embed(const std::string& text) {
  std::string body = trim(text);
  if (body.empty())
    throw std::invalid_argument("embed_text: text is empty after trimming");

  Embedding out;
  out.provider_id = id_;
  if (body.size() > max_input_bytes_) {
    body.resize(max_input_bytes_);
    out.truncated = true;
  }

  out.values.assign(kEmbeddingDim, 0.0);
  auto accumulate = [&](std::string_view gram) {
    const uint64_t h = detrand::fnv1a64(gram);
    const size_t bucket = static_cast<size_t>(h % kEmbeddingDim);
    out.values[bucket] += (h >> 63) ? -1.0 : 1.0;
  };
  if (body.size() < 3) {
    accumulate(body);
  } else {
    for (size_t i = 0; i + 3 <= body.size(); ++i)
      accumulate(std::string_view(body).substr(i, 3));
  }

  // Signs can cancel inside one bucket; fall back to a single deterministic
  // spike so the norm stays positive.
  const double sq = kernels::scalar::dot(out.values.data(), out.values.data(),
                                         out.values.size());
  if (sq == 0.0) {
    out.values[detrand::fnv1a64(body) % kEmbeddingDim] = 1.0;
  }
  l2_normalize(out.values, id_);
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string id, std::string url,
                                                 std::string api_key_env,
                                                 size_t max_input_bytes)
    : id_(std::move(id)), url_(std::move(url)), api_key_env_(std::move(api_key_env)),
      max_input_bytes_(max_input_bytes) {}

Embedding RemoteEmbeddingProvider::embed(const std::string& text) {
  std::string body = trim(text);
  if (body.empty())
    throw std::invalid_argument("embed_text: text is empty after trimming");

  Embedding out;
  out.provider_id = id_;
  if (body.size() > max_input_bytes_) {
    body.resize(max_input_bytes_);
    out.truncated = true;
  }

  json request{{"model", id_}, {"input", body}};
  std::string bearer;
  if (!api_key_env_.empty()) {
    if (const char* key = std::getenv(api_key_env_.c_str())) bearer = key;
  }
  const HttpResult result = http_post_json(url_, request.dump(), bearer);

  json parsed = json::parse(result.body);
  out.values = parsed.at("data").at(0).at("embedding").get<std::vector<double>>();
  check_embedding(out.values, id_);
  l2_normalize(out.values, id_);
  return out;
}

CachingProvider::CachingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                 std::filesystem::path cache_dir)
    : inner_(std::move(inner)) {
  std::filesystem::create_directories(cache_dir);
  cache_file_ = cache_dir / (inner_->id() + ".jsonl");
  if (std::filesystem::exists(cache_file_)) {
    for_each_line(cache_file_, [&](std::string_view line) {
      json obj = json::parse(line);
      Embedding e;
      e.provider_id = inner_->id();
      e.values = obj.at("values").get<std::vector<double>>();
      e.truncated = obj.value("truncated", false);
      memory_[obj.at("key").get<std::string>()] = std::move(e);
    });
  }
}

Embedding CachingProvider::embed(const std::string& text) {
  const std::string key = sha256_hex(text);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = memory_.find(key);
    if (it != memory_.end()) return it->second;
  }
  Embedding fresh = inner_->embed(text);
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = memory_.emplace(key, fresh);
  if (inserted) {
    ++misses_;
    json obj{{"key", key}, {"values", fresh.values}, {"truncated", fresh.truncated}};
    std::ofstream out(cache_file_, std::ios::binary | std::ios::app);
    out << obj.dump() << '\n';
  }
  return it->second;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const size_t n = a.values.size();
  const double na = kernels::dot(a.values.data(), a.values.data(), n);
  const double nb = kernels::dot(b.values.data(), b.values.data(), n);
  if (na <= 0.0 || nb <= 0.0)
    throw std::invalid_argument("cosine_similarity: zero vector");
  const double sim =
      kernels::dot(a.values.data(), b.values.data(), n) / std::sqrt(na * nb);
  return std::clamp(sim, -1.0, 1.0);
}

std::vector<size_t> nearest_indices(const Embedding& query,
                                    const std::vector<Embedding>& pool, size_t n) {
  if (n > pool.size())
    throw std::invalid_argument("nearest_indices: n exceeds pool size");
  std::vector<double> sims(pool.size());
  for (size_t i = 0; i < pool.size(); ++i) sims[i] = cosine_similarity(query, pool[i]);
  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  order.resize(n);
  return order;
}

}  // namespace sleicl
