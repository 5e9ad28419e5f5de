#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

// Text embeddings behind a provider abstraction, plus the vector arithmetic
// used by clustering and similarity ranking. All providers emit
// unit-normalized 768-dimensional vectors so cosine reduces to a dot
// product and clustering distances stay bounded.

namespace sleicl {

inline constexpr size_t kEmbeddingDim = 768;

struct Embedding {
  std::vector<double> values;  // exactly kEmbeddingDim, finite, unit norm
  std::string provider_id;
  bool truncated = false;  // input exceeded the provider's length limit
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& id() const = 0;
  virtual size_t dimension() const { return kEmbeddingDim; }
  /// Deterministic within one provider version. Throws ProviderError on
  /// failure and std::invalid_argument on empty (post-trim) text.
  virtual Embedding embed(const std::string& text) = 0;
};

/// Offline deterministic embedder: every byte trigram of the text is hashed
/// with FNV-1a 64; the hash picks one of 768 buckets (h % 768) and a sign
/// (bit 63), the signs accumulate, and the vector is L2-normalized. Texts
/// shorter than three bytes hash as a single gram. Normalization runs on the
/// scalar kernel path so vectors are bit-exact across instruction sets.
class TrigramHashProvider : public EmbeddingProvider {
 public:
  explicit TrigramHashProvider(size_t max_input_bytes = 1 << 20);
  const std::string& id() const override { return id_; }
  Embedding embed(const std::string& text) override;

 private:
  std::string id_ = "trigram-hash-v1";
  size_t max_input_bytes_;
};

/// HTTP JSON endpoint. Request: POST {"model": <id>, "input": <text>} to the
/// configured URL; response: {"data": [{"embedding": [768 numbers]}]}.
/// Retries 429/5xx with exponential backoff (3 attempts). The bearer token
/// is read from `api_key_env` when set.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::string id, std::string url, std::string api_key_env,
                          size_t max_input_bytes = 8192);
  const std::string& id() const override { return id_; }
  Embedding embed(const std::string& text) override;

 private:
  std::string id_;
  std::string url_;
  std::string api_key_env_;
  size_t max_input_bytes_;
};

/// Disk-backed cache wrapper. Entries are JSON lines keyed by
/// (provider_id, SHA-256 of text) under <dir>/<provider_id>.jsonl.
/// Reads are lock-free after load; appends are serialized.
class CachingProvider : public EmbeddingProvider {
 public:
  CachingProvider(std::shared_ptr<EmbeddingProvider> inner,
                  std::filesystem::path cache_dir);
  const std::string& id() const override { return inner_->id(); }
  Embedding embed(const std::string& text) override;

  size_t miss_count() const { return misses_; }

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  std::filesystem::path cache_file_;
  std::unordered_map<std::string, Embedding> memory_;
  std::mutex mutex_;
  size_t misses_ = 0;
};

/// dot(a,b) / (|a||b|), clamped to [-1, 1]. Throws on dimension mismatch or
/// zero vectors.
double cosine_similarity(const Embedding& a, const Embedding& b);

/// Indices of the n pool entries most similar to the query, descending
/// similarity, ties broken toward the smaller index. Requires n <= |pool|.
std::vector<size_t> nearest_indices(const Embedding& query,
                                    const std::vector<Embedding>& pool, size_t n);

}  // namespace sleicl
