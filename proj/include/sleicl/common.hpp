#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Shared plumbing: typed errors, deterministic RNG helpers, token counting,
// content hashing and JSON-lines IO.

namespace sleicl {

// ---------------------------------------------------------------------------
// Errors. Exit-code mapping lives in the CLI: config=2, dependency=3,
// provider=4.
// ---------------------------------------------------------------------------

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prompt too large for the model context window. Detected pre-flight; no
/// network call is made.
class ContextOverflowError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// std::mt19937_64 is bit-exact across platforms but the standard
// distributions are not, so every draw goes through the helpers below.
// ---------------------------------------------------------------------------

namespace detrand {

/// splitmix64 step; used to derive independent seeds from one run seed.
uint64_t splitmix64(uint64_t& state);

/// One-shot seed derivation (does not advance any shared state).
uint64_t derive_seed(uint64_t base, uint64_t salt);

/// FNV-1a 64-bit over bytes. Stable; used for trigram hashing and
/// per-sample seed salts.
uint64_t fnv1a64(std::string_view bytes);

/// Unbiased integer in [0, bound) via rejection sampling.
template <typename Rng>
uint64_t bounded(Rng& rng, uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("bounded: bound must be > 0");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Uniform double in [0, 1) from the top 53 bits.
template <typename Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Fisher-Yates shuffle, high index first.
template <typename Rng, typename T>
void shuffle(Rng& rng, std::vector<T>& items) {
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(bounded(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// k distinct indices drawn uniformly from [0, n), in draw order.
template <typename Rng>
std::vector<size_t> sample_without_replacement(Rng& rng, size_t n, size_t k) {
  std::vector<size_t> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<size_t> out;
  out.reserve(k);
  for (size_t draw = 0; draw < k && !pool.empty(); ++draw) {
    const size_t j = static_cast<size_t>(bounded(rng, pool.size()));
    out.push_back(pool[j]);
    pool[j] = pool.back();
    pool.pop_back();
  }
  return out;
}

}  // namespace detrand

// ---------------------------------------------------------------------------
// Text helpers.
// ---------------------------------------------------------------------------

/// Number of whitespace-delimited tokens. The project-wide length estimate.
size_t whitespace_token_count(std::string_view text);

/// Strip leading/trailing whitespace.
std::string trim(std::string_view text);

/// ASCII lowercase copy.
std::string to_lower(std::string_view text);

/// SHA-256 hex digest of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

// ---------------------------------------------------------------------------
// File helpers.
// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);

/// Write with LF endings, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Calls `fn` once per non-empty line. Returns the number of lines seen.
size_t for_each_line(const std::filesystem::path& path,
                     const std::function<void(std::string_view)>& fn);

}  // namespace sleicl
