#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mier {

// Error taxonomy; the CLI maps these to exit codes (config 2, data 3, numeric 4).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Collects non-fatal diagnostics (skipped records, clamped parameters, null
// labels). Counted per key so callers can assert on totals without parsing
// message strings.
class Warnings {
 public:
  void add(const std::string& key, const std::string& message) {
    counts_[key]++;
    if (messages_.size() < kMaxStoredMessages) messages_.push_back(key + ": " + message);
  }
  std::size_t count(const std::string& key) const {
    auto it = counts_.find(key);
    return it == counts_.end() ? 0 : it->second;
  }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [k, c] : counts_) n += c;
    return n;
  }
  const std::map<std::string, std::size_t>& counts() const { return counts_; }
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  static constexpr std::size_t kMaxStoredMessages = 256;
  std::map<std::string, std::size_t> counts_;
  std::vector<std::string> messages_;
};

// Deterministic randomness. mt19937_64 output is pinned by the standard; the
// distributions below avoid std::uniform_*_distribution, whose streams are
// implementation-defined and would break byte-identical reruns.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Derives an independent stream for a named sub-task of a run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [0, n). Rejection-free modulo; bias is negligible for desk-scale
// n and the stream stays portable.
inline std::uint64_t rand_below(Rng& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("rand_below: n must be positive");
  return rng() % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double rand_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

// Uniform double in [lo, hi).
inline double rand_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(rng);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rand_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// Sample m distinct indices from [0, n) in selection order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t m) {
  if (m > n) throw std::invalid_argument("sample_without_replacement: m > n");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rand_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

// FNV-1a, used for content fingerprints in manifests and stage caching.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Global thread cap. Parallel sections are written so the result does not
// depend on the partitioning, only wall-clock does.
inline int& thread_count_ref() {
  static int n = []() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }();
  return n;
}

inline int thread_count() { return thread_count_ref(); }
inline void set_thread_count(int n) { thread_count_ref() = n < 1 ? 1 : n; }

// Runs fn(i) for i in [0, n). Each index is processed exactly once; fn must
// write only to per-index slots for determinism.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int threads = thread_count();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::size_t chunk = (n + nt - 1) / nt;
  for (std::size_t t = 0; t < nt; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn]() {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace mier
