#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hir {

inline constexpr std::size_t kDefaultBuckets = 10000;

// Sparse hashed n-gram count vector over m buckets.
struct FeatureVector {
  std::size_t m = kDefaultBuckets;
  // (bucket, count) pairs sorted by bucket; counts are positive.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;
  std::uint64_t total = 0;

  std::uint32_t count(std::size_t bucket) const noexcept;
  std::size_t nonzero() const noexcept { return counts.size(); }

  bool operator==(const FeatureVector&) const = default;
};

// Builds a FeatureVector from dense counts. Zero entries are dropped.
FeatureVector from_dense(std::span<const std::uint32_t> dense);

// Bucket-wise count addition; both vectors must share m.
FeatureVector add(const FeatureVector& a, const FeatureVector& b);

// Lowercased tokens. A token is a maximal run of Unicode letters/digits or a
// maximal run of other non-whitespace characters.
std::vector<std::string> tokenize(std::string_view text);

// All unigrams followed by all bigrams (adjacent tokens joined by one space).
std::vector<std::string> ngrams(std::span<const std::string> tokens);

// FNV-1a 64 of the n-gram's UTF-8 bytes, reduced mod m.
std::uint32_t bucket_of(std::string_view ngram, std::size_t m);

FeatureVector featurize(std::string_view text, std::size_t m = kDefaultBuckets);

}  // namespace hir
