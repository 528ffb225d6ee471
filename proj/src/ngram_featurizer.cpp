#include "hir/ngram_featurizer.hpp"

#include <algorithm>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "hir/error.hpp"
#include "hir/hashing.hpp"

namespace hir {

std::uint32_t FeatureVector::count(std::size_t bucket) const noexcept {
  const auto it = std::lower_bound(
      counts.begin(), counts.end(), bucket,
      [](const auto& entry, std::size_t b) { return entry.first < b; });
  return (it != counts.end() && it->first == bucket) ? it->second : 0;
}

FeatureVector from_dense(std::span<const std::uint32_t> dense) {
  FeatureVector fv;
  fv.m = dense.size();
  for (std::size_t j = 0; j < dense.size(); ++j) {
    if (dense[j] == 0) continue;
    fv.counts.emplace_back(static_cast<std::uint32_t>(j), dense[j]);
    fv.total += dense[j];
  }
  return fv;
}

FeatureVector add(const FeatureVector& a, const FeatureVector& b) {
  if (a.m != b.m) throw UsageError("add: bucket counts differ");
  FeatureVector out;
  out.m = a.m;
  out.total = a.total + b.total;
  auto ia = a.counts.begin();
  auto ib = b.counts.begin();
  while (ia != a.counts.end() || ib != b.counts.end()) {
    if (ib == b.counts.end() || (ia != a.counts.end() && ia->first < ib->first)) {
      out.counts.push_back(*ia++);
    } else if (ia == a.counts.end() || ib->first < ia->first) {
      out.counts.push_back(*ib++);
    } else {
      out.counts.emplace_back(ia->first, ia->second + ib->second);
      ++ia;
      ++ib;
    }
  }
  return out;
}

namespace {

enum class CharClass { space, word, other };

CharClass classify(UChar32 c) {
  if (u_isUWhiteSpace(c)) return CharClass::space;
  if (u_isalnum(c)) return CharClass::word;
  return CharClass::other;
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  std::int32_t len = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), len, U8_MAX_LENGTH, c, error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  CharClass current_class = CharClass::space;

  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) c = 0xFFFD;  // ill-formed byte sequence
    const CharClass cls = classify(c);
    if (cls != current_class && !current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
    current_class = cls;
    if (cls != CharClass::space) append_utf8(current, u_tolower(c));
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> ngrams(std::span<const std::string> tokens) {
  std::vector<std::string> out(tokens.begin(), tokens.end());
  if (tokens.size() > 1) {
    out.reserve(2 * tokens.size() - 1);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      out.push_back(tokens[i] + ' ' + tokens[i + 1]);
    }
  }
  return out;
}

std::uint32_t bucket_of(std::string_view ngram, std::size_t m) {
  return static_cast<std::uint32_t>(fnv1a64(ngram) % m);
}

FeatureVector featurize(std::string_view text, std::size_t m) {
  if (m == 0) throw UsageError("featurize: bucket count must be at least 1");
  if (m > (std::size_t{1} << 32)) throw UsageError("featurize: bucket count too large");

  const auto tokens = tokenize(text);
  std::vector<std::uint32_t> buckets;
  buckets.reserve(tokens.empty() ? 0 : 2 * tokens.size() - 1);
  for (const auto& t : tokens) buckets.push_back(bucket_of(t, m));
  std::string bigram;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    bigram.assign(tokens[i]);
    bigram += ' ';
    bigram += tokens[i + 1];
    buckets.push_back(bucket_of(bigram, m));
  }
  std::sort(buckets.begin(), buckets.end());

  FeatureVector fv;
  fv.m = m;
  fv.total = buckets.size();
  for (std::size_t i = 0; i < buckets.size();) {
    std::size_t j = i;
    while (j < buckets.size() && buckets[j] == buckets[i]) ++j;
    fv.counts.emplace_back(buckets[i], static_cast<std::uint32_t>(j - i));
    i = j;
  }
  return fv;
}

}  // namespace hir
