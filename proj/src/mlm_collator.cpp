#include "hir/mlm_collator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hir/error.hpp"
#include "hir/hashing.hpp"

namespace hir {

void validate(const MaskingConfig& config) {
  if (config.vocab_size <= 0) throw UsageError("masking: vocab_size must be positive");
  if (!(config.select_rate >= 0.0 && config.select_rate <= 1.0)) {
    throw UsageError("masking: select_rate must lie in [0, 1]");
  }
  for (const double r : {config.mask_rate, config.random_rate, config.keep_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw UsageError("masking: mask/random/keep rates must lie in [0, 1]");
  }
  if (std::abs(config.mask_rate + config.random_rate + config.keep_rate - 1.0) > 1e-12) {
    throw UsageError("masking: mask_rate + random_rate + keep_rate must equal 1");
  }
  if (config.mask_token_id < 0 || config.mask_token_id >= config.vocab_size) {
    throw UsageError("masking: mask_token_id outside the vocabulary");
  }
}

namespace {

// Sorted, deduplicated special ids that fall inside the vocabulary.
std::vector<std::int64_t> specials_in_vocab(const MaskingConfig& config) {
  std::vector<std::int64_t> s;
  for (const auto id : config.special_token_ids) {
    if (id >= 0 && id < config.vocab_size) s.push_back(id);
  }
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

// Maps r in [0, vocab - |specials|) to the r-th non-special id.
std::int64_t nth_regular_id(std::int64_t r, const std::vector<std::int64_t>& specials) {
  for (const auto s : specials) {
    if (s <= r) ++r;
    else break;
  }
  return r;
}

}  // namespace

MaskedBatch mask_tokens(std::span<const std::int64_t> ids, const MaskingConfig& config,
                        std::uint64_t seed) {
  validate(config);
  const auto specials = specials_in_vocab(config);
  const auto regular_count = config.vocab_size - static_cast<std::int64_t>(specials.size());

  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size) {
      throw DataError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                      " is outside the vocabulary of size " + std::to_string(config.vocab_size));
    }
  }
  if (config.random_rate > 0.0 && config.select_rate > 0.0 && regular_count <= 0) {
    throw UsageError("masking: no non-special ids available for random replacement");
  }

  MaskedBatch out;
  out.input_ids.assign(ids.begin(), ids.end());
  out.labels.assign(ids.size(), kIgnoreLabel);

  // Three independent streams per position: selection, action, replacement id.
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (std::binary_search(specials.begin(), specials.end(), ids[i])) continue;
    if (!(to_open_unit(mix64(seed, 3 * i)) < config.select_rate)) continue;
    out.labels[i] = ids[i];
    const double action = to_open_unit(mix64(seed, 3 * i + 1));
    if (action < config.mask_rate) {
      out.input_ids[i] = config.mask_token_id;
    } else if (action < config.mask_rate + config.random_rate) {
      const auto bits = mix64(seed, 3 * i + 2);
      const auto r = static_cast<std::int64_t>(bits % static_cast<std::uint64_t>(regular_count));
      out.input_ids[i] = nth_regular_id(r, specials);
    }
  }
  return out;
}

}  // namespace hir
