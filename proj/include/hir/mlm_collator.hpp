#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace hir {

inline constexpr std::int64_t kIgnoreLabel = -100;

struct MaskingConfig {
  double select_rate = 0.15;
  double mask_rate = 0.8;
  double random_rate = 0.1;
  double keep_rate = 0.1;
  std::int64_t mask_token_id = 0;
  std::int64_t vocab_size = 0;
  std::vector<std::int64_t> special_token_ids;
};

struct MaskedBatch {
  std::vector<std::int64_t> input_ids;
  std::vector<std::int64_t> labels;  // original id where selected, kIgnoreLabel elsewhere
};

void validate(const MaskingConfig& config);

// Each non-special position is selected independently with select_rate; a selected
// position becomes the mask token, a uniform random non-special id, or stays as is,
// with probabilities mask_rate / random_rate / keep_rate.
MaskedBatch mask_tokens(std::span<const std::int64_t> ids, const MaskingConfig& config,
                        std::uint64_t seed);

}  // namespace hir
