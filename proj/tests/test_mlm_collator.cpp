#include <numeric>

#include "doctest.h"
#include "hir/error.hpp"
#include "hir/mlm_collator.hpp"

using namespace hir;

namespace {

MaskingConfig bert_like() {
  MaskingConfig c;
  c.vocab_size = 1000;
  c.mask_token_id = 3;
  c.special_token_ids = {0, 1, 2, 3};
  return c;
}

std::vector<std::int64_t> sequence(std::size_t n) {
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = 4 + static_cast<std::int64_t>((i * 7919) % 996);
  return ids;
}

}  // namespace

TEST_CASE("select_rate = 0 leaves input untouched") {
  auto cfg = bert_like();
  cfg.select_rate = 0.0;
  const auto ids = sequence(100);
  const auto b = mask_tokens(ids, cfg, 1);
  CHECK(b.input_ids == ids);
  for (auto l : b.labels) CHECK(l == kIgnoreLabel);
}

TEST_CASE("special tokens are never selected") {
  auto cfg = bert_like();
  cfg.select_rate = 1.0;
  const std::vector<std::int64_t> ids = {0, 1, 2, 3, 2, 1, 0};
  const auto b = mask_tokens(ids, cfg, 5);
  CHECK(b.input_ids == ids);
  for (auto l : b.labels) CHECK(l == kIgnoreLabel);
}

TEST_CASE("labels and inputs are consistent position by position") {
  const auto cfg = bert_like();
  const auto ids = sequence(20000);
  const auto b = mask_tokens(ids, cfg, 9);
  REQUIRE(b.input_ids.size() == ids.size());
  REQUIRE(b.labels.size() == ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (b.labels[i] != kIgnoreLabel) {
      CHECK(b.labels[i] == ids[i]);
    } else {
      CHECK(b.input_ids[i] == ids[i]);
    }
    if (b.input_ids[i] != ids[i] && b.input_ids[i] != cfg.mask_token_id) {
      // Random replacements are never special ids.
      CHECK(b.input_ids[i] >= 4);
      CHECK(b.input_ids[i] < cfg.vocab_size);
    }
  }
}

TEST_CASE("selection and action rates") {
  const auto cfg = bert_like();
  const auto ids = sequence(100000);
  const auto b = mask_tokens(ids, cfg, 2024);
  double selected = 0, masked = 0, kept = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (b.labels[i] == kIgnoreLabel) continue;
    ++selected;
    if (b.input_ids[i] == cfg.mask_token_id) ++masked;
    else if (b.input_ids[i] == ids[i]) ++kept;
  }
  CHECK(selected / ids.size() >= 0.145);
  CHECK(selected / ids.size() <= 0.155);
  CHECK(std::abs(masked / selected - 0.8) < 0.01);
  // Random draws can hit the original id (1/996), so "unchanged" slightly exceeds keep_rate.
  CHECK(std::abs(kept / selected - 0.1) < 0.01);
}

TEST_CASE("masking is deterministic per seed") {
  const auto cfg = bert_like();
  const auto ids = sequence(500);
  const auto a = mask_tokens(ids, cfg, 77);
  const auto b = mask_tokens(ids, cfg, 77);
  CHECK(a.input_ids == b.input_ids);
  CHECK(a.labels == b.labels);
  CHECK(mask_tokens(ids, cfg, 78).labels != a.labels);
}

TEST_CASE("configuration and input errors") {
  auto cfg = bert_like();
  const std::vector<std::int64_t> bad = {5, 1000};
  CHECK_THROWS_WITH_AS(mask_tokens(bad, cfg, 0), doctest::Contains("position 1"), DataError);

  cfg.keep_rate = 0.2;
  CHECK_THROWS_AS(mask_tokens(sequence(3), cfg, 0), UsageError);
  cfg = bert_like();
  cfg.select_rate = 1.5;
  CHECK_THROWS_AS(mask_tokens(sequence(3), cfg, 0), UsageError);
  cfg = bert_like();
  cfg.vocab_size = 4;  // every id is special
  cfg.special_token_ids = {0, 1, 2, 3};
  CHECK_THROWS_AS(mask_tokens(std::vector<std::int64_t>{1, 2}, cfg, 0), UsageError);
}
