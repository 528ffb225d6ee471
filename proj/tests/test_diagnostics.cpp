#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hir/diagnostics.hpp"
#include "hir/error.hpp"
#include "test_util.hpp"

using namespace hir;

namespace {

MultinomialModel from_probs(const std::vector<double>& p) {
  MultinomialModel m;
  m.m = p.size();
  for (double v : p) m.log_gamma.push_back(std::log(v));
  return m;
}

}  // namespace

TEST_CASE("kl_divergence examples") {
  const auto p = from_probs({0.5, 0.5});
  const auto q = from_probs({0.9, 0.1});
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence(p, q) == doctest::Approx(0.5108256237659907).epsilon(1e-12));
  CHECK_THROWS_AS(kl_divergence(p, from_probs({0.2, 0.3, 0.5})), UsageError);
}

TEST_CASE("kl with an unsupported bucket is infinite, not an error") {
  const auto p = from_probs({0.5, 0.5});
  const auto q = from_probs({1.0, 0.0});
  CHECK(std::isinf(kl_divergence(p, q)));
  CHECK(kl_divergence(q, p) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("kl is non-negative and zero only on equal inputs") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 2 + rng() % 8;
    std::vector<double> a(m), b(m);
    double sa = 0, sb = 0;
    for (auto& x : a) sa += (x = u(rng));
    for (auto& x : b) sb += (x = u(rng));
    for (auto& x : a) x /= sa;
    for (auto& x : b) x /= sb;
    CHECK(kl_divergence(from_probs(a), from_probs(b)) > 0.0);
    CHECK(kl_divergence(from_probs(a), from_probs(a)) == 0.0);
  }
}

TEST_CASE("alignment report on corpus files") {
  hir::testing::TempDir dir;
  const auto target = hir::testing::write_corpus(dir / "t.jsonl", {"red green blue", "green blue red red"});
  const auto near = hir::testing::write_corpus(dir / "s.jsonl", {"red green blue", "green blue red red"});
  const auto far = hir::testing::write_corpus(dir / "r.jsonl", {"alpha beta", "gamma delta epsilon"});
  const auto report = alignment_report(near, far, target, 1000, 1e-5);
  CHECK(report.kl_selected_vs_target < 1e-6);
  CHECK(report.kl_random_vs_target > 1.0);
  CHECK(std::isfinite(report.kl_random_vs_target));
  CHECK(report.bucket_occupancy_target <= 1000);
  CHECK(report.bucket_occupancy_selected == report.bucket_occupancy_target);
  CHECK(report.bucket_occupancy_target > 0);

  const auto again = alignment_report(near, far, target, 1000, 1e-5);
  CHECK(to_json(again) == to_json(report));

  const auto swapped = alignment_report(far, near, target, 1000, 1e-5);
  REQUIRE_FALSE(swapped.top_diverging_buckets.empty());
  for (std::size_t i = 1; i < swapped.top_diverging_buckets.size(); ++i) {
    CHECK(swapped.top_diverging_buckets[i - 1].contribution >= swapped.top_diverging_buckets[i].contribution);
  }

  std::ostringstream table;
  print_table(report, table);
  CHECK(table.str().find("KL(selected || target)") != std::string::npos);
}

TEST_CASE("empty corpus is an error") {
  hir::testing::TempDir dir;
  const auto ok = hir::testing::write_corpus(dir / "ok.jsonl", {"a b"});
  hir::testing::write_text(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(alignment_report(dir / "empty.jsonl", ok, ok, 100, 1e-5), DataError);
}
