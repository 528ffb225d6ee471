#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "hir/error.hpp"
#include "hir/ngram_model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hir;

namespace {

FeatureVector dense(std::vector<std::uint32_t> v) { return from_dense(v); }

MultinomialModel model_from_probs(const std::vector<double>& probs) {
  MultinomialModel m;
  m.m = probs.size();
  for (double p : probs) m.log_gamma.push_back(std::log(p));
  return m;
}

}  // namespace

TEST_CASE("gamma from the two-vector example") {
  const std::vector<FeatureVector> zs = {dense({1, 1, 0}), dense({0, 1, 2})};
  const auto model = fit_multinomial(zs, 3, 0.0);
  CHECK(model.total_ngrams_seen == 5);
  CHECK(std::exp(model.log_gamma[0]) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(std::abs(std::exp(model.log_gamma[0]) - 0.2) < 1e-12);
  CHECK(std::abs(std::exp(model.log_gamma[1]) - 0.4) < 1e-12);
  CHECK(std::abs(std::exp(model.log_gamma[2]) - 0.4) < 1e-12);
}

TEST_CASE("lambda = 1 forces a uniform model") {
  const std::vector<FeatureVector> zs = {dense({5, 0, 0, 1})};
  const auto model = fit_multinomial(zs, 4, 1.0);
  for (double lg : model.log_gamma) CHECK(std::abs(std::exp(lg) - 0.25) < 1e-15);
}

TEST_CASE("one-hot mass gives -inf only without smoothing") {
  const std::vector<FeatureVector> zs = {dense({3, 0})};
  const auto raw = fit_multinomial(zs, 2, 0.0);
  CHECK(raw.log_gamma[0] == 0.0);
  CHECK(raw.log_gamma[1] == -std::numeric_limits<double>::infinity());
  const auto smoothed = fit_multinomial(zs, 2, 1e-5);
  CHECK(std::isfinite(smoothed.log_gamma[1]));
}

TEST_CASE("fit errors") {
  const std::vector<FeatureVector> empty = {dense({0, 0})};
  CHECK_THROWS_AS(fit_multinomial(empty, 2, 0.0), DataError);
  const std::vector<FeatureVector> wrong_m = {dense({1, 0, 0})};
  CHECK_THROWS_AS(fit_multinomial(wrong_m, 2, 0.0), UsageError);
  const std::vector<FeatureVector> ok = {dense({1, 0})};
  CHECK_THROWS_AS(fit_multinomial(ok, 2, 1.5), UsageError);
  CHECK_THROWS_AS(fit_multinomial(ok, 2, -0.1), UsageError);
}

TEST_CASE("log_prob examples") {
  const auto model = model_from_probs({0.2, 0.4, 0.4});
  CHECK(log_prob(model, dense({0, 0, 0})) == 0.0);
  CHECK(log_prob(model, dense({1, 1, 0})) == doctest::Approx(-2.525728644308255).epsilon(1e-12));

  const auto uniform = model_from_probs({0.25, 0.25, 0.25, 0.25});
  CHECK(log_prob(uniform, dense({2, 0, 3, 1})) == doctest::Approx(6 * std::log(0.25)));
  CHECK_THROWS_AS(log_prob(model, dense({1, 1})), UsageError);
}

TEST_CASE("log_weight_ng examples") {
  const auto p = model_from_probs({0.8, 0.2});
  const auto q = model_from_probs({0.5, 0.5});
  const double expected = 2.0 * std::log(1.6) + std::log(0.4);  // 0.0237165266...
  CHECK(std::abs(log_weight_ng(p, q, dense({2, 1})) - expected) < 1e-12);
  CHECK(std::abs(expected - 0.02371652661731627) < 1e-12);
  CHECK(log_weight_ng(p, p, dense({2, 1})) == 0.0);
  CHECK(log_weight_ng(p, q, dense({0, 0})) == 0.0);
  CHECK(std::abs(log_weight_ng(p, q, dense({2, 1}), true) - expected / 3.0) < 1e-12);
  CHECK(log_weight_ng(p, q, dense({0, 0}), true) == 0.0);
  CHECK_THROWS_AS(log_weight_ng(p, model_from_probs({1.0 / 3, 1.0 / 3, 1.0 / 3}), dense({1, 1})),
                  UsageError);
}

TEST_CASE("fit matches a count-and-divide oracle on small corpora") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", ".", "x y"};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng() % 20;
    std::vector<FeatureVector> zs;
    std::map<std::uint64_t, double> counts;  // bucket -> count, via the reference hash
    double total = 0;
    const auto docs = 1 + rng() % 10;
    for (std::size_t d = 0; d < docs; ++d) {
      std::string text;
      for (auto w = rng() % 6; w > 0; --w) text += words[rng() % words.size()] + " ";
      zs.push_back(featurize(text, m));
      const auto toks = tokenize(text);
      for (std::size_t i = 0; i < toks.size(); ++i) {
        counts[oracle::fnv1a(toks[i]) % m] += 1;
        total += 1;
        if (i + 1 < toks.size()) {
          counts[oracle::fnv1a(toks[i] + " " + toks[i + 1]) % m] += 1;
          total += 1;
        }
      }
    }
    if (total == 0) continue;
    const auto model = fit_multinomial(zs, m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double expected = counts.count(j) ? counts[j] / total : 0.0;
      CHECK(std::abs(std::exp(model.log_gamma[j]) - expected) < 1e-12);
    }
  }
}

TEST_CASE("fitted models are normalized, order invariant and additive") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + rng() % 64;
    std::vector<FeatureVector> zs;
    for (int d = 0; d < 8; ++d) {
      std::vector<std::uint32_t> v(m);
      for (auto& x : v) x = rng() % 4;
      zs.push_back(from_dense(v));
    }
    zs.push_back(from_dense(std::vector<std::uint32_t>(m, 1)));
    const double lambda = trial % 2 ? 0.0 : 1e-3;
    const auto model = fit_multinomial(zs, m, lambda);
    double s = 0;
    for (double lg : model.log_gamma) s += std::exp(lg);
    CHECK(std::abs(s - 1.0) < 1e-9);

    auto shuffled = zs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto other = fit_multinomial(shuffled, m, lambda);
    CHECK(other.log_gamma == model.log_gamma);

    // Sharded accumulation merged by addition matches the single pass.
    MultinomialAccumulator a(m), b(m);
    for (std::size_t i = 0; i < zs.size(); ++i) (i % 2 ? a : b).add(zs[i]);
    a.merge(b);
    CHECK(a.finish(lambda).log_gamma == model.log_gamma);

    const auto& z1 = zs[0];
    const auto& z2 = zs[1];
    CHECK(log_prob(model, add(z1, z2)) ==
          doctest::Approx(log_prob(model, z1) + log_prob(model, z2)).epsilon(1e-12));
  }
}

TEST_CASE("log weights are antisymmetric") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng() % 10;
    std::vector<double> a(m), b(m);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    const double sa = std::accumulate(a.begin(), a.end(), 0.0), sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (auto& x : a) x /= sa;
    for (auto& x : b) x /= sb;
    std::vector<std::uint32_t> z(m);
    for (auto& x : z) x = rng() % 5;
    const auto p = model_from_probs(a), q = model_from_probs(b);
    CHECK(std::abs(log_weight_ng(p, q, from_dense(z)) + log_weight_ng(q, p, from_dense(z))) < 1e-12);
  }
}

TEST_CASE("model file round trip") {
  hir::testing::TempDir dir;
  const std::vector<FeatureVector> zs = {featurize("the quick brown fox", 101),
                                         featurize("jumps over the lazy dog.", 101)};
  const auto model = fit_multinomial(zs, 101, 1e-5);
  save_model(model, dir / "m.json");
  const auto back = load_multinomial(dir / "m.json");
  CHECK(back.m == model.m);
  CHECK(back.lambda == model.lambda);
  CHECK(back.total_ngrams_seen == model.total_ngrams_seen);
  const auto z = featurize("the lazy fox", 101);
  CHECK(std::abs(log_prob(back, z) - log_prob(model, z)) < 1e-12);

  const auto raw = fit_multinomial(std::vector<FeatureVector>{from_dense(std::vector<std::uint32_t>{3, 0})}, 2, 0.0);
  save_model(raw, dir / "raw.json");
  CHECK(load_multinomial(dir / "raw.json").log_gamma[1] == -std::numeric_limits<double>::infinity());
}

TEST_CASE("fit_corpus streams a corpus file") {
  hir::testing::TempDir dir;
  const std::vector<std::string> texts = {"a b", "b c", "c d e"};
  hir::testing::write_corpus(dir / "c.jsonl", texts);
  std::vector<FeatureVector> zs;
  for (const auto& t : texts) zs.push_back(featurize(t, 50));
  CHECK(fit_corpus(dir / "c.jsonl", 50, 1e-5).log_gamma == fit_multinomial(zs, 50, 1e-5).log_gamma);
  CHECK(fit_corpus(dir / "c.jsonl", 50, 1e-5, 1).total_ngrams_seen == 3);
  hir::testing::write_text(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(fit_corpus(dir / "empty.jsonl", 50, 1e-5), DataError);
}
