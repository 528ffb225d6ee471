#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hir/ngram_featurizer.hpp"

namespace hir {

inline constexpr double kDefaultSmoothing = 1e-5;

// Bag-of-hashed-n-grams multinomial: P(z) = prod_j gamma[j]^z[j].
struct MultinomialModel {
  std::size_t m = 0;
  std::vector<double> log_gamma;
  double lambda = 0.0;
  std::uint64_t total_ngrams_seen = 0;
};

// Exact integer bucket sums. Partial accumulators over shards merge by addition,
// so the fitted model does not depend on input order or sharding.
class MultinomialAccumulator {
 public:
  explicit MultinomialAccumulator(std::size_t m);

  void add(const FeatureVector& z);
  void merge(const MultinomialAccumulator& other);

  // gamma = (1 - lambda) * counts / total + lambda / m, stored as logs.
  MultinomialModel finish(double lambda) const;

  std::size_t m() const noexcept { return sums_.size(); }
  std::uint64_t total() const noexcept { return total_; }

 private:
  std::vector<std::uint64_t> sums_;
  std::uint64_t total_ = 0;
};

MultinomialModel fit_multinomial(std::span<const FeatureVector> vectors, std::size_t m,
                                 double lambda = kDefaultSmoothing);

// Featurizes and fits a corpus file in one streaming pass.
MultinomialModel fit_corpus(const std::filesystem::path& corpus, std::size_t m, double lambda,
                            std::optional<std::size_t> limit = {});

// log P(z; gamma).
double log_prob(const MultinomialModel& model, const FeatureVector& z);

// log p(z) - log q(z), optionally divided by z.total.
double log_weight_ng(const MultinomialModel& p_model, const MultinomialModel& q_model,
                     const FeatureVector& z, bool per_token_normalize = false);

void save_model(const MultinomialModel& model, const std::filesystem::path& path);
MultinomialModel load_multinomial(const std::filesystem::path& path);

}  // namespace hir
