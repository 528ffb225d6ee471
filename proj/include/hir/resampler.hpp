#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace hir {

struct WeightTable {
  std::vector<double> log_w_ng;
  std::vector<double> log_w_nn;

  std::size_t size() const noexcept { return log_w_ng.size(); }
};

enum class SelectionMode { gumbel_topk, deterministic_topk };

std::string_view to_string(SelectionMode mode);
SelectionMode parse_selection_mode(std::string_view text);

struct SelectionResult {
  std::vector<std::size_t> indices;  // by descending score, lower index first on ties
  std::vector<double> scores;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  SelectionMode mode = SelectionMode::gumbel_topk;
};

// alpha * log_w_ng + (1 - alpha) * log_w_nn. With `standardize`, each channel
// is first shifted to zero mean and scaled to unit standard deviation.
std::vector<double> combine_log_weights(const WeightTable& table, double alpha,
                                        bool standardize = false);

// Standard Gumbel variate for (seed, index); independent of evaluation order.
double gumbel_noise(std::uint64_t seed, std::size_t index);

// Without-replacement sampling with probabilities proportional to exp(log_weights),
// realized as top-k of log_weights plus Gumbel noise.
SelectionResult gumbel_topk(std::span<const double> log_weights, std::size_t k,
                            std::uint64_t seed);

// Top-k by log weight, ties broken by lower index.
SelectionResult deterministic_topk(std::span<const double> log_weights, std::size_t k);

// Indices 0..n-1 ordered by descending score with the same tie rule.
std::vector<std::size_t> full_ranking(std::span<const double> scores);

// k indices drawn uniformly without replacement.
std::vector<std::size_t> uniform_sample(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace hir
