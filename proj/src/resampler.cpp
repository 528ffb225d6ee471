#include "hir/resampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hir/error.hpp"
#include "hir/hashing.hpp"

namespace hir {

std::string_view to_string(SelectionMode mode) {
  return mode == SelectionMode::gumbel_topk ? "gumbel" : "topk";
}

SelectionMode parse_selection_mode(std::string_view text) {
  if (text == "gumbel" || text == "gumbel_topk") return SelectionMode::gumbel_topk;
  if (text == "topk" || text == "deterministic_topk") return SelectionMode::deterministic_topk;
  throw UsageError("unknown selection mode '" + std::string(text) + "' (expected gumbel or topk)");
}

namespace {

void check_channel(std::span<const double> v, const char* name) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) {
      throw DataError(std::string("NaN in ") + name + " at index " + std::to_string(i));
    }
  }
}

std::vector<double> standardized(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  if (v.empty()) return out;
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (const double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double sd = std::sqrt(var);
  for (auto& x : out) x = sd > 0.0 ? (x - mean) / sd : x - mean;
  return out;
}

// Descending score, lower index on ties.
struct ByScore {
  std::span<const double> scores;
  bool operator()(std::size_t a, std::size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const ByScore cmp{scores};
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), cmp);
    idx.resize(k);
  }
  std::sort(idx.begin(), idx.end(), cmp);
  return idx;
}

void check_k(std::size_t n, std::size_t k) {
  if (k == 0) throw UsageError("selection size k must be at least 1");
  if (k > n) {
    throw UsageError("selection size k=" + std::to_string(k) + " exceeds the " +
                     std::to_string(n) + " available documents");
  }
}

}  // namespace

std::vector<double> combine_log_weights(const WeightTable& table, double alpha, bool standardize) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (table.log_w_ng.size() != table.log_w_nn.size()) {
    throw UsageError("weight channels differ in length");
  }
  check_channel(table.log_w_ng, "log_w_ng");
  check_channel(table.log_w_nn, "log_w_nn");

  const std::vector<double> ng = standardize ? standardized(table.log_w_ng) : table.log_w_ng;
  const std::vector<double> nn = standardize ? standardized(table.log_w_nn) : table.log_w_nn;
  // Endpoints return a channel verbatim; this also avoids 0 * inf from the unused one.
  if (alpha == 1.0) return ng;
  if (alpha == 0.0) return nn;
  std::vector<double> out(ng.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * ng[i] + (1.0 - alpha) * nn[i];
  return out;
}

double gumbel_noise(std::uint64_t seed, std::size_t index) {
  return -std::log(-std::log(to_open_unit(mix64(seed, index))));
}

SelectionResult gumbel_topk(std::span<const double> log_weights, std::size_t k,
                            std::uint64_t seed) {
  check_k(log_weights.size(), k);
  check_channel(log_weights, "log weights");
  std::vector<double> perturbed(log_weights.size());
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    perturbed[i] = log_weights[i] + gumbel_noise(seed, i);
  }
  SelectionResult result;
  result.indices = top_indices(perturbed, k);
  result.scores.reserve(k);
  for (const auto i : result.indices) result.scores.push_back(perturbed[i]);
  result.seed = seed;
  result.mode = SelectionMode::gumbel_topk;
  return result;
}

SelectionResult deterministic_topk(std::span<const double> log_weights, std::size_t k) {
  check_k(log_weights.size(), k);
  check_channel(log_weights, "log weights");
  SelectionResult result;
  result.indices = top_indices(log_weights, k);
  result.scores.reserve(k);
  for (const auto i : result.indices) result.scores.push_back(log_weights[i]);
  result.mode = SelectionMode::deterministic_topk;
  return result;
}

std::vector<std::size_t> full_ranking(std::span<const double> scores) {
  return top_indices(scores, scores.size());
}

std::vector<std::size_t> uniform_sample(std::size_t n, std::size_t k, std::uint64_t seed) {
  const std::vector<double> flat(n, 0.0);
  return gumbel_topk(flat, k, seed).indices;
}

}  // namespace hir
