#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hir/ngram_model.hpp"

namespace hir {

// KL(p || q) over bucket distributions. +inf when q has a zero bucket that p uses.
double kl_divergence(const MultinomialModel& p_model, const MultinomialModel& q_model);

struct BucketContribution {
  std::size_t bucket = 0;
  double contribution = 0.0;  // p_sel[j] * log(p_sel[j] / p_target[j])
};

struct AlignmentReport {
  double kl_selected_vs_target = 0.0;
  double kl_random_vs_target = 0.0;
  std::size_t bucket_occupancy_selected = 0;
  std::size_t bucket_occupancy_target = 0;
  std::vector<BucketContribution> top_diverging_buckets;
};

inline constexpr std::size_t kTopDivergingBuckets = 10;

// Fits one multinomial per corpus and compares selected and random against target.
AlignmentReport alignment_report(const std::filesystem::path& selected,
                                 const std::filesystem::path& random_baseline,
                                 const std::filesystem::path& target, std::size_t m,
                                 double lambda);

// Same, on already fitted models. Occupancy counts buckets with probability
// above the smoothing floor.
AlignmentReport alignment_report(const MultinomialModel& selected, const MultinomialModel& random,
                                 const MultinomialModel& target);

std::string to_json(const AlignmentReport& report);
void print_table(const AlignmentReport& report, std::ostream& out);

}  // namespace hir
