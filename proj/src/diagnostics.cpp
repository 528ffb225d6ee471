#include "hir/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "hir/error.hpp"
#include "json_util.hpp"

namespace hir {

using detail::json;

namespace {

double kl_term(double lp, double lq) {
  if (lp == -std::numeric_limits<double>::infinity()) return 0.0;
  if (lq == -std::numeric_limits<double>::infinity()) return std::numeric_limits<double>::infinity();
  return std::exp(lp) * (lp - lq);
}

std::size_t occupancy(const MultinomialModel& model) {
  // Buckets that received counts sit strictly above the smoothing floor lambda/m.
  const double floor = model.lambda / static_cast<double>(model.m);
  std::size_t n = 0;
  for (const double lg : model.log_gamma) {
    if (std::exp(lg) > floor * (1.0 + 1e-9)) ++n;
  }
  return n;
}

}  // namespace

double kl_divergence(const MultinomialModel& p_model, const MultinomialModel& q_model) {
  if (p_model.m != q_model.m) {
    throw UsageError("kl_divergence: bucket counts differ (" + std::to_string(p_model.m) + " vs " +
                     std::to_string(q_model.m) + ")");
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < p_model.m; ++j) kl += kl_term(p_model.log_gamma[j], q_model.log_gamma[j]);
  // Rounding can leave a tiny negative value for near-identical inputs.
  return std::max(kl, 0.0);
}

AlignmentReport alignment_report(const MultinomialModel& selected, const MultinomialModel& random,
                                 const MultinomialModel& target) {
  AlignmentReport report;
  report.kl_selected_vs_target = kl_divergence(selected, target);
  report.kl_random_vs_target = kl_divergence(random, target);
  report.bucket_occupancy_selected = occupancy(selected);
  report.bucket_occupancy_target = occupancy(target);

  std::vector<BucketContribution> contrib;
  contrib.reserve(selected.m);
  for (std::size_t j = 0; j < selected.m; ++j) {
    contrib.push_back({j, kl_term(selected.log_gamma[j], target.log_gamma[j])});
  }
  const std::size_t top = std::min(kTopDivergingBuckets, contrib.size());
  std::partial_sort(contrib.begin(), contrib.begin() + static_cast<std::ptrdiff_t>(top), contrib.end(),
                    [](const auto& a, const auto& b) {
                      if (a.contribution != b.contribution) return a.contribution > b.contribution;
                      return a.bucket < b.bucket;
                    });
  contrib.resize(top);
  report.top_diverging_buckets = std::move(contrib);
  return report;
}

AlignmentReport alignment_report(const std::filesystem::path& selected,
                                 const std::filesystem::path& random_baseline,
                                 const std::filesystem::path& target, std::size_t m,
                                 double lambda) {
  const auto sel = fit_corpus(selected, m, lambda);
  const auto rnd = fit_corpus(random_baseline, m, lambda);
  const auto tgt = fit_corpus(target, m, lambda);
  return alignment_report(sel, rnd, tgt);
}

std::string to_json(const AlignmentReport& report) {
  json j;
  j["kl_selected_vs_target"] = detail::real_to_json(report.kl_selected_vs_target);
  j["kl_random_vs_target"] = detail::real_to_json(report.kl_random_vs_target);
  j["bucket_occupancy_selected"] = report.bucket_occupancy_selected;
  j["bucket_occupancy_target"] = report.bucket_occupancy_target;
  json top = json::array();
  for (const auto& b : report.top_diverging_buckets) {
    top.push_back({{"bucket", b.bucket}, {"contribution", detail::real_to_json(b.contribution)}});
  }
  j["top_diverging_buckets"] = std::move(top);
  return j.dump(2);
}

void print_table(const AlignmentReport& report, std::ostream& out) {
  const auto flags = out.flags();
  out << std::left << std::setw(28) << "metric" << "value\n";
  out << std::setw(28) << "KL(selected || target)" << std::setprecision(6)
      << report.kl_selected_vs_target << '\n';
  out << std::setw(28) << "KL(random || target)" << report.kl_random_vs_target << '\n';
  out << std::setw(28) << "occupied buckets (selected)" << report.bucket_occupancy_selected << '\n';
  out << std::setw(28) << "occupied buckets (target)" << report.bucket_occupancy_target << '\n';
  out << "\ntop diverging buckets\n" << std::setw(10) << "bucket" << "contribution\n";
  for (const auto& b : report.top_diverging_buckets) {
    out << std::setw(10) << b.bucket << b.contribution << '\n';
  }
  out.flags(flags);
}

}  // namespace hir
