#include "hir/ngram_model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hir/corpus_io.hpp"
#include "hir/error.hpp"
#include "hir/parallel.hpp"
#include "json_util.hpp"

namespace hir {

using detail::json;

MultinomialAccumulator::MultinomialAccumulator(std::size_t m) : sums_(m, 0) {
  if (m == 0) throw UsageError("multinomial: bucket count must be at least 1");
}

void MultinomialAccumulator::add(const FeatureVector& z) {
  if (z.m != sums_.size()) {
    throw UsageError("multinomial: feature vector has m=" + std::to_string(z.m) +
                     ", model has m=" + std::to_string(sums_.size()));
  }
  for (const auto& [bucket, count] : z.counts) sums_[bucket] += count;
  total_ += z.total;
}

void MultinomialAccumulator::merge(const MultinomialAccumulator& other) {
  if (other.m() != m()) throw UsageError("multinomial: cannot merge accumulators with different m");
  for (std::size_t j = 0; j < sums_.size(); ++j) sums_[j] += other.sums_[j];
  total_ += other.total_;
}

MultinomialModel MultinomialAccumulator::finish(double lambda) const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("multinomial: lambda must lie in [0, 1]");
  if (total_ == 0) throw DataError("multinomial: no n-grams observed (all feature vectors empty)");

  MultinomialModel model;
  model.m = sums_.size();
  model.lambda = lambda;
  model.total_ngrams_seen = total_;
  model.log_gamma.resize(model.m);
  const double total = static_cast<double>(total_);
  const double uniform = lambda / static_cast<double>(model.m);
  for (std::size_t j = 0; j < model.m; ++j) {
    const double mle = static_cast<double>(sums_[j]) / total;
    const double g = lambda == 0.0 ? mle : (1.0 - lambda) * mle + uniform;
    model.log_gamma[j] = std::log(g);
  }
  return model;
}

MultinomialModel fit_multinomial(std::span<const FeatureVector> vectors, std::size_t m,
                                 double lambda) {
  MultinomialAccumulator acc(m);
  for (const auto& z : vectors) acc.add(z);
  return acc.finish(lambda);
}

MultinomialModel fit_corpus(const std::filesystem::path& corpus, std::size_t m, double lambda,
                            std::optional<std::size_t> limit) {
  constexpr std::size_t kBatch = 4096;
  const std::size_t workers = worker_count();
  MultinomialAccumulator total(m);
  auto stream = stream_documents(corpus, limit);
  std::vector<std::string> batch;
  batch.reserve(kBatch);

  auto flush = [&] {
    std::vector<MultinomialAccumulator> partial(std::min(workers, std::max<std::size_t>(batch.size(), 1)),
                                                MultinomialAccumulator(m));
    parallel_shards(batch.size(), partial.size(), [&](std::size_t w, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) partial[w].add(featurize(batch[i], m));
    });
    for (const auto& p : partial) total.merge(p);
    batch.clear();
  };

  while (auto rec = stream.next()) {
    batch.push_back(std::move(rec->text));
    if (batch.size() == kBatch) flush();
  }
  if (!batch.empty()) flush();
  if (stream.records_read() == 0) throw DataError("empty corpus: " + corpus.string());
  return total.finish(lambda);
}

namespace {

void check_m(const MultinomialModel& model, const FeatureVector& z) {
  if (z.m != model.m) {
    throw UsageError("bucket count mismatch: vector m=" + std::to_string(z.m) +
                     ", model m=" + std::to_string(model.m));
  }
}

}  // namespace

double log_prob(const MultinomialModel& model, const FeatureVector& z) {
  check_m(model, z);
  double lp = 0.0;
  for (const auto& [bucket, count] : z.counts) lp += count * model.log_gamma[bucket];
  return lp;
}

double log_weight_ng(const MultinomialModel& p_model, const MultinomialModel& q_model,
                     const FeatureVector& z, bool per_token_normalize) {
  if (p_model.m != q_model.m) throw UsageError("log_weight_ng: models differ in bucket count");
  check_m(p_model, z);
  double w = 0.0;
  for (const auto& [bucket, count] : z.counts) {
    w += count * (p_model.log_gamma[bucket] - q_model.log_gamma[bucket]);
  }
  if (per_token_normalize && z.total > 0) w /= static_cast<double>(z.total);
  return w;
}

void save_model(const MultinomialModel& model, const std::filesystem::path& path) {
  json j;
  j["type"] = "multinomial";
  j["m"] = model.m;
  j["lambda"] = model.lambda;
  j["total_ngrams_seen"] = model.total_ngrams_seen;
  json lg = json::array();
  for (const double v : model.log_gamma) lg.push_back(detail::real_to_json(v));
  j["log_gamma"] = std::move(lg);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump() << '\n';
  if (!out) throw DataError("I/O error writing " + path.string());
}

MultinomialModel load_multinomial(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed model file (" + e.what() + ")");
  }
  const std::string ctx = path.string();
  MultinomialModel model;
  model.m = detail::required<std::size_t>(j, "m", ctx);
  model.lambda = detail::required<double>(j, "lambda", ctx);
  model.total_ngrams_seen = detail::required<std::uint64_t>(j, "total_ngrams_seen", ctx);
  const auto lg = j.find("log_gamma");
  if (lg == j.end() || !lg->is_array()) throw FormatError(ctx + ": missing log_gamma array");
  if (lg->size() != model.m) throw FormatError(ctx + ": log_gamma length differs from m");
  model.log_gamma.reserve(model.m);
  for (const auto& v : *lg) model.log_gamma.push_back(detail::real_from_json(v, ctx));
  return model;
}

}  // namespace hir
