#include "hir/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "hir/error.hpp"
#include "hir/hashing.hpp"
#include "hir/parallel.hpp"
#include "json_util.hpp"

namespace hir {

using detail::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (const double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

void check_finite(const EmbeddingMatrix& data) {
  for (std::size_t i = 0; i < data.rows; ++i) {
    for (const float v : data.row(i)) {
      if (!std::isfinite(v)) throw DataError("non-finite value in embedding row " + std::to_string(i));
    }
  }
}

// Per-component constants for fast scoring.
struct Scorer {
  const DiagonalGmm& model;
  std::vector<double> log_norm;  // log w_c - 0.5 * sum_d log(2 pi var_cd)
  std::vector<double> inv_var;

  explicit Scorer(const DiagonalGmm& m) : model(m), log_norm(m.k), inv_var(m.k * m.dim) {
    for (std::size_t c = 0; c < m.k; ++c) {
      double s = 0.0;
      for (std::size_t d = 0; d < m.dim; ++d) {
        const double v = m.variances[c * m.dim + d];
        s += kLog2Pi + std::log(v);
        inv_var[c * m.dim + d] = 1.0 / v;
      }
      log_norm[c] = m.log_weights[c] - 0.5 * s;
    }
  }

  // Fills per-component joint log-densities and returns their log-sum-exp.
  template <typename T>
  double score(std::span<const T> x, std::span<double> out) const {
    const std::size_t dim = model.dim;
    for (std::size_t c = 0; c < model.k; ++c) {
      const double* mu = model.means.data() + c * dim;
      const double* iv = inv_var.data() + c * dim;
      double q = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = static_cast<double>(x[d]) - mu[d];
        q += diff * diff * iv[d];
      }
      out[c] = log_norm[c] - 0.5 * q;
    }
    return log_sum_exp(out);
  }
};

// Responsibility-weighted sums, taken relative to the current means so the
// variance update does not suffer from cancellation.
struct SuffStats {
  std::vector<double> resp;     // k
  std::vector<double> first;    // k x dim: sum r (x - mu_old)
  std::vector<double> second;   // k x dim: sum r (x - mu_old)^2
  double log_likelihood = 0.0;  // sum over rows

  SuffStats(std::size_t k, std::size_t dim) : resp(k, 0.0), first(k * dim, 0.0), second(k * dim, 0.0) {}

  void merge(const SuffStats& o) {
    for (std::size_t i = 0; i < resp.size(); ++i) resp[i] += o.resp[i];
    for (std::size_t i = 0; i < first.size(); ++i) first[i] += o.first[i];
    for (std::size_t i = 0; i < second.size(); ++i) second[i] += o.second[i];
    log_likelihood += o.log_likelihood;
  }
};

SuffStats e_step(const DiagonalGmm& model, const EmbeddingMatrix& data, std::size_t workers,
                 std::vector<double>& row_ll) {
  const Scorer scorer(model);
  const std::size_t k = model.k;
  const std::size_t dim = model.dim;
  row_ll.assign(data.rows, 0.0);

  workers = std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(data.rows, 1)));
  std::vector<SuffStats> partial(workers, SuffStats(k, dim));
  parallel_shards(data.rows, workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    SuffStats& st = partial[w];
    std::vector<double> lc(k);
    for (std::size_t i = begin; i < end; ++i) {
      const auto x = data.row(i);
      const double lse = scorer.score(x, lc);
      row_ll[i] = lse;
      st.log_likelihood += lse;
      for (std::size_t c = 0; c < k; ++c) {
        const double r = std::exp(lc[c] - lse);
        if (r == 0.0) continue;
        st.resp[c] += r;
        const double* mu = model.means.data() + c * dim;
        double* s1 = st.first.data() + c * dim;
        double* s2 = st.second.data() + c * dim;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = static_cast<double>(x[d]) - mu[d];
          s1[d] += r * diff;
          s2[d] += r * diff * diff;
        }
      }
    }
  });
  for (std::size_t w = 1; w < workers; ++w) partial[0].merge(partial[w]);
  return std::move(partial[0]);
}

std::vector<double> data_variance(const EmbeddingMatrix& data, double variance_floor) {
  std::vector<double> mean(data.dim, 0.0), var(data.dim, 0.0);
  for (std::size_t i = 0; i < data.rows; ++i) {
    const auto x = data.row(i);
    for (std::size_t d = 0; d < data.dim; ++d) mean[d] += x[d];
  }
  for (auto& m : mean) m /= static_cast<double>(std::max<std::size_t>(data.rows, 1));
  for (std::size_t i = 0; i < data.rows; ++i) {
    const auto x = data.row(i);
    for (std::size_t d = 0; d < data.dim; ++d) {
      const double diff = x[d] - mean[d];
      var[d] += diff * diff;
    }
  }
  for (auto& v : var) v = std::max(v / static_cast<double>(std::max<std::size_t>(data.rows, 1)), variance_floor);
  return var;
}

void normalize_log_weights(std::vector<double>& log_weights) {
  const double lse = log_sum_exp(log_weights);
  for (auto& w : log_weights) w -= lse;
}

}  // namespace

void validate(const DiagonalGmm& model) {
  if (model.k == 0) throw FormatError("gmm: k must be at least 1");
  if (model.dim == 0) throw FormatError("gmm: dim must be at least 1");
  if (!(model.variance_floor > 0.0)) throw FormatError("gmm: variance_floor must be positive");
  if (model.log_weights.size() != model.k || model.means.size() != model.k * model.dim ||
      model.variances.size() != model.k * model.dim) {
    throw FormatError("gmm: parameter arrays do not match k and dim");
  }
  double total = 0.0;
  for (const double lw : model.log_weights) total += std::exp(lw);
  if (std::abs(total - 1.0) > 1e-9) throw FormatError("gmm: mixing weights do not sum to 1");
  for (const double v : model.variances) {
    if (!(v >= model.variance_floor) || !std::isfinite(v)) {
      throw FormatError("gmm: variance below floor or non-finite");
    }
  }
  for (const double m : model.means) {
    if (!std::isfinite(m)) throw FormatError("gmm: non-finite mean");
  }
}

double log_density(const DiagonalGmm& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw UsageError("log_density: point has dim " + std::to_string(x.size()) + ", model has " +
                     std::to_string(model.dim));
  }
  const Scorer scorer(model);
  std::vector<double> lc(model.k);
  return scorer.score(x, lc);
}

double log_density(const DiagonalGmm& model, std::span<const float> x) {
  if (x.size() != model.dim) {
    throw UsageError("log_density: point has dim " + std::to_string(x.size()) + ", model has " +
                     std::to_string(model.dim));
  }
  const Scorer scorer(model);
  std::vector<double> lc(model.k);
  return scorer.score(x, lc);
}

double mean_log_likelihood(const DiagonalGmm& model, const EmbeddingMatrix& data,
                           std::size_t workers) {
  if (data.dim != model.dim) throw UsageError("mean_log_likelihood: dimension mismatch");
  if (data.rows == 0) throw UsageError("mean_log_likelihood: no rows");
  const Scorer scorer(model);
  workers = std::max<std::size_t>(1, std::min(workers, data.rows));
  std::vector<double> sums(workers, 0.0);
  parallel_shards(data.rows, workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    std::vector<double> lc(model.k);
    for (std::size_t i = begin; i < end; ++i) sums[w] += scorer.score(data.row(i), lc);
  });
  return std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(data.rows);
}

std::vector<double> responsibilities(const DiagonalGmm& model, const EmbeddingMatrix& data) {
  if (data.dim != model.dim) throw UsageError("responsibilities: dimension mismatch");
  const Scorer scorer(model);
  std::vector<double> out(data.rows * model.k);
  std::vector<double> lc(model.k);
  for (std::size_t i = 0; i < data.rows; ++i) {
    const double lse = scorer.score(data.row(i), lc);
    for (std::size_t c = 0; c < model.k; ++c) out[i * model.k + c] = std::exp(lc[c] - lse);
  }
  return out;
}

DiagonalGmm initialize_kmeanspp(const EmbeddingMatrix& data, std::size_t k, std::uint64_t seed,
                                double variance_floor) {
  if (k == 0) throw UsageError("gmm: k must be at least 1");
  if (data.rows < k) {
    throw UsageError("gmm: " + std::to_string(data.rows) + " rows is fewer than k=" +
                     std::to_string(k) + " components");
  }
  if (!(variance_floor > 0.0)) throw UsageError("gmm: variance_floor must be positive");
  const std::size_t n = data.rows;
  const std::size_t dim = data.dim;
  std::uint64_t counter = 0;
  auto uniform = [&] { return to_open_unit(mix64(seed, counter++)); };

  auto sq_dist = [&](std::size_t i, std::span<const float> center) {
    const auto x = data.row(i);
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(x[d]) - center[d];
      s += diff * diff;
    }
    return s;
  };

  std::vector<std::size_t> centers;
  centers.reserve(k);
  centers.push_back(std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n))));
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = sq_dist(i, data.row(centers[0]));

  while (centers.size() < k) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = uniform() * total;
      double run = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        run += nearest[i];
        if (run >= target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
    }
    centers.push_back(pick);
    const auto c = data.row(pick);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(i, c));
  }

  // Hard assignment to the nearest center (lowest index on ties).
  std::vector<std::size_t> count(k, 0);
  std::vector<double> sum(k * dim, 0.0), sumsq(k * dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double dd = sq_dist(i, data.row(centers[c]));
      if (dd < best_d) {
        best_d = dd;
        best = c;
      }
    }
    ++count[best];
    const auto x = data.row(i);
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(x[d]) - data.row(centers[best])[d];
      sum[best * dim + d] += diff;
      sumsq[best * dim + d] += diff * diff;
    }
  }

  const auto global_var = data_variance(data, variance_floor);
  DiagonalGmm model;
  model.k = k;
  model.dim = dim;
  model.variance_floor = variance_floor;
  model.log_weights.resize(k);
  model.means.resize(k * dim);
  model.variances.resize(k * dim);
  for (std::size_t c = 0; c < k; ++c) {
    const auto center = data.row(centers[c]);
    const double cnt = static_cast<double>(count[c]);
    model.log_weights[c] = std::log(std::max(cnt, 1.0));
    for (std::size_t d = 0; d < dim; ++d) {
      const std::size_t at = c * dim + d;
      if (count[c] == 0) {
        model.means[at] = center[d];
        model.variances[at] = global_var[d];
        continue;
      }
      const double delta = sum[at] / cnt;
      model.means[at] = center[d] + delta;
      model.variances[at] =
          count[c] >= 2 ? std::max(sumsq[at] / cnt - delta * delta, variance_floor) : global_var[d];
    }
  }
  normalize_log_weights(model.log_weights);
  return model;
}

DiagonalGmm em_step(const DiagonalGmm& model, const EmbeddingMatrix& data, double variance_floor,
                    double* log_likelihood, std::size_t workers, std::size_t* reseeded) {
  if (data.dim != model.dim) {
    throw UsageError("gmm: data dim " + std::to_string(data.dim) + " differs from model dim " +
                     std::to_string(model.dim));
  }
  if (data.rows == 0) throw UsageError("gmm: EM step on empty data");
  if (!(variance_floor > 0.0)) throw UsageError("gmm: variance_floor must be positive");

  std::vector<double> row_ll;
  const SuffStats st = e_step(model, data, workers, row_ll);
  const double n = static_cast<double>(data.rows);
  if (log_likelihood != nullptr) *log_likelihood = st.log_likelihood / n;

  const std::size_t k = model.k;
  const std::size_t dim = model.dim;
  DiagonalGmm next = model;
  next.variance_floor = variance_floor;

  std::vector<std::size_t> empty;
  for (std::size_t c = 0; c < k; ++c) {
    const double r = st.resp[c];
    if (r < kEmptyComponentMass) {
      empty.push_back(c);
      continue;
    }
    next.log_weights[c] = std::log(r / n);
    for (std::size_t d = 0; d < dim; ++d) {
      const std::size_t at = c * dim + d;
      const double delta = st.first[at] / r;
      next.means[at] = model.means[at] + delta;
      next.variances[at] = std::max(st.second[at] / r - delta * delta, variance_floor);
    }
  }

  if (!empty.empty()) {
    // Re-seed empty components at the worst-explained points.
    std::vector<std::size_t> order(data.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row_ll[a] < row_ll[b]; });
    const auto global_var = data_variance(data, variance_floor);
    for (std::size_t e = 0; e < empty.size(); ++e) {
      const std::size_t c = empty[e];
      const auto x = data.row(order[e % order.size()]);
      next.log_weights[c] = std::log(1.0 / n);
      for (std::size_t d = 0; d < dim; ++d) {
        next.means[c * dim + d] = x[d];
        next.variances[c * dim + d] = global_var[d];
      }
    }
  }
  if (reseeded != nullptr) *reseeded = empty.size();
  normalize_log_weights(next.log_weights);
  return next;
}

GmmFit fit_em(const EmbeddingMatrix& data, std::size_t k, const std::optional<DiagonalGmm>& init,
              const GmmOptions& options) {
  if (k == 0) throw UsageError("gmm: k must be at least 1");
  if (!(options.variance_floor > 0.0)) throw UsageError("gmm: variance_floor must be positive");
  check_finite(data);

  GmmFit fit;
  if (init) {
    if (init->k != k || init->dim != data.dim) {
      throw UsageError("gmm: initial model shape (k=" + std::to_string(init->k) + ", dim=" +
                       std::to_string(init->dim) + ") does not match requested fit");
    }
    fit.model = *init;
  } else {
    if (data.rows < k) {
      throw UsageError("gmm: " + std::to_string(data.rows) + " rows is fewer than k=" +
                       std::to_string(k) + " components");
    }
    fit.model = initialize_kmeanspp(data, k, options.seed, options.variance_floor);
  }
  if (options.max_iter == 0 || data.rows == 0) return fit;

  auto& trace = fit.stats.log_likelihood_trace;
  for (std::size_t it = 0; it < options.max_iter; ++it) {
    double ll = 0.0;
    std::size_t reseeded = 0;
    DiagonalGmm next =
        em_step(fit.model, data, options.variance_floor, &ll, options.workers, &reseeded);
    ++fit.stats.iterations_run;
    if (!trace.empty()) {
      const double prev = trace.back();
      if (ll - prev <= options.rel_tol * std::abs(prev)) {
        trace.push_back(ll);
        fit.stats.converged = true;
        break;
      }
    }
    trace.push_back(ll);
    fit.stats.reseeded_components += reseeded;
    fit.model = std::move(next);
  }
  return fit;
}

GmmFit fit_incremental(const ChunkSource& chunks, std::size_t k, const GmmOptions& options) {
  std::optional<GmmFit> result;
  while (auto chunk = chunks()) {
    if (chunk->rows == 0) continue;
    GmmFit step = fit_em(*chunk, k, result ? std::optional<DiagonalGmm>(result->model) : std::nullopt,
                         options);
    if (!result) {
      result = std::move(step);
      continue;
    }
    auto& stats = result->stats;
    stats.iterations_run += step.stats.iterations_run;
    stats.log_likelihood_trace.insert(stats.log_likelihood_trace.end(),
                                      step.stats.log_likelihood_trace.begin(),
                                      step.stats.log_likelihood_trace.end());
    stats.converged = step.stats.converged;
    stats.reseeded_components += step.stats.reseeded_components;
    result->model = std::move(step.model);
  }
  if (!result) throw UsageError("fit_incremental: no data chunks");
  return std::move(*result);
}

GmmFit fit_incremental(std::span<const EmbeddingMatrix> chunks, std::size_t k,
                       const GmmOptions& options) {
  std::size_t next = 0;
  return fit_incremental(
      [&]() -> std::optional<EmbeddingMatrix> {
        if (next >= chunks.size()) return std::nullopt;
        return chunks[next++];
      },
      k, options);
}

void save_model(const DiagonalGmm& model, const std::filesystem::path& path) {
  json j;
  j["type"] = "diagonal_gmm";
  j["k"] = model.k;
  j["dim"] = model.dim;
  j["variance_floor"] = model.variance_floor;
  j["log_weights"] = model.log_weights;
  j["means"] = model.means;
  j["variances"] = model.variances;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump() << '\n';
  if (!out) throw DataError("I/O error writing " + path.string());
}

DiagonalGmm load_gmm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed model file (" + e.what() + ")");
  }
  const std::string ctx = path.string();
  DiagonalGmm model;
  model.k = detail::required<std::size_t>(j, "k", ctx);
  model.dim = detail::required<std::size_t>(j, "dim", ctx);
  model.variance_floor = detail::required<double>(j, "variance_floor", ctx);
  model.log_weights = detail::required<std::vector<double>>(j, "log_weights", ctx);
  model.means = detail::required<std::vector<double>>(j, "means", ctx);
  model.variances = detail::required<std::vector<double>>(j, "variances", ctx);
  validate(model);
  return model;
}

}  // namespace hir
