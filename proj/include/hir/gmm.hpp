#pragma once

// Diagonal-covariance Gaussian mixtures fitted by EM, with chunked warm-start
// fitting for data sets that do not fit in memory.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hir/embedding_store.hpp"

namespace hir {

inline constexpr double kDefaultVarianceFloor = 1e-6;
inline constexpr double kEmptyComponentMass = 1e-10;

struct DiagonalGmm {
  std::size_t k = 0;
  std::size_t dim = 0;
  double variance_floor = kDefaultVarianceFloor;
  std::vector<double> log_weights;  // k
  std::vector<double> means;        // k x dim, row-major
  std::vector<double> variances;    // k x dim, row-major

  std::span<const double> mean(std::size_t c) const { return {means.data() + c * dim, dim}; }
  std::span<const double> variance(std::size_t c) const { return {variances.data() + c * dim, dim}; }
};

struct EmStats {
  std::size_t iterations_run = 0;
  std::vector<double> log_likelihood_trace;  // mean log-likelihood per E-step
  bool converged = false;
  std::size_t reseeded_components = 0;
};

struct GmmOptions {
  std::size_t max_iter = 100;
  double rel_tol = 1e-4;
  double variance_floor = kDefaultVarianceFloor;
  std::uint64_t seed = 0;
  // Number of E-step workers; 1 gives bit-identical results across runs.
  std::size_t workers = 1;
};

// Checks k, dim, array sizes, weight normalization and the variance floor.
void validate(const DiagonalGmm& model);

double log_density(const DiagonalGmm& model, std::span<const double> x);
double log_density(const DiagonalGmm& model, std::span<const float> x);

// Mean log-density over the rows of `data`.
double mean_log_likelihood(const DiagonalGmm& model, const EmbeddingMatrix& data,
                           std::size_t workers = 1);

// Posterior responsibilities, n x k row-major. Intended for small inputs.
std::vector<double> responsibilities(const DiagonalGmm& model, const EmbeddingMatrix& data);

// k-means++ seeding followed by one hard assignment to set weights and variances.
DiagonalGmm initialize_kmeanspp(const EmbeddingMatrix& data, std::size_t k,
                                std::uint64_t seed, double variance_floor);

// One E-step followed by one M-step. Returns the updated model; the mean
// log-likelihood of `model` on `data` is written to *log_likelihood if given.
DiagonalGmm em_step(const DiagonalGmm& model, const EmbeddingMatrix& data,
                    double variance_floor, double* log_likelihood = nullptr,
                    std::size_t workers = 1, std::size_t* reseeded = nullptr);

struct GmmFit {
  DiagonalGmm model;
  EmStats stats;
};

// EM from k-means++ seeding, or from `init` verbatim when given.
GmmFit fit_em(const EmbeddingMatrix& data, std::size_t k,
              const std::optional<DiagonalGmm>& init, const GmmOptions& options);

using ChunkSource = std::function<std::optional<EmbeddingMatrix>()>;

// Fits the first chunk from scratch, then refines with each later chunk
// starting from the previous chunk's parameters.
GmmFit fit_incremental(const ChunkSource& chunks, std::size_t k, const GmmOptions& options);
GmmFit fit_incremental(std::span<const EmbeddingMatrix> chunks, std::size_t k,
                       const GmmOptions& options);

void save_model(const DiagonalGmm& model, const std::filesystem::path& path);
DiagonalGmm load_gmm(const std::filesystem::path& path);

}  // namespace hir
