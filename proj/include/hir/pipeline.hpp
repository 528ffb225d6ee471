#pragma once

// End-to-end selection: featurize, fit channel models, weight, select, extract.
// Each expensive stage caches its output in the output directory next to a
// fingerprint of the inputs that produced it, and is skipped on a match.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hir/corpus_io.hpp"
#include "hir/gmm.hpp"
#include "hir/ngram_model.hpp"
#include "hir/resampler.hpp"

namespace hir {

struct PipelineConfig {
  std::filesystem::path raw_path;
  std::filesystem::path target_path;
  std::filesystem::path output_dir = "hir_out";
  // Default to <corpus path>.emb when unset.
  std::optional<std::filesystem::path> raw_embeddings;
  std::optional<std::filesystem::path> target_embeddings;

  std::size_t m = kDefaultBuckets;
  double lambda = kDefaultSmoothing;

  std::size_t k_raw = 1000;
  std::size_t k_target = 50;
  std::size_t chunk_rows = 100000;
  std::size_t max_iter = 100;
  double rel_tol = 1e-4;
  double variance_floor = kDefaultVarianceFloor;

  std::optional<double> alpha;  // required
  std::size_t k = 0;
  std::uint64_t seed = 0;
  SelectionMode mode = SelectionMode::gumbel_topk;
  bool standardize = false;
  bool per_token_normalize = false;
  bool deterministic = false;

  std::optional<std::size_t> raw_limit;
  std::optional<std::size_t> target_limit;

  std::filesystem::path raw_embedding_path() const;
  std::filesystem::path target_embedding_path() const;
};

// Stable hex digest over every config field.
std::string fingerprint(const PipelineConfig& config);

// Identity of an input file for cache keys: path, size and modification time.
std::string file_identity(const std::filesystem::path& path);

// Weight table file: header {"n", "fingerprint"} then {"idx", "log_w_ng", "log_w_nn"} per line.
void write_weights(const WeightTable& table, const std::string& fingerprint,
                   const std::filesystem::path& path);
WeightTable read_weights(const std::filesystem::path& path, std::string* fingerprint = nullptr);

struct NeuralChannel {
  DiagonalGmm p_nn;
  DiagonalGmm q_nn;
  std::filesystem::path raw_embeddings;
};

// Scores every raw document: n-gram log-weights always, neural log-weights
// when `neural` is given (zero otherwise).
WeightTable compute_weights(const std::filesystem::path& raw_path, std::optional<std::size_t> limit,
                            const MultinomialModel& p_ng, const MultinomialModel& q_ng,
                            bool per_token_normalize, const std::optional<NeuralChannel>& neural,
                            std::size_t chunk_rows = 100000);

// Chunked warm-start fit over the first `limit` rows of an embedding file.
GmmFit fit_embedding_file(const std::filesystem::path& path, std::size_t k,
                          std::size_t chunk_rows, std::optional<std::size_t> limit,
                          const GmmOptions& options);

struct SelectOutcome {
  std::filesystem::path manifest_path;
  std::filesystem::path selected_path;
  std::string fingerprint;
  std::size_t raw_count = 0;
  std::vector<std::string> cache_hits;  // names of stages reused from disk
};

SelectOutcome cmd_select(const PipelineConfig& config);

struct ExtractOutcome {
  std::size_t written = 0;
  std::size_t records_scanned = 0;
  std::size_t passes = 0;
};

ExtractOutcome cmd_extract(const std::filesystem::path& manifest,
                           const std::filesystem::path& raw_path,
                           const std::filesystem::path& out_path);

// Extraction core: writes the records at `indices`, in that order, reading the
// raw corpus once.
ExtractOutcome extract_documents(std::span<const std::size_t> indices,
                                 const std::filesystem::path& raw_path,
                                 const std::filesystem::path& out_path);

// Flat key=value config text. Blank lines and lines starting with '#' are
// skipped; keys and values are trimmed.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in);

}  // namespace hir
