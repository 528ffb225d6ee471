#include "hir/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "hir/error.hpp"
#include "hir/hashing.hpp"
#include "hir/ngram_featurizer.hpp"
#include "hir/parallel.hpp"
#include "json_util.hpp"

namespace hir {

using detail::json;

namespace {

std::string real_key(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string opt_key(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : std::string("none");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest(const std::string& canonical) { return hex64(fnv1a64(canonical)); }

std::filesystem::path fingerprint_path(const std::filesystem::path& file) {
  auto p = file;
  p += ".fp";
  return p;
}

bool cache_valid(const std::filesystem::path& file, const std::string& fp) {
  if (!std::filesystem::exists(file) || !std::filesystem::exists(fingerprint_path(file))) return false;
  std::ifstream in(fingerprint_path(file));
  std::string stored;
  std::getline(in, stored);
  return stored == fp;
}

void store_fingerprint(const std::filesystem::path& file, const std::string& fp) {
  std::ofstream out(fingerprint_path(file), std::ios::trunc);
  out << fp << '\n';
  if (!out) throw DataError("I/O error writing " + fingerprint_path(file).string());
}

void require_file(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DataError("missing " + what + ": " + path.string());
  }
}

}  // namespace

std::filesystem::path PipelineConfig::raw_embedding_path() const {
  if (raw_embeddings) return *raw_embeddings;
  auto p = raw_path;
  p += ".emb";
  return p;
}

std::filesystem::path PipelineConfig::target_embedding_path() const {
  if (target_embeddings) return *target_embeddings;
  auto p = target_path;
  p += ".emb";
  return p;
}

std::string fingerprint(const PipelineConfig& c) {
  std::ostringstream s;
  s << "raw_path=" << c.raw_path.string() << '\n'
    << "target_path=" << c.target_path.string() << '\n'
    << "output_dir=" << c.output_dir.string() << '\n'
    << "raw_embeddings=" << c.raw_embedding_path().string() << '\n'
    << "target_embeddings=" << c.target_embedding_path().string() << '\n'
    << "m=" << c.m << '\n'
    << "lambda=" << real_key(c.lambda) << '\n'
    << "k_raw=" << c.k_raw << '\n'
    << "k_target=" << c.k_target << '\n'
    << "chunk_rows=" << c.chunk_rows << '\n'
    << "max_iter=" << c.max_iter << '\n'
    << "rel_tol=" << real_key(c.rel_tol) << '\n'
    << "variance_floor=" << real_key(c.variance_floor) << '\n'
    << "alpha=" << (c.alpha ? real_key(*c.alpha) : std::string("none")) << '\n'
    << "k=" << c.k << '\n'
    << "seed=" << c.seed << '\n'
    << "mode=" << to_string(c.mode) << '\n'
    << "standardize=" << c.standardize << '\n'
    << "per_token_normalize=" << c.per_token_normalize << '\n'
    << "deterministic=" << c.deterministic << '\n'
    << "raw_limit=" << opt_key(c.raw_limit) << '\n'
    << "target_limit=" << opt_key(c.target_limit) << '\n';
  return digest(s.str());
}

std::string file_identity(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  const auto mtime = std::filesystem::last_write_time(path, ec);
  return path.string() + ":" + std::to_string(ec ? 0 : size) + ":" +
         std::to_string(ec ? 0 : mtime.time_since_epoch().count());
}

void write_weights(const WeightTable& table, const std::string& fp,
                   const std::filesystem::path& path) {
  if (table.log_w_ng.size() != table.log_w_nn.size()) {
    throw UsageError("write_weights: channels differ in length");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << json{{"n", table.size()}, {"fingerprint", fp}}.dump() << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    json row = json::object();
    row["idx"] = i;
    row["log_w_ng"] = detail::real_to_json(table.log_w_ng[i]);
    row["log_w_nn"] = detail::real_to_json(table.log_w_nn[i]);
    out << row.dump() << '\n';
  }
  out.flush();
  if (!out) throw DataError("I/O error writing " + path.string());
}

WeightTable read_weights(const std::filesystem::path& path, std::string* fp) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weights file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty weights file");
  WeightTable table;
  std::size_t n = 0;
  try {
    const auto header = json::parse(line);
    n = detail::required<std::size_t>(header, "n", path.string());
    if (fp != nullptr) *fp = header.value("fingerprint", std::string());
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed weights header (" + e.what() + ")");
  }
  table.log_w_ng.reserve(n);
  table.log_w_nn.reserve(n);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": malformed weight record (" + e.what() + ")");
    }
    if (detail::required<std::size_t>(j, "idx", where) != table.size()) {
      throw FormatError(where + ": weight records out of order");
    }
    table.log_w_ng.push_back(detail::real_from_json(j.at("log_w_ng"), where));
    table.log_w_nn.push_back(detail::real_from_json(j.at("log_w_nn"), where));
  }
  if (table.size() != n) {
    throw TruncationError(path.string() + ": header declares " + std::to_string(n) +
                          " weights, found " + std::to_string(table.size()));
  }
  return table;
}

WeightTable compute_weights(const std::filesystem::path& raw_path, std::optional<std::size_t> limit,
                            const MultinomialModel& p_ng, const MultinomialModel& q_ng,
                            bool per_token_normalize, const std::optional<NeuralChannel>& neural,
                            std::size_t chunk_rows) {
  if (p_ng.m != q_ng.m) throw UsageError("n-gram models differ in bucket count");
  const std::size_t workers = worker_count();
  WeightTable table;

  constexpr std::size_t kBatch = 4096;
  auto stream = stream_documents(raw_path, limit);
  std::vector<std::string> batch;
  auto flush = [&] {
    const std::size_t base = table.log_w_ng.size();
    table.log_w_ng.resize(base + batch.size());
    parallel_shards(batch.size(), workers, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        table.log_w_ng[base + i] =
            log_weight_ng(p_ng, q_ng, featurize(batch[i], p_ng.m), per_token_normalize);
      }
    });
    batch.clear();
  };
  while (auto rec = stream.next()) {
    batch.push_back(std::move(rec->text));
    if (batch.size() == kBatch) flush();
  }
  if (!batch.empty()) flush();
  const std::size_t n = table.log_w_ng.size();
  table.log_w_nn.assign(n, 0.0);
  if (!neural) return table;

  EmbeddingReader reader(neural->raw_embeddings);
  if (reader.rows() < n) {
    throw DataError(neural->raw_embeddings.string() + ": has " + std::to_string(reader.rows()) +
                    " embedding rows but the raw corpus has " + std::to_string(n) + " documents");
  }
  if (reader.dim() != neural->p_nn.dim || reader.dim() != neural->q_nn.dim) {
    throw DataError(neural->raw_embeddings.string() + ": embedding dim " +
                    std::to_string(reader.dim()) + " does not match the fitted mixtures");
  }
  std::size_t done = 0;
  while (done < n) {
    auto chunk = reader.next_chunk(std::min(chunk_rows, n - done));
    if (!chunk) break;
    parallel_shards(chunk->rows, workers, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const auto x = chunk->row(i);
        for (const float v : x) {
          if (!std::isfinite(v)) {
            throw DataError("non-finite value in embedding row " + std::to_string(done + i));
          }
        }
        table.log_w_nn[done + i] = log_density(neural->p_nn, x) - log_density(neural->q_nn, x);
      }
    });
    done += chunk->rows;
  }
  return table;
}

GmmFit fit_embedding_file(const std::filesystem::path& path, std::size_t k, std::size_t chunk_rows,
                          std::optional<std::size_t> limit, const GmmOptions& options) {
  if (chunk_rows == 0) throw UsageError("chunk rows must be at least 1");
  EmbeddingReader reader(path);
  const std::size_t total = limit ? std::min(*limit, reader.rows()) : reader.rows();
  if (total == 0) throw DataError(path.string() + ": no embedding rows to fit");
  std::size_t taken = 0;
  return fit_incremental(
      [&]() -> std::optional<EmbeddingMatrix> {
        if (taken >= total) return std::nullopt;
        auto chunk = reader.next_chunk(std::min(chunk_rows, total - taken));
        if (chunk) taken += chunk->rows;
        return chunk;
      },
      k, options);
}

SelectOutcome cmd_select(const PipelineConfig& config) {
  if (!config.alpha) throw UsageError("alpha is required (--alpha in [0, 1])");
  const double alpha = *config.alpha;
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (config.k == 0) throw UsageError("k must be at least 1");
  require_file(config.raw_path, "raw corpus");
  require_file(config.target_path, "target corpus");
  const bool neural = alpha < 1.0;
  if (neural) {
    for (const auto& p : {config.raw_embedding_path(), config.target_embedding_path()}) {
      if (!std::filesystem::is_regular_file(p)) {
        throw DataError("missing HIREMB01 embedding file: " + p.string() +
                        " (required when alpha < 1; produce it with export-embeddings)");
      }
    }
  }

  std::filesystem::create_directories(config.output_dir);
  SelectOutcome outcome;
  outcome.fingerprint = fingerprint(config);
  const auto dir = config.output_dir;

  // n-gram channel models
  auto ngram_stage = [&](const std::filesystem::path& corpus, std::optional<std::size_t> limit,
                         const char* name) {
    const auto file = dir / (std::string(name) + ".model.json");
    const std::string fp = digest("ngram|" + file_identity(corpus) + "|" + std::to_string(config.m) +
                                  "|" + real_key(config.lambda) + "|" + opt_key(limit));
    if (cache_valid(file, fp)) {
      outcome.cache_hits.emplace_back(name);
      return std::pair{load_multinomial(file), fp};
    }
    auto model = fit_corpus(corpus, config.m, config.lambda, limit);
    save_model(model, file);
    store_fingerprint(file, fp);
    return std::pair{std::move(model), fp};
  };
  const auto [p_ng, p_ng_fp] = ngram_stage(config.target_path, config.target_limit, "p_ng");
  const auto [q_ng, q_ng_fp] = ngram_stage(config.raw_path, config.raw_limit, "q_ng");

  // neural channel models
  std::optional<NeuralChannel> channel;
  std::string nn_fp = "none";
  if (neural) {
    GmmOptions options;
    options.max_iter = config.max_iter;
    options.rel_tol = config.rel_tol;
    options.variance_floor = config.variance_floor;
    options.seed = config.seed;
    options.workers = config.deterministic ? 1 : worker_count();
    auto gmm_stage = [&](const std::filesystem::path& emb, std::size_t k,
                         std::optional<std::size_t> limit, const char* name) {
      const auto file = dir / (std::string(name) + ".model.json");
      const std::string fp = digest(
          "gmm|" + file_identity(emb) + "|" + std::to_string(k) + "|" +
          std::to_string(config.chunk_rows) + "|" + std::to_string(config.max_iter) + "|" +
          real_key(config.rel_tol) + "|" + real_key(config.variance_floor) + "|" +
          std::to_string(config.seed) + "|" + opt_key(limit) + "|" +
          std::to_string(options.workers));
      if (cache_valid(file, fp)) {
        outcome.cache_hits.emplace_back(name);
        return std::pair{load_gmm(file), fp};
      }
      auto fit = fit_embedding_file(emb, k, config.chunk_rows, limit, options);
      save_model(fit.model, file);
      store_fingerprint(file, fp);
      return std::pair{std::move(fit.model), fp};
    };
    auto [p_nn, p_fp] = gmm_stage(config.target_embedding_path(), config.k_target,
                                  config.target_limit, "p_nn");
    auto [q_nn, q_fp] = gmm_stage(config.raw_embedding_path(), config.k_raw, config.raw_limit, "q_nn");
    channel = NeuralChannel{std::move(p_nn), std::move(q_nn), config.raw_embedding_path()};
    nn_fp = p_fp + "," + q_fp + "," + file_identity(config.raw_embedding_path());
  }

  // weights
  const auto weights_file = dir / "weights.jsonl";
  const std::string weights_fp =
      digest("weights|" + file_identity(config.raw_path) + "|" + opt_key(config.raw_limit) + "|" +
             p_ng_fp + "|" + q_ng_fp + "|" + nn_fp + "|" +
             std::to_string(config.per_token_normalize) + "|" + std::to_string(config.chunk_rows));
  WeightTable table;
  std::string stored_fp;
  if (cache_valid(weights_file, weights_fp)) {
    table = read_weights(weights_file, &stored_fp);
    outcome.cache_hits.emplace_back("weights");
  } else {
    table = compute_weights(config.raw_path, config.raw_limit, p_ng, q_ng,
                            config.per_token_normalize, channel, config.chunk_rows);
    write_weights(table, weights_fp, weights_file);
    store_fingerprint(weights_file, weights_fp);
  }
  outcome.raw_count = table.size();
  if (config.k > table.size()) {
    throw DataError("k=" + std::to_string(config.k) + " exceeds the raw corpus size " +
                    std::to_string(table.size()));
  }

  // selection
  const auto combined = combine_log_weights(table, alpha, config.standardize);
  const SelectionResult selection = config.mode == SelectionMode::gumbel_topk
                                        ? gumbel_topk(combined, config.k, config.seed)
                                        : deterministic_topk(combined, config.k);
  std::vector<double> sel_ng, sel_nn;
  sel_ng.reserve(config.k);
  sel_nn.reserve(config.k);
  for (const auto i : selection.indices) {
    sel_ng.push_back(table.log_w_ng[i]);
    sel_nn.push_back(table.log_w_nn[i]);
  }
  outcome.manifest_path = dir / "selection.jsonl";
  outcome.selected_path = dir / "selected.jsonl";
  write_selection(selection.indices, sel_ng, sel_nn, config.seed, alpha, outcome.fingerprint,
                  outcome.manifest_path);
  extract_documents(selection.indices, config.raw_path, outcome.selected_path);
  return outcome;
}

ExtractOutcome extract_documents(std::span<const std::size_t> indices,
                                 const std::filesystem::path& raw_path,
                                 const std::filesystem::path& out_path) {
  // Visit wanted indices in sorted order during one pass, then emit in manifest order.
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DataError("extract: duplicate index in selection");
  }

  ExtractOutcome outcome;
  std::unordered_map<std::size_t, DocumentRecord> found;
  found.reserve(sorted.size());
  if (!sorted.empty()) {
    auto stream = stream_documents(raw_path);
    outcome.passes = 1;
    std::size_t want = 0;
    while (want < sorted.size()) {
      auto rec = stream.next();
      if (!rec) break;
      if (rec->index == sorted[want]) {
        found.emplace(rec->index, std::move(*rec));
        ++want;
      }
    }
    outcome.records_scanned = stream.records_read();
    if (want < sorted.size()) {
      throw DataError("extract: index " + std::to_string(sorted[want]) +
                      " is out of range for raw corpus " + raw_path.string() + " with " +
                      std::to_string(outcome.records_scanned) + " documents");
    }
  }

  DocumentWriter writer(out_path, CorpusRole::selected);
  for (const auto i : indices) writer.write(found.at(i));
  outcome.written = writer.finish().record_count;
  return outcome;
}

ExtractOutcome cmd_extract(const std::filesystem::path& manifest,
                           const std::filesystem::path& raw_path,
                           const std::filesystem::path& out_path) {
  const auto selection = read_selection(manifest);
  const auto indices = selection.indices();
  return extract_documents(indices, raw_path, out_path);
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in) {
  auto trim = [](std::string_view v) {
    const auto b = v.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string();
    const auto e = v.find_last_not_of(" \t\r");
    return std::string(v.substr(b, e - b + 1));
  };
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    auto key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    entries.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return entries;
}

}  // namespace hir
