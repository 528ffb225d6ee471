// hir: hybrid importance resampling pipeline.
//
// Subcommands: ngram-fit, gmm-fit, weights, select, extract, mlm-mask, eval-align.
// Exit status: 0 success, 1 usage error, 2 data error.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hir/corpus_io.hpp"
#include "hir/diagnostics.hpp"
#include "hir/error.hpp"
#include "hir/gmm.hpp"
#include "hir/hashing.hpp"
#include "hir/mlm_collator.hpp"
#include "hir/ngram_model.hpp"
#include "hir/parallel.hpp"
#include "hir/pipeline.hpp"
#include "hir/resampler.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Expands `--config FILE` into leading --key=value arguments. Options take the
// last value given, so explicit flags after the expansion win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> expanded;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    std::ifstream in(file);
    if (!in) throw hir::UsageError("cannot read config file: " + file);
    for (auto& [key, value] : hir::parse_config_text(in)) {
      expanded.push_back("--" + key + "=" + value);
    }
  }
  if (rest.empty()) return expanded;
  // Subcommand name first, then config-derived options, then explicit arguments.
  std::vector<std::string> out;
  out.push_back(rest.front());
  out.insert(out.end(), expanded.begin(), expanded.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

std::vector<std::int64_t> parse_ids(const std::string& line, std::size_t line_no) {
  std::vector<std::int64_t> ids;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) {
      throw hir::DataError("line " + std::to_string(line_no) + ": '" + tok + "' is not an integer id");
    }
    ids.push_back(v);
  }
  return ids;
}

void write_ids(std::ostream& out, const std::vector<std::int64_t>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out << ' ';
    out << ids[i];
  }
  out << '\n';
}

struct GmmFlags {
  std::size_t chunk_rows = 100000;
  std::size_t max_iter = 100;
  double rel_tol = 1e-4;
  double variance_floor = hir::kDefaultVarianceFloor;
  std::uint64_t seed = 0;
  bool deterministic = false;
};

void add_gmm_flags(CLI::App* cmd, GmmFlags& g) {
  cmd->add_option("--gmm-chunk-rows", g.chunk_rows, "Rows per EM chunk")->capture_default_str();
  cmd->add_option("--gmm-max-iter", g.max_iter, "EM iterations per chunk")->capture_default_str();
  cmd->add_option("--gmm-rel-tol", g.rel_tol, "Relative log-likelihood tolerance")->capture_default_str();
  cmd->add_option("--variance-floor", g.variance_floor, "Lower bound on variances")->capture_default_str();
  cmd->add_option("--seed", g.seed, "Random seed")->capture_default_str();
  cmd->add_flag("--deterministic", g.deterministic, "Single-worker EM for bit-identical fits");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid importance resampling for pretraining data selection", "hir"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  app.add_option("--config", "Flat key=value file; keys are flag names without dashes");

  // ngram-fit
  fs::path ng_in, ng_out;
  std::size_t ng_m = hir::kDefaultBuckets;
  double ng_lambda = hir::kDefaultSmoothing;
  std::optional<std::size_t> ng_limit;
  auto* ngram_fit = app.add_subcommand("ngram-fit", "Fit a hashed n-gram multinomial to a corpus");
  ngram_fit->add_option("--input", ng_in, "Corpus file")->required();
  ngram_fit->add_option("--out", ng_out, "Model file")->required();
  ngram_fit->add_option("--ngram-buckets", ng_m, "Hash buckets m")->capture_default_str();
  ngram_fit->add_option("--lambda", ng_lambda, "Uniform smoothing mass")->capture_default_str();
  ngram_fit->add_option("--limit", ng_limit, "Use only the first N documents");

  // gmm-fit
  fs::path gm_in, gm_out;
  std::size_t gm_k = 50;
  std::optional<std::size_t> gm_limit;
  GmmFlags gm_flags;
  auto* gmm_fit = app.add_subcommand("gmm-fit", "Fit a diagonal GMM to an embedding file");
  gmm_fit->add_option("--input", gm_in, "HIREMB01 embedding file")->required();
  gmm_fit->add_option("--out", gm_out, "Model file")->required();
  gmm_fit->add_option("--components", gm_k, "Mixture components")->capture_default_str();
  gmm_fit->add_option("--limit", gm_limit, "Use only the first N rows");
  add_gmm_flags(gmm_fit, gm_flags);

  // weights
  fs::path w_raw, w_png, w_qng, w_pnn, w_qnn, w_emb, w_out;
  std::optional<std::size_t> w_limit;
  bool w_per_token = false;
  auto* weights = app.add_subcommand("weights", "Compute per-document log importance weights");
  weights->add_option("--raw", w_raw, "Raw corpus")->required();
  weights->add_option("--p-ng", w_png, "Target n-gram model")->required();
  weights->add_option("--q-ng", w_qng, "Raw n-gram model")->required();
  weights->add_option("--p-nn", w_pnn, "Target GMM");
  weights->add_option("--q-nn", w_qnn, "Raw GMM");
  weights->add_option("--raw-embeddings", w_emb, "Raw embedding file");
  weights->add_option("--out", w_out, "Weights file")->required();
  weights->add_option("--raw-limit", w_limit, "Use only the first N raw documents");
  weights->add_flag("--per-token-normalize", w_per_token, "Divide n-gram log-weights by n-gram count");

  // select
  hir::PipelineConfig cfg;
  GmmFlags sel_gmm;
  std::string sel_mode = "gumbel";
  fs::path raw_emb, target_emb;
  auto* select = app.add_subcommand("select", "Run the full selection pipeline");
  select->add_option("--raw", cfg.raw_path, "Raw corpus")->required();
  select->add_option("--target", cfg.target_path, "Target corpus")->required();
  select->add_option("--output-dir", cfg.output_dir, "Output and cache directory")->capture_default_str();
  select->add_option("--raw-embeddings", raw_emb, "Raw embedding file (default <raw>.emb)");
  select->add_option("--target-embeddings", target_emb, "Target embedding file (default <target>.emb)");
  select->add_option("--ngram-buckets", cfg.m, "Hash buckets m")->capture_default_str();
  select->add_option("--lambda", cfg.lambda, "Uniform smoothing mass")->capture_default_str();
  select->add_option("--gmm-components-raw", cfg.k_raw, "Components of the raw GMM")->capture_default_str();
  select->add_option("--gmm-components-target", cfg.k_target, "Components of the target GMM")
      ->capture_default_str();
  add_gmm_flags(select, sel_gmm);
  select->add_option("--alpha", cfg.alpha, "Weight of the n-gram channel in [0, 1]")->required();
  select->add_option("--k", cfg.k, "Documents to select")->required();
  select->add_option("--mode", sel_mode, "gumbel or topk")->capture_default_str();
  select->add_flag("--standardize-channels", cfg.standardize, "Standardize each log-weight channel");
  select->add_flag("--per-token-normalize", cfg.per_token_normalize,
                   "Divide n-gram log-weights by n-gram count");
  select->add_option("--raw-limit", cfg.raw_limit, "Use only the first N raw documents");
  select->add_option("--target-limit", cfg.target_limit, "Use only the first N target documents");

  // extract
  fs::path ex_manifest, ex_raw, ex_out;
  auto* extract = app.add_subcommand("extract", "Write the documents listed in a selection manifest");
  extract->add_option("--manifest", ex_manifest, "Selection manifest")->required();
  extract->add_option("--raw", ex_raw, "Raw corpus")->required();
  extract->add_option("--out", ex_out, "Output corpus")->required();

  // mlm-mask
  fs::path mk_in, mk_out;
  hir::MaskingConfig mk_cfg;
  std::uint64_t mk_seed = 0;
  std::vector<std::int64_t> mk_specials;
  auto* mlm = app.add_subcommand("mlm-mask", "Apply MLM masking to integer id sequences");
  mlm->add_option("--input", mk_in, "One space-separated id sequence per line")->required();
  mlm->add_option("--output", mk_out, "Input line then label line per sequence")->required();
  mlm->add_option("--select-rate", mk_cfg.select_rate)->capture_default_str();
  mlm->add_option("--mask-rate", mk_cfg.mask_rate)->capture_default_str();
  mlm->add_option("--random-rate", mk_cfg.random_rate)->capture_default_str();
  mlm->add_option("--keep-rate", mk_cfg.keep_rate)->capture_default_str();
  mlm->add_option("--mask-token-id", mk_cfg.mask_token_id)->required();
  mlm->add_option("--vocab-size", mk_cfg.vocab_size)->required();
  mlm->add_option("--special-ids", mk_specials, "Ids never selected")->delimiter(',');
  mlm->add_option("--seed", mk_seed)->capture_default_str();

  // eval-align
  fs::path ev_sel, ev_rnd, ev_tgt, ev_raw, ev_json;
  std::size_t ev_m = hir::kDefaultBuckets;
  double ev_lambda = hir::kDefaultSmoothing;
  std::uint64_t ev_seed = 0;
  auto* eval = app.add_subcommand("eval-align", "Compare selected and random subsets to the target");
  eval->add_option("--selected", ev_sel, "Selected corpus")->required();
  eval->add_option("--target", ev_tgt, "Target corpus")->required();
  auto* ev_random_opt = eval->add_option("--random", ev_rnd, "Random-baseline corpus");
  eval->add_option("--raw", ev_raw, "Raw corpus to draw a random baseline from")->excludes(ev_random_opt);
  eval->add_option("--ngram-buckets", ev_m)->capture_default_str();
  eval->add_option("--lambda", ev_lambda)->capture_default_str();
  eval->add_option("--seed", ev_seed, "Seed for the drawn baseline")->capture_default_str();
  eval->add_option("--json-out", ev_json, "Also write the report here");

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const hir::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*ngram_fit) {
      const auto model = hir::fit_corpus(ng_in, ng_m, ng_lambda, ng_limit);
      hir::save_model(model, ng_out);
      std::cout << "fitted m=" << model.m << " over " << model.total_ngrams_seen << " n-grams -> "
                << ng_out.string() << '\n';
    } else if (*gmm_fit) {
      hir::GmmOptions options;
      options.max_iter = gm_flags.max_iter;
      options.rel_tol = gm_flags.rel_tol;
      options.variance_floor = gm_flags.variance_floor;
      options.seed = gm_flags.seed;
      options.workers = gm_flags.deterministic ? 1 : hir::worker_count();
      const auto fit = hir::fit_embedding_file(gm_in, gm_k, gm_flags.chunk_rows, gm_limit, options);
      hir::save_model(fit.model, gm_out);
      std::cout << "fitted k=" << fit.model.k << " dim=" << fit.model.dim << " in "
                << fit.stats.iterations_run << " EM iterations, final mean log-likelihood "
                << (fit.stats.log_likelihood_trace.empty() ? 0.0 : fit.stats.log_likelihood_trace.back())
                << " -> " << gm_out.string() << '\n';
    } else if (*weights) {
      const auto p_ng = hir::load_multinomial(w_png);
      const auto q_ng = hir::load_multinomial(w_qng);
      std::optional<hir::NeuralChannel> neural;
      const bool any_nn = !w_pnn.empty() || !w_qnn.empty() || !w_emb.empty();
      if (any_nn) {
        if (w_pnn.empty() || w_qnn.empty() || w_emb.empty()) {
          throw hir::UsageError("--p-nn, --q-nn and --raw-embeddings must be given together");
        }
        neural = hir::NeuralChannel{hir::load_gmm(w_pnn), hir::load_gmm(w_qnn), w_emb};
      }
      const auto table = hir::compute_weights(w_raw, w_limit, p_ng, q_ng, w_per_token, neural);
      hir::write_weights(table, "", w_out);
      std::cout << "wrote " << table.size() << " weights -> " << w_out.string() << '\n';
    } else if (*select) {
      cfg.mode = hir::parse_selection_mode(sel_mode);
      cfg.chunk_rows = sel_gmm.chunk_rows;
      cfg.max_iter = sel_gmm.max_iter;
      cfg.rel_tol = sel_gmm.rel_tol;
      cfg.variance_floor = sel_gmm.variance_floor;
      cfg.seed = sel_gmm.seed;
      cfg.deterministic = sel_gmm.deterministic;
      if (!raw_emb.empty()) cfg.raw_embeddings = raw_emb;
      if (!target_emb.empty()) cfg.target_embeddings = target_emb;
      const auto outcome = hir::cmd_select(cfg);
      std::cout << "selected " << cfg.k << " of " << outcome.raw_count << " documents\n"
                << "manifest: " << outcome.manifest_path.string() << '\n'
                << "corpus:   " << outcome.selected_path.string() << '\n'
                << "fingerprint: " << outcome.fingerprint << '\n';
      if (!outcome.cache_hits.empty()) {
        std::cout << "reused cached stages:";
        for (const auto& s : outcome.cache_hits) std::cout << ' ' << s;
        std::cout << '\n';
      }
    } else if (*extract) {
      const auto outcome = hir::cmd_extract(ex_manifest, ex_raw, ex_out);
      std::cout << "extracted " << outcome.written << " documents -> " << ex_out.string() << '\n';
    } else if (*mlm) {
      mk_cfg.special_token_ids = mk_specials;
      hir::validate(mk_cfg);
      std::ifstream in(mk_in);
      if (!in) throw hir::DataError("cannot open " + mk_in.string());
      std::ofstream out(mk_out, std::ios::trunc);
      if (!out) throw hir::DataError("cannot open for writing: " + mk_out.string());
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        const auto ids = parse_ids(line, line_no);
        hir::MaskedBatch batch;
        try {
          batch = hir::mask_tokens(ids, mk_cfg, hir::mix64(mk_seed, line_no - 1));
        } catch (const hir::DataError& e) {
          throw hir::DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        write_ids(out, batch.input_ids);
        write_ids(out, batch.labels);
      }
      if (!out) throw hir::DataError("I/O error writing " + mk_out.string());
      std::cout << "masked " << line_no << " sequences -> " << mk_out.string() << '\n';
    } else if (*eval) {
      if (ev_rnd.empty()) {
        if (ev_raw.empty()) throw hir::UsageError("eval-align needs --random or --raw");
        const std::size_t k = hir::count_documents(ev_sel);
        const std::size_t n = hir::count_documents(ev_raw);
        ev_rnd = ev_sel;
        ev_rnd += ".random.jsonl";
        hir::extract_documents(hir::uniform_sample(n, k, ev_seed), ev_raw, ev_rnd);
      }
      const auto report = hir::alignment_report(ev_sel, ev_rnd, ev_tgt, ev_m, ev_lambda);
      const auto doc = hir::to_json(report);
      std::cout << doc << "\n\n";
      hir::print_table(report, std::cout);
      if (!ev_json.empty()) {
        std::ofstream out(ev_json, std::ios::trunc);
        out << doc << '\n';
        if (!out) throw hir::DataError("I/O error writing " + ev_json.string());
      }
    }
  } catch (const hir::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return EXIT_SUCCESS;
}
