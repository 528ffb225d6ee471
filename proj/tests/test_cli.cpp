// Runs the hir binary end to end.

#include <sys/wait.h>

#include <cstdlib>
#include <random>
#include <set>

#include "doctest.h"
#include "hir/corpus_io.hpp"
#include "json.hpp"
#include "hir/embedding_store.hpp"
#include "hir/mlm_collator.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace hir;
using hir::testing::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(HIR_CLI_PATH) + " " + args + " > '" + out.string() + "' 2> '" +
                          err.string() + "'";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = testing::read_bytes(out);
  r.err = testing::read_bytes(err);
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

void make_corpora(const TempDir& dir) {
  std::mt19937_64 rng(1);
  const auto va = testing::domain_vocabulary('a', 50);
  const auto vb = testing::domain_vocabulary('b', 50);
  std::vector<std::string> raw, tgt;
  for (int i = 0; i < 100; ++i) raw.push_back(testing::random_document(i % 4 == 0 ? vb : va, rng));
  for (int i = 0; i < 20; ++i) tgt.push_back(testing::random_document(vb, rng));
  testing::write_corpus(dir / "raw.jsonl", raw);
  testing::write_corpus(dir / "target.jsonl", tgt);
}

}  // namespace

TEST_CASE("cli: select, rerun, extract") {
  TempDir dir;
  make_corpora(dir);
  const std::string base = "select --raw " + q(dir / "raw.jsonl") + " --target " + q(dir / "target.jsonl") +
                           " --output-dir " + q(dir / "out") + " --ngram-buckets 2000 --alpha 1 --k 10 --seed 4";
  auto r = run(dir, base);
  REQUIRE(r.status == 0);
  const auto manifest_bytes = testing::read_bytes(dir / "out" / "selection.jsonl");
  const auto m = read_selection(dir / "out" / "selection.jsonl");
  CHECK(m.k == 10);
  const auto idx = m.indices();
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 10);

  r = run(dir, base);
  CHECK(r.status == 0);
  CHECK(r.out.find("reused cached stages") != std::string::npos);
  CHECK(testing::read_bytes(dir / "out" / "selection.jsonl") == manifest_bytes);

  r = run(dir, "extract --manifest " + q(dir / "out" / "selection.jsonl") + " --raw " + q(dir / "raw.jsonl") +
                   " --out " + q(dir / "x.jsonl"));
  CHECK(r.status == 0);
  CHECK(testing::read_bytes(dir / "x.jsonl") == testing::read_bytes(dir / "out" / "selected.jsonl"));
}

TEST_CASE("cli: config file with flag override") {
  TempDir dir;
  make_corpora(dir);
  testing::write_text(dir / "run.cfg", "# pipeline\nraw=" + (dir / "raw.jsonl").string() + "\ntarget=" +
                                           (dir / "target.jsonl").string() + "\noutput-dir=" +
                                           (dir / "out").string() + "\nalpha=1\nk=10\nmode=topk\n");
  auto r = run(dir, "select --config " + q(dir / "run.cfg") + " --k 7");
  REQUIRE(r.status == 0);
  CHECK(read_selection(dir / "out" / "selection.jsonl").k == 7);
}

TEST_CASE("cli: missing embeddings for alpha < 1 is a data error naming the file") {
  TempDir dir;
  make_corpora(dir);
  const auto r = run(dir, "select --raw " + q(dir / "raw.jsonl") + " --target " + q(dir / "target.jsonl") +
                              " --output-dir " + q(dir / "out") + " --alpha 0 --k 10");
  CHECK(r.status == 2);
  CHECK(r.err.find("HIREMB01") != std::string::npos);
  CHECK(r.err.find("raw.jsonl.emb") != std::string::npos);
}

TEST_CASE("cli: usage errors exit with 1") {
  TempDir dir;
  CHECK(run(dir, "").status == 1);
  CHECK(run(dir, "select --k 3").status == 1);
  CHECK(run(dir, "no-such-command").status == 1);
  make_corpora(dir);
  CHECK(run(dir, "select --raw " + q(dir / "raw.jsonl") + " --target " + q(dir / "target.jsonl") +
                     " --output-dir " + q(dir / "o") + " --alpha 2 --k 3")
            .status == 1);
}

TEST_CASE("cli: extract with an out-of-range index") {
  TempDir dir;
  make_corpora(dir);
  const std::vector<std::size_t> idx = {1, 250};
  const std::vector<double> w(2, 0.0);
  write_selection(idx, w, w, 0, 1.0, "fp", dir / "m.jsonl");
  const auto r = run(dir, "extract --manifest " + q(dir / "m.jsonl") + " --raw " + q(dir / "raw.jsonl") +
                              " --out " + q(dir / "x.jsonl"));
  CHECK(r.status == 2);
  CHECK(r.err.find("250") != std::string::npos);
}

TEST_CASE("cli: staged subcommands compose") {
  TempDir dir;
  make_corpora(dir);
  REQUIRE(run(dir, "ngram-fit --input " + q(dir / "target.jsonl") + " --out " + q(dir / "p.json") +
                       " --ngram-buckets 500").status == 0);
  REQUIRE(run(dir, "ngram-fit --input " + q(dir / "raw.jsonl") + " --out " + q(dir / "q.json") +
                       " --ngram-buckets 500").status == 0);

  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd;
  EmbeddingMatrix raw_emb(100, 3), tgt_emb(20, 3);
  for (auto& v : raw_emb.data) v = nd(rng);
  for (auto& v : tgt_emb.data) v = nd(rng) + 1.0f;
  write_embeddings(raw_emb, dir / "raw.emb");
  write_embeddings(tgt_emb, dir / "tgt.emb");
  REQUIRE(run(dir, "gmm-fit --input " + q(dir / "tgt.emb") + " --out " + q(dir / "pnn.json") +
                       " --components 2 --gmm-chunk-rows 10 --deterministic").status == 0);
  REQUIRE(run(dir, "gmm-fit --input " + q(dir / "raw.emb") + " --out " + q(dir / "qnn.json") +
                       " --components 3").status == 0);
  const auto r = run(dir, "weights --raw " + q(dir / "raw.jsonl") + " --p-ng " + q(dir / "p.json") + " --q-ng " +
                              q(dir / "q.json") + " --p-nn " + q(dir / "pnn.json") + " --q-nn " +
                              q(dir / "qnn.json") + " --raw-embeddings " + q(dir / "raw.emb") + " --out " +
                              q(dir / "w.jsonl"));
  CHECK(r.status == 0);
  std::ifstream in(dir / "w.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 101);

  CHECK(run(dir, "gmm-fit --input " + q(dir / "tgt.emb") + " --out " + q(dir / "x.json") + " --components 50")
            .status == 1);
}

TEST_CASE("cli: mlm-mask writes input and label lines") {
  TempDir dir;
  testing::write_text(dir / "ids.txt", "5 6 7 8 9 10 11 12\n0 1 2\n\n40 41\n");
  const auto r = run(dir, "mlm-mask --input " + q(dir / "ids.txt") + " --output " + q(dir / "out.txt") +
                              " --select-rate 1 --vocab-size 100 --mask-token-id 3 --special-ids 0,1,2,3 --seed 9");
  REQUIRE(r.status == 0);
  std::ifstream in(dir / "out.txt");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 8);
  CHECK(lines[1] == "5 6 7 8 9 10 11 12");  // every non-special token selected
  CHECK(lines[2] == "0 1 2");
  CHECK(lines[3] == "-100 -100 -100");
  CHECK(lines[4].empty());
  CHECK(lines[5].empty());

  testing::write_text(dir / "bad.txt", "5 500\n");
  CHECK(run(dir, "mlm-mask --input " + q(dir / "bad.txt") + " --output " + q(dir / "o.txt") +
                     " --vocab-size 100 --mask-token-id 3").status == 2);
}

TEST_CASE("cli: eval-align reports both divergences") {
  TempDir dir;
  make_corpora(dir);
  REQUIRE(run(dir, "select --raw " + q(dir / "raw.jsonl") + " --target " + q(dir / "target.jsonl") +
                       " --output-dir " + q(dir / "out") + " --alpha 1 --k 20").status == 0);
  const auto r = run(dir, "eval-align --selected " + q(dir / "out" / "selected.jsonl") + " --target " +
                              q(dir / "target.jsonl") + " --raw " + q(dir / "raw.jsonl") + " --json-out " +
                              q(dir / "report.json"));
  REQUIRE(r.status == 0);
  CHECK(r.out.find("kl_selected_vs_target") != std::string::npos);
  CHECK(r.out.find("KL(random || target)") != std::string::npos);
  const auto report = nlohmann::json::parse(testing::read_bytes(dir / "report.json"));
  CHECK(report["kl_selected_vs_target"].get<double>() < report["kl_random_vs_target"].get<double>());
}
