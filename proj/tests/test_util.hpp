#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hir/corpus_io.hpp"
#include "hir/embedding_store.hpp"

namespace hir::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hir_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path write_corpus(const std::filesystem::path& p,
                                          const std::vector<std::string>& texts) {
  std::vector<DocumentRecord> recs;
  for (std::size_t i = 0; i < texts.size(); ++i) recs.push_back({i, texts[i], {}, {}});
  write_documents(recs, p);
  return p;
}

// Isotropic Gaussian blobs; component c has mean centers[c] and sd `sd`.
inline EmbeddingMatrix gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& centers,
                                      const std::vector<double>& weights, double sd,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> noise(0.0, sd);
  const std::size_t dim = centers.front().size();
  EmbeddingMatrix m(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = pick(rng);
    for (std::size_t d = 0; d < dim; ++d) m.data[i * dim + d] = static_cast<float>(centers[c][d] + noise(rng));
  }
  return m;
}

}  // namespace hir::testing
