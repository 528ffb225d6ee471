#pragma once

// Binary embedding matrix file, little-endian:
//   bytes 0-7    magic "HIREMB01"
//   bytes 8-15   uint64 row count
//   bytes 16-19  uint32 dim
//   bytes 20-23  reserved, zero
//   then rows*dim float32 values, row-major. Row i belongs to document i.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace hir {

inline constexpr std::string_view kEmbeddingMagic = "HIREMB01";
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 1;
  std::vector<float> data;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim);
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data);

  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

// Streams row blocks from an embedding file; one block in memory at a time.
class EmbeddingReader {
 public:
  explicit EmbeddingReader(const std::filesystem::path& path);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows_remaining() const noexcept { return rows_ - next_row_; }

  // Up to max_rows rows, or nullopt once every row has been returned.
  std::optional<EmbeddingMatrix> next_chunk(std::size_t max_rows);
  void rewind();

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::size_t next_row_ = 0;
};

EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

}  // namespace hir
