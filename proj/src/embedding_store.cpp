#include "hir/embedding_store.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <limits>
#include <type_traits>

#include "hir/error.hpp"

namespace hir {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim)
    : rows(rows), dim(dim), data(rows * dim, 0.0f) {
  if (dim == 0) throw UsageError("embedding dim must be at least 1");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
    : rows(rows), dim(dim), data(std::move(data)) {
  if (dim == 0) throw UsageError("embedding dim must be at least 1");
  if (this->data.size() != rows * dim) {
    throw UsageError("embedding data holds " + std::to_string(this->data.size()) +
                     " values, expected rows*dim=" + std::to_string(rows * dim));
  }
}

namespace {

template <typename T>
void put_le(std::vector<char>& buf, T value) {
  using U = std::make_unsigned_t<T>;
  auto v = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(v & 0xFF));
    v = static_cast<U>(v >> 8);
  }
}

template <typename T>
T get_le(const char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<std::uint8_t>(p[i])) << (8 * i);
  }
  return v;
}

}  // namespace

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  if (matrix.dim == 0 || matrix.data.size() != matrix.rows * matrix.dim) {
    throw UsageError("write_embeddings: matrix holds " + std::to_string(matrix.data.size()) +
                     " values, expected rows*dim");
  }
  if (matrix.dim > 0xFFFFFFFFull) throw UsageError("write_embeddings: dim does not fit in 32 bits");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());

  std::vector<char> buf;
  buf.reserve(kEmbeddingHeaderBytes);
  buf.insert(buf.end(), kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  put_le<std::uint64_t>(buf, matrix.rows);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(matrix.dim));
  put_le<std::uint32_t>(buf, 0);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));

  constexpr std::size_t kBlock = 1 << 16;
  for (std::size_t i = 0; i < matrix.data.size(); i += kBlock) {
    const std::size_t n = std::min(kBlock, matrix.data.size() - i);
    buf.clear();
    for (std::size_t k = 0; k < n; ++k) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(matrix.data[i + k]));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  out.flush();
  if (!out) throw DataError("I/O error writing " + path.string());
}

EmbeddingReader::EmbeddingReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open embedding file: " + path.string());
  std::array<char, kEmbeddingHeaderBytes> header{};
  in_.read(header.data(), header.size());
  if (in_.gcount() < static_cast<std::streamsize>(kEmbeddingMagic.size()) ||
      std::string_view(header.data(), kEmbeddingMagic.size()) != kEmbeddingMagic) {
    throw FormatError(path.string() + ": not a HIREMB01 embedding file (bad magic)");
  }
  if (in_.gcount() != static_cast<std::streamsize>(header.size())) {
    throw TruncationError(path.string() + ": truncated header");
  }
  rows_ = static_cast<std::size_t>(get_le<std::uint64_t>(header.data() + 8));
  dim_ = get_le<std::uint32_t>(header.data() + 16);
  if (dim_ == 0) throw FormatError(path.string() + ": dim is zero");

  const auto actual = std::filesystem::file_size(path);
  const auto expected = kEmbeddingHeaderBytes + static_cast<std::uintmax_t>(rows_) * dim_ * 4;
  if (actual != expected) {
    throw TruncationError(path.string() + ": expected " + std::to_string(expected) +
                          " bytes for " + std::to_string(rows_) + "x" + std::to_string(dim_) +
                          ", found " + std::to_string(actual));
  }
}

std::optional<EmbeddingMatrix> EmbeddingReader::next_chunk(std::size_t max_rows) {
  if (max_rows == 0) throw UsageError("next_chunk: chunk size must be at least 1");
  if (next_row_ >= rows_) return std::nullopt;
  const std::size_t n = std::min(max_rows, rows_ - next_row_);
  std::vector<char> raw(n * dim_ * 4);
  in_.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in_.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw TruncationError(path_.string() + ": short read at row " + std::to_string(next_row_));
  }
  std::vector<float> values(n * dim_);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_le<std::uint32_t>(raw.data() + 4 * i));
  }
  next_row_ += n;
  return EmbeddingMatrix(n, dim_, std::move(values));
}

void EmbeddingReader::rewind() {
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kEmbeddingHeaderBytes));
  next_row_ = 0;
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  EmbeddingReader reader(path);
  if (reader.rows() == 0) return EmbeddingMatrix(0, reader.dim());
  auto all = reader.next_chunk(reader.rows());
  return std::move(*all);
}

}  // namespace hir
