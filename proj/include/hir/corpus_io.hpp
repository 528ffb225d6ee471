#pragma once

// Line-delimited corpus files and selection manifests.
//
// Corpus file: one JSON object per line with a required "text" string, an
// optional "id" string and an optional "meta" object of string values. The
// record index is the 0-based line number.
//
// Selection manifest: a header line {"seed", "k", "alpha", "config_fingerprint"}
// followed by one {"idx", "log_w_ng", "log_w_nn"} line per selected document.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hir {

struct DocumentRecord {
  std::size_t index = 0;
  std::string text;
  std::optional<std::string> id;
  std::map<std::string, std::string> meta;

  bool operator==(const DocumentRecord&) const = default;
};

enum class CorpusRole { raw, target, selected };

std::string_view to_string(CorpusRole role);

struct CorpusManifest {
  std::filesystem::path path;
  std::size_t record_count = 0;
  CorpusRole role = CorpusRole::raw;
  std::optional<std::size_t> limit;
};

bool is_valid_utf8(std::string_view bytes) noexcept;

// Pull-style reader. Holds one record plus the stream buffer in memory.
class DocumentStream {
 public:
  DocumentStream(const std::filesystem::path& path, std::optional<std::size_t> limit = {});

  // Next record in file order, or nullopt at end of file / limit.
  std::optional<DocumentRecord> next();

  std::size_t records_read() const noexcept { return next_index_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::optional<std::size_t> limit_;
  std::size_t next_index_ = 0;
  std::string line_;
};

DocumentStream stream_documents(const std::filesystem::path& path,
                                std::optional<std::size_t> limit = {});

// Convenience for small corpora and tests.
std::vector<DocumentRecord> read_documents(const std::filesystem::path& path,
                                           std::optional<std::size_t> limit = {});

std::size_t count_documents(const std::filesystem::path& path,
                            std::optional<std::size_t> limit = {});

// Serializes one record as a single line (no trailing newline).
std::string encode_document(const DocumentRecord& record);

// Incremental writer for corpora too large to hold in memory.
class DocumentWriter {
 public:
  explicit DocumentWriter(const std::filesystem::path& path,
                          CorpusRole role = CorpusRole::selected);

  void write(const DocumentRecord& record);
  CorpusManifest finish();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  CorpusRole role_;
  std::size_t count_ = 0;
};

CorpusManifest write_documents(std::span<const DocumentRecord> records,
                               const std::filesystem::path& path,
                               CorpusRole role = CorpusRole::selected);

struct SelectionEntry {
  std::size_t idx = 0;
  double log_w_ng = 0.0;
  double log_w_nn = 0.0;
};

struct SelectionManifest {
  std::uint64_t seed = 0;
  std::size_t k = 0;
  double alpha = 1.0;
  std::string config_fingerprint;
  std::vector<SelectionEntry> entries;

  std::vector<std::size_t> indices() const;
};

void write_selection(std::span<const std::size_t> indices,
                     std::span<const double> log_weights_ng,
                     std::span<const double> log_weights_nn, std::uint64_t seed,
                     double alpha, std::string_view config_fingerprint,
                     const std::filesystem::path& path);

SelectionManifest read_selection(const std::filesystem::path& path);

}  // namespace hir
