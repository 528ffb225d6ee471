#include "hir/corpus_io.hpp"

#include <unordered_set>

#include "hir/error.hpp"
#include "json_util.hpp"

namespace hir {

using detail::json;

std::string_view to_string(CorpusRole role) {
  switch (role) {
    case CorpusRole::raw: return "raw";
    case CorpusRole::target: return "target";
    case CorpusRole::selected: return "selected";
  }
  return "unknown";
}

bool is_valid_utf8(std::string_view bytes) noexcept {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(bytes[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

DocumentStream::DocumentStream(const std::filesystem::path& path,
                               std::optional<std::size_t> limit)
    : path_(path), in_(path, std::ios::binary), limit_(limit) {
  if (!in_) throw DataError("cannot open corpus file: " + path.string());
}

std::optional<DocumentRecord> DocumentStream::next() {
  if (limit_ && next_index_ >= *limit_) return std::nullopt;
  if (!std::getline(in_, line_)) {
    if (in_.bad()) throw DataError("I/O error reading " + path_.string());
    return std::nullopt;
  }
  const std::size_t line_no = next_index_ + 1;
  const std::string where = path_.string() + ": line " + std::to_string(line_no);
  if (!line_.empty() && line_.back() == '\r') line_.pop_back();

  if (!is_valid_utf8(line_)) throw DataError(where + ": invalid UTF-8");
  json j;
  try {
    j = json::parse(line_);
  } catch (const json::parse_error& e) {
    throw DataError(where + ": malformed record (" + e.what() + ")");
  }
  if (!j.is_object()) throw DataError(where + ": record is not an object");

  DocumentRecord rec;
  rec.index = next_index_;
  const auto text = j.find("text");
  if (text == j.end()) throw DataError(where + ": missing \"text\" field");
  if (!text->is_string()) throw DataError(where + ": \"text\" is not a string");
  rec.text = text->get<std::string>();

  if (const auto id = j.find("id"); id != j.end() && !id->is_null()) {
    if (!id->is_string()) throw DataError(where + ": \"id\" is not a string");
    rec.id = id->get<std::string>();
  }
  if (const auto meta = j.find("meta"); meta != j.end() && !meta->is_null()) {
    if (!meta->is_object()) throw DataError(where + ": \"meta\" is not an object");
    for (const auto& [key, value] : meta->items()) {
      if (!value.is_string()) throw DataError(where + ": meta." + key + " is not a string");
      rec.meta.emplace(key, value.get<std::string>());
    }
  }
  ++next_index_;
  return rec;
}

DocumentStream stream_documents(const std::filesystem::path& path,
                                std::optional<std::size_t> limit) {
  return DocumentStream(path, limit);
}

std::vector<DocumentRecord> read_documents(const std::filesystem::path& path,
                                           std::optional<std::size_t> limit) {
  std::vector<DocumentRecord> out;
  auto stream = stream_documents(path, limit);
  while (auto rec = stream.next()) out.push_back(std::move(*rec));
  return out;
}

std::size_t count_documents(const std::filesystem::path& path,
                            std::optional<std::size_t> limit) {
  auto stream = stream_documents(path, limit);
  while (stream.next()) {
  }
  return stream.records_read();
}

std::string encode_document(const DocumentRecord& record) {
  if (!is_valid_utf8(record.text)) {
    throw DataError("record " + std::to_string(record.index) + ": text is not valid UTF-8");
  }
  json j = json::object();
  j["text"] = record.text;
  if (record.id) j["id"] = *record.id;
  if (!record.meta.empty()) {
    json meta = json::object();
    for (const auto& [key, value] : record.meta) {
      if (!is_valid_utf8(key) || !is_valid_utf8(value)) {
        throw DataError("record " + std::to_string(record.index) + ": meta is not valid UTF-8");
      }
      meta[key] = value;
    }
    j["meta"] = std::move(meta);
  }
  // Newlines inside strings are escaped by the serializer, so one record stays one line.
  return j.dump();
}

DocumentWriter::DocumentWriter(const std::filesystem::path& path, CorpusRole role)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), role_(role) {
  if (!out_) throw DataError("cannot open for writing: " + path.string());
}

void DocumentWriter::write(const DocumentRecord& record) {
  out_ << encode_document(record) << '\n';
  if (!out_) throw DataError("I/O error writing " + path_.string());
  ++count_;
}

CorpusManifest DocumentWriter::finish() {
  out_.flush();
  if (!out_) throw DataError("I/O error writing " + path_.string());
  out_.close();
  return CorpusManifest{path_, count_, role_, std::nullopt};
}

CorpusManifest write_documents(std::span<const DocumentRecord> records,
                               const std::filesystem::path& path, CorpusRole role) {
  DocumentWriter writer(path, role);
  for (const auto& rec : records) writer.write(rec);
  return writer.finish();
}

std::vector<std::size_t> SelectionManifest::indices() const {
  std::vector<std::size_t> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.idx);
  return out;
}

void write_selection(std::span<const std::size_t> indices,
                     std::span<const double> log_weights_ng,
                     std::span<const double> log_weights_nn, std::uint64_t seed,
                     double alpha, std::string_view config_fingerprint,
                     const std::filesystem::path& path) {
  if (indices.size() != log_weights_ng.size() || indices.size() != log_weights_nn.size()) {
    throw UsageError("write_selection: indices and weight lists differ in length");
  }
  std::unordered_set<std::size_t> seen;
  seen.reserve(indices.size());
  for (const auto idx : indices) {
    if (!seen.insert(idx).second) {
      throw UsageError("write_selection: duplicate index " + std::to_string(idx));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  json header = {{"seed", seed},
                 {"k", indices.size()},
                 {"alpha", alpha},
                 {"config_fingerprint", std::string(config_fingerprint)}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < indices.size(); ++i) {
    json row = json::object();
    row["idx"] = indices[i];
    row["log_w_ng"] = detail::real_to_json(log_weights_ng[i]);
    row["log_w_nn"] = detail::real_to_json(log_weights_nn[i]);
    out << row.dump() << '\n';
  }
  out.flush();
  if (!out) throw DataError("I/O error writing " + path.string());
}

SelectionManifest read_selection(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open selection manifest: " + path.string());

  SelectionManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_set<std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": malformed manifest record (" + e.what() + ")");
    }
    if (!have_header) {
      manifest.seed = detail::required<std::uint64_t>(j, "seed", where);
      manifest.k = detail::required<std::size_t>(j, "k", where);
      manifest.alpha = detail::real_from_json(j.value("alpha", json(1.0)), where);
      manifest.config_fingerprint = detail::required<std::string>(j, "config_fingerprint", where);
      have_header = true;
      continue;
    }
    SelectionEntry e;
    e.idx = detail::required<std::size_t>(j, "idx", where);
    if (!seen.insert(e.idx).second) {
      throw FormatError(where + ": duplicate index " + std::to_string(e.idx));
    }
    e.log_w_ng = detail::real_from_json(j.value("log_w_ng", json(0.0)), where);
    e.log_w_nn = detail::real_from_json(j.value("log_w_nn", json(0.0)), where);
    manifest.entries.push_back(e);
  }
  if (!have_header) throw FormatError(path.string() + ": selection manifest has no header");
  if (manifest.entries.size() != manifest.k) {
    throw FormatError(path.string() + ": header declares k=" + std::to_string(manifest.k) +
                      " but " + std::to_string(manifest.entries.size()) + " entries follow");
  }
  return manifest;
}

}  // namespace hir
