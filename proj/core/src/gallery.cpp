#include "snapdiag/gallery.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace snapdiag {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed for " + path.string());
  return std::move(buf).str();
}

// Writes through a sibling temp file so readers never observe a partial file.
void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot rename " + tmp.string() + ": " + ec.message());
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line, line_no);
    pos = end + 1;
  }
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::MalformedManifest, "line " + std::to_string(line_no) + ": " + what);
}

GalleryRecord record_from_json(const ordered_json& j, std::size_t line_no, bool row_required) {
  if (!j.is_object()) malformed(line_no, "expected a JSON object");
  auto string_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) malformed(line_no, std::string("'") + key + "' must be a string");
    return it->get<std::string>();
  };
  GalleryRecord rec;
  rec.id = string_field("id");
  rec.class_label = string_field("class");
  rec.uri = string_field("uri");
  const auto modality = parse_modality(string_field("modality"));
  if (!modality) malformed(line_no, "'modality' must be \"image\" or \"text\"");
  rec.modality = *modality;

  if (auto it = j.find("row"); it != j.end()) {
    if (!it->is_number_unsigned()) malformed(line_no, "'row' must be a non-negative integer");
    rec.row = it->get<std::size_t>();
  } else if (row_required) {
    malformed(line_no, "missing 'row'");
  } else {
    rec.row = std::numeric_limits<std::size_t>::max();
  }

  if (auto it = j.find("caption"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) malformed(line_no, "'caption' must be a string or null");
    rec.caption = it->get<std::string>();
  }
  return rec;
}

ordered_json parse_json_line(std::string_view line, std::size_t line_no) {
  try {
    return ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    malformed(line_no, e.what());
  }
}

}  // namespace

std::string encode_vector_block(std::uint32_t dim, std::span<const float> rows) {
  if (dim == 0) throw Error(ErrorCode::InvariantViolation, "dim must be positive");
  if (rows.size() % dim != 0) throw Error(ErrorCode::DimensionMismatch, "payload is not a whole number of rows");
  std::string out;
  out.reserve(kVectorHeaderBytes + rows.size() * 4);
  out.append(kVectorMagic, sizeof(kVectorMagic));
  put_le(out, dim, 4);
  put_le(out, rows.size() / dim, 8);
  for (float x : rows) put_le(out, std::bit_cast<std::uint32_t>(x), 4);
  return out;
}

std::vector<float> decode_vector_block(std::string_view bytes, VectorBlockHeader& header) {
  if (bytes.size() < kVectorHeaderBytes) {
    if (bytes.size() >= sizeof(kVectorMagic) && std::memcmp(bytes.data(), kVectorMagic, sizeof(kVectorMagic)) != 0) {
      throw Error(ErrorCode::BadMagic, "vectors.bin does not start with PWVEC001");
    }
    throw Error(ErrorCode::TruncatedFile, "vectors.bin is " + std::to_string(bytes.size()) +
                                              " bytes, shorter than the 20-byte header");
  }
  if (std::memcmp(bytes.data(), kVectorMagic, sizeof(kVectorMagic)) != 0) {
    throw Error(ErrorCode::BadMagic, "vectors.bin does not start with PWVEC001");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  header.dim = static_cast<std::uint32_t>(get_le(p + 8, 4));
  header.count = get_le(p + 12, 8);

  const std::uint64_t payload = bytes.size() - kVectorHeaderBytes;
  const auto expected = static_cast<unsigned __int128>(header.count) * header.dim * 4u;
  if (expected != payload) {
    throw Error(ErrorCode::TruncatedFile,
                "header declares " + std::to_string(header.count) + " x " + std::to_string(header.dim) +
                    " floats but the payload holds " + std::to_string(payload) + " bytes");
  }
  if (header.dim == 0) throw Error(ErrorCode::TruncatedFile, "header declares dim 0");

  std::vector<float> rows(static_cast<std::size_t>(header.count) * header.dim);
  const unsigned char* src = p + kVectorHeaderBytes;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(rows.data(), src, rows.size() * sizeof(float));
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(src + 4 * i, 4)));
    }
  }
  return rows;
}

std::string manifest_line(const GalleryRecord& record) {
  ordered_json j;
  j["id"] = record.id;
  j["row"] = record.row;
  j["class"] = record.class_label;
  j["modality"] = to_string(record.modality);
  j["uri"] = record.uri;
  j["caption"] = record.caption ? ordered_json(*record.caption) : ordered_json(nullptr);
  return j.dump();
}

GalleryRecord parse_manifest_line(std::string_view line, std::size_t line_no) {
  return record_from_json(parse_json_line(line, line_no), line_no, true);
}

void write_gallery(std::span<const GalleryRecord> records, std::span<const EmbeddingVector> vectors,
                   const fs::path& dir) {
  if (records.size() != vectors.size()) {
    throw Error(ErrorCode::InvariantViolation, std::to_string(records.size()) + " records but " +
                                                   std::to_string(vectors.size()) + " vectors");
  }
  const std::size_t dim = vectors.empty() ? kDefaultDim : vectors.front().dim();
  std::vector<float> block;
  block.reserve(vectors.size() * dim);
  for (const auto& v : vectors) {
    if (v.dim() != dim) throw Error(ErrorCode::DimensionMismatch, "vectors have mixed dimensions");
    block.insert(block.end(), v.values().begin(), v.values().end());
  }
  std::vector<GalleryRecord> ordered(records.begin(), records.end());
  try {
    write_gallery(build_snapshot(std::move(ordered), std::move(block), dim), dir);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoFailure) throw;
    throw Error(ErrorCode::InvariantViolation, e.what());
  }
}

void write_gallery(const IndexSnapshot& snapshot, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  std::string manifest;
  for (const auto& rec : snapshot.records()) {
    manifest += manifest_line(rec);
    manifest += '\n';
  }
  write_file_atomic(dir / kManifestFile, manifest);
  write_file_atomic(dir / kVectorsFile,
                    encode_vector_block(static_cast<std::uint32_t>(snapshot.dim()), snapshot.vectors()));
}

IndexSnapshot load_gallery(const fs::path& dir) {
  const fs::path vec_path = dir / kVectorsFile;
  const fs::path man_path = dir / kManifestFile;
  if (!fs::exists(vec_path)) throw Error(ErrorCode::IoFailure, vec_path.string() + " does not exist");
  if (!fs::exists(man_path)) throw Error(ErrorCode::IoFailure, man_path.string() + " does not exist");

  VectorBlockHeader header;
  std::vector<float> block = decode_vector_block(read_file(vec_path), header);

  std::vector<std::optional<GalleryRecord>> by_row(header.count);
  std::size_t seen = 0;
  for_each_line(read_file(man_path), [&](std::string_view line, std::size_t line_no) {
    GalleryRecord rec = parse_manifest_line(line, line_no);
    if (rec.row >= header.count) {
      throw Error(ErrorCode::ManifestGap, "line " + std::to_string(line_no) + ": row " + std::to_string(rec.row) +
                                              " outside 0.." + std::to_string(header.count) + "-1");
    }
    if (by_row[rec.row]) {
      throw Error(ErrorCode::ManifestGap, "row " + std::to_string(rec.row) + " listed twice");
    }
    by_row[rec.row] = std::move(rec);
    ++seen;
  });
  if (seen != header.count) {
    throw Error(ErrorCode::ManifestGap, "manifest lists " + std::to_string(seen) + " rows, vectors.bin holds " +
                                            std::to_string(header.count));
  }
  std::vector<GalleryRecord> records;
  records.reserve(by_row.size());
  for (auto& r : by_row) records.push_back(std::move(*r));
  return build_snapshot(std::move(records), std::move(block), header.dim);
}

std::vector<RawVector> read_raw_vectors(const fs::path& path) {
  std::vector<RawVector> out;
  for_each_line(read_file(path), [&](std::string_view line, std::size_t line_no) {
    const auto j = parse_json_line(line, line_no);
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("vector") ||
        !j["vector"].is_array()) {
      malformed(line_no, "expected {\"id\": string, \"vector\": [numbers]}");
    }
    RawVector rv;
    rv.id = j["id"].get<std::string>();
    rv.values.reserve(j["vector"].size());
    for (const auto& x : j["vector"]) {
      if (!x.is_number()) malformed(line_no, "vector components must be numbers");
      rv.values.push_back(x.get<float>());
    }
    out.push_back(std::move(rv));
  });
  return out;
}

std::vector<GalleryRecord> read_ingest_manifest(const fs::path& path) {
  std::vector<GalleryRecord> records;
  bool any_row = false;
  bool all_rows = true;
  for_each_line(read_file(path), [&](std::string_view line, std::size_t line_no) {
    auto rec = record_from_json(parse_json_line(line, line_no), line_no, false);
    const bool has_row = rec.row != std::numeric_limits<std::size_t>::max();
    any_row = any_row || has_row;
    all_rows = all_rows && has_row;
    records.push_back(std::move(rec));
  });
  if (any_row && !all_rows) {
    throw Error(ErrorCode::MalformedManifest, "either every manifest line carries 'row' or none does");
  }
  if (!any_row) {
    for (std::size_t i = 0; i < records.size(); ++i) records[i].row = i;
    return records;
  }
  std::vector<std::optional<GalleryRecord>> by_row(records.size());
  for (auto& rec : records) {
    if (rec.row >= records.size() || by_row[rec.row]) {
      throw Error(ErrorCode::ManifestGap, "manifest rows are not a permutation of 0.." +
                                              std::to_string(records.size()) + "-1");
    }
    by_row[rec.row] = std::move(rec);
  }
  records.clear();
  for (auto& r : by_row) records.push_back(std::move(*r));
  return records;
}

ValidationReport summarize(const IndexSnapshot& snapshot) {
  ValidationReport report;
  report.count = snapshot.count();
  report.dim = snapshot.dim();
  for (std::size_t c = 0; c < snapshot.class_labels().size(); ++c) {
    report.per_class[snapshot.class_labels()[c]] = snapshot.class_counts()[c];
  }
  for (const auto& rec : snapshot.records()) ++report.per_modality[std::string(to_string(rec.modality))];
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream os;
  os << "count\t" << report.count << '\n';
  os << "dim\t" << report.dim << '\n';
  os << "classes\t" << report.per_class.size() << '\n';
  for (const auto& [modality, n] : report.per_modality) os << "modality\t" << modality << '\t' << n << '\n';
  for (const auto& [label, n] : report.per_class) os << "class\t" << label << '\t' << n << '\n';
  return os.str();
}

ValidationReport ingest_raw(const fs::path& manifest_path, std::span<const RawVector> raw, const fs::path& out_dir) {
  const auto records = read_ingest_manifest(manifest_path);

  std::unordered_set<std::string> manifest_ids;
  for (const auto& rec : records) {
    if (!manifest_ids.insert(rec.id).second) throw Error(ErrorCode::DuplicateId, "id '" + rec.id + "' appears more than once");
  }

  std::unordered_map<std::string, const RawVector*> by_id;
  std::optional<std::size_t> dim;
  for (const auto& rv : raw) {
    if (!manifest_ids.count(rv.id)) throw Error(ErrorCode::UnknownVector, "vector for id '" + rv.id + "' has no manifest entry");
    if (!by_id.emplace(rv.id, &rv).second) throw Error(ErrorCode::DuplicateVector, "id '" + rv.id + "' has more than one vector");
    if (!dim) dim = rv.values.size();
    if (rv.values.size() != *dim) {
      throw Error(ErrorCode::DimensionMismatch, "vector for id '" + rv.id + "' has length " +
                                                    std::to_string(rv.values.size()) + ", expected " +
                                                    std::to_string(*dim));
    }
  }

  std::vector<EmbeddingVector> vectors;
  vectors.reserve(records.size());
  for (const auto& rec : records) {
    auto it = by_id.find(rec.id);
    if (it == by_id.end()) throw Error(ErrorCode::MissingVector, "no vector for id '" + rec.id + "'");
    try {
      vectors.push_back(normalize(it->second->values, *dim));
    } catch (const Error& e) {
      throw Error(e.code(), "id '" + rec.id + "': " + e.detail());
    }
  }

  std::vector<float> block;
  block.reserve(records.size() * dim.value_or(kDefaultDim));
  for (const auto& v : vectors) block.insert(block.end(), v.values().begin(), v.values().end());
  auto snapshot = build_snapshot(records, std::move(block), dim.value_or(kDefaultDim));
  write_gallery(snapshot, out_dir);
  return summarize(snapshot);
}

}  // namespace snapdiag
