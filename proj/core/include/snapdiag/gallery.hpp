#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "snapdiag/index.hpp"
#include "snapdiag/model.hpp"

namespace snapdiag {

// On-disk gallery: <dir>/manifest.jsonl plus <dir>/vectors.bin.
//
// vectors.bin layout, all little-endian:
//   bytes 0..7    magic "PWVEC001"
//   bytes 8..11   dim   (uint32)
//   bytes 12..19  count (uint64)
//   bytes 20..    count * dim float32, row-major, unit-norm rows
inline constexpr char kVectorMagic[8] = {'P', 'W', 'V', 'E', 'C', '0', '0', '1'};
inline constexpr std::size_t kVectorHeaderBytes = 20;
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kVectorsFile = "vectors.bin";

struct VectorBlockHeader {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
};

/// Encodes header + payload exactly as stored in vectors.bin.
std::string encode_vector_block(std::uint32_t dim, std::span<const float> rows);

/// Parses and validates a whole vectors.bin image. Throws BadMagic or
/// TruncatedFile; the payload is decoded from little-endian regardless of
/// host byte order.
std::vector<float> decode_vector_block(std::string_view bytes, VectorBlockHeader& header);

/// One manifest.jsonl line: {"id","row","class","modality","uri","caption"}.
std::string manifest_line(const GalleryRecord& record);
GalleryRecord parse_manifest_line(std::string_view line, std::size_t line_no);

void write_gallery(std::span<const GalleryRecord> records, std::span<const EmbeddingVector> vectors,
                   const std::filesystem::path& dir);
void write_gallery(const IndexSnapshot& snapshot, const std::filesystem::path& dir);

/// Loads and validates a gallery directory. Never writes to it.
IndexSnapshot load_gallery(const std::filesystem::path& dir);

struct RawVector {
  std::string id;
  std::vector<float> values;
};

/// Reads JSONL lines of the form {"id": "...", "vector": [...]}.
std::vector<RawVector> read_raw_vectors(const std::filesystem::path& path);

/// Reads an ingestion manifest. Same keys as manifest.jsonl; "row" and
/// "caption" may be omitted, in which case rows follow line order.
std::vector<GalleryRecord> read_ingest_manifest(const std::filesystem::path& path);

struct ValidationReport {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::map<std::string, std::size_t> per_class;
  std::map<std::string, std::size_t> per_modality;
};

ValidationReport summarize(const IndexSnapshot& snapshot);
std::string format_report(const ValidationReport& report);

/// Normalizes externally extracted vectors, joins them to the manifest by
/// id and writes a gallery into out_dir.
///
/// Throws MissingVector / DuplicateVector / UnknownVector / DegenerateVector
/// naming the offending id, DimensionMismatch on ragged input.
ValidationReport ingest_raw(const std::filesystem::path& manifest_path, std::span<const RawVector> raw,
                            const std::filesystem::path& out_dir);

}  // namespace snapdiag
