#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace curate {

struct Document {
  std::string id;
  std::string source;
  std::optional<std::string> url;
  std::optional<std::string> lang;
  std::string text;
  // Keys are namespaced by the stage that wrote them, e.g. "quality.score".
  std::map<std::string, std::string> meta;

  bool operator==(const Document&) const = default;
};

void set_meta_number(Document& doc, const std::string& key, double value);
std::optional<double> meta_number(const Document& doc, const std::string& key);

struct ShardManifest {
  std::string shard_path;  // file name, relative to the manifest
  std::uint64_t doc_count = 0;
  std::uint64_t byte_count = 0;
  std::uint64_t content_digest = 0;

  bool operator==(const ShardManifest&) const = default;
};

// Order-sensitive digest over document ids.
std::uint64_t ids_digest(std::span<const Document> docs) noexcept;

struct StageReport {
  std::string stage_name;
  std::uint64_t docs_in = 0;
  std::uint64_t docs_kept = 0;
  std::uint64_t docs_dropped = 0;
  // Extra documents created by the stage (coherence segmentation).
  std::uint64_t docs_born = 0;
  std::uint64_t tokens_in = 0;
  std::uint64_t tokens_kept = 0;
  std::map<std::string, std::uint64_t> drop_reasons;

  std::uint64_t docs_out() const noexcept { return docs_kept + docs_born; }
  void drop(const std::string& rule, std::uint64_t n = 1);
  // docs_in == kept + dropped and the drop reasons add up.
  bool consistent() const noexcept;
  void merge(const StageReport& other);

  bool operator==(const StageReport&) const = default;
};

// --- WET ingestion -------------------------------------------------------

// Parses one WET conversion record (headers, blank line, payload).
// Throws Error{malformed_record} or Error{invalid_utf8}.
Document parse_wet_record(std::string_view raw);

// Splits a WET file into raw records using Content-Length framing.
std::vector<std::string_view> split_wet_records(std::string_view file);

struct WetReadStats {
  std::uint64_t records = 0;
  std::uint64_t parsed = 0;
  std::uint64_t payload_bytes = 0;
  std::map<std::string, std::uint64_t> skip_reasons;
};

std::vector<Document> read_wet(std::string_view file, WetReadStats& stats);

// --- JSONL shards ----------------------------------------------------------

std::string document_to_json(const Document& doc);
// Throws Error{parse_error} on bad syntax and Error{missing_id} without an id.
Document document_from_json(std::string_view line);

class JsonlReader {
 public:
  explicit JsonlReader(const std::filesystem::path& path);

  // Next well-formed document; bad lines are counted and skipped.
  // A line without an id throws Error{missing_id}.
  std::optional<Document> next();

  std::uint64_t skipped() const noexcept { return skipped_; }
  std::uint64_t line_number() const noexcept { return line_no_; }

 private:
  std::ifstream in_;
  std::uint64_t skipped_ = 0;
  std::uint64_t line_no_ = 0;
};

struct ShardReadResult {
  std::vector<Document> docs;
  std::uint64_t skipped = 0;
};

ShardReadResult read_jsonl_shard(const std::filesystem::path& path);

// Writes to "<path>.partial" and renames on success; the manifest sidecar is
// written next to the shard. On failure the ".partial" file is left behind
// and Error{io_error} is thrown.
ShardManifest write_jsonl_shard(std::span<const Document> docs, const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& shard);
void write_manifest(const ShardManifest& manifest, const std::filesystem::path& path);
ShardManifest read_manifest(const std::filesystem::path& path);

// Canonical dedup key: NFC, lowercase, whitespace runs collapsed to one
// space, trimmed.
std::string dedup_normalize(std::string_view text);

}  // namespace curate
