#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curate/bpe_tokenizer.hpp"
#include "curate/corpus_io.hpp"

namespace curate {

struct StageSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

struct ModelPaths {
  std::optional<std::string> lm;
  std::optional<std::string> langid;
  std::optional<std::string> quality;
  std::optional<std::string> safety;
  std::optional<std::string> topic;
  std::optional<std::string> tokenizer;
};

struct PipelineConfig {
  std::string input;
  std::string output;
  std::uint32_t shards = 1;
  std::uint32_t workers = 1;
  std::uint64_t seed = 0;
  ModelPaths models;
  std::vector<StageSpec> stages;
};

// Every known stage name, in the default cascade order.
const std::vector<std::string>& known_stages();
PipelineConfig default_config();

// Relative paths are resolved against `base_dir`. Throws Error{invalid_config}
// on malformed JSON or wrongly typed top-level fields.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
// Reads a config file; CURATE_INPUT and CURATE_OUTPUT override the paths.
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const PipelineConfig& config);

struct ConfigIssues {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const noexcept { return errors.empty(); }
};

ConfigIssues validate_config(const PipelineConfig& config);

// --- reports -----------------------------------------------------------------

struct MixtureCounts {
  std::uint64_t docs = 0;
  std::uint64_t tokens = 0;

  bool operator==(const MixtureCounts&) const = default;
};

struct MixtureReport {
  std::uint64_t docs_in = 0;
  std::uint64_t docs_out = 0;
  std::vector<StageReport> stages;
  // Token counts are present only when a tokenizer was available.
  bool has_tokens = false;
  std::uint64_t total_tokens = 0;
  std::map<std::string, MixtureCounts> by_source;
  std::map<std::string, MixtureCounts> by_language;
  std::map<std::string, MixtureCounts> by_topic;

  double removal_ratio() const noexcept;
  std::uint64_t docs_dropped() const noexcept;
  std::uint64_t docs_born() const noexcept;
  // Stage chaining and conservation of documents.
  std::vector<std::string> consistency_errors() const;
  // Adds the mixture counts of another report (same token basis).
  void merge_mixture(const MixtureReport& other);

  bool operator==(const MixtureReport&) const = default;
};

// Throws Error{missing_tokenizer} when `tokenizer` is null.
MixtureReport report_mixture(const std::vector<Document>& docs, const BpeTokenizer* tokenizer, std::size_t workers = 1);

nlohmann::ordered_json report_to_json(const MixtureReport& report);
std::string report_to_text(const MixtureReport& report);
void write_report(const MixtureReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& text_path);

// --- execution -----------------------------------------------------------------

struct StageTiming {
  std::string stage_name;
  double seconds = 0;
  std::uint64_t docs = 0;
  std::uint64_t bytes = 0;
};

struct RunOptions {
  bool resume = false;
  // Stop after this many stages have completed (for interrupt testing).
  std::optional<std::size_t> stop_after;
};

struct RunResult {
  MixtureReport report;
  std::vector<StageTiming> timings;
  std::vector<std::string> warnings;
  std::size_t stages_resumed = 0;
  bool completed = false;
};

// Output layout under config.output:
//   stage-<k>-<name>/shard-<i>.jsonl  per-stage shards and manifests
//   stage-<k>-<name>/DONE              completion marker
//   final/shard-<i>.jsonl               output corpus
//   report.json, report.txt             deterministic report
//   throughput.json                     timings
// Throws Error{invalid_config} listing every problem before any work, and
// Error{stage_failure} naming the stage and shard when a stage fails.
RunResult run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

// Loads every *.jsonl file under a directory (sorted by name), or one file.
// Throws Error{duplicate_doc_id}.
std::vector<Document> load_corpus(const std::filesystem::path& input);

std::uint32_t shard_of(const std::string& id, std::uint32_t shards);
std::vector<std::vector<Document>> partition(std::vector<Document> docs, std::uint32_t shards);

void write_shards(const std::vector<std::vector<Document>>& shards, const std::filesystem::path& dir);
std::vector<std::vector<Document>> read_shards(const std::filesystem::path& dir, std::uint32_t shards);
std::string shard_file_name(std::uint32_t shard);

}  // namespace curate
