#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curate/bpe_tokenizer.hpp"
#include "curate/lang_stat_models.hpp"
#include "curate/learned_filters.hpp"
#include "curate/pipeline.hpp"
#include "curate/topic_sampler.hpp"

namespace curate::detail {

enum class ParamType { unsigned_int, number, boolean, string, string_array, number_map, number_or_null };

std::string_view to_string(ParamType t) noexcept;
bool matches(const nlohmann::json& value, ParamType t);

struct StageInfo {
  std::string name;
  bool global = false;  // needs every shard at once
  bool filter = false;  // counts as a filter for ordering warnings
  std::optional<std::string> model;  // key under "models"
  std::map<std::string, ParamType> params;
};

const std::vector<StageInfo>& stage_catalog();
const StageInfo* find_stage(const std::string& name);
const std::optional<std::string>& model_path(const ModelPaths& m, const std::string& key);

struct LoadedModels {
  std::optional<NgramLM> lm;
  std::optional<CharNgramProfile> langid;
  std::optional<LinearClassifier> quality;
  std::optional<LinearClassifier> safety;
  std::optional<TopicModel> topic;
  std::optional<BpeTokenizer> tokenizer;
};

LoadedModels load_models(const PipelineConfig& config);

using Shards = std::vector<std::vector<Document>>;

// Runs one stage over all shards; returns the surviving documents in
// shard order. Counts go to `report`.
std::vector<Document> run_stage(const StageSpec& spec, Shards shards, const PipelineConfig& config,
                                const LoadedModels& models, StageReport& report);

}  // namespace curate::detail

namespace curate::detail {

nlohmann::ordered_json stage_report_to_json(const StageReport& r);
StageReport stage_report_from_json(const nlohmann::json& j);
// Document and token counts by source, language and topic.
MixtureReport mixture_counts(const std::vector<Document>& docs, const BpeTokenizer* tokenizer, std::size_t workers);
std::string doc_language(const Document& d);

}  // namespace curate::detail
