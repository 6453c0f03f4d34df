#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "curate/cluster_filter.hpp"
#include "curate/dedup.hpp"
#include "curate/error.hpp"
#include "curate/heuristic_filter.hpp"
#include "curate/parallel.hpp"
#include "curate/text.hpp"
#include "pipeline_internal.hpp"

namespace curate::detail {

using nlohmann::json;

std::string_view to_string(ParamType t) noexcept {
  switch (t) {
    case ParamType::unsigned_int: return "unsigned integer";
    case ParamType::number: return "number";
    case ParamType::boolean: return "boolean";
    case ParamType::string: return "string";
    case ParamType::string_array: return "array of strings";
    case ParamType::number_map: return "object of numbers";
    case ParamType::number_or_null: return "number or null";
  }
  return "?";
}

bool matches(const json& v, ParamType t) {
  switch (t) {
    case ParamType::unsigned_int: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case ParamType::number: return v.is_number();
    case ParamType::boolean: return v.is_boolean();
    case ParamType::string: return v.is_string();
    case ParamType::string_array:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
    case ParamType::number_map:
      return v.is_object() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
    case ParamType::number_or_null: return v.is_number() || v.is_null();
  }
  return false;
}

const std::vector<StageInfo>& stage_catalog() {
  using P = ParamType;
  static const std::vector<StageInfo> catalog{
      {"heuristic", false, true, std::nullopt,
       {{"min_words", P::unsigned_int},
        {"max_words", P::unsigned_int},
        {"max_symbol_word_ratio", P::number},
        {"max_ellipsis_line_frac", P::number},
        {"max_short_line_frac", P::number},
        {"max_incomplete_line_frac", P::number},
        {"min_alpha_word_frac", P::number},
        {"short_line_max_words", P::unsigned_int},
        {"blocklist_urls", P::string},
        {"blocklist_domains", P::string},
        {"blocklist_words", P::string},
        {"anonymize_pii", P::boolean}}},
      {"langid", false, true, "langid", {{"languages", P::string_array}, {"min_confidence", P::number}}},
      {"perplexity", true, true, "lm", {{"per_language", P::boolean}, {"drop_bucket", P::string}}},
      {"quality", false, true, "quality", {{"min_score", P::number}}},
      {"safety", false, true, "safety", {{"min_score", P::number}}},
      {"coherence", false, true, std::nullopt,
       {{"keep", P::number}, {"cut", P::number}, {"drop", P::number}, {"segment_min_words", P::unsigned_int}}},
      {"cluster", true, true, std::nullopt,
       {{"k", P::unsigned_int}, {"max_iters", P::unsigned_int}, {"q_min", P::number}, {"overrides", P::string}}},
      {"dedup_paragraph", true, false, std::nullopt,
       {{"max_occurrences", P::unsigned_int}, {"min_words", P::unsigned_int}, {"mode", P::string}}},
      {"dedup_minhash", true, false, std::nullopt,
       {{"shingle_size", P::unsigned_int},
        {"num_perm", P::unsigned_int},
        {"bands", P::unsigned_int},
        {"rows", P::unsigned_int},
        {"verify_cutoff", P::number_or_null}}},
      {"dedup_exact", true, false, std::nullopt, {}},
      {"dedup_substring", true, false, std::nullopt, {{"window", P::unsigned_int}, {"min_words", P::unsigned_int}}},
      {"topic_sample", false, true, "topic", {{"keep_probability", P::number_map}, {"default_keep", P::number}}},
  };
  return catalog;
}

const StageInfo* find_stage(const std::string& name) {
  for (const auto& s : stage_catalog()) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const std::optional<std::string>& model_path(const ModelPaths& m, const std::string& key) {
  static const std::optional<std::string> none;
  if (key == "lm") return m.lm;
  if (key == "langid") return m.langid;
  if (key == "quality") return m.quality;
  if (key == "safety") return m.safety;
  if (key == "topic") return m.topic;
  if (key == "tokenizer") return m.tokenizer;
  return none;
}

LoadedModels load_models(const PipelineConfig& config) {
  std::set<std::string> needed;
  for (const auto& s : config.stages) {
    if (const auto* info = find_stage(s.name); info && info->model) needed.insert(*info->model);
  }
  LoadedModels m;
  const auto& p = config.models;
  if (needed.count("lm")) m.lm = NgramLM::load(*p.lm);
  if (needed.count("langid")) m.langid = CharNgramProfile::load(*p.langid);
  if (needed.count("quality")) m.quality = LinearClassifier::load(*p.quality);
  if (needed.count("safety")) m.safety = LinearClassifier::load(*p.safety);
  if (needed.count("topic")) m.topic = TopicModel::load(*p.topic);
  if (p.tokenizer) m.tokenizer = BpeTokenizer::load(*p.tokenizer);
  return m;
}

namespace {

template <typename T>
T param(const json& params, const char* key, T fallback) {
  const auto it = params.find(key);
  if (it == params.end() || it->is_null()) return fallback;
  return it->get<T>();
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  for_each_word(text, [&](std::string_view) { ++n; });
  return n;
}

[[noreturn]] void stage_failed(const std::string& stage, const std::string& shard, const std::exception& e) {
  throw Error(ErrorKind::stage_failure, "stage " + stage + ", shard " + shard + ": " + e.what());
}

// fn(doc, report, out) decides the fate of one document.
template <typename F>
std::vector<Document> per_doc(const std::string& stage, Shards& shards, std::size_t workers, StageReport& report, F&& fn) {
  std::vector<StageReport> reports(shards.size());
  std::vector<std::vector<Document>> outs(shards.size());
  parallel_for(shards.size(), workers, [&](std::size_t s) {
    try {
      for (auto& d : shards[s]) {
        ++reports[s].docs_in;
        fn(std::move(d), reports[s], outs[s]);
      }
    } catch (const std::exception& e) {
      stage_failed(stage, std::to_string(s), e);
    }
  });
  std::vector<Document> out;
  for (std::size_t s = 0; s < shards.size(); ++s) {
    report.merge(reports[s]);
    for (auto& d : outs[s]) out.push_back(std::move(d));
  }
  return out;
}

std::vector<Document> flatten(Shards& shards) {
  std::vector<Document> all;
  for (auto& s : shards) {
    for (auto& d : s) all.push_back(std::move(d));
  }
  return all;
}

HeuristicConfig heuristic_config(const json& p) {
  HeuristicConfig c;
  c.min_words = param<std::size_t>(p, "min_words", c.min_words);
  c.max_words = param<std::size_t>(p, "max_words", c.max_words);
  c.max_symbol_word_ratio = param<double>(p, "max_symbol_word_ratio", c.max_symbol_word_ratio);
  c.max_ellipsis_line_frac = param<double>(p, "max_ellipsis_line_frac", c.max_ellipsis_line_frac);
  c.max_short_line_frac = param<double>(p, "max_short_line_frac", c.max_short_line_frac);
  c.max_incomplete_line_frac = param<double>(p, "max_incomplete_line_frac", c.max_incomplete_line_frac);
  c.min_alpha_word_frac = param<double>(p, "min_alpha_word_frac", c.min_alpha_word_frac);
  c.short_line_max_words = param<std::size_t>(p, "short_line_max_words", c.short_line_max_words);
  const auto problems = c.validate();
  if (!problems.empty()) throw Error(ErrorKind::invalid_config, "heuristic: " + problems.front());
  return c;
}

std::vector<Document> heuristic_stage(const StageSpec& spec, Shards& shards, const PipelineConfig& config,
                                      StageReport& report) {
  const HeuristicConfig cfg = heuristic_config(spec.params);
  Blocklists lists;
  if (const auto path = param<std::string>(spec.params, "blocklist_urls", ""); !path.empty()) lists.url_substrings = load_list_file(path);
  if (const auto path = param<std::string>(spec.params, "blocklist_domains", ""); !path.empty()) lists.domains = load_list_file(path);
  if (const auto path = param<std::string>(spec.params, "blocklist_words", ""); !path.empty()) lists.words = load_list_file(path);
  const bool pii = param<bool>(spec.params, "anonymize_pii", true);
  return per_doc(spec.name, shards, config.workers, report, [&](Document d, StageReport& r, std::vector<Document>& out) {
    const FilterVerdict v = heuristic_verdict(d, cfg, lists);
    if (!v.keep) {
      r.drop(v.rule_id);
      return;
    }
    if (pii) {
      PiiResult masked = anonymize_pii(d.text);
      if (masked.replacements > 0) {
        d.text = std::move(masked.text);
        d.meta["pii.replacements"] = std::to_string(masked.replacements);
      }
    }
    ++r.docs_kept;
    out.push_back(std::move(d));
  });
}

std::vector<Document> langid_stage(const StageSpec& spec, Shards& shards, const PipelineConfig& config,
                                   const CharNgramProfile& profile, StageReport& report) {
  const auto langs = param<std::vector<std::string>>(spec.params, "languages", {});
  const std::set<std::string> allowed(langs.begin(), langs.end());
  const double min_conf = param<double>(spec.params, "min_confidence", 0.5);
  return per_doc(spec.name, shards, config.workers, report, [&](Document d, StageReport& r, std::vector<Document>& out) {
    const LanguageGuess g = identify_language(d.text, profile);
    if (g.confidence < min_conf) {
      r.drop("langid-low-confidence");
      return;
    }
    if (!allowed.empty() && !allowed.count(g.lang)) {
      r.drop("langid-unsupported");
      return;
    }
    d.lang = g.lang;
    d.meta["langid.lang"] = g.lang;
    set_meta_number(d, "langid.confidence", g.confidence);
    ++r.docs_kept;
    out.push_back(std::move(d));
  });
}

}  // namespace

std::string doc_language(const Document& d) {
  if (const auto it = d.meta.find("langid.lang"); it != d.meta.end()) return it->second;
  return d.lang.value_or("und");
}

namespace {

std::vector<Document> perplexity_stage(const StageSpec& spec, Shards& shards, const PipelineConfig& config,
                                       const NgramLM& lm, StageReport& report) {
  const bool per_language = param<bool>(spec.params, "per_language", true);
  const auto drop_bucket = param<std::string>(spec.params, "drop_bucket", "tail");
  parallel_for(shards.size(), config.workers, [&](std::size_t s) {
    try {
      for (auto& d : shards[s]) set_meta_number(d, "perplexity.score", lm_perplexity(d.text, lm));
    } catch (const std::exception& e) {
      stage_failed(spec.name, std::to_string(s), e);
    }
  });
  std::vector<Document> all = flatten(shards);
  report.docs_in += all.size();

  // Languages with fewer than three documents use the global tertiles.
  std::map<std::string, std::vector<double>> scores;
  std::vector<double> global;
  for (const auto& d : all) {
    const double ppl = *meta_number(d, "perplexity.score");
    global.push_back(ppl);
    if (per_language) scores[doc_language(d)].push_back(ppl);
  }
  PerplexityBuckets buckets;
  if (global.size() >= 3) buckets.bounds["*"] = tertiles(global);
  for (auto& [lang, v] : scores) {
    if (v.size() >= 3) buckets.bounds[lang] = tertiles(v);
  }

  std::vector<Document> out;
  for (auto& d : all) {
    const double ppl = *meta_number(d, "perplexity.score");
    const Bucket b = buckets.bounds.empty() ? Bucket::head : buckets.bucket(ppl, per_language ? doc_language(d) : "*");
    d.meta["perplexity.bucket"] = std::string(to_string(b));
    if (to_string(b) == drop_bucket) {
      report.drop("perplexity-" + drop_bucket);
      continue;
    }
    ++report.docs_kept;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Document> classifier_stage(const StageSpec& spec, Shards& shards, const PipelineConfig& config,
                                       const LinearClassifier& model, bool safety, StageReport& report) {
  const double min_score = param<double>(spec.params, "min_score", 0.5);
  const std::string key = safety ? "safety.score" : "quality.score";
  const std::string rule = safety ? "safety-below-min" : "quality-below-min";
  return per_doc(spec.name, shards, config.workers, report, [&](Document d, StageReport& r, std::vector<Document>& out) {
    const double s = safety ? score_safety(d, model) : score_quality(d, model);
    if (s < min_score) {
      r.drop(rule);
      return;
    }
    set_meta_number(d, key, s);
    ++r.docs_kept;
    out.push_back(std::move(d));
  });
}

std::vector<Document> coherence_stage(const StageSpec& spec, Shards& shards, const PipelineConfig& config,
                                      StageReport& report) {
  CoherenceThresholds t;
  t.keep = param<double>(spec.params, "keep", t.keep);
  t.cut = param<double>(spec.params, "cut", t.cut);
  t.drop = param<double>(spec.params, "drop", t.drop);
  const auto min_words = param<std::size_t>(spec.params, "segment_min_words", HeuristicConfig{}.min_words);
  return per_doc(spec.name, shards, config.workers, report, [&](Document d, StageReport& r, std::vector<Document>& out) {
    const CoherenceReport rep = coherence_report(d, t);
    switch (rep.action) {
      case CoherenceAction::drop:
        r.drop("coherence-low");
        return;
      case CoherenceAction::keep:
        set_meta_number(d, "coherence.mean", rep.mean);
        ++r.docs_kept;
        out.push_back(std::move(d));
        return;
      case CoherenceAction::segment:
        break;
    }
    // the parent leaves the stream; segments long enough re-enter it
    r.drop("coherence-segmented");
    for (auto& seg : apply_coherence(d, rep)) {
      if (word_count(seg.text) < min_words) continue;
      set_meta_number(seg, "coherence.mean", rep.mean);
      ++r.docs_born;
      out.push_back(std::move(seg));
    }
  });
}

std::vector<Document> cluster_stage(const StageSpec& spec, Shards& shards, const PipelineConfig& config,
                                    StageReport& report) {
  std::vector<Document> all = flatten(shards);
  report.docs_in += all.size();
  if (all.empty()) return all;
  constexpr std::uint32_t kDim = 1u << 16;
  std::vector<HashedFeatureVector> counts(all.size());
  parallel_for(all.size(), config.workers, [&](std::size_t i) { counts[i] = hashed_counts(all[i].text, kDim); });
  const TfidfModel tfidf = fit_tfidf(counts, kDim);
  std::vector<HashedFeatureVector> vecs(all.size());
  parallel_for(all.size(), config.workers, [&](std::size_t i) { vecs[i] = tfidf_transform(counts[i], tfidf); });

  std::set<std::vector<std::pair<std::uint32_t, double>>> distinct;
  for (const auto& v : vecs) {
    if (!v.empty()) distinct.insert(v.entries);
  }
  std::size_t k = param<std::size_t>(spec.params, "k", 0);
  if (k == 0) k = default_cluster_count(all.size());
  k = std::min(k, distinct.size());

  std::vector<std::uint32_t> assignment(all.size(), 0);
  std::vector<std::optional<double>> quality(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) quality[i] = meta_number(all[i], "quality.score");
  if (k > 0) {
    const auto max_iters = param<int>(spec.params, "max_iters", 20);
    const Centroids centroids = fit_kmeans(vecs, k, max_iters, config.seed);
    parallel_for(all.size(), config.workers, [&](std::size_t i) { assignment[i] = assign_cluster(vecs[i], centroids).cluster; });
  } else {
    k = 1;
  }
  std::map<std::uint32_t, ClusterVerdict> overrides;
  if (const auto path = param<std::string>(spec.params, "overrides", ""); !path.empty()) overrides = load_overrides(path);
  const ClusterLabelMap labels = label_clusters(assignment, quality, k, param<double>(spec.params, "q_min", 0.3), overrides);

  std::vector<Document> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (labels.drops(assignment[i])) {
      report.drop("cluster-low-quality");
      continue;
    }
    all[i].meta["cluster.id"] = std::to_string(assignment[i]);
    ++report.docs_kept;
    out.push_back(std::move(all[i]));
  }
  return out;
}

std::vector<Document> topic_stage(const StageSpec& spec, Shards& shards, const PipelineConfig& config,
                                  const TopicModel& model, StageReport& report) {
  SamplingPolicy policy;
  policy.seed = config.seed;
  if (const auto it = spec.params.find("keep_probability"); it != spec.params.end()) {
    policy.keep_probability.clear();
    for (const auto& [label, p] : it->items()) policy.keep_probability[label] = p.get<double>();
  }
  policy.default_keep = param<double>(spec.params, "default_keep", policy.default_keep);
  policy.validate();
  return per_doc(spec.name, shards, config.workers, report, [&](Document d, StageReport& r, std::vector<Document>& out) {
    const std::string label = classify_topic(d.text, model).label;
    if (!keep_document(d.id, label, policy)) {
      r.drop("topic-downsample:" + label);
      return;
    }
    d.meta[kTopicLabelKey] = label;
    ++r.docs_kept;
    out.push_back(std::move(d));
  });
}

template <typename F>
std::vector<Document> guarded(const std::string& stage, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::stage_failure) throw;
    stage_failed(stage, "all", e);
  }
}

template <typename F>
std::vector<Document> global_stage(const std::string& stage, Shards& shards, F&& fn) {
  return guarded(stage, [&] { return fn(flatten(shards)); });
}

}  // namespace

std::vector<Document> run_stage(const StageSpec& spec, Shards shards, const PipelineConfig& config,
                                const LoadedModels& models, StageReport& report) {
  report.stage_name = spec.name;
  const json& p = spec.params;
  const std::string& n = spec.name;
  if (n == "heuristic") return heuristic_stage(spec, shards, config, report);
  if (n == "langid") return langid_stage(spec, shards, config, *models.langid, report);
  if (n == "perplexity") {
    return guarded(n, [&] { return perplexity_stage(spec, shards, config, *models.lm, report); });
  }
  if (n == "quality") return classifier_stage(spec, shards, config, *models.quality, false, report);
  if (n == "safety") return classifier_stage(spec, shards, config, *models.safety, true, report);
  if (n == "coherence") return coherence_stage(spec, shards, config, report);
  if (n == "cluster") {
    return guarded(n, [&] { return cluster_stage(spec, shards, config, report); });
  }
  if (n == "topic_sample") return topic_stage(spec, shards, config, *models.topic, report);
  if (n == "dedup_paragraph") {
    return global_stage(n, shards, [&](std::vector<Document> all) {
      ParagraphDedupParams dp;
      dp.max_occurrences = param<std::uint64_t>(p, "max_occurrences", dp.max_occurrences);
      dp.min_words = param<std::size_t>(p, "min_words", dp.min_words);
      const auto mode = param<std::string>(p, "mode", "two_pass");
      if (mode == "single_pass") dp.mode = ParagraphDedupMode::single_pass;
      else if (mode != "two_pass") throw Error(ErrorKind::invalid_config, "unknown paragraph dedup mode " + mode);
      return paragraph_dedup(std::move(all), dp, report);
    });
  }
  if (n == "dedup_minhash") {
    return global_stage(n, shards, [&](std::vector<Document> all) {
      MinHashDedupParams mp;
      mp.shingle_size = param<std::size_t>(p, "shingle_size", mp.shingle_size);
      mp.num_perm = param<std::size_t>(p, "num_perm", mp.num_perm);
      mp.bands = param<std::size_t>(p, "bands", mp.bands);
      mp.rows = param<std::size_t>(p, "rows", mp.rows);
      if (const auto it = p.find("verify_cutoff"); it != p.end()) {
        mp.verify_cutoff = it->is_null() ? std::nullopt : std::optional<double>(it->get<double>());
      }
      mp.workers = config.workers;
      return minhash_dedup(std::move(all), mp, report);
    });
  }
  if (n == "dedup_exact") {
    return global_stage(n, shards, [&](std::vector<Document> all) { return exact_dedup(std::move(all), report); });
  }
  if (n == "dedup_substring") {
    return global_stage(n, shards, [&](std::vector<Document> all) {
      SubstringDedupParams sp;
      sp.window = param<std::size_t>(p, "window", sp.window);
      sp.min_words = param<std::size_t>(p, "min_words", sp.min_words);
      return substring_dedup(std::move(all), sp, report);
    });
  }
  throw Error(ErrorKind::invalid_config, "unknown stage " + n);
}

}  // namespace curate::detail
