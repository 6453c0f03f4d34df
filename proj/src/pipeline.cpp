#include "curate/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/parallel.hpp"
#include "curate/text.hpp"
#include "pipeline_internal.hpp"

namespace curate {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& known_stages() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& s : detail::stage_catalog()) v.push_back(s.name);
    return v;
  }();
  return names;
}

PipelineConfig default_config() {
  PipelineConfig c;
  for (const char* name : {"heuristic", "langid", "perplexity", "quality", "safety", "coherence", "cluster",
                           "dedup_paragraph", "dedup_minhash", "dedup_exact", "dedup_substring", "topic_sample"}) {
    c.stages.push_back({name, json::object()});
  }
  return c;
}

// --- config ----------------------------------------------------------------------

namespace {

const std::set<std::string> kPathParams{"blocklist_urls", "blocklist_domains", "blocklist_words", "overrides"};

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

[[noreturn]] void config_error(const std::vector<std::string>& errors) {
  std::string msg = "invalid config:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw Error(ErrorKind::invalid_config, msg);
}

}  // namespace

PipelineConfig parse_config(const json& j, const fs::path& base_dir) {
  std::vector<std::string> errors;
  if (!j.is_object()) config_error({"top level must be an object"});
  PipelineConfig c;
  static const std::set<std::string> top{"input", "output", "shards", "workers", "seed", "models", "stages"};
  for (const auto& [key, value] : j.items()) {
    if (!top.count(key)) errors.push_back("unknown field '" + key + "'");
  }
  auto get_string = [&](const char* key, std::string& out) {
    if (!j.contains(key)) return;
    if (j[key].is_string()) out = resolve(j[key].get<std::string>(), base_dir);
    else errors.push_back(std::string("'") + key + "' must be a string");
  };
  auto get_uint = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    if (detail::matches(j[key], detail::ParamType::unsigned_int)) out = j[key].get<std::remove_reference_t<decltype(out)>>();
    else errors.push_back(std::string("'") + key + "' must be an unsigned integer");
  };
  get_string("input", c.input);
  get_string("output", c.output);
  get_uint("shards", c.shards);
  get_uint("workers", c.workers);
  get_uint("seed", c.seed);
  if (j.contains("models")) {
    const auto& m = j["models"];
    if (!m.is_object()) {
      errors.push_back("'models' must be an object");
    } else {
      for (const auto& [key, value] : m.items()) {
        std::optional<std::string>* slot = nullptr;
        if (key == "lm") slot = &c.models.lm;
        else if (key == "langid") slot = &c.models.langid;
        else if (key == "quality") slot = &c.models.quality;
        else if (key == "safety") slot = &c.models.safety;
        else if (key == "topic") slot = &c.models.topic;
        else if (key == "tokenizer") slot = &c.models.tokenizer;
        if (!slot) {
          errors.push_back("unknown model '" + key + "'");
        } else if (!value.is_string()) {
          errors.push_back("model '" + key + "' must be a path string");
        } else {
          *slot = resolve(value.get<std::string>(), base_dir);
        }
      }
    }
  }
  if (j.contains("stages")) {
    const auto& stages = j["stages"];
    if (!stages.is_array()) {
      errors.push_back("'stages' must be an array");
    } else {
      for (std::size_t k = 0; k < stages.size(); ++k) {
        const auto& s = stages[k];
        StageSpec spec;
        if (s.is_string()) {
          spec.name = s.get<std::string>();
        } else if (s.is_object() && s.contains("name") && s["name"].is_string()) {
          spec.name = s["name"].get<std::string>();
          for (const auto& [key, value] : s.items()) {
            if (key != "name" && key != "params") errors.push_back("stage " + std::to_string(k) + ": unknown field '" + key + "'");
          }
          if (s.contains("params")) {
            if (!s["params"].is_object()) errors.push_back("stage '" + spec.name + "': 'params' must be an object");
            else spec.params = s["params"];
          }
        } else {
          errors.push_back("stage " + std::to_string(k) + " must be a name or an object with a 'name'");
          continue;
        }
        for (auto& [key, value] : spec.params.items()) {
          if (kPathParams.count(key) && value.is_string()) value = resolve(value.get<std::string>(), base_dir);
        }
        c.stages.push_back(std::move(spec));
      }
    }
  }
  if (!errors.empty()) config_error(errors);
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_config, "config " + path.string() + ": " + e.what());
  }
  PipelineConfig c = parse_config(j, path.parent_path());
  // environment overrides touch paths only
  if (const char* v = std::getenv("CURATE_INPUT"); v && *v) c.input = v;
  if (const char* v = std::getenv("CURATE_OUTPUT"); v && *v) c.output = v;
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["input"] = c.input;
  j["output"] = c.output;
  j["shards"] = c.shards;
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  json models = json::object();
  for (const char* key : {"lm", "langid", "quality", "safety", "topic", "tokenizer"}) {
    if (const auto& p = detail::model_path(c.models, key)) models[key] = *p;
  }
  j["models"] = models;
  json stages = json::array();
  for (const auto& s : c.stages) stages.push_back({{"name", s.name}, {"params", s.params}});
  j["stages"] = stages;
  return j;
}

ConfigIssues validate_config(const PipelineConfig& c) {
  ConfigIssues issues;
  auto& err = issues.errors;
  if (c.input.empty()) err.push_back("'input' is required");
  else if (!fs::exists(c.input)) err.push_back("input not found: " + c.input);
  if (c.output.empty()) err.push_back("'output' is required");
  if (c.shards == 0) err.push_back("'shards' must be at least 1");
  if (c.workers == 0) err.push_back("'workers' must be at least 1");
  if (c.models.tokenizer && !fs::exists(*c.models.tokenizer)) err.push_back("tokenizer model not found: " + *c.models.tokenizer);

  std::set<std::string> seen;
  bool filter_seen = false;
  bool quality_seen = false;
  for (const auto& s : c.stages) {
    const auto* info = detail::find_stage(s.name);
    if (!info) {
      err.push_back("unknown stage '" + s.name + "'");
      continue;
    }
    if (!seen.insert(s.name).second) err.push_back("stage '" + s.name + "' listed more than once");
    const std::string where = "stage '" + s.name + "': ";
    for (const auto& [key, value] : s.params.items()) {
      const auto it = info->params.find(key);
      if (it == info->params.end()) {
        err.push_back(where + "unknown parameter '" + key + "'");
      } else if (!detail::matches(value, it->second)) {
        err.push_back(where + "parameter '" + key + "' must be " + std::string(detail::to_string(it->second)));
      }
    }
    auto number = [&](const char* key) -> std::optional<double> {
      const auto it = s.params.find(key);
      if (it == s.params.end() || !it->is_number()) return std::nullopt;
      return it->get<double>();
    };
    auto unit = [&](const char* key) {
      if (const auto v = number(key); v && !(*v >= 0.0 && *v <= 1.0)) err.push_back(where + "'" + key + "' must lie in [0, 1]");
    };
    for (const char* key : {"min_score", "min_confidence", "q_min", "default_keep", "keep", "cut", "drop", "verify_cutoff"}) unit(key);
    if (const auto it = s.params.find("keep_probability"); it != s.params.end() && it->is_object()) {
      for (const auto& [label, p] : it->items()) {
        if (p.is_number() && !(p.get<double>() >= 0.0 && p.get<double>() <= 1.0)) {
          err.push_back(where + "keep probability for '" + label + "' must lie in [0, 1]");
        }
      }
    }
    if (const auto it = s.params.find("drop_bucket"); it != s.params.end() && it->is_string()) {
      const auto v = it->get<std::string>();
      if (v != "tail" && v != "middle" && v != "none") err.push_back(where + "'drop_bucket' must be tail, middle or none");
    }
    if (const auto it = s.params.find("mode"); it != s.params.end() && it->is_string()) {
      const auto v = it->get<std::string>();
      if (v != "two_pass" && v != "single_pass") err.push_back(where + "'mode' must be two_pass or single_pass");
    }
    if (s.name == "dedup_minhash") {
      auto uint_param = [&](const char* key, std::uint64_t fallback) {
        const auto it = s.params.find(key);
        return it != s.params.end() && detail::matches(*it, detail::ParamType::unsigned_int) ? it->get<std::uint64_t>() : fallback;
      };
      const auto perm = uint_param("num_perm", 128);
      const auto bands = uint_param("bands", 32);
      const auto rows = uint_param("rows", 4);
      if (perm == 0 || bands * rows != perm) err.push_back(where + "bands x rows must equal num_perm");
    }
    if (s.name == "dedup_substring") {
      if (const auto it = s.params.find("window"); it != s.params.end() && it->is_number() && it->get<double>() == 0) {
        err.push_back(where + "'window' must be positive");
      }
    }
    for (const auto& key : kPathParams) {
      const auto it = s.params.find(key);
      if (it != s.params.end() && it->is_string() && !fs::exists(it->get<std::string>())) {
        err.push_back(where + "file not found: " + it->get<std::string>());
      }
    }
    if (info->model) {
      const auto& path = detail::model_path(c.models, *info->model);
      if (!path) err.push_back(where + "requires models." + *info->model);
      else if (!fs::exists(*path)) err.push_back(where + "model file not found: " + *path);
    }
    if (s.name == "cluster" && !quality_seen) err.push_back(where + "requires an earlier quality stage");
    if (!info->filter && !filter_seen && s.name.rfind("dedup_", 0) == 0) {
      issues.warnings.push_back(where + "runs before any filter stage");
    }
    filter_seen = filter_seen || info->filter;
    quality_seen = quality_seen || s.name == "quality";
  }
  return issues;
}

// --- corpus and shards ------------------------------------------------------------

std::vector<Document> load_corpus(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(input)) {
    files.push_back(input);
  } else {
    throw Error(ErrorKind::io_error, "input not found: " + input.string());
  }
  std::vector<Document> docs;
  std::set<std::string> ids;
  for (const auto& f : files) {
    auto shard = read_jsonl_shard(f);
    for (auto& d : shard.docs) {
      if (!ids.insert(d.id).second) throw Error(ErrorKind::duplicate_doc_id, "duplicate document id " + d.id + " in " + f.string());
      docs.push_back(std::move(d));
    }
  }
  return docs;
}

std::uint32_t shard_of(const std::string& id, std::uint32_t shards) {
  return static_cast<std::uint32_t>(hash64(id) % shards);
}

std::vector<std::vector<Document>> partition(std::vector<Document> docs, std::uint32_t shards) {
  std::vector<std::vector<Document>> out(std::max<std::uint32_t>(1, shards));
  for (auto& d : docs) out[shard_of(d.id, static_cast<std::uint32_t>(out.size()))].push_back(std::move(d));
  for (auto& s : out) std::sort(s.begin(), s.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
  return out;
}

std::string shard_file_name(std::uint32_t shard) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shard-%05u.jsonl", shard);
  return buf;
}

void write_shards(const std::vector<std::vector<Document>>& shards, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::uint32_t s = 0; s < shards.size(); ++s) write_jsonl_shard(shards[s], dir / shard_file_name(s));
}

std::vector<std::vector<Document>> read_shards(const fs::path& dir, std::uint32_t shards) {
  std::vector<std::vector<Document>> out(shards);
  for (std::uint32_t s = 0; s < shards; ++s) {
    auto r = read_jsonl_shard(dir / shard_file_name(s));
    if (r.skipped) throw Error(ErrorKind::parse_error, "corrupt shard " + (dir / shard_file_name(s)).string());
    const auto manifest = read_manifest(manifest_path_for(dir / shard_file_name(s)));
    if (manifest.doc_count != r.docs.size() || manifest.content_digest != ids_digest(r.docs)) {
      throw Error(ErrorKind::parse_error, "shard does not match its manifest: " + (dir / shard_file_name(s)).string());
    }
    out[s] = std::move(r.docs);
  }
  return out;
}

// --- execution ---------------------------------------------------------------------

namespace {

std::string stage_dir_name(std::size_t k, const std::string& name) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "stage-%02zu-", k);
  return buf + name;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t corpus_digest(const std::vector<Document>& docs) {
  std::uint64_t h = docs.size();
  for (const auto& d : docs) h = hash_combine(h, hash64(document_to_json(d)));
  return h;
}

// Fingerprint of everything that determines the output of stage k.
std::uint64_t stage_fingerprint(const PipelineConfig& c, std::size_t k, std::uint64_t input_digest) {
  json j;
  j["shards"] = c.shards;
  j["seed"] = c.seed;
  j["input"] = hex64(input_digest);
  json stages = json::array();
  for (std::size_t i = 0; i <= k; ++i) stages.push_back({{"name", c.stages[i].name}, {"params", c.stages[i].params}});
  j["stages"] = stages;
  json models = json::object();
  for (const char* key : {"lm", "langid", "quality", "safety", "topic"}) {
    if (const auto& p = detail::model_path(c.models, key)) models[key] = *p;
  }
  j["models"] = models;
  return hash64(j.dump());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorKind::io_error, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<StageReport> read_done(const fs::path& dir, std::uint64_t fingerprint) {
  std::ifstream in(dir / "DONE");
  if (!in) return std::nullopt;
  try {
    const json j = json::parse(in);
    if (j.at("fingerprint").get<std::string>() != hex64(fingerprint)) return std::nullopt;
    return detail::stage_report_from_json(j.at("report"));
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::uint64_t count_words(const detail::Shards& shards, std::size_t workers) {
  std::vector<std::uint64_t> per(shards.size(), 0);
  parallel_for(shards.size(), workers, [&](std::size_t s) {
    for (const auto& d : shards[s]) for_each_word(d.text, [&](std::string_view) { ++per[s]; });
  });
  std::uint64_t total = 0;
  for (const auto n : per) total += n;
  return total;
}

std::uint64_t count_bytes(const detail::Shards& shards) {
  std::uint64_t total = 0;
  for (const auto& s : shards) {
    for (const auto& d : s) total += d.text.size();
  }
  return total;
}

std::uint64_t count_docs(const detail::Shards& shards) {
  std::uint64_t total = 0;
  for (const auto& s : shards) total += s.size();
  return total;
}

}  // namespace

RunResult run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  const ConfigIssues issues = validate_config(config);
  if (!issues.ok()) config_error(issues.errors);
  RunResult result;
  result.warnings = issues.warnings;

  const detail::LoadedModels models = detail::load_models(config);
  const fs::path out_dir = config.output;
  fs::create_directories(out_dir);

  std::vector<Document> input = load_corpus(config.input);
  const std::uint64_t input_digest = corpus_digest(input);
  MixtureReport& report = result.report;
  report.docs_in = input.size();

  // completed stages with a matching fingerprint are reused on resume
  std::size_t start = 0;
  if (options.resume) {
    while (start < config.stages.size()) {
      const fs::path dir = out_dir / stage_dir_name(start, config.stages[start].name);
      auto done = read_done(dir, stage_fingerprint(config, start, input_digest));
      if (!done) break;
      report.stages.push_back(std::move(*done));
      ++start;
    }
  }
  // stale stage directories from earlier runs are replaced
  for (const auto& e : fs::directory_iterator(out_dir)) {
    const std::string name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("stage-", 0) != 0) continue;
    bool keep = false;
    for (std::size_t k = 0; k < start; ++k) keep = keep || name == stage_dir_name(k, config.stages[k].name);
    if (!keep) fs::remove_all(e.path());
  }
  fs::remove_all(out_dir / "final");

  detail::Shards shards;
  if (start > 0) {
    shards = read_shards(out_dir / stage_dir_name(start - 1, config.stages[start - 1].name), config.shards);
  } else {
    shards = partition(std::move(input), config.shards);
  }
  input.clear();
  result.stages_resumed = start;

  for (std::size_t k = start; k < config.stages.size(); ++k) {
    if (options.stop_after && k >= *options.stop_after) return result;
    const StageSpec& spec = config.stages[k];
    StageReport sr;
    sr.stage_name = spec.name;
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t in_docs = count_docs(shards);
    const std::uint64_t in_bytes = count_bytes(shards);
    sr.tokens_in = count_words(shards, config.workers);
    auto survivors = detail::run_stage(spec, std::move(shards), config, models, sr);
    shards = partition(std::move(survivors), config.shards);
    sr.tokens_kept = count_words(shards, config.workers);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.timings.push_back({spec.name, seconds, in_docs, in_bytes});

    const fs::path dir = out_dir / stage_dir_name(k, spec.name);
    write_shards(shards, dir);
    json done;
    done["fingerprint"] = hex64(stage_fingerprint(config, k, input_digest));
    done["report"] = detail::stage_report_to_json(sr);
    write_text_atomic(dir / "DONE", done.dump(2) + "\n");
    report.stages.push_back(std::move(sr));
  }

  write_shards(shards, out_dir / "final");
  std::vector<Document> final_docs;
  for (auto& s : shards) {
    for (auto& d : s) final_docs.push_back(std::move(d));
  }
  const BpeTokenizer* tok = models.tokenizer ? &*models.tokenizer : nullptr;
  MixtureReport mix = detail::mixture_counts(final_docs, tok, config.workers);
  report.docs_out = final_docs.size();
  report.has_tokens = mix.has_tokens;
  report.total_tokens = mix.total_tokens;
  report.by_source = std::move(mix.by_source);
  report.by_language = std::move(mix.by_language);
  report.by_topic = std::move(mix.by_topic);
  write_report(report, out_dir / "report.json", out_dir / "report.txt");

  json tp = json::array();
  for (const auto& t : result.timings) {
    const double s = std::max(t.seconds, 1e-9);
    tp.push_back({{"stage", t.stage_name},
                  {"seconds", t.seconds},
                  {"docs", t.docs},
                  {"bytes", t.bytes},
                  {"docs_per_second", static_cast<double>(t.docs) / s},
                  {"mb_per_second", static_cast<double>(t.bytes) / 1e6 / s}});
  }
  write_text_atomic(out_dir / "throughput.json", tp.dump(2) + "\n");

  const auto problems = report.consistency_errors();
  if (!problems.empty()) {
    std::string msg = "report is inconsistent:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorKind::report_mismatch, msg);
  }
  result.completed = true;
  return result;
}

}  // namespace curate
