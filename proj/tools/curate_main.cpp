#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "curate/bpe_tokenizer.hpp"
#include "curate/context_mixer.hpp"
#include "curate/corpus_io.hpp"
#include "curate/error.hpp"
#include "curate/lang_stat_models.hpp"
#include "curate/learned_filters.hpp"
#include "curate/parallel.hpp"
#include "curate/pipeline.hpp"
#include "curate/topic_sampler.hpp"

namespace fs = std::filesystem;
using namespace curate;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitIncomplete = 3;

struct RunFlags {
  std::string config;
  std::string input;
  std::string output;
  std::optional<std::uint32_t> shards;
  std::optional<std::uint32_t> workers;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::optional<std::size_t> stop_after;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--input", f.input, "Input shard directory or JSONL file");
  cmd->add_option("--output", f.output, "Output directory");
  cmd->add_option("--shards", f.shards, "Shard count")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Global seed");
  cmd->add_flag("--resume", f.resume, "Reuse completed stages");
  cmd->add_option("--stop-after", f.stop_after, "Stop after this many stages")->group("");
}

// Stages of one command family; the full list when `family` is empty.
int run_command(const RunFlags& f, const std::set<std::string>& family) {
  PipelineConfig config = f.config.empty() ? default_config() : load_config(f.config);
  if (!f.input.empty()) config.input = f.input;
  if (!f.output.empty()) config.output = f.output;
  if (f.shards) config.shards = *f.shards;
  if (f.workers) config.workers = *f.workers;
  if (f.seed) config.seed = *f.seed;
  if (!family.empty()) {
    std::vector<StageSpec> kept;
    for (auto& s : config.stages) {
      if (family.count(s.name)) kept.push_back(std::move(s));
    }
    if (kept.empty()) {
      for (const auto& name : known_stages()) {
        if (family.count(name)) kept.push_back({name, nlohmann::json::object()});
      }
    }
    config.stages = std::move(kept);
  }
  RunOptions options;
  options.resume = f.resume;
  options.stop_after = f.stop_after;
  const RunResult r = run_pipeline(config, options);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  if (!r.completed) {
    std::cerr << "stopped after " << (f.stop_after ? *f.stop_after : 0) << " stage(s)\n";
    return kExitIncomplete;
  }
  if (r.stages_resumed) std::cerr << "resumed " << r.stages_resumed << " completed stage(s)\n";
  std::cout << report_to_text(r.report);
  return 0;
}

std::vector<std::string> texts_of(const std::vector<Document>& docs) {
  std::vector<std::string> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.text);
  return out;
}

std::vector<Document> load_all(const std::vector<std::string>& paths) {
  std::vector<Document> docs;
  for (const auto& p : paths) {
    auto part = load_corpus(p);
    docs.insert(docs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return docs;
}

std::string doc_label(const Document& d, const char* what) {
  if (const auto it = d.meta.find("label"); it != d.meta.end()) return it->second;
  if (d.lang) return *d.lang;
  throw Error(ErrorKind::invalid_argument, std::string(what) + ": document " + d.id + " has no label");
}

std::vector<std::uint32_t> parse_u32_list(const std::string& s) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pretraining corpus curation toolkit"};
  app.require_subcommand(1);

  // ingest
  std::vector<std::string> wet_files;
  std::string ingest_out;
  std::uint32_t ingest_shards = 1;
  auto* ingest = app.add_subcommand("ingest", "Parse WET files into JSONL shards");
  ingest->add_option("--wet", wet_files, "WET files")->required()->check(CLI::ExistingFile);
  ingest->add_option("--output", ingest_out, "Output shard directory")->required();
  ingest->add_option("--shards", ingest_shards, "Shard count")->check(CLI::PositiveNumber);

  // pipeline families
  RunFlags run_flags;
  struct Family {
    const char* name;
    const char* help;
    std::set<std::string> stages;
  };
  const std::vector<Family> families{
      {"run", "Run the configured cascade", {}},
      {"filter", "Heuristic and language filters", {"heuristic", "langid"}},
      {"score", "Perplexity and learned scorers", {"perplexity", "quality", "safety", "coherence"}},
      {"cluster", "Cluster-level quality filter", {"cluster"}},
      {"dedup", "Paragraph, MinHash, exact and substring dedup",
       {"dedup_paragraph", "dedup_minhash", "dedup_exact", "dedup_substring"}},
      {"sample", "Topic classification and down-sampling", {"topic_sample"}},
  };
  std::vector<std::pair<CLI::App*, const Family*>> family_cmds;
  for (const auto& fam : families) {
    auto* cmd = app.add_subcommand(fam.name, fam.help);
    add_run_flags(cmd, run_flags);
    family_cmds.emplace_back(cmd, &fam);
  }

  // training
  auto* train = app.add_subcommand("train", "Train a model")->require_subcommand(1);
  std::vector<std::string> train_inputs, negatives;
  std::string model_out;
  int lm_order = 5;
  std::uint32_t lm_min_count = 2;
  ClassifierHyperparams hp;
  auto* train_lm = train->add_subcommand("lm", "Kneser-Ney n-gram LM");
  auto* train_langid_cmd = train->add_subcommand("langid", "Character n-gram language identifier");
  auto* train_quality = train->add_subcommand("quality", "Quality classifier (positives vs negatives)");
  auto* train_safety = train->add_subcommand("safety", "Safety classifier (safe vs unsafe)");
  auto* train_topic_cmd = train->add_subcommand("topic", "Topic model");
  for (auto* cmd : {train_lm, train_langid_cmd, train_quality, train_safety, train_topic_cmd}) {
    cmd->add_option("--input", train_inputs, "Training corpus (JSONL); positives for classifiers")->required();
    cmd->add_option("--output", model_out, "Model file")->required();
  }
  train_lm->add_option("--order", lm_order, "N-gram order")->check(CLI::Range(1, 9));
  train_lm->add_option("--min-count", lm_min_count, "Words rarer than this map to <unk>");
  for (auto* cmd : {train_quality, train_safety}) {
    cmd->add_option("--negative", negatives, "Negative corpus (JSONL)")->required();
    cmd->add_option("--epochs", hp.epochs, "Training epochs");
    cmd->add_option("--seed", hp.seed, "Shuffle seed");
  }

  // tokenizer
  std::vector<std::string> tok_inputs;
  std::string tok_model, tok_out;
  TokenizerConfig tok_config;
  std::uint32_t tok_workers = 1;
  auto* tok_train = app.add_subcommand("tokenize-train", "Train a BPE tokenizer");
  tok_train->add_option("--input", tok_inputs, "Training corpus (JSONL)")->required();
  tok_train->add_option("--output", tok_out, "Tokenizer model file")->required();
  tok_train->add_option("--vocab-size", tok_config.vocab_size, "Vocabulary size");
  auto* tokenize = app.add_subcommand("tokenize", "Encode a corpus into token ids");
  tokenize->add_option("--model", tok_model, "Tokenizer model")->required()->check(CLI::ExistingFile);
  tokenize->add_option("--input", tok_inputs, "Corpus (JSONL)")->required();
  tokenize->add_option("--output", tok_out, "Token corpus file")->required();
  tokenize->add_option("--workers", tok_workers, "Worker threads")->check(CLI::PositiveNumber);

  // packing
  std::string pack_in, pack_out;
  std::uint32_t seq_len = 4096;
  bool upsample = false;
  UpsampleWeights weights;
  auto* pack = app.add_subcommand("pack", "Length-upsample and pack a token corpus");
  pack->add_option("--tokens", pack_in, "Token corpus")->required()->check(CLI::ExistingFile);
  pack->add_option("--output", pack_out, "Packed corpus file")->required();
  pack->add_option("--seq-len", seq_len, "Sequence length")->check(CLI::Range(2u, 1u << 30));
  pack->add_flag("--upsample", upsample, "Apply length upsampling first");
  pack->add_option("--boundaries", weights.boundaries, "Length bucket boundaries (tokens)");
  pack->add_option("--weights", weights.weights, "Per-bucket weights");
  pack->add_option("--seed", weights.seed, "Upsampling seed");

  // haystack
  std::string hay_tokens, hay_model, hay_manifest, hay_out;
  std::string hay_lengths = "4096,5461,6826,8192,9557,10922,12288,13653,15018,16384";
  std::string hay_depths = "0,0.111111,0.222222,0.333333,0.444444,0.555556,0.666667,0.777778,0.888889,1";
  NeedleSpec needle{" The best thing to do in San Francisco is to eat a sandwich and sit in Dolores Park on a sunny day.",
                    "What is the best thing to do in San Francisco?",
                    "Eat a sandwich and sit in Dolores Park on a sunny day."};
  std::uint64_t hay_seed = 0;
  auto* haystack = app.add_subcommand("haystack", "Generate a needle-in-a-haystack grid");
  haystack->add_option("--tokens", hay_tokens, "Filler token corpus")->required()->check(CLI::ExistingFile);
  haystack->add_option("--model", hay_model, "Tokenizer model")->required()->check(CLI::ExistingFile);
  haystack->add_option("--manifest", hay_manifest, "Output manifest (JSONL)")->required();
  haystack->add_option("--output", hay_out, "Output token corpus")->required();
  haystack->add_option("--lengths", hay_lengths, "Comma-separated ascending lengths");
  haystack->add_option("--depths", hay_depths, "Comma-separated depths in [0,1]");
  haystack->add_option("--needle", needle.needle, "Needle sentence");
  haystack->add_option("--question", needle.question, "Retrieval question");
  haystack->add_option("--answer", needle.answer, "Expected answer");
  haystack->add_option("--seed", hay_seed, "Seed");

  // report
  std::string report_in, report_model, report_out;
  std::uint32_t report_workers = 1;
  auto* report = app.add_subcommand("report", "Mixture report of a corpus");
  report->add_option("--input", report_in, "Corpus directory or JSONL file")->required();
  report->add_option("--model", report_model, "Tokenizer model");
  report->add_option("--output", report_out, "Output prefix; writes <prefix>.json and <prefix>.txt")->required();
  report->add_option("--workers", report_workers, "Worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      std::vector<Document> docs;
      WetReadStats stats;
      for (const auto& f : wet_files) {
        std::ifstream in(f, std::ios::binary);
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto part = read_wet(bytes, stats);
        docs.insert(docs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      }
      std::set<std::string> ids;
      for (const auto& d : docs) {
        if (!ids.insert(d.id).second) throw Error(ErrorKind::duplicate_doc_id, "duplicate record id " + d.id);
      }
      write_shards(partition(std::move(docs), ingest_shards), ingest_out);
      nlohmann::ordered_json j;
      j["records"] = stats.records;
      j["parsed"] = stats.parsed;
      j["payload_bytes"] = stats.payload_bytes;
      j["skipped"] = stats.skip_reasons;
      std::ofstream(fs::path(ingest_out) / "ingest_report.json") << j.dump(2) << "\n";
      std::ostringstream text;
      text << "records: " << stats.records << "\nparsed: " << stats.parsed << "\n";
      for (const auto& [why, n] : stats.skip_reasons) text << "skipped " << why << ": " << n << "\n";
      std::ofstream(fs::path(ingest_out) / "ingest_report.txt") << text.str();
      std::cout << text.str();
      return 0;
    }
    for (const auto& [cmd, fam] : family_cmds) {
      if (*cmd) return run_command(run_flags, fam->stages);
    }
    if (*train_lm) {
      NgramLMConfig cfg;
      cfg.order = lm_order;
      cfg.min_count = lm_min_count;
      train_ngram_lm(texts_of(load_all(train_inputs)), cfg).save(model_out);
      return 0;
    }
    if (*train_langid_cmd) {
      std::vector<std::pair<std::string, std::string>> labeled;
      for (const auto& d : load_all(train_inputs)) labeled.emplace_back(doc_label(d, "langid"), d.text);
      train_langid(labeled).save(model_out);
      return 0;
    }
    if (*train_quality || *train_safety) {
      auto model = train_classifier(texts_of(load_all(train_inputs)), texts_of(load_all(negatives)), hp);
      model.save(model_out);
      return 0;
    }
    if (*train_topic_cmd) {
      std::vector<LabeledText> examples;
      std::set<std::string> labels;
      for (const auto& d : load_all(train_inputs)) {
        examples.push_back({doc_label(d, "topic"), d.text});
        labels.insert(examples.back().label);
      }
      train_topic(examples, {labels.begin(), labels.end()}).save(model_out);
      return 0;
    }
    if (*tok_train) {
      train_bpe(texts_of(load_all(tok_inputs)), tok_config).save(tok_out);
      return 0;
    }
    if (*tokenize) {
      const auto tok = BpeTokenizer::load(tok_model);
      const auto docs = load_all(tok_inputs);
      std::vector<TokenizedDoc> out(docs.size());
      parallel_for(docs.size(), tok_workers, [&](std::size_t i) { out[i] = {docs[i].id, tok.encode(docs[i].text)}; });
      write_token_corpus(out, tok_out);
      return 0;
    }
    if (*pack) {
      auto docs = read_token_corpus(pack_in);
      if (upsample) docs = length_upsample(docs, weights);
      const auto seqs = pack_sequences(docs, seq_len);
      write_packed(seqs, seq_len, pack_out);
      std::cout << docs.size() << " documents packed into " << seqs.size() << " sequences of " << seq_len << " tokens\n";
      return 0;
    }
    if (*haystack) {
      const auto tok = BpeTokenizer::load(hay_model);
      const auto corpus = read_token_corpus(hay_tokens);
      const auto grid = haystack_grid(parse_u32_list(hay_lengths), parse_double_list(hay_depths), needle, corpus, tok, hay_seed);
      write_haystack(grid, hay_manifest, hay_out);
      std::cout << grid.size() << " haystack instances\n";
      return 0;
    }
    if (*report) {
      std::optional<BpeTokenizer> tok;
      if (!report_model.empty()) tok = BpeTokenizer::load(report_model);
      const auto r = report_mixture(load_corpus(report_in), tok ? &*tok : nullptr, report_workers);
      write_report(r, report_out + ".json", report_out + ".txt");
      std::cout << report_to_text(r);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
