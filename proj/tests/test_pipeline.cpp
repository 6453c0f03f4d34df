#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "curate/dedup.hpp"
#include "curate/error.hpp"
#include "curate/heuristic_filter.hpp"
#include "curate/pipeline.hpp"
#include "synth.hpp"

using namespace curate;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("curate_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const synth::ModelSet& models() {
  static const synth::ModelSet m = synth::train_models((fs::temp_directory_path() / "curate_pipeline_models").string(), 5);
  return m;
}

const std::vector<Document>& corpus() {
  static const std::vector<Document> docs = synth::pipeline_corpus(21, 700).docs;
  return docs;
}

fs::path corpus_dir() {
  static const fs::path dir = [] {
    const fs::path d = scratch("input");
    write_shards(partition(corpus(), 3), d);
    return d;
  }();
  return dir;
}

PipelineConfig cascade(const fs::path& out, std::uint32_t workers) {
  PipelineConfig c = default_config();
  c.input = corpus_dir().string();
  c.output = out.string();
  c.shards = 4;
  c.workers = workers;
  c.seed = 3;
  c.models = {models().lm, models().langid, models().quality, models().safety, models().topic, models().tokenizer};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Every file under final/ plus the report, keyed by relative path.
std::map<std::string, std::string> outputs(const fs::path& out) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(out / "final")) {
    if (e.is_regular_file()) files[fs::relative(e.path(), out).string()] = slurp(e.path());
  }
  files["report.json"] = slurp(out / "report.json");
  files["report.txt"] = slurp(out / "report.txt");
  return files;
}

std::vector<Document> flatten(const std::vector<std::vector<Document>>& shards) {
  std::vector<Document> all;
  for (const auto& s : shards) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
  return all;
}

std::vector<Document> stage_output(const fs::path& out, std::size_t k, const std::string& name, std::uint32_t shards) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "stage-%02zu-", k);
  return flatten(read_shards(out / (buf + name), shards));
}

bool has_error(const ConfigIssues& issues, const std::string& needle) {
  return std::any_of(issues.errors.begin(), issues.errors.end(),
                     [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CURATE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline_cli") {
  TEST_CASE("config validation") {
    PipelineConfig c;
    c.input = corpus_dir().string();
    c.output = scratch("validate").string();
    CHECK(validate_config(c).ok());
    c.stages = {{"heuristic", nlohmann::json::object()}};
    CHECK(validate_config(c).ok());

    c.stages = {{"foo", nlohmann::json::object()}};
    auto issues = validate_config(c);
    CHECK_FALSE(issues.ok());
    CHECK(has_error(issues, "foo"));

    c.stages = {{"dedup_exact", nlohmann::json::object()}, {"heuristic", nlohmann::json::object()}};
    issues = validate_config(c);
    CHECK(issues.ok());
    CHECK_FALSE(issues.warnings.empty());

    c.stages = {{"heuristic", {{"min_words", "many"}}}, {"heuristic", nlohmann::json::object()}, {"topic_sample", nlohmann::json::object()}};
    issues = validate_config(c);
    CHECK(has_error(issues, "min_words"));
    CHECK(has_error(issues, "heuristic"));
    CHECK(has_error(issues, "topic"));
    CHECK(issues.errors.size() >= 3);

    c.stages = {{"cluster", nlohmann::json::object()}};
    CHECK_FALSE(validate_config(c).ok());
    c.stages = {{"dedup_minhash", {{"bands", 10}}}};
    CHECK_FALSE(validate_config(c).ok());
    c.stages = {{"heuristic", {{"no_such_param", 1}}}};
    CHECK_FALSE(validate_config(c).ok());
    c.stages = {};
    c.input = "/definitely/missing";
    CHECK_FALSE(validate_config(c).ok());

    c.input = corpus_dir().string();
    c.stages = {{"foo", nlohmann::json::object()}};
    CHECK_THROWS_AS(run_pipeline(c), Error);
    CHECK_FALSE(fs::exists(fs::path(c.output) / "final"));
  }

  TEST_CASE("config files resolve paths and honor environment overrides") {
    const auto dir = scratch("config");
    std::ofstream(dir / "c.json") << R"({"input": "in", "output": "out", "shards": 2, "models": {"lm": "m/lm.txt"},
      "stages": ["heuristic", {"name": "dedup_exact"}]})";
    auto c = load_config(dir / "c.json");
    CHECK(c.input == (dir / "in").string());
    CHECK(c.output == (dir / "out").string());
    CHECK(c.models.lm == std::optional<std::string>((dir / "m/lm.txt").string()));
    CHECK(c.stages.size() == 2);
    CHECK(parse_config(config_to_json(c)).stages.size() == 2);
    ::setenv("CURATE_OUTPUT", "/tmp/elsewhere", 1);
    c = load_config(dir / "c.json");
    ::unsetenv("CURATE_OUTPUT");
    CHECK(c.output == "/tmp/elsewhere");
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"shards": "two"})")), Error);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"bogus": 1})")), Error);
  }

  TEST_CASE("empty input") {
    const auto dir = scratch("empty");
    std::ofstream(dir / "in.jsonl").close();
    PipelineConfig c;
    c.input = (dir / "in.jsonl").string();
    c.output = (dir / "out").string();
    c.stages = {{"heuristic", nlohmann::json::object()}, {"dedup_exact", nlohmann::json::object()}};
    const auto r = run_pipeline(c);
    CHECK(r.completed);
    CHECK(r.report.docs_in == 0);
    CHECK(r.report.docs_out == 0);
    CHECK(r.report.removal_ratio() == 0.0);
    CHECK(r.report.consistency_errors().empty());
  }

  TEST_CASE("identity config") {
    const auto out = scratch("identity");
    PipelineConfig c;
    c.input = corpus_dir().string();
    c.output = out.string();
    c.shards = 2;
    const auto r = run_pipeline(c);
    CHECK(r.report.removal_ratio() == 0.0);
    CHECK(r.report.docs_out == corpus().size());
    auto expected = corpus();
    std::sort(expected.begin(), expected.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
    CHECK(flatten(read_shards(out / "final", 2)) == expected);
  }

  TEST_CASE("default cascade is deterministic, conserves documents and resumes") {
    const auto base = scratch("cascade");
    const auto r1 = run_pipeline(cascade(base / "w1", 1));
    REQUIRE(r1.completed);
    CHECK(r1.report.consistency_errors().empty());
    CHECK(r1.report.docs_in == corpus().size());
    CHECK(r1.report.docs_in + r1.report.docs_born() == r1.report.docs_dropped() + r1.report.docs_out);
    CHECK(r1.report.docs_out > 0);
    CHECK(r1.report.docs_out < r1.report.docs_in);
    for (const auto& s : r1.report.stages) CHECK(s.consistent());
    const auto reference = outputs(base / "w1");

    for (const std::uint32_t workers : {4u, 16u}) {
      const auto out = base / ("w" + std::to_string(workers));
      run_pipeline(cascade(out, workers));
      CHECK(outputs(out) == reference);
    }

    const auto resumed = base / "resume";
    RunOptions stop;
    stop.stop_after = 5;
    const auto partial = run_pipeline(cascade(resumed, 4), stop);
    CHECK_FALSE(partial.completed);
    CHECK_FALSE(fs::exists(resumed / "final"));
    RunOptions resume;
    resume.resume = true;
    const auto finished = run_pipeline(cascade(resumed, 2), resume);
    CHECK(finished.completed);
    CHECK(finished.stages_resumed == 5);
    CHECK(outputs(resumed) == reference);

    // A changed parameter invalidates the stages from that point on.
    auto changed = cascade(resumed, 2);
    changed.stages[7].params["max_occurrences"] = 5;
    const auto rerun = run_pipeline(changed, resume);
    CHECK(rerun.stages_resumed == 7);
  }

  TEST_CASE("stage outputs match the module functions") {
    const auto out = scratch("oracle");
    const auto config = cascade(out, 3);
    run_pipeline(config);
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < config.stages.size(); ++k) index[config.stages[k].name] = k;
    auto input_of = [&](const std::string& name) {
      const std::size_t k = index.at(name);
      return stage_output(out, k - 1, config.stages[k - 1].name, config.shards);
    };
    auto output_of = [&](const std::string& name) { return stage_output(out, index.at(name), name, config.shards); };

    {
      auto in = corpus();
      std::sort(in.begin(), in.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
      std::vector<std::string> kept;
      for (const auto& d : in) {
        if (heuristic_verdict(d, HeuristicConfig{}, Blocklists{}).keep) kept.push_back(d.id);
      }
      std::vector<std::string> got;
      for (const auto& d : output_of("heuristic")) got.push_back(d.id);
      CHECK(got == kept);
    }
    StageReport r;
    CHECK(flatten({paragraph_dedup(input_of("dedup_paragraph"), {}, r)}) == output_of("dedup_paragraph"));
    CHECK(flatten({minhash_dedup(input_of("dedup_minhash"), {}, r)}) == output_of("dedup_minhash"));
    CHECK(flatten({exact_dedup(input_of("dedup_exact"), r)}) == output_of("dedup_exact"));
    CHECK(flatten({substring_dedup(input_of("dedup_substring"), {}, r)}) == output_of("dedup_substring"));
  }

  TEST_CASE("mixture reports") {
    CHECK_THROWS_AS(report_mixture({}, nullptr), Error);
    const auto tok = BpeTokenizer::load(models().tokenizer);
    Document book;
    book.id = "b1";
    book.source = "books";
    book.text = "one two three four five six seven eight nine ten";
    auto r = report_mixture({book}, &tok);
    REQUIRE(r.by_source.size() == 1);
    CHECK(r.by_source.at("books").tokens == r.total_tokens);
    CHECK(r.by_source.at("books").tokens == tok.encode(book.text).size());

    Document web = book;
    web.id = "w1";
    web.source = "web";
    r = report_mixture({book, web}, &tok);
    CHECK(r.by_source.at("books").tokens * 2 == r.total_tokens);
    CHECK(r.by_source.at("web").tokens * 2 == r.total_tokens);
    const auto j = report_to_json(r);
    CHECK(j.dump().find("\"web\"") != std::string::npos);

    const auto full = report_mixture(corpus(), &tok, 4);
    MixtureReport summed;
    for (const auto& shard : partition(corpus(), 7)) summed.merge_mixture(report_mixture(shard, &tok));
    CHECK(summed.by_source == full.by_source);
    CHECK(summed.by_language == full.by_language);
    CHECK(summed.by_topic == full.by_topic);
    CHECK(summed.total_tokens == full.total_tokens);
    std::uint64_t docs = 0;
    for (const auto& [k, c] : full.by_source) docs += c.docs;
    CHECK(docs == corpus().size());
  }

  TEST_CASE("command line") {
    const auto dir = scratch("cli");
    nlohmann::json cfg = config_to_json(cascade(dir / "out", 2));
    std::ofstream(dir / "config.json") << cfg.dump(2);
    CHECK(run_cli("run --config " + (dir / "config.json").string()) == 0);
    CHECK(fs::exists(dir / "out" / "report.json"));
    CHECK(fs::exists(dir / "out" / "report.txt"));
    CHECK(fs::exists(dir / "out" / "throughput.json"));
    const auto first = slurp(dir / "out" / "report.json");
    CHECK(run_cli("run --config " + (dir / "config.json").string() + " --resume --workers 3") == 0);
    CHECK(slurp(dir / "out" / "report.json") == first);

    CHECK(run_cli("dedup --input " + corpus_dir().string() + " --output " + (dir / "dedup").string() + " --shards 2") == 0);
    CHECK(run_cli("run --config " + (dir / "config.json").string() + " --output " + (dir / "stopped").string() +
                  " --stop-after 2") == 3);

    std::ofstream(dir / "bad.json") << R"({"stages": ["foo"]})";
    CHECK(run_cli("run --config " + (dir / "bad.json").string()) == 1);
    CHECK(run_cli("frobnicate") != 0);

    const auto corpus_file = (dir / "corpus.jsonl").string();
    write_jsonl_shard(std::vector<Document>(corpus().begin(), corpus().begin() + 200), corpus_file);
    CHECK(run_cli("tokenize-train --input " + corpus_file + " --output " + (dir / "tok.model").string() + " --vocab-size 600") == 0);
    CHECK(run_cli("tokenize --model " + (dir / "tok.model").string() + " --input " + corpus_file + " --output " +
                  (dir / "tokens.bin").string()) == 0);
    CHECK(run_cli("pack --tokens " + (dir / "tokens.bin").string() + " --output " + (dir / "packed.bin").string() +
                  " --seq-len 512 --upsample") == 0);
    CHECK(run_cli("haystack --tokens " + (dir / "tokens.bin").string() + " --model " + (dir / "tok.model").string() +
                  " --manifest " + (dir / "hay.jsonl").string() + " --output " + (dir / "hay.bin").string() +
                  " --lengths 256,512 --depths 0,0.5,1") == 0);
    CHECK(read_token_corpus((dir / "hay.bin").string()).size() == 6);
    CHECK(run_cli("report --input " + corpus_file + " --model " + (dir / "tok.model").string() + " --output " +
                  (dir / "mix").string()) == 0);
    CHECK(fs::exists(dir / "mix.json"));
    CHECK(fs::exists(dir / "mix.txt"));
  }
}
