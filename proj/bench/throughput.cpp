// Single-worker throughput of the hot per-document stages on the synthetic
// pipeline corpus. Writes a JSON summary to stdout.

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "curate/dedup.hpp"
#include "curate/heuristic_filter.hpp"
#include "curate/learned_filters.hpp"
#include "synth.hpp"

using namespace curate;

int main(int argc, char** argv) {
  CLI::App app{"Per-stage throughput benchmark"};
  std::size_t docs_n = 4000;
  std::uint64_t seed = 909;
  int reps = 3;
  app.add_option("--docs", docs_n, "Synthetic corpus size");
  app.add_option("--seed", seed, "Corpus seed");
  app.add_option("--reps", reps, "Repetitions; the fastest is reported")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const auto docs = synth::pipeline_corpus(seed, docs_n).docs;
  double bytes = 0;
  for (const auto& d : docs) bytes += static_cast<double>(d.text.size());

  std::size_t sink = 0;
  auto measure = [&](const std::function<void(const Document&)>& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& d : docs) fn(d);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return nlohmann::ordered_json{{"seconds", best},
                                  {"mb_per_second", bytes / 1e6 / best},
                                  {"docs_per_second", static_cast<double>(docs.size()) / best}};
  };

  const HeuristicConfig hc;
  const Blocklists lists;
  const MinHasher hasher(128);
  nlohmann::ordered_json out;
  out["docs"] = docs.size();
  out["megabytes"] = bytes / 1e6;
  out["segment"] = measure([&](const Document& d) { sink += segment(d.text).lines.size(); });
  out["structural"] = measure([&](const Document& d) { sink += structural_verdict(d, hc).keep; });
  out["repetition"] = measure([&](const Document& d) { sink += repetition_stats(d).dup_line_frac > 0; });
  out["pii"] = measure([&](const Document& d) { sink += anonymize_pii(d.text).text.size(); });
  out["heuristic_verdict"] = measure([&](const Document& d) { sink += heuristic_verdict(d, hc, lists).keep; });
  out["shingles"] = measure([&](const Document& d) { sink += shingles(d.text).size(); });
  out["minhash_signature"] = measure([&](const Document& d) { sink += hasher.signature(shingles(d.text)).has_value(); });
  out["featurize"] = measure([&](const Document& d) { sink += featurize(d.text).entries.size(); });
  out["checksum"] = sink;
  std::cout << out.dump(2) << "\n";
  return 0;
}
