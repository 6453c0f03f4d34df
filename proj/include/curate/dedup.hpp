#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "curate/corpus_io.hpp"

namespace curate {

// Sorted, unique 64-bit hashes of word n-grams of the dedup-normalized text.
using ShingleSet = std::vector<std::uint64_t>;

ShingleSet shingles(std::string_view text, std::size_t n = 5);

double jaccard(const ShingleSet& a, const ShingleSet& b);

using MinHashSignature = std::vector<std::uint64_t>;

class MinHasher {
 public:
  explicit MinHasher(std::size_t num_perm = 128);

  std::size_t num_perm() const noexcept { return seeds_.size(); }

  // nullopt for an empty shingle set; such documents bypass MinHash.
  std::optional<MinHashSignature> signature(const ShingleSet& shingles) const;

  std::uint64_t permute(std::size_t perm, std::uint64_t shingle) const noexcept;

 private:
  std::vector<std::uint64_t> seeds_;
};

double signature_agreement(const MinHashSignature& a, const MinHashSignature& b);

class LshIndex {
 public:
  LshIndex(std::size_t bands, std::size_t rows);

  std::size_t bands() const noexcept { return tables_.size(); }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return registry_.size(); }
  // Similarity at which candidate probability crosses 1/2: (1/b)^(1/r).
  double threshold() const;
  // 1 - (1 - s^r)^b
  double candidate_probability(double similarity) const;

  // Ids sharing at least one full band, computed before the insertion.
  // Throws Error{duplicate_doc_id}.
  std::vector<std::string> insert_and_candidates(const MinHashSignature& sig, const std::string& doc_id);

  void save(const std::string& path) const;
  static LshIndex load(const std::string& path);

 private:
  std::uint64_t band_hash(const MinHashSignature& sig, std::size_t band) const;

  std::size_t rows_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::string>>> tables_;
  std::unordered_set<std::string> registry_;
};

struct DupCluster {
  std::vector<std::string> members;  // sorted
  std::string retained;              // smallest member

  bool operator==(const DupCluster&) const = default;
};

using SimilarityFn = std::function<double(const std::string&, const std::string&)>;

struct PairVerification {
  SimilarityFn similarity;
  double cutoff = 0.7;
};

// Union-find over candidate pairs, optionally keeping only verified pairs.
// Clusters are returned sorted by retained id.
std::vector<DupCluster> resolve_clusters(const std::vector<std::pair<std::string, std::string>>& pairs,
                                         const std::optional<PairVerification>& verify = std::nullopt);

// --- stream stages ---------------------------------------------------------------
// Each stage treats its input as one pass and decides retention by document id,
// so any partition of the input into shards yields the same result.

enum class ParagraphDedupMode { two_pass, single_pass };

struct ParagraphDedupParams {
  std::uint64_t max_occurrences = 100;  // numeric_limits max disables
  std::size_t min_words = 50;
  ParagraphDedupMode mode = ParagraphDedupMode::two_pass;
};

std::vector<Document> paragraph_dedup(std::vector<Document> docs, const ParagraphDedupParams& params, StageReport& report,
                                      std::uint64_t* paragraphs_removed = nullptr);

struct MinHashDedupParams {
  std::size_t shingle_size = 5;
  std::size_t num_perm = 128;
  std::size_t bands = 32;
  std::size_t rows = 4;
  std::optional<double> verify_cutoff = 0.7;
  std::size_t workers = 1;
};

std::vector<Document> minhash_dedup(std::vector<Document> docs, const MinHashDedupParams& params, StageReport& report,
                                    std::vector<DupCluster>* clusters = nullptr);

std::vector<Document> exact_dedup(std::vector<Document> docs, StageReport& report);

struct SubstringDedupParams {
  std::size_t window = 50;
  std::size_t min_words = 50;
};

// excised_tokens, when given, receives per-input-document counts.
std::vector<Document> substring_dedup(std::vector<Document> docs, const SubstringDedupParams& params,
                                      StageReport& report, std::vector<std::size_t>* excised_tokens = nullptr);

}  // namespace curate
