#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace curate {

// --- language identification -------------------------------------------------

struct LanguageGuess {
  std::string lang;
  double confidence = 0;
};

// Additive-smoothed character n-gram (n = 1..4) profiles per language.
class CharNgramProfile {
 public:
  static constexpr int kMaxOrder = 4;
  static constexpr std::size_t kMinTrainingChars = 1000;
  static constexpr std::size_t kMinTextChars = 20;

  const std::vector<std::string>& languages() const noexcept { return languages_; }
  double smoothing() const noexcept { return alpha_; }

  // Log-probability of the n-gram key under `lang_index` (unseen mass if absent).
  double log_prob(int order, std::uint64_t key, std::size_t lang_index) const;
  // Probability mass over the seen vocabulary plus the unseen slot.
  double total_mass(int order, std::size_t lang_index) const;

  // Mean per-n-gram log-likelihood of the text under each language.
  std::vector<double> mean_log_likelihood(std::string_view text) const;

  void save(const std::string& path) const;
  static CharNgramProfile load(const std::string& path);

  friend CharNgramProfile train_langid(const std::vector<std::pair<std::string, std::string>>& labeled, double alpha);

 private:
  std::vector<std::string> languages_;
  double alpha_ = 0.5;
  std::array<std::unordered_map<std::uint64_t, std::vector<double>>, kMaxOrder + 1> log_probs_;
  std::array<std::vector<double>, kMaxOrder + 1> unseen_;  // per order, per language
};

// Character n-gram keys of a text, tagged with their order.
std::vector<std::pair<int, std::uint64_t>> char_ngrams(std::string_view text);

// Throws Error{insufficient_data} with fewer than two languages or fewer than
// 1,000 training characters in any language.
CharNgramProfile train_langid(const std::vector<std::pair<std::string, std::string>>& labeled, double alpha = 0.5);

// "und" with confidence 0 for texts shorter than 20 characters.
LanguageGuess identify_language(std::string_view text, const CharNgramProfile& profile);

// --- Kneser-Ney n-gram language model --------------------------------------

struct NgramLMConfig {
  int order = 5;
  std::uint32_t min_count = 2;
};

struct Discounts {
  double d1 = 0.5;
  double d2 = 1.0;
  double d3plus = 1.5;
  bool fallback = false;

  double operator()(std::uint64_t count) const noexcept {
    if (count == 0) return 0.0;
    if (count == 1) return d1;
    if (count == 2) return d2;
    return d3plus;
  }
};

// Interpolated modified Kneser-Ney. Word id 0 is <unk>, 1 is <s>, 2 is </s>.
class NgramLM {
 public:
  static constexpr std::uint32_t kUnk = 0;
  static constexpr std::uint32_t kBos = 1;
  static constexpr std::uint32_t kEos = 2;

  int order() const noexcept { return order_; }
  std::uint32_t min_count() const noexcept { return min_count_; }
  std::size_t vocab_size() const noexcept { return words_.size(); }
  const std::string& word(std::uint32_t id) const { return words_.at(id); }
  std::uint32_t word_id(std::string_view w) const;
  const Discounts& discounts(int n) const { return discounts_.at(static_cast<std::size_t>(n)); }

  // Symbols the model predicts: <unk>, </s> (order >= 2) and every word.
  std::vector<std::uint32_t> predicted_symbols() const;

  // Sentences (non-blank lines) as id sequences, unpadded.
  std::vector<std::vector<std::uint32_t>> sentences(std::string_view text) const;

  // p(word | context); only the last order-1 context ids are used.
  double prob(std::span<const std::uint32_t> context, std::uint32_t word) const;

  // Contexts of length n-1 observed at order n.
  std::vector<std::vector<std::uint32_t>> observed_contexts(int n) const;

  // Sum of natural-log probabilities and the token count, including </s>.
  std::pair<double, std::size_t> score(std::string_view text) const;

  void save(const std::string& path) const;
  static NgramLM load(const std::string& path);

  friend NgramLM train_ngram_lm(const std::vector<std::string>& corpus, const NgramLMConfig& cfg);

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::uint64_t n1 = 0, n2 = 0, n3plus = 0;
  };

  void finalize();
  double prob_at(int n, const std::uint32_t* ctx, std::size_t ctx_len, std::uint32_t word) const;

  int order_ = 5;
  std::uint32_t min_count_ = 2;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::uint32_t> ids_;
  // adjusted counts per order, keyed by packed ids
  std::vector<std::unordered_map<std::string, std::uint64_t>> counts_;
  std::vector<std::unordered_map<std::string, ContextStats>> contexts_;
  std::vector<Discounts> discounts_;
  std::uint64_t unigram_total_ = 0;
  ContextStats unigram_stats_;
};

// Throws Error{empty_corpus} when no tokens remain.
NgramLM train_ngram_lm(const std::vector<std::string>& corpus, const NgramLMConfig& cfg = {});

// exp(-mean log p) per token; +infinity for text without tokens.
double lm_perplexity(std::string_view text, const NgramLM& lm);

// --- perplexity buckets -----------------------------------------------------

enum class Bucket { head, middle, tail };

std::string_view to_string(Bucket b) noexcept;

struct PerplexityBuckets {
  // language -> (b1, b2); "*" holds the global boundaries when fitted.
  std::map<std::string, std::pair<double, double>> bounds;

  Bucket bucket(double ppl, const std::string& lang) const;
};

// Tertile boundaries per language; throws Error{insufficient_calibration}
// when a language has fewer than 3 scores.
PerplexityBuckets fit_buckets(const std::map<std::string, std::vector<double>>& scores);

// Tertiles of a single sample.
std::pair<double, double> tertiles(std::vector<double> scores);

}  // namespace curate
