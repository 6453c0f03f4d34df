#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "curate/corpus_io.hpp"

namespace curate {

inline constexpr std::uint32_t kDefaultFeatureDim = 1u << 20;

// Sparse, L2-normalized, signed-hash features over word 1- and 2-grams of
// the dedup-normalized text. Entries are sorted by index.
struct HashedFeatureVector {
  std::uint32_t dimension = kDefaultFeatureDim;
  std::vector<std::pair<std::uint32_t, double>> entries;

  bool empty() const noexcept { return entries.empty(); }
  bool operator==(const HashedFeatureVector&) const = default;
};

// Raw (unnormalized) signed counts; featurize() normalizes these.
HashedFeatureVector hashed_counts(std::string_view text, std::uint32_t dimension);
HashedFeatureVector featurize(std::string_view text, std::uint32_t dimension = kDefaultFeatureDim);

double dot(const HashedFeatureVector& a, const HashedFeatureVector& b);
void l2_normalize(HashedFeatureVector& v);

struct ClassifierHyperparams {
  std::uint32_t dimension = kDefaultFeatureDim;
  int epochs = 8;
  double learning_rate = 0.5;
  double l2 = 1e-6;
  std::uint64_t seed = 1;
};

class LinearClassifier {
 public:
  LinearClassifier() = default;
  explicit LinearClassifier(std::uint32_t dimension) : weights_(dimension, 0.0) {}

  std::uint32_t dimension() const noexcept { return static_cast<std::uint32_t>(weights_.size()); }
  double bias() const noexcept { return bias_; }
  double margin(const HashedFeatureVector& x) const;
  // Logistic score in (0, 1).
  double score(const HashedFeatureVector& x) const;
  double score_text(std::string_view text) const;

  std::vector<double>& weights() noexcept { return weights_; }
  double& bias_ref() noexcept { return bias_; }

  // Training metadata
  int epochs = 0;
  std::uint64_t seed = 0;
  std::string positive_tag;
  std::string negative_tag;

  void save(const std::string& path) const;
  static LinearClassifier load(const std::string& path);

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
};

// Logistic regression by SGD. Example order is canonical (content hash, then
// a seeded shuffle per epoch), so swapping the classes mirrors the model.
// Throws Error{one_class_only} if either side is empty.
LinearClassifier train_classifier(const std::vector<std::string>& positives, const std::vector<std::string>& negatives,
                                  const ClassifierHyperparams& hp = {});

double score_quality(const Document& doc, const LinearClassifier& quality);
// Safety classifiers are trained with safe text as the positive class.
double score_safety(const Document& doc, const LinearClassifier& safety);

// Area under the ROC curve (ties count one half).
double roc_auc(const std::vector<double>& positive_scores, const std::vector<double>& negative_scores);

// --- coherence ---------------------------------------------------------------

struct CoherenceThresholds {
  double keep = 0.15;
  double cut = 0.05;
  double drop = 0.02;
  std::uint32_t dimension = kDefaultFeatureDim;
};

enum class CoherenceAction { keep, segment, drop };

std::string_view to_string(CoherenceAction a) noexcept;

struct CoherenceReport {
  std::vector<double> similarities;  // one per adjacent-paragraph boundary
  double mean = 1.0;
  CoherenceAction action = CoherenceAction::keep;
  std::vector<std::size_t> cut_at;  // boundary indices (0-based) for segment
};

CoherenceReport coherence_report(const Document& doc, const CoherenceThresholds& t = {});

// Throws Error{report_mismatch} if the report does not fit the document.
std::vector<Document> apply_coherence(const Document& doc, const CoherenceReport& report);

}  // namespace curate
