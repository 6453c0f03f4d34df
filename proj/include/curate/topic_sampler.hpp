#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "curate/corpus_io.hpp"

namespace curate {

inline constexpr std::uint32_t kTopicFeatureDim = 1u << 18;

inline const std::vector<std::string>& default_topic_labels() {
  static const std::vector<std::string> labels{"ads", "fiction", "forum", "knowledge", "news", "other"};
  return labels;
}

struct LabeledText {
  std::string label;
  std::string text;
};

// Multinomial naive Bayes over hashed word unigrams.
class TopicModel {
 public:
  TopicModel() = default;

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::uint32_t dimension() const noexcept { return dimension_; }
  double smoothing() const noexcept { return alpha_; }
  double log_prior(std::size_t label) const { return log_prior_.at(label); }
  double log_prob(std::size_t label, std::uint32_t feature) const { return log_prob_.at(label).at(feature); }

  void save(const std::string& path) const;
  static TopicModel load(const std::string& path);

 private:
  friend TopicModel train_topic(const std::vector<LabeledText>&, const std::vector<std::string>&, std::uint32_t, double);
  void rebuild_tables();

  std::vector<std::string> labels_;  // sorted
  std::uint32_t dimension_ = kTopicFeatureDim;
  double alpha_ = 1.0;
  std::vector<std::uint64_t> doc_counts_;
  std::vector<std::map<std::uint32_t, std::uint64_t>> feature_counts_;
  std::vector<double> log_prior_;
  std::vector<std::vector<double>> log_prob_;
};

// Feature indices of the dedup-normalized words, one entry per occurrence.
std::vector<std::uint32_t> topic_features(std::string_view text, std::uint32_t dimension);

// Throws Error{missing_class} if a declared label has no examples and
// Error{invalid_argument} for examples with undeclared labels.
TopicModel train_topic(const std::vector<LabeledText>& examples,
                       const std::vector<std::string>& labels = default_topic_labels(),
                       std::uint32_t dimension = kTopicFeatureDim, double alpha = 1.0);

struct TopicPrediction {
  std::string label;
  std::map<std::string, double> posterior;
};

// Empty text yields "other" with a uniform posterior.
TopicPrediction classify_topic(std::string_view text, const TopicModel& model);

struct SamplingPolicy {
  std::map<std::string, double> keep_probability{{"ads", 0.1}};
  double default_keep = 1.0;
  std::uint64_t seed = 0;

  double keep_prob(const std::string& label) const;
  void validate() const;
};

inline constexpr const char* kTopicLabelKey = "topic.label";

bool keep_document(const std::string& id, const std::string& label, const SamplingPolicy& policy);

// Reads the label from meta "topic.label"; Error{unlabeled_doc} if absent.
std::vector<Document> downsample(std::vector<Document> docs, const SamplingPolicy& policy, StageReport& report);

}  // namespace curate
