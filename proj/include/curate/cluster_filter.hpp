#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curate/learned_filters.hpp"

namespace curate {

struct TfidfModel {
  std::uint32_t dimension = 1u << 16;
  std::uint64_t corpus_size = 0;
  std::vector<std::uint32_t> document_frequency;

  // Smoothed idf, always >= 1.
  double idf(std::uint32_t index) const;
};

// `counts` are hashed_counts() vectors, one per document.
TfidfModel fit_tfidf(const std::vector<HashedFeatureVector>& counts, std::uint32_t dimension);
HashedFeatureVector tfidf_transform(const HashedFeatureVector& counts, const TfidfModel& model);

struct Centroids {
  std::uint32_t dimension = 0;
  std::vector<std::vector<double>> vectors;  // each L2-normalized
  std::uint64_t seed = 0;
  int iterations = 0;
  double inertia = 0;
  // Inertia after each assignment step.
  std::vector<double> inertia_history;

  std::size_t k() const noexcept { return vectors.size(); }
};

// Spherical k-means with k-means++ seeding. Zero vectors are ignored.
// Throws Error{too_few_points} with fewer than k distinct non-zero vectors.
Centroids fit_kmeans(const std::vector<HashedFeatureVector>& vectors, std::size_t k, int max_iters, std::uint64_t seed);

struct ClusterAssignment {
  std::uint32_t cluster = 0;
  double similarity = 0;
  bool zero_vector = false;
};

// argmax cosine, ties to the lowest id; zero vectors go to cluster 0.
ClusterAssignment assign_cluster(const HashedFeatureVector& v, const Centroids& centroids);

enum class ClusterVerdict { keep, drop };

struct ClusterLabel {
  double mean_quality = 0;
  std::uint64_t count = 0;
  ClusterVerdict verdict = ClusterVerdict::keep;
  std::optional<ClusterVerdict> manual_override;

  ClusterVerdict effective() const noexcept { return manual_override.value_or(verdict); }
};

struct ClusterLabelMap {
  std::vector<ClusterLabel> clusters;

  bool drops(std::uint32_t cluster) const { return clusters.at(cluster).effective() == ClusterVerdict::drop; }
};

// "cluster_id keep|drop # comment", one per line.
std::map<std::uint32_t, ClusterVerdict> parse_overrides(std::string_view text);
std::map<std::uint32_t, ClusterVerdict> load_overrides(const std::filesystem::path& path);

// Throws Error{missing_scores} when any assigned document lacks a score.
ClusterLabelMap label_clusters(const std::vector<std::uint32_t>& assignments,
                               const std::vector<std::optional<double>>& quality_scores, std::size_t k,
                               double cluster_q_min = 0.3,
                               const std::map<std::uint32_t, ClusterVerdict>& overrides = {});

// max(16, n / 10,000) capped at 1,024.
std::size_t default_cluster_count(std::size_t corpus_size);

struct ClusterModel {
  TfidfModel tfidf;
  Centroids centroids;

  void save(const std::string& path) const;
  static ClusterModel load(const std::string& path);
};

}  // namespace curate
