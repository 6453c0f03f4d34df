#include "curate/cluster_filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/text.hpp"

namespace curate {

double TfidfModel::idf(std::uint32_t index) const {
  const double df = document_frequency.empty() ? 0.0 : document_frequency[index];
  return std::log((1.0 + static_cast<double>(corpus_size)) / (1.0 + df)) + 1.0;
}

TfidfModel fit_tfidf(const std::vector<HashedFeatureVector>& counts, std::uint32_t dimension) {
  TfidfModel m;
  m.dimension = dimension;
  m.corpus_size = counts.size();
  m.document_frequency.assign(dimension, 0);
  for (const auto& v : counts) {
    if (v.dimension != dimension) throw Error(ErrorKind::invalid_argument, "feature dimension mismatch");
    for (const auto& [i, w] : v.entries) ++m.document_frequency[i];
  }
  return m;
}

HashedFeatureVector tfidf_transform(const HashedFeatureVector& counts, const TfidfModel& model) {
  if (counts.dimension != model.dimension) throw Error(ErrorKind::invalid_argument, "feature dimension mismatch");
  HashedFeatureVector v = counts;
  for (auto& [i, w] : v.entries) w *= model.idf(i);
  l2_normalize(v);
  return v;
}

namespace {

double dense_dot(const HashedFeatureVector& x, const std::vector<double>& c) {
  double s = 0;
  for (const auto& [i, w] : x.entries) s += w * c[i];
  return s;
}

void normalize_dense(std::vector<double>& c) {
  double sq = 0;
  for (const double v : c) sq += v * v;
  if (sq == 0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& v : c) v *= inv;
}

std::uint64_t vector_key(const HashedFeatureVector& v) {
  std::uint64_t h = 0;
  for (const auto& [i, w] : v.entries) {
    std::uint64_t bits;
    std::memcpy(&bits, &w, sizeof bits);
    h = hash_combine(hash_combine(h, i), bits);
  }
  return h;
}

}  // namespace

ClusterAssignment assign_cluster(const HashedFeatureVector& v, const Centroids& centroids) {
  ClusterAssignment a;
  if (v.empty()) {
    a.zero_vector = true;
    return a;
  }
  double best = -2.0;
  for (std::size_t c = 0; c < centroids.k(); ++c) {
    const double s = dense_dot(v, centroids.vectors[c]);
    if (s > best) {
      best = s;
      a.cluster = static_cast<std::uint32_t>(c);
    }
  }
  a.similarity = best;
  return a;
}

Centroids fit_kmeans(const std::vector<HashedFeatureVector>& all, std::size_t k, int max_iters, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorKind::invalid_argument, "k must be >= 1");
  std::vector<const HashedFeatureVector*> points;
  std::set<std::uint64_t> distinct;
  for (const auto& v : all) {
    if (v.empty()) continue;
    points.push_back(&v);
    distinct.insert(vector_key(v));
  }
  if (distinct.size() < k) {
    throw Error(ErrorKind::too_few_points,
                "need " + std::to_string(k) + " distinct vectors, have " + std::to_string(distinct.size()));
  }
  const std::uint32_t dim = points.front()->dimension;

  Centroids cs;
  cs.dimension = dim;
  cs.seed = seed;
  std::mt19937_64 rng(seed);
  auto to_dense = [&](const HashedFeatureVector& v) {
    std::vector<double> c(dim, 0.0);
    for (const auto& [i, w] : v.entries) c[i] = w;
    return c;
  };

  // k-means++ seeding with 1 - cos as the squared-distance proxy
  const std::size_t n = points.size();
  std::vector<double> nearest(n, 2.0);
  std::size_t pick = static_cast<std::size_t>(rng() % n);
  for (std::size_t c = 0; c < k; ++c) {
    cs.vectors.push_back(to_dense(*points[pick]));
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], std::max(0.0, 1.0 - dense_dot(*points[i], cs.vectors.back())));
      total += nearest[i];
    }
    if (c + 1 == k) break;
    if (total <= 0) throw Error(ErrorKind::too_few_points, "all points coincide with chosen centers");
    double u = unit_interval(rng()) * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] <= 0) continue;
      if (u < nearest[i]) {
        pick = i;
        break;
      }
      u -= nearest[i];
    }
    while (nearest[pick] <= 0) --pick;
  }

  std::vector<std::uint32_t> assignment(n, 0);
  for (int iter = 0; iter < std::max(1, max_iters); ++iter) {
    bool changed = iter == 0;
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const ClusterAssignment a = assign_cluster(*points[i], cs);
      if (a.cluster != assignment[i]) changed = true;
      assignment[i] = a.cluster;
      inertia += 1.0 - a.similarity;
    }
    cs.inertia = inertia;
    cs.inertia_history.push_back(inertia);
    cs.iterations = iter + 1;
    if (!changed) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> members(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[assignment[i]];
      for (const auto& [j, w] : points[i]->entries) s[j] += w;
      ++members[assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (members[c] == 0) continue;  // empty clusters keep their centroid
      normalize_dense(sums[c]);
      cs.vectors[c] = std::move(sums[c]);
    }
  }
  return cs;
}

std::map<std::uint32_t, ClusterVerdict> parse_overrides(std::string_view text) {
  std::map<std::uint32_t, ClusterVerdict> out;
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto words = split_words(line);
    if (words.empty()) continue;
    if (words.size() != 2) throw Error(ErrorKind::parse_error, "override line " + std::to_string(line_no) + ": expected '<id> keep|drop'");
    std::uint32_t id = 0;
    try {
      id = static_cast<std::uint32_t>(std::stoul(std::string(words[0])));
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse_error, "override line " + std::to_string(line_no) + ": bad cluster id");
    }
    if (words[1] == "keep") {
      out[id] = ClusterVerdict::keep;
    } else if (words[1] == "drop") {
      out[id] = ClusterVerdict::drop;
    } else {
      throw Error(ErrorKind::parse_error, "override line " + std::to_string(line_no) + ": verdict must be keep or drop");
    }
  }
  return out;
}

std::map<std::uint32_t, ClusterVerdict> load_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open override file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_overrides(ss.str());
}

ClusterLabelMap label_clusters(const std::vector<std::uint32_t>& assignments,
                               const std::vector<std::optional<double>>& quality_scores, std::size_t k,
                               double cluster_q_min, const std::map<std::uint32_t, ClusterVerdict>& overrides) {
  if (assignments.size() != quality_scores.size()) {
    throw Error(ErrorKind::missing_scores, "assignment and score counts differ");
  }
  ClusterLabelMap map;
  map.clusters.resize(k);
  std::vector<double> sums(k, 0.0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto c = assignments[i];
    if (c >= k) throw Error(ErrorKind::invalid_argument, "cluster id out of range");
    if (!quality_scores[i]) throw Error(ErrorKind::missing_scores, "document " + std::to_string(i) + " has no quality score");
    sums[c] += *quality_scores[i];
    ++map.clusters[c].count;
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto& label = map.clusters[c];
    if (label.count > 0) {
      label.mean_quality = sums[c] / static_cast<double>(label.count);
      label.verdict = label.mean_quality < cluster_q_min ? ClusterVerdict::drop : ClusterVerdict::keep;
    }
    if (const auto it = overrides.find(static_cast<std::uint32_t>(c)); it != overrides.end()) {
      label.manual_override = it->second;
    }
  }
  return map;
}

std::size_t default_cluster_count(std::size_t corpus_size) {
  return std::min<std::size_t>(1024, std::max<std::size_t>(16, corpus_size / 10'000));
}

void ClusterModel::save(const std::string& path) const {
  auto out = detail::open_out(path);
  detail::BinWriter w(out);
  w.put_magic("CURATE-CENTROIDS", 1);
  w.put(centroids.dimension);
  w.put(static_cast<std::uint32_t>(centroids.k()));
  w.put(centroids.seed);
  w.put(static_cast<std::int32_t>(centroids.iterations));
  w.put(centroids.inertia);
  w.put(tfidf.corpus_size);
  for (const auto df : tfidf.document_frequency) w.put(df);
  for (const auto& c : centroids.vectors) {
    for (const double v : c) w.put(v);
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

ClusterModel ClusterModel::load(const std::string& path) {
  auto in = detail::open_in(path);
  detail::BinReader r(in, path);
  r.expect_magic("CURATE-CENTROIDS", 1);
  ClusterModel m;
  m.centroids.dimension = r.get<std::uint32_t>();
  const auto k = r.get<std::uint32_t>();
  m.centroids.seed = r.get<std::uint64_t>();
  m.centroids.iterations = r.get<std::int32_t>();
  m.centroids.inertia = r.get<double>();
  m.tfidf.dimension = m.centroids.dimension;
  m.tfidf.corpus_size = r.get<std::uint64_t>();
  m.tfidf.document_frequency.resize(m.centroids.dimension);
  for (auto& df : m.tfidf.document_frequency) df = r.get<std::uint32_t>();
  m.centroids.vectors.assign(k, std::vector<double>(m.centroids.dimension));
  for (auto& c : m.centroids.vectors) {
    for (auto& v : c) v = r.get<double>();
  }
  return m;
}

}  // namespace curate
