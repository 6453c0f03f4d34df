#include "curate/learned_filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "binio.hpp"
#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/text.hpp"

namespace curate {

namespace {

constexpr std::uint64_t kUnigramSeed = 0x75'6e'69ULL;

bool power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

HashedFeatureVector hashed_counts(std::string_view text, std::uint32_t dimension) {
  if (!power_of_two(dimension)) throw Error(ErrorKind::invalid_argument, "feature dimension must be a power of two");
  HashedFeatureVector v;
  v.dimension = dimension;
  const std::string norm = dedup_normalize(text);
  std::vector<std::pair<std::uint32_t, double>> raw;
  std::uint64_t prev = 0;
  bool have_prev = false;
  auto add = [&](std::uint64_t h) {
    const auto index = static_cast<std::uint32_t>(h & (dimension - 1));
    raw.emplace_back(index, (h >> 63) ? -1.0 : 1.0);
  };
  for_each_word(norm, [&](std::string_view w) {
    const std::uint64_t h = hash64(w, kUnigramSeed);
    add(h);
    if (have_prev) add(hash_combine(prev, h));
    prev = h;
    have_prev = true;
  });
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [index, w] : raw) {
    if (!v.entries.empty() && v.entries.back().first == index) {
      v.entries.back().second += w;
    } else {
      v.entries.emplace_back(index, w);
    }
  }
  std::erase_if(v.entries, [](const auto& e) { return e.second == 0.0; });
  return v;
}

void l2_normalize(HashedFeatureVector& v) {
  double sq = 0;
  for (const auto& [i, w] : v.entries) sq += w * w;
  if (sq == 0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& [i, w] : v.entries) w *= inv;
}

HashedFeatureVector featurize(std::string_view text, std::uint32_t dimension) {
  HashedFeatureVector v = hashed_counts(text, dimension);
  l2_normalize(v);
  return v;
}

double dot(const HashedFeatureVector& a, const HashedFeatureVector& b) {
  double s = 0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() && ib != b.entries.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      s += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return s;
}

// --- classifier ----------------------------------------------------------------

double LinearClassifier::margin(const HashedFeatureVector& x) const {
  double z = bias_;
  for (const auto& [i, w] : x.entries) z += weights_[i] * w;
  return z;
}

double LinearClassifier::score(const HashedFeatureVector& x) const {
  if (x.dimension != dimension()) throw Error(ErrorKind::invalid_argument, "feature dimension mismatch");
  return sigmoid(margin(x));
}

double LinearClassifier::score_text(std::string_view text) const { return score(featurize(text, dimension())); }

LinearClassifier train_classifier(const std::vector<std::string>& positives, const std::vector<std::string>& negatives,
                                  const ClassifierHyperparams& hp) {
  if (positives.empty() || negatives.empty()) {
    throw Error(ErrorKind::one_class_only, "training needs both positive and negative examples");
  }
  struct Example {
    std::uint64_t key;
    const std::string* text;
    double label;
  };
  std::vector<Example> examples;
  examples.reserve(positives.size() + negatives.size());
  for (const auto& t : positives) examples.push_back({hash64(t), &t, 1.0});
  for (const auto& t : negatives) examples.push_back({hash64(t), &t, 0.0});
  std::stable_sort(examples.begin(), examples.end(), [](const Example& a, const Example& b) {
    return a.key != b.key ? a.key < b.key : *a.text < *b.text;
  });

  std::vector<HashedFeatureVector> features;
  features.reserve(examples.size());
  for (const auto& e : examples) features.push_back(featurize(*e.text, hp.dimension));

  LinearClassifier model(hp.dimension);
  model.epochs = hp.epochs;
  model.seed = hp.seed;
  auto& w = model.weights();
  double& b = model.bias_ref();

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::mt19937_64 rng(hp.seed + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(order[i], order[j]);
    }
    const double lr = hp.learning_rate / (1.0 + epoch);
    for (const std::size_t k : order) {
      const HashedFeatureVector& x = features[k];
      const double g = sigmoid(model.margin(x)) - examples[k].label;
      for (const auto& [i, v] : x.entries) w[i] -= lr * (g * v + hp.l2 * w[i]);
      b -= lr * g;
    }
  }
  return model;
}

double score_quality(const Document& doc, const LinearClassifier& quality) { return quality.score_text(doc.text); }

double score_safety(const Document& doc, const LinearClassifier& safety) { return safety.score_text(doc.text); }

double roc_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw Error(ErrorKind::invalid_argument, "AUC needs both classes");
  std::vector<std::pair<double, int>> all;
  all.reserve(pos.size() + neg.size());
  for (const double s : pos) all.emplace_back(s, 1);
  for (const double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end());
  double rank_sum = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

void LinearClassifier::save(const std::string& path) const {
  auto out = detail::open_out(path);
  detail::BinWriter w(out);
  w.put_magic("CURATE-LINCLS", 1);
  w.put(dimension());
  w.put(bias_);
  w.put(static_cast<std::int32_t>(epochs));
  w.put(seed);
  w.put_string(positive_tag);
  w.put_string(negative_tag);
  std::uint64_t nnz = 0;
  for (const double v : weights_) nnz += v != 0.0;
  w.put(nnz);
  for (std::uint32_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0.0) {
      w.put(i);
      w.put(weights_[i]);
    }
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

LinearClassifier LinearClassifier::load(const std::string& path) {
  auto in = detail::open_in(path);
  detail::BinReader r(in, path);
  r.expect_magic("CURATE-LINCLS", 1);
  const auto dim = r.get<std::uint32_t>();
  if (!power_of_two(dim)) r.fail("dimension is not a power of two");
  LinearClassifier m(dim);
  m.bias_ = r.get<double>();
  m.epochs = r.get<std::int32_t>();
  m.seed = r.get<std::uint64_t>();
  m.positive_tag = r.get_string();
  m.negative_tag = r.get_string();
  const auto nnz = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < nnz; ++k) {
    const auto i = r.get<std::uint32_t>();
    if (i >= dim) r.fail("weight index out of range");
    m.weights_[i] = r.get<double>();
  }
  return m;
}

// --- coherence -----------------------------------------------------------------

std::string_view to_string(CoherenceAction a) noexcept {
  switch (a) {
    case CoherenceAction::keep: return "keep";
    case CoherenceAction::segment: return "segment";
    case CoherenceAction::drop: return "drop";
  }
  return "keep";
}

CoherenceReport coherence_report(const Document& doc, const CoherenceThresholds& t) {
  CoherenceReport r;
  const auto paragraphs = split_paragraphs(doc.text);
  if (paragraphs.size() < 2) return r;
  std::vector<HashedFeatureVector> vecs;
  vecs.reserve(paragraphs.size());
  for (const auto p : paragraphs) vecs.push_back(featurize(p, t.dimension));
  double sum = 0;
  for (std::size_t i = 0; i + 1 < vecs.size(); ++i) {
    // negative cosines clip to zero: the rule only measures dissimilarity
    const double s = std::clamp(dot(vecs[i], vecs[i + 1]), 0.0, 1.0);
    r.similarities.push_back(s);
    sum += s;
  }
  r.mean = sum / static_cast<double>(r.similarities.size());
  if (r.mean >= t.keep) {
    r.action = CoherenceAction::keep;
  } else if (r.mean < t.drop) {
    r.action = CoherenceAction::drop;
  } else {
    for (std::size_t i = 0; i < r.similarities.size(); ++i) {
      if (r.similarities[i] < t.cut) r.cut_at.push_back(i);
    }
    r.action = r.cut_at.empty() ? CoherenceAction::keep : CoherenceAction::segment;
  }
  return r;
}

std::vector<Document> apply_coherence(const Document& doc, const CoherenceReport& report) {
  const auto paragraphs = split_paragraphs(doc.text);
  const std::size_t boundaries = paragraphs.empty() ? 0 : paragraphs.size() - 1;
  if (report.similarities.size() != boundaries) {
    throw Error(ErrorKind::report_mismatch, "report has " + std::to_string(report.similarities.size()) +
                                                " boundaries, document has " + std::to_string(boundaries));
  }
  for (const auto b : report.cut_at) {
    if (b >= boundaries) throw Error(ErrorKind::report_mismatch, "cut index out of range");
  }
  switch (report.action) {
    case CoherenceAction::keep:
      return {doc};
    case CoherenceAction::drop:
      return {};
    case CoherenceAction::segment:
      break;
  }
  std::vector<std::size_t> cuts = report.cut_at;
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<Document> out;
  std::size_t first = 0;
  const std::string_view text = doc.text;
  auto emit = [&](std::size_t last) {
    const std::size_t begin = static_cast<std::size_t>(paragraphs[first].data() - text.data());
    const std::size_t end = static_cast<std::size_t>(paragraphs[last].data() - text.data()) + paragraphs[last].size();
    Document seg = doc;
    seg.id = doc.id + "#" + std::to_string(out.size());
    seg.text = std::string(text.substr(begin, end - begin));
    out.push_back(std::move(seg));
  };
  for (const auto b : cuts) {
    emit(b);
    first = b + 1;
  }
  emit(paragraphs.size() - 1);
  return out;
}

}  // namespace curate
