#include "curate/topic_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "binio.hpp"
#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/text.hpp"

namespace curate {

std::vector<std::uint32_t> topic_features(std::string_view text, std::uint32_t dimension) {
  if (dimension == 0 || (dimension & (dimension - 1)) != 0) {
    throw Error(ErrorKind::invalid_argument, "topic feature dimension must be a power of two");
  }
  std::vector<std::uint32_t> out;
  const std::string norm = dedup_normalize(text);
  for_each_word(norm, [&](std::string_view w) { out.push_back(static_cast<std::uint32_t>(hash64(w) & (dimension - 1))); });
  return out;
}

void TopicModel::rebuild_tables() {
  const std::size_t k = labels_.size();
  std::uint64_t total_docs = 0;
  for (const auto c : doc_counts_) total_docs += c;
  log_prior_.assign(k, 0.0);
  log_prob_.assign(k, std::vector<double>(dimension_, 0.0));
  for (std::size_t c = 0; c < k; ++c) {
    log_prior_[c] = std::log(static_cast<double>(doc_counts_[c]) / static_cast<double>(total_docs));
    std::uint64_t total = 0;
    for (const auto& [f, n] : feature_counts_[c]) total += n;
    const double denom = static_cast<double>(total) + alpha_ * dimension_;
    const double unseen = std::log(alpha_ / denom);
    std::fill(log_prob_[c].begin(), log_prob_[c].end(), unseen);
    for (const auto& [f, n] : feature_counts_[c]) log_prob_[c][f] = std::log((static_cast<double>(n) + alpha_) / denom);
  }
}

TopicModel train_topic(const std::vector<LabeledText>& examples, const std::vector<std::string>& labels,
                       std::uint32_t dimension, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::invalid_argument, "smoothing must be positive");
  const std::set<std::string> label_set(labels.begin(), labels.end());
  if (label_set.empty()) throw Error(ErrorKind::invalid_argument, "no topic labels");
  TopicModel m;
  m.labels_.assign(label_set.begin(), label_set.end());
  m.dimension_ = dimension;
  m.alpha_ = alpha;
  m.doc_counts_.assign(m.labels_.size(), 0);
  m.feature_counts_.assign(m.labels_.size(), {});
  for (const auto& ex : examples) {
    const auto it = std::lower_bound(m.labels_.begin(), m.labels_.end(), ex.label);
    if (it == m.labels_.end() || *it != ex.label) {
      throw Error(ErrorKind::invalid_argument, "example label not declared: " + ex.label);
    }
    const auto c = static_cast<std::size_t>(it - m.labels_.begin());
    ++m.doc_counts_[c];
    for (const auto f : topic_features(ex.text, dimension)) ++m.feature_counts_[c][f];
  }
  for (std::size_t c = 0; c < m.labels_.size(); ++c) {
    if (m.doc_counts_[c] == 0) throw Error(ErrorKind::missing_class, "no training examples for label " + m.labels_[c]);
  }
  m.rebuild_tables();
  return m;
}

TopicPrediction classify_topic(std::string_view text, const TopicModel& model) {
  const auto& labels = model.labels();
  TopicPrediction out;
  const auto features = topic_features(text, model.dimension());
  if (features.empty()) {
    out.label = "other";
    for (const auto& l : labels) out.posterior[l] = 1.0 / static_cast<double>(labels.size());
    return out;
  }
  std::vector<double> score(labels.size());
  for (std::size_t c = 0; c < labels.size(); ++c) {
    double s = model.log_prior(c);
    for (const auto f : features) s += model.log_prob(c, f);
    score[c] = s;
  }
  // first maximum wins; labels are sorted
  const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
  double z = 0.0;
  for (const double s : score) z += std::exp(s - score[best]);
  for (std::size_t c = 0; c < labels.size(); ++c) out.posterior[labels[c]] = std::exp(score[c] - score[best]) / z;
  out.label = labels[best];
  return out;
}

void TopicModel::save(const std::string& path) const {
  auto out = detail::open_out(path);
  detail::BinWriter w(out);
  w.put_magic("CURATE-TOPIC", 1);
  w.put(dimension_);
  w.put(alpha_);
  w.put(static_cast<std::uint32_t>(labels_.size()));
  for (std::size_t c = 0; c < labels_.size(); ++c) {
    w.put_string(labels_[c]);
    w.put(doc_counts_[c]);
    w.put(static_cast<std::uint64_t>(feature_counts_[c].size()));
    for (const auto& [f, n] : feature_counts_[c]) {
      w.put(f);
      w.put(n);
    }
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

TopicModel TopicModel::load(const std::string& path) {
  auto in = detail::open_in(path);
  detail::BinReader r(in, path);
  r.expect_magic("CURATE-TOPIC", 1);
  TopicModel m;
  m.dimension_ = r.get<std::uint32_t>();
  m.alpha_ = r.get<double>();
  if (m.dimension_ == 0 || (m.dimension_ & (m.dimension_ - 1)) != 0 || !(m.alpha_ > 0.0)) r.fail("bad header");
  const auto k = r.get<std::uint32_t>();
  if (k == 0) r.fail("no labels");
  for (std::uint32_t c = 0; c < k; ++c) {
    m.labels_.push_back(r.get_string());
    m.doc_counts_.push_back(r.get<std::uint64_t>());
    if (m.doc_counts_.back() == 0) r.fail("empty class");
    auto& counts = m.feature_counts_.emplace_back();
    const auto entries = r.get<std::uint64_t>();
    for (std::uint64_t e = 0; e < entries; ++e) {
      const auto f = r.get<std::uint32_t>();
      if (f >= m.dimension_) r.fail("feature out of range");
      counts[f] = r.get<std::uint64_t>();
    }
  }
  if (!std::is_sorted(m.labels_.begin(), m.labels_.end())) r.fail("labels not sorted");
  m.rebuild_tables();
  return m;
}

double SamplingPolicy::keep_prob(const std::string& label) const {
  const auto it = keep_probability.find(label);
  return it == keep_probability.end() ? default_keep : it->second;
}

void SamplingPolicy::validate() const {
  auto check = [](double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::invalid_argument, "keep probability out of [0,1] for " + what);
  };
  check(default_keep, "default");
  for (const auto& [label, p] : keep_probability) check(p, label);
}

bool keep_document(const std::string& id, const std::string& label, const SamplingPolicy& policy) {
  return unit_interval(hash64(id, policy.seed)) < policy.keep_prob(label);
}

std::vector<Document> downsample(std::vector<Document> docs, const SamplingPolicy& policy, StageReport& report) {
  policy.validate();
  report.docs_in += docs.size();
  std::vector<Document> out;
  out.reserve(docs.size());
  for (auto& d : docs) {
    const auto it = d.meta.find(kTopicLabelKey);
    if (it == d.meta.end()) throw Error(ErrorKind::unlabeled_doc, "document without topic label: " + d.id);
    if (keep_document(d.id, it->second, policy)) {
      out.push_back(std::move(d));
    } else {
      report.drop("topic-downsample:" + it->second);
    }
  }
  report.docs_kept += out.size();
  return out;
}

}  // namespace curate
