#include <algorithm>
#include <cmath>

#include "curate/error.hpp"
#include "curate/lang_stat_models.hpp"

namespace curate {

std::string_view to_string(Bucket b) noexcept {
  switch (b) {
    case Bucket::head: return "head";
    case Bucket::middle: return "middle";
    case Bucket::tail: return "tail";
  }
  return "tail";
}

std::pair<double, double> tertiles(std::vector<double> scores) {
  if (scores.size() < 3) throw Error(ErrorKind::insufficient_calibration, "need at least 3 calibration scores");
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  const std::size_t i1 = (n + 2) / 3 - 1;      // ceil(n/3) - 1
  const std::size_t i2 = (2 * n + 2) / 3 - 1;  // ceil(2n/3) - 1
  return {scores[i1], scores[i2]};
}

PerplexityBuckets fit_buckets(const std::map<std::string, std::vector<double>>& scores) {
  PerplexityBuckets b;
  for (const auto& [lang, s] : scores) {
    try {
      b.bounds[lang] = tertiles(s);
    } catch (const Error&) {
      throw Error(ErrorKind::insufficient_calibration, "language " + lang + " has fewer than 3 calibration scores");
    }
  }
  return b;
}

Bucket PerplexityBuckets::bucket(double ppl, const std::string& lang) const {
  auto it = bounds.find(lang);
  if (it == bounds.end()) it = bounds.find("*");
  if (it == bounds.end()) throw Error(ErrorKind::insufficient_calibration, "no buckets for language " + lang);
  const auto [b1, b2] = it->second;
  if (ppl <= b1) return Bucket::head;
  if (ppl <= b2) return Bucket::middle;
  return Bucket::tail;
}

}  // namespace curate
