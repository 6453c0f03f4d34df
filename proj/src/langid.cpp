#include <algorithm>
#include <cmath>
#include <map>

#include "binio.hpp"
#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/lang_stat_models.hpp"
#include "curate/text.hpp"

namespace curate {

std::vector<std::pair<int, std::uint64_t>> char_ngrams(std::string_view text) {
  std::vector<std::pair<int, std::uint64_t>> grams;
  std::vector<char32_t> cps;
  auto flush = [&] {
    if (cps.empty()) return;
    cps.insert(cps.begin(), U' ');
    cps.push_back(U' ');
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::uint64_t h = 0;
      for (int n = 1; n <= CharNgramProfile::kMaxOrder && i + static_cast<std::size_t>(n) <= cps.size(); ++n) {
        h = hash_combine(h + static_cast<std::uint64_t>(n), cps[i + static_cast<std::size_t>(n) - 1]);
        grams.emplace_back(n, h);
      }
    }
    cps.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = next_codepoint(text, i);
    if (is_unicode_space(cp)) {
      flush();
    } else {
      cps.push_back(cp);
    }
  }
  flush();
  return grams;
}

CharNgramProfile train_langid(const std::vector<std::pair<std::string, std::string>>& labeled, double alpha) {
  std::map<std::string, std::size_t> chars_per_lang;
  for (const auto& [lang, text] : labeled) chars_per_lang[lang] += count_codepoints(text);
  if (chars_per_lang.size() < 2) {
    throw Error(ErrorKind::insufficient_data, "language identification needs at least two languages");
  }
  for (const auto& [lang, n] : chars_per_lang) {
    if (n < CharNgramProfile::kMinTrainingChars) {
      throw Error(ErrorKind::insufficient_data, "language " + lang + " has only " + std::to_string(n) + " characters");
    }
  }

  CharNgramProfile p;
  p.alpha_ = alpha;
  for (const auto& [lang, n] : chars_per_lang) p.languages_.push_back(lang);
  const std::size_t n_lang = p.languages_.size();
  auto lang_index = [&](const std::string& lang) {
    return static_cast<std::size_t>(std::lower_bound(p.languages_.begin(), p.languages_.end(), lang) - p.languages_.begin());
  };

  std::array<std::unordered_map<std::uint64_t, std::vector<double>>, CharNgramProfile::kMaxOrder + 1> counts;
  std::array<std::vector<double>, CharNgramProfile::kMaxOrder + 1> totals;
  for (auto& t : totals) t.assign(n_lang, 0.0);
  for (const auto& [lang, text] : labeled) {
    const std::size_t li = lang_index(lang);
    for (const auto& [n, key] : char_ngrams(text)) {
      auto& c = counts[static_cast<std::size_t>(n)][key];
      if (c.empty()) c.assign(n_lang, 0.0);
      c[li] += 1.0;
      totals[static_cast<std::size_t>(n)][li] += 1.0;
    }
  }

  for (std::size_t n = 1; n <= CharNgramProfile::kMaxOrder; ++n) {
    // one extra vocabulary slot carries the unseen mass
    const double vocab = static_cast<double>(counts[n].size() + 1);
    p.unseen_[n].resize(n_lang);
    std::vector<double> denom(n_lang);
    for (std::size_t li = 0; li < n_lang; ++li) {
      denom[li] = totals[n][li] + alpha * vocab;
      p.unseen_[n][li] = std::log(alpha / denom[li]);
    }
    auto& table = p.log_probs_[n];
    table.reserve(counts[n].size());
    for (const auto& [key, c] : counts[n]) {
      std::vector<double> lp(n_lang);
      for (std::size_t li = 0; li < n_lang; ++li) lp[li] = std::log((c[li] + alpha) / denom[li]);
      table.emplace(key, std::move(lp));
    }
  }
  return p;
}

double CharNgramProfile::log_prob(int order, std::uint64_t key, std::size_t lang_index) const {
  const auto& table = log_probs_.at(static_cast<std::size_t>(order));
  const auto it = table.find(key);
  if (it == table.end()) return unseen_[static_cast<std::size_t>(order)][lang_index];
  return it->second[lang_index];
}

double CharNgramProfile::total_mass(int order, std::size_t lang_index) const {
  const auto n = static_cast<std::size_t>(order);
  double sum = std::exp(unseen_[n][lang_index]);
  for (const auto& [key, lp] : log_probs_[n]) sum += std::exp(lp[lang_index]);
  return sum;
}

std::vector<double> CharNgramProfile::mean_log_likelihood(std::string_view text) const {
  std::vector<double> ll(languages_.size(), 0.0);
  const auto grams = char_ngrams(text);
  if (grams.empty()) return ll;
  for (const auto& [n, key] : grams) {
    const auto& table = log_probs_[static_cast<std::size_t>(n)];
    const auto it = table.find(key);
    for (std::size_t li = 0; li < ll.size(); ++li) {
      ll[li] += it == table.end() ? unseen_[static_cast<std::size_t>(n)][li] : it->second[li];
    }
  }
  for (auto& v : ll) v /= static_cast<double>(grams.size());
  return ll;
}

LanguageGuess identify_language(std::string_view text, const CharNgramProfile& profile) {
  if (count_codepoints(trim(text)) < CharNgramProfile::kMinTextChars) return {"und", 0.0};
  const std::vector<double> ll = profile.mean_log_likelihood(text);
  const auto best = static_cast<std::size_t>(std::max_element(ll.begin(), ll.end()) - ll.begin());
  double z = 0;
  for (const double v : ll) z += std::exp(v - ll[best]);
  return {profile.languages()[best], 1.0 / z};
}

void CharNgramProfile::save(const std::string& path) const {
  auto out = detail::open_out(path);
  detail::BinWriter w(out);
  w.put_magic("CURATE-LANGID", 1);
  w.put(alpha_);
  w.put(static_cast<std::uint32_t>(languages_.size()));
  for (const auto& l : languages_) w.put_string(l);
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    for (const double u : unseen_[n]) w.put(u);
    // sorted keys keep the file byte-stable
    std::vector<std::uint64_t> keys;
    keys.reserve(log_probs_[n].size());
    for (const auto& [k, v] : log_probs_[n]) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    w.put(static_cast<std::uint64_t>(keys.size()));
    for (const auto k : keys) {
      w.put(k);
      for (const double lp : log_probs_[n].at(k)) w.put(lp);
    }
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

CharNgramProfile CharNgramProfile::load(const std::string& path) {
  auto in = detail::open_in(path);
  detail::BinReader r(in, path);
  r.expect_magic("CURATE-LANGID", 1);
  CharNgramProfile p;
  p.alpha_ = r.get<double>();
  const auto n_lang = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_lang; ++i) p.languages_.push_back(r.get_string());
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    p.unseen_[n].resize(n_lang);
    for (auto& u : p.unseen_[n]) u = r.get<double>();
    const auto count = r.get<std::uint64_t>();
    p.log_probs_[n].reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto k = r.get<std::uint64_t>();
      std::vector<double> lp(n_lang);
      for (auto& v : lp) v = r.get<double>();
      p.log_probs_[n].emplace(k, std::move(lp));
    }
  }
  return p;
}

}  // namespace curate
