#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "curate/corpus_io.hpp"
#include "curate/error.hpp"
#include "curate/lang_stat_models.hpp"
#include "curate/text.hpp"

namespace curate {

namespace {

constexpr const char* kMagic = "CURATE-NGRAM";
constexpr int kVersion = 1;

std::string pack(const std::uint32_t* ids, std::size_t n) {
  std::string key(n * 4, '\0');
  std::memcpy(key.data(), ids, n * 4);
  return key;
}

std::vector<std::uint32_t> unpack(std::string_view key) {
  std::vector<std::uint32_t> ids(key.size() / 4);
  std::memcpy(ids.data(), key.data(), key.size());
  return ids;
}

bool starts_with_bos(std::string_view key) {
  std::uint32_t first;
  std::memcpy(&first, key.data(), 4);
  return first == NgramLM::kBos;
}

template <typename F>
void for_each_sentence(std::string_view text, F&& emit) {
  for (const auto line : split_lines(text)) {
    if (is_blank(line)) continue;
    const std::string norm = dedup_normalize(line);
    std::vector<std::string_view> words = split_words(norm);
    if (!words.empty()) emit(words);
  }
}

Discounts estimate_discounts(const std::unordered_map<std::string, std::uint64_t>& counts) {
  std::array<double, 5> coc{};
  for (const auto& [key, c] : counts) {
    if (c >= 1 && c <= 4) coc[c] += 1;
  }
  Discounts d;
  const double n1 = coc[1], n2 = coc[2], n3 = coc[3], n4 = coc[4];
  if (n1 > 0 && n2 > 0 && n3 > 0 && n4 > 0) {
    const double y = n1 / (n1 + 2 * n2);
    const Discounts est{1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3, false};
    if (est.d1 > 0 && est.d1 < 1 && est.d2 > 0 && est.d2 < 2 && est.d3plus > 0 && est.d3plus < 3) return est;
  }
  d.fallback = true;
  return d;
}

}  // namespace

std::uint32_t NgramLM::word_id(std::string_view w) const {
  const auto it = ids_.find(std::string(w));
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::uint32_t> NgramLM::predicted_symbols() const {
  std::vector<std::uint32_t> v{kUnk};
  if (order_ >= 2) v.push_back(kEos);
  for (std::uint32_t id = 3; id < words_.size(); ++id) v.push_back(id);
  return v;
}

std::vector<std::vector<std::uint32_t>> NgramLM::sentences(std::string_view text) const {
  std::vector<std::vector<std::uint32_t>> out;
  for_each_sentence(text, [&](const std::vector<std::string_view>& words) {
    std::vector<std::uint32_t> ids;
    ids.reserve(words.size());
    for (const auto w : words) ids.push_back(word_id(w));
    out.push_back(std::move(ids));
  });
  return out;
}

NgramLM train_ngram_lm(const std::vector<std::string>& corpus, const NgramLMConfig& cfg) {
  if (cfg.order < 1) throw Error(ErrorKind::invalid_argument, "order must be >= 1");

  std::map<std::string, std::uint64_t> freq;
  std::uint64_t tokens = 0;
  for (const auto& text : corpus) {
    for_each_sentence(text, [&](const std::vector<std::string_view>& words) {
      for (const auto w : words) ++freq[std::string(w)];
      tokens += words.size();
    });
  }
  if (tokens == 0) throw Error(ErrorKind::empty_corpus, "no tokens to train on");

  NgramLM lm;
  lm.order_ = cfg.order;
  lm.min_count_ = cfg.min_count;
  lm.words_ = {"<unk>", "<s>", "</s>"};
  for (const auto& [w, c] : freq) {
    if (c >= cfg.min_count) {
      lm.ids_.emplace(w, static_cast<std::uint32_t>(lm.words_.size()));
      lm.words_.push_back(w);
    }
  }

  const auto order = static_cast<std::size_t>(cfg.order);
  std::vector<std::unordered_map<std::string, std::uint64_t>> raw(order + 1);
  for (const auto& text : corpus) {
    for (const auto& ids : lm.sentences(text)) {
      std::vector<std::uint32_t> padded;
      if (order >= 2) padded.push_back(NgramLM::kBos);
      padded.insert(padded.end(), ids.begin(), ids.end());
      if (order >= 2) padded.push_back(NgramLM::kEos);
      for (std::size_t n = 1; n <= order; ++n) {
        for (std::size_t i = 0; i + n <= padded.size(); ++i) {
          if (n == 1 && padded[i] == NgramLM::kBos) continue;
          ++raw[n][pack(&padded[i], n)];
        }
      }
    }
  }

  lm.counts_.assign(order + 1, {});
  lm.counts_[order] = raw[order];
  for (std::size_t n = order - 1; n >= 1; --n) {
    std::unordered_map<std::string, std::uint64_t> continuation;
    for (const auto& [key, c] : raw[n + 1]) ++continuation[key.substr(4)];
    auto& adj = lm.counts_[n];
    for (const auto& [key, c] : raw[n]) {
      adj[key] = starts_with_bos(key) ? c : continuation[key];
    }
  }
  lm.finalize();
  return lm;
}

void NgramLM::finalize() {
  const auto order = static_cast<std::size_t>(order_);
  discounts_.assign(order + 1, Discounts{});
  contexts_.assign(order + 1, {});
  unigram_total_ = 0;
  unigram_stats_ = {};
  for (std::size_t n = 1; n <= order; ++n) {
    discounts_[n] = estimate_discounts(counts_[n]);
    for (const auto& [key, c] : counts_[n]) {
      ContextStats& s = n == 1 ? unigram_stats_ : contexts_[n][key.substr(0, key.size() - 4)];
      s.total += c;
      if (c == 1) {
        ++s.n1;
      } else if (c == 2) {
        ++s.n2;
      } else if (c >= 3) {
        ++s.n3plus;
      }
    }
  }
  unigram_total_ = unigram_stats_.total;
}

double NgramLM::prob_at(int n, const std::uint32_t* ctx, std::size_t ctx_len, std::uint32_t word) const {
  const auto un = static_cast<std::size_t>(n);
  const Discounts& d = discounts_[un];
  if (n == 1) {
    const auto it = counts_[1].find(pack(&word, 1));
    const std::uint64_t c = it == counts_[1].end() ? 0 : it->second;
    const double total = static_cast<double>(unigram_total_);
    const double gamma = (d.d1 * static_cast<double>(unigram_stats_.n1) + d.d2 * static_cast<double>(unigram_stats_.n2) +
                          d.d3plus * static_cast<double>(unigram_stats_.n3plus)) /
                         total;
    const double vocab = static_cast<double>(words_.size() - (order_ >= 2 ? 1 : 2));
    return std::max(static_cast<double>(c) - d(c), 0.0) / total + gamma / vocab;
  }
  const std::string ctx_key = pack(ctx, ctx_len);
  const auto cit = contexts_[un].find(ctx_key);
  const double lower = prob_at(n - 1, ctx + 1, ctx_len - 1, word);
  if (cit == contexts_[un].end()) return lower;
  const ContextStats& s = cit->second;
  std::string key = ctx_key;
  key.append(pack(&word, 1));
  const auto it = counts_[un].find(key);
  const std::uint64_t c = it == counts_[un].end() ? 0 : it->second;
  const double gamma_mass = d.d1 * static_cast<double>(s.n1) + d.d2 * static_cast<double>(s.n2) +
                            d.d3plus * static_cast<double>(s.n3plus);
  return (std::max(static_cast<double>(c) - d(c), 0.0) + gamma_mass * lower) / static_cast<double>(s.total);
}

double NgramLM::prob(std::span<const std::uint32_t> context, std::uint32_t word) const {
  if (word >= words_.size() || word == kBos) word = kUnk;
  const std::size_t m = std::min(context.size(), static_cast<std::size_t>(order_ - 1));
  return prob_at(static_cast<int>(m) + 1, context.data() + (context.size() - m), m, word);
}

std::vector<std::vector<std::uint32_t>> NgramLM::observed_contexts(int n) const {
  std::vector<std::vector<std::uint32_t>> out;
  if (n == 1) {
    if (unigram_total_ > 0) out.emplace_back();
    return out;
  }
  for (const auto& [key, s] : contexts_.at(static_cast<std::size_t>(n))) out.push_back(unpack(key));
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<double, std::size_t> NgramLM::score(std::string_view text) const {
  double log_sum = 0;
  std::size_t tokens = 0;
  std::vector<std::uint32_t> history;
  for (const auto& ids : sentences(text)) {
    history.clear();
    if (order_ >= 2) history.push_back(kBos);
    for (const auto w : ids) {
      log_sum += std::log(prob(history, w));
      history.push_back(w);
      ++tokens;
    }
    if (order_ >= 2) {
      log_sum += std::log(prob(history, kEos));
      ++tokens;
    }
  }
  return {log_sum, tokens};
}

double lm_perplexity(std::string_view text, const NgramLM& lm) {
  const auto [log_sum, tokens] = lm.score(text);
  if (tokens == 0) return std::numeric_limits<double>::infinity();
  return std::exp(-log_sum / static_cast<double>(tokens));
}

void NgramLM::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_error, "cannot open " + path + " for writing");
  out << kMagic << ' ' << kVersion << '\n';
  out << "order " << order_ << " min_count " << min_count_ << '\n';
  out << "vocab " << words_.size() - 3 << '\n';
  for (std::size_t i = 3; i < words_.size(); ++i) out << words_[i] << '\n';
  char buf[128];
  for (std::size_t n = 1; n < discounts_.size(); ++n) {
    const Discounts& d = discounts_[n];
    std::snprintf(buf, sizeof buf, "discounts %zu %.17g %.17g %.17g %d\n", n, d.d1, d.d2, d.d3plus, d.fallback ? 1 : 0);
    out << buf;
  }
  for (std::size_t n = 1; n < counts_.size(); ++n) {
    std::vector<std::pair<std::vector<std::uint32_t>, std::uint64_t>> rows;
    rows.reserve(counts_[n].size());
    for (const auto& [key, c] : counts_[n]) rows.emplace_back(unpack(key), c);
    std::sort(rows.begin(), rows.end());
    out << "grams " << n << ' ' << rows.size() << '\n';
    for (const auto& [ids, c] : rows) {
      for (const auto id : ids) out << id << ' ';
      out << c << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

NgramLM NgramLM::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path);
  auto fail = [&](const std::string& why) { return Error(ErrorKind::bad_model_file, path + ": " + why); };
  std::string magic, word;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw fail("bad magic");
  if (version != kVersion) throw fail("unsupported version " + std::to_string(version));
  NgramLM lm;
  std::size_t vocab = 0;
  in >> word >> lm.order_ >> word >> lm.min_count_ >> word >> vocab;
  if (!in || lm.order_ < 1) throw fail("bad header");
  lm.words_ = {"<unk>", "<s>", "</s>"};
  for (std::size_t i = 0; i < vocab; ++i) {
    in >> word;
    lm.ids_.emplace(word, static_cast<std::uint32_t>(lm.words_.size()));
    lm.words_.push_back(word);
  }
  const auto order = static_cast<std::size_t>(lm.order_);
  std::vector<Discounts> stored(order + 1);
  for (std::size_t n = 1; n <= order; ++n) {
    std::size_t at = 0;
    int fb = 0;
    in >> word >> at >> stored[n].d1 >> stored[n].d2 >> stored[n].d3plus >> fb;
    if (!in || word != "discounts" || at != n) throw fail("bad discount block");
    stored[n].fallback = fb != 0;
  }
  lm.counts_.assign(order + 1, {});
  for (std::size_t n = 1; n <= order; ++n) {
    std::size_t at = 0, rows = 0;
    in >> word >> at >> rows;
    if (!in || word != "grams" || at != n) throw fail("bad count block");
    std::vector<std::uint32_t> ids(n);
    for (std::size_t r = 0; r < rows; ++r) {
      std::uint64_t c = 0;
      for (auto& id : ids) in >> id;
      in >> c;
      lm.counts_[n][pack(ids.data(), n)] = c;
    }
    if (!in) throw fail("truncated counts");
  }
  lm.finalize();
  lm.discounts_ = stored;
  return lm;
}

}  // namespace curate
