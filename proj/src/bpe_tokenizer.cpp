#include "curate/bpe_tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "binio.hpp"
#include "curate/error.hpp"
#include "curate/text.hpp"

namespace curate {

namespace {

constexpr std::uint64_t pair_key(std::uint32_t l, std::uint32_t r) noexcept {
  return (static_cast<std::uint64_t>(l) << 32) | r;
}

enum class CharClass { space, digit, other };

CharClass classify(char32_t cp, const TokenizerConfig& config) {
  if (is_unicode_space(cp)) return CharClass::space;
  if (config.split_digits && is_decimal_digit(cp)) return CharClass::digit;
  return CharClass::other;
}

// Fraction of non-ASCII character occurrences covered by character tokens.
constexpr double kCharacterCoverage = 0.9995;

}  // namespace

void TokenizerConfig::validate() const {
  const std::uint32_t floor = byte_fallback ? kBaseVocab : kNumSpecials + 128;
  if (vocab_size < floor) {
    throw Error(ErrorKind::vocab_too_small, "vocab_size " + std::to_string(vocab_size) + " below " + std::to_string(floor));
  }
}

std::vector<std::string_view> pretokenize(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string_view> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const CharClass cls = classify(next_codepoint(text, i), config);
    if (cls == CharClass::digit) {
      pieces.push_back(text.substr(start, i - start));
      continue;
    }
    if (cls == CharClass::space) {
      std::size_t j = i;
      if (j >= text.size() || classify(next_codepoint(text, j), config) != CharClass::other) {
        pieces.push_back(text.substr(start, i - start));
        continue;
      }
    }
    // run of "other" characters, possibly behind one attached space
    std::size_t end = i;
    while (end < text.size()) {
      std::size_t j = end;
      if (classify(next_codepoint(text, j), config) != CharClass::other) break;
      end = j;
    }
    pieces.push_back(text.substr(start, end - start));
    i = end;
  }
  return pieces;
}

BpeTokenizer::BpeTokenizer() {
  for (const char* s : {"<unk>", "<s>", "</s>", "<pad>"}) add_token(s);
  for (int b = 0; b < 256; ++b) add_token(std::string(1, static_cast<char>(b)));
}

std::uint32_t BpeTokenizer::add_token(std::string s) {
  const auto id = static_cast<std::uint32_t>(tokens_.size());
  // specials are never looked up by string
  if (id >= kNumSpecials) index_.emplace(s, id);
  tokens_.push_back(std::move(s));
  return id;
}

void BpeTokenizer::add_merge(MergeRule rule) {
  ranks_[pair_key(rule.left, rule.right)].push_back(static_cast<std::uint32_t>(merges_.size()));
  merges_.push_back(rule);
}

const std::string& BpeTokenizer::token(std::uint32_t id) const {
  if (id >= tokens_.size()) throw Error(ErrorKind::unknown_id, "token id " + std::to_string(id) + " not in vocabulary");
  return tokens_[id];
}

std::uint32_t BpeTokenizer::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<std::uint32_t> BpeTokenizer::initial_symbols(std::string_view piece) const {
  std::vector<std::uint32_t> syms;
  syms.reserve(piece.size());
  std::size_t i = 0;
  while (i < piece.size()) {
    const std::size_t start = i;
    next_codepoint(piece, i);
    const std::string_view ch = piece.substr(start, i - start);
    if (ch.size() == 1) {
      syms.push_back(kFirstByteId + static_cast<unsigned char>(ch[0]));
      continue;
    }
    const auto it = index_.find(std::string(ch));
    if (it != index_.end()) {
      syms.push_back(it->second);
    } else if (config_.byte_fallback) {
      for (const char b : ch) syms.push_back(kFirstByteId + static_cast<unsigned char>(b));
    } else {
      syms.push_back(kUnkId);
    }
  }
  return syms;
}

std::vector<std::uint32_t> BpeTokenizer::encode_piece(std::string_view piece) const {
  std::vector<std::uint32_t> syms = initial_symbols(piece);
  // Rules fire in rank order, each over the whole piece left to right, the
  // same way training applied them.
  std::uint32_t cursor = 0;
  while (syms.size() > 1) {
    std::uint32_t best = UINT32_MAX;
    for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
      const auto it = ranks_.find(pair_key(syms[k], syms[k + 1]));
      if (it == ranks_.end()) continue;
      const auto r = std::lower_bound(it->second.begin(), it->second.end(), cursor);
      if (r != it->second.end() && *r < best) best = *r;
    }
    if (best == UINT32_MAX) break;
    const MergeRule& rule = merges_[best];
    std::size_t out = 0;
    for (std::size_t k = 0; k < syms.size(); ++k) {
      if (k + 1 < syms.size() && syms[k] == rule.left && syms[k + 1] == rule.right) {
        syms[out++] = rule.result;
        ++k;
      } else {
        syms[out++] = syms[k];
      }
    }
    syms.resize(out);
    cursor = best + 1;
  }
  return syms;
}

std::vector<std::uint32_t> BpeTokenizer::encode(std::string_view text) const {
  std::string prefixed;
  if (config_.dummy_prefix && !text.empty()) {
    prefixed = " " + std::string(text);
    text = prefixed;
  }
  std::vector<std::uint32_t> ids;
  for (const auto piece : pretokenize(text, config_)) {
    const auto part = encode_piece(piece);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::string BpeTokenizer::decode(const std::vector<std::uint32_t>& ids) const {
  std::string out;
  for (const auto id : ids) {
    const std::string& t = token(id);
    if (id >= kNumSpecials) out += t;
  }
  if (config_.dummy_prefix && !out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

namespace {

struct Word {
  std::vector<std::uint32_t> syms;
  std::uint64_t freq;
};

struct Candidate {
  std::int64_t count;
  std::uint32_t left;
  std::uint32_t right;
};

}  // namespace

BpeTokenizer train_bpe(const std::vector<std::string>& corpus, const TokenizerConfig& config) {
  config.validate();
  std::map<std::string_view, std::uint64_t> piece_freq;
  for (const auto& text : corpus) {
    for (const auto piece : pretokenize(text, config)) ++piece_freq[piece];
  }
  if (piece_freq.empty()) throw Error(ErrorKind::empty_corpus, "tokenizer training corpus is empty");

  BpeTokenizer tok;
  tok.config_ = config;

  // character tokens for frequent multi-byte characters
  std::map<std::string, std::uint64_t> char_freq;
  std::uint64_t multibyte_total = 0;
  for (const auto& [piece, freq] : piece_freq) {
    std::size_t i = 0;
    while (i < piece.size()) {
      const std::size_t start = i;
      next_codepoint(piece, i);
      if (i - start > 1) {
        char_freq[std::string(piece.substr(start, i - start))] += freq;
        multibyte_total += freq;
      }
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> chars(char_freq.begin(), char_freq.end());
  std::stable_sort(chars.begin(), chars.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::uint64_t covered = 0;
  for (const auto& [ch, freq] : chars) {
    if (tok.vocab_size() >= config.vocab_size) break;
    if (static_cast<double>(covered) >= kCharacterCoverage * static_cast<double>(multibyte_total)) break;
    tok.add_token(ch);
    covered += freq;
  }

  std::vector<Word> words;
  words.reserve(piece_freq.size());
  for (const auto& [piece, freq] : piece_freq) words.push_back({tok.initial_symbols(piece), freq});

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  auto add_pairs = [&](std::uint32_t w, std::int64_t sign, std::unordered_set<std::uint64_t>* touched) {
    const auto& s = words[w].syms;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      const std::uint64_t key = pair_key(s[k], s[k + 1]);
      counts[key] += sign * static_cast<std::int64_t>(words[w].freq);
      if (sign > 0) where[key].push_back(w);
      if (touched) touched->insert(key);
    }
  };
  for (std::uint32_t w = 0; w < words.size(); ++w) add_pairs(w, 1, nullptr);

  const auto& strings = tok.tokens_;
  auto worse = [&](const Candidate& a, const Candidate& b) {
    if (a.count != b.count) return a.count < b.count;
    const int cl = strings[a.left].compare(strings[b.left]);
    if (cl != 0) return cl > 0;
    return strings[a.right] > strings[b.right];
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> queue(worse);
  for (const auto& [key, c] : counts) {
    if (c > 0) queue.push({c, static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key)});
  }

  while (tok.vocab_size() < config.vocab_size && !queue.empty()) {
    const Candidate top = queue.top();
    queue.pop();
    const std::uint64_t key = pair_key(top.left, top.right);
    const auto cit = counts.find(key);
    if (cit == counts.end() || cit->second != top.count || top.count <= 0) continue;

    std::string merged = strings[top.left] + strings[top.right];
    std::uint32_t result = tok.id_of(merged);
    if (result == kUnkId) result = tok.add_token(std::move(merged));
    tok.add_merge({top.left, top.right, result});

    std::vector<std::uint32_t> affected = std::move(where[key]);
    where.erase(key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    std::unordered_set<std::uint64_t> touched;
    for (const auto w : affected) {
      auto& s = words[w].syms;
      bool present = false;
      for (std::size_t k = 0; k + 1 < s.size() && !present; ++k) present = s[k] == top.left && s[k + 1] == top.right;
      if (!present) continue;
      add_pairs(w, -1, &touched);
      std::size_t out = 0;
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (k + 1 < s.size() && s[k] == top.left && s[k + 1] == top.right) {
          s[out++] = result;
          ++k;
        } else {
          s[out++] = s[k];
        }
      }
      s.resize(out);
      add_pairs(w, 1, &touched);
    }
    std::vector<std::uint64_t> changed(touched.begin(), touched.end());
    std::sort(changed.begin(), changed.end());
    for (const auto k : changed) {
      const auto c = counts[k];
      if (c > 0) queue.push({c, static_cast<std::uint32_t>(k >> 32), static_cast<std::uint32_t>(k)});
      else counts.erase(k);
    }
  }
  return tok;
}

// --- model file ---------------------------------------------------------------

namespace {

std::string to_hex(std::string_view s) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() * 2);
  for (const char c : s) {
    out += digits[static_cast<unsigned char>(c) >> 4];
    out += digits[static_cast<unsigned char>(c) & 15];
  }
  return out;
}

bool from_hex(std::string_view s, std::string& out) {
  if (s.size() % 2 != 0) return false;
  out.clear();
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < s.size(); i += 2) {
    const int hi = nibble(s[i]);
    const int lo = nibble(s[i + 1]);
    if (hi < 0 || lo < 0) return false;
    out += static_cast<char>(hi * 16 + lo);
  }
  return true;
}

}  // namespace

void BpeTokenizer::save(const std::string& path) const {
  auto out = detail::open_out(path);
  out << "CURATE-BPE 1\n";
  out << "vocab_size " << config_.vocab_size << "\n";
  out << "split_digits " << config_.split_digits << "\n";
  out << "byte_fallback " << config_.byte_fallback << "\n";
  out << "dummy_prefix " << config_.dummy_prefix << "\n";
  out << "tokens " << tokens_.size() - kBaseVocab << "\n";
  for (std::size_t id = kBaseVocab; id < tokens_.size(); ++id) out << to_hex(tokens_[id]) << "\n";
  out << "merges " << merges_.size() << "\n";
  for (const auto& m : merges_) out << m.left << " " << m.right << " " << m.result << "\n";
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

BpeTokenizer BpeTokenizer::load(const std::string& path) {
  auto in = detail::open_in(path);
  auto fail = [&](const std::string& why) { throw Error(ErrorKind::bad_model_file, path + ": " + why); };
  std::string line;
  if (!std::getline(in, line) || line != "CURATE-BPE 1") fail("bad header");
  auto field = [&](const std::string& name) -> std::uint64_t {
    if (!std::getline(in, line)) fail("truncated");
    std::istringstream ss(line);
    std::string key;
    std::uint64_t v = 0;
    if (!(ss >> key >> v) || key != name) fail("expected " + name);
    return v;
  };
  BpeTokenizer tok;
  tok.config_.vocab_size = static_cast<std::uint32_t>(field("vocab_size"));
  tok.config_.split_digits = field("split_digits") != 0;
  tok.config_.byte_fallback = field("byte_fallback") != 0;
  tok.config_.dummy_prefix = field("dummy_prefix") != 0;
  const auto n_tokens = field("tokens");
  std::string bytes;
  for (std::uint64_t k = 0; k < n_tokens; ++k) {
    if (!std::getline(in, line) || !from_hex(line, bytes) || bytes.size() < 2) fail("bad token line");
    if (tok.index_.count(bytes)) fail("duplicate token");
    tok.add_token(bytes);
  }
  const auto n_merges = field("merges");
  for (std::uint64_t k = 0; k < n_merges; ++k) {
    if (!std::getline(in, line)) fail("truncated merges");
    std::istringstream ss(line);
    MergeRule m{};
    if (!(ss >> m.left >> m.right >> m.result)) fail("bad merge line");
    const auto n = tok.tokens_.size();
    if (m.left < kNumSpecials || m.right < kNumSpecials || m.result < kBaseVocab || m.left >= n || m.right >= n || m.result >= n ||
        tok.tokens_[m.result] != tok.tokens_[m.left] + tok.tokens_[m.right]) {
      fail("inconsistent merge");
    }
    tok.add_merge(m);
  }
  return tok;
}

// --- token corpus --------------------------------------------------------------

void write_token_corpus(const std::vector<TokenizedDoc>& docs, const std::string& path) {
  auto out = detail::open_out(path);
  detail::BinWriter w(out);
  w.put_magic("CURATE-TOKENS", 1);
  w.put(static_cast<std::uint64_t>(docs.size()));
  for (const auto& d : docs) {
    w.put_string(d.id);
    w.put(static_cast<std::uint32_t>(d.ids.size()));
    for (const auto id : d.ids) w.put(id);
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

std::vector<TokenizedDoc> read_token_corpus(const std::string& path) {
  auto in = detail::open_in(path);
  detail::BinReader r(in, path);
  r.expect_magic("CURATE-TOKENS", 1);
  const auto n = r.get<std::uint64_t>();
  std::vector<TokenizedDoc> docs;
  for (std::uint64_t k = 0; k < n; ++k) {
    TokenizedDoc d;
    d.id = r.get_string();
    const auto len = r.get<std::uint32_t>();
    d.ids.resize(len);
    for (auto& id : d.ids) id = r.get<std::uint32_t>();
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace curate
