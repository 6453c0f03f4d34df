#include "curate/heuristic_filter.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/text.hpp"

namespace curate {

Segmentation segment(std::string_view text) {
  Segmentation seg;
  seg.lines = split_lines(text);
  seg.paragraphs = split_paragraphs(text);
  seg.words = split_words(text);
  return seg;
}

std::vector<std::string> HeuristicConfig::validate() const {
  std::vector<std::string> errors;
  auto frac = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) errors.push_back(std::string(name) + " must be in [0,1]");
  };
  if (min_words >= max_words) errors.emplace_back("min_words must be < max_words");
  frac(max_ellipsis_line_frac, "max_ellipsis_line_frac");
  frac(max_short_line_frac, "max_short_line_frac");
  frac(max_incomplete_line_frac, "max_incomplete_line_frac");
  frac(min_alpha_word_frac, "min_alpha_word_frac");
  frac(repetition.dup_line_frac, "dup_line_frac");
  frac(repetition.dup_para_frac, "dup_para_frac");
  frac(repetition.dup_line_char_frac, "dup_line_char_frac");
  frac(repetition.dup_para_char_frac, "dup_para_char_frac");
  for (std::size_t n = 2; n <= 4; ++n) frac(repetition.top_ngram_char_frac[n], "top_ngram_char_frac");
  for (std::size_t n = 5; n <= 10; ++n) frac(repetition.dup_ngram_char_frac[n], "dup_ngram_char_frac");
  if (max_symbol_word_ratio < 0) errors.emplace_back("max_symbol_word_ratio must be >= 0");
  return errors;
}

// --- blocklists --------------------------------------------------------------

std::set<std::string, std::less<>> load_list_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open blocklist " + path.string());
  std::set<std::string, std::less<>> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string_view t = trim(line);
    if (!t.empty()) entries.insert(dedup_normalize(t));
  }
  return entries;
}

std::string url_host(std::string_view url) {
  if (const auto scheme = url.find("://"); scheme != std::string_view::npos) url.remove_prefix(scheme + 3);
  url = url.substr(0, url.find_first_of("/?#"));
  if (const auto at = url.rfind('@'); at != std::string_view::npos) url.remove_prefix(at + 1);
  url = url.substr(0, url.find(':'));
  std::string host(url);
  for (auto& c : host) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return host;
}

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return out;
}

bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

std::string_view strip_punct(std::string_view w) {
  while (!w.empty() && is_ascii_punct(w.front())) w.remove_prefix(1);
  while (!w.empty() && is_ascii_punct(w.back())) w.remove_suffix(1);
  return w;
}

}  // namespace

FilterVerdict apply_blocklists(const Document& doc, const Blocklists& lists) {
  if (lists.empty()) return FilterVerdict::pass();
  if (doc.url) {
    const std::string host = url_host(*doc.url);
    for (std::string_view h = host; !h.empty();) {
      if (lists.domains.count(h)) return FilterVerdict::reject("domain");
      const auto dot = h.find('.');
      if (dot == std::string_view::npos) break;
      h.remove_prefix(dot + 1);
    }
    const std::string url = lower_ascii(*doc.url);
    for (const auto& s : lists.url_substrings) {
      if (url.find(s) != std::string::npos) return FilterVerdict::reject("url");
    }
  }
  if (!lists.words.empty()) {
    const std::string norm = dedup_normalize(doc.text);
    bool hit = false;
    for_each_word(norm, [&](std::string_view w) {
      if (!hit && lists.words.count(strip_punct(w))) hit = true;
    });
    if (hit) return FilterVerdict::reject("word");
    const std::string padded = " " + norm + " ";
    for (const auto& phrase : lists.words) {
      if (phrase.find(' ') != std::string::npos && padded.find(" " + phrase + " ") != std::string::npos) {
        return FilterVerdict::reject("word");
      }
    }
  }
  return FilterVerdict::pass();
}

// --- structure -----------------------------------------------------------------

namespace {

std::size_t count_symbols(std::string_view text) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '#') {
      ++n;
      while (i < text.size() && text[i] == '#') ++i;
    } else if (text[i] == '.') {
      std::size_t j = i;
      while (j < text.size() && text[j] == '.') ++j;
      if (j - i >= 3) ++n;
      i = j;
    } else if (text.compare(i, 3, "\xE2\x80\xA6") == 0) {
      ++n;
      while (text.compare(i, 3, "\xE2\x80\xA6") == 0) i += 3;
    } else {
      ++i;
    }
  }
  return n;
}

char32_t last_codepoint(std::string_view s) {
  std::size_t k = s.size() - 1;
  while (k > 0 && (static_cast<unsigned char>(s[k]) & 0xC0) == 0x80) --k;
  return next_codepoint(s, k);
}

bool is_terminal(char32_t cp) {
  switch (cp) {
    case '.': case '!': case '?': case '"': case '\'': case ')': case ']': case ';':
    case 0x201D: case 0x2019: case 0x00BB: case 0x300D: case 0x300F: case 0x3002:
    case 0xFF01: case 0xFF1F: case 0x2026: case 0xFF09: case 0xFF3D: case 0xFF1B: case 0xFF0E:
      return true;
    default:
      return false;
  }
}

bool ends_with_ellipsis(std::string_view line) {
  return line.ends_with("...") || line.ends_with("\xE2\x80\xA6");
}

bool has_alpha(std::string_view word) {
  std::size_t i = 0;
  while (i < word.size()) {
    const char32_t cp = next_codepoint(word, i);
    if (is_alphabetic(cp) || is_cjk(cp)) return true;
  }
  return false;
}

std::size_t count_words(std::string_view s) {
  std::size_t n = 0;
  for_each_word(s, [&](std::string_view) { ++n; });
  return n;
}

}  // namespace

FilterVerdict structural_verdict(const Document& doc, const HeuristicConfig& cfg) {
  return structural_verdict(doc, cfg, segment(doc.text));
}

FilterVerdict structural_verdict(const Document& doc, const HeuristicConfig& cfg, const Segmentation& seg) {
  const std::vector<std::string_view>& words = seg.words;
  const std::size_t n_words = words.size();
  if (n_words < cfg.min_words) return FilterVerdict::reject("min_words");
  if (n_words > cfg.max_words) return FilterVerdict::reject("max_words");

  const std::size_t symbols = count_symbols(doc.text);
  if (symbols > 0 && (n_words == 0 || static_cast<double>(symbols) / static_cast<double>(n_words) > cfg.max_symbol_word_ratio)) {
    return FilterVerdict::reject("symbol_ratio");
  }

  std::size_t lines = 0, ellipsis = 0, incomplete = 0, short_lines = 0;
  for (const auto raw : seg.lines) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    ++lines;
    if (ends_with_ellipsis(line)) ++ellipsis;
    if (!is_terminal(last_codepoint(line))) ++incomplete;
    if (count_words(line) <= cfg.short_line_max_words) ++short_lines;
  }
  if (lines > 0) {
    const auto frac = [&](std::size_t k) { return static_cast<double>(k) / static_cast<double>(lines); };
    if (frac(ellipsis) > cfg.max_ellipsis_line_frac) return FilterVerdict::reject("ellipsis_lines");
    if (frac(incomplete) > cfg.max_incomplete_line_frac) return FilterVerdict::reject("incomplete_lines");
    if (frac(short_lines) > cfg.max_short_line_frac) return FilterVerdict::reject("short_lines");
  }

  if (n_words > 0) {
    const auto alpha = static_cast<std::size_t>(std::count_if(words.begin(), words.end(), has_alpha));
    if (static_cast<double>(alpha) / static_cast<double>(n_words) < cfg.min_alpha_word_frac) {
      return FilterVerdict::reject("alpha_words");
    }
  }
  return FilterVerdict::pass();
}

// --- repetition -------------------------------------------------------------

namespace {

// Open-addressing counter keyed by 64-bit hashes.
class FlatCounter {
 public:
  void reset(std::size_t expected) {
    std::size_t cap = 16;
    while (cap < expected * 2) cap <<= 1;
    keys_.assign(cap, 0);
    counts_.assign(cap, 0);
    mask_ = cap - 1;
  }

  std::uint32_t add(std::uint64_t key) {
    key |= 1;  // 0 marks an empty slot
    std::size_t i = key & mask_;
    while (keys_[i] != 0 && keys_[i] != key) i = (i + 1) & mask_;
    keys_[i] = key;
    return ++counts_[i];
  }

  std::size_t add_slot(std::uint64_t key) {
    key |= 1;
    std::size_t i = key & mask_;
    while (keys_[i] != 0 && keys_[i] != key) i = (i + 1) & mask_;
    keys_[i] = key;
    ++counts_[i];
    return i;
  }

  std::uint32_t count_at(std::size_t slot) const { return counts_[slot]; }

  std::uint32_t get(std::uint64_t key) const {
    key |= 1;
    std::size_t i = key & mask_;
    while (keys_[i] != 0) {
      if (keys_[i] == key) return counts_[i];
      i = (i + 1) & mask_;
    }
    return 0;
  }

 private:
  std::vector<std::uint64_t> keys_;
  std::vector<std::uint32_t> counts_;
  std::size_t mask_ = 0;
};

struct UnitStats {
  double dup_frac = 0;
  double dup_char_frac = 0;
};

struct UnitKeys {
  std::vector<std::uint64_t> keys;
  std::vector<std::size_t> chars;
};

void add_unit(std::string_view u, UnitKeys& out) {
  const std::string norm = dedup_normalize(u);
  out.keys.push_back(hash64(norm));
  out.chars.push_back(count_codepoints(norm));
}

// Paragraphs that are exactly one line reuse that line's key.
UnitKeys unit_keys(const std::vector<std::string_view>& units, const std::vector<std::string_view>* lines,
                   const UnitKeys* line_keys) {
  UnitKeys out;
  std::size_t li = 0, lk = 0;
  for (const auto u : units) {
    if (is_blank(u)) continue;
    if (lines) {
      while (li < lines->size() && (*lines)[li].data() < u.data()) {
        if (!is_blank((*lines)[li])) ++lk;
        ++li;
      }
      if (li < lines->size() && (*lines)[li].data() == u.data() && (*lines)[li].size() == u.size()) {
        out.keys.push_back(line_keys->keys[lk]);
        out.chars.push_back(line_keys->chars[lk]);
        continue;
      }
    }
    add_unit(u, out);
  }
  return out;
}

UnitStats unit_repetition(const UnitKeys& units) {
  const auto& keys = units.keys;
  const auto& chars = units.chars;
  UnitStats s;
  if (keys.empty()) return s;
  FlatCounter counter;
  counter.reset(keys.size());
  for (const auto k : keys) counter.add(k);
  std::size_t dup = 0, dup_chars = 0, total_chars = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    total_chars += chars[i];
    if (counter.get(keys[i]) > 1) {
      ++dup;
      dup_chars += chars[i];
    }
  }
  s.dup_frac = static_cast<double>(dup) / static_cast<double>(keys.size());
  s.dup_char_frac = total_chars ? static_cast<double>(dup_chars) / static_cast<double>(total_chars) : 0.0;
  return s;
}

double ratio(std::size_t num, std::size_t den) {
  if (den == 0) return 0.0;
  return std::min(1.0, static_cast<double>(num) / static_cast<double>(den));
}

}  // namespace

RepetitionStats repetition_stats(const Document& doc) { return repetition_stats(doc.text, segment(doc.text)); }

RepetitionStats repetition_stats(std::string_view /*text*/, const Segmentation& seg) {
  RepetitionStats stats;
  const UnitKeys line_keys = unit_keys(seg.lines, nullptr, nullptr);
  const UnitStats lines = unit_repetition(line_keys);
  const UnitStats paras = unit_repetition(unit_keys(seg.paragraphs, &seg.lines, &line_keys));
  stats.dup_line_frac = lines.dup_frac;
  stats.dup_line_char_frac = lines.dup_char_frac;
  stats.dup_para_frac = paras.dup_frac;
  stats.dup_para_char_frac = paras.dup_char_frac;

  const std::size_t n_words = seg.words.size();
  if (n_words < 2) return stats;

  std::vector<std::uint64_t> word_id(n_words);
  std::vector<std::size_t> word_chars(n_words);
  std::size_t total_chars = n_words - 1;
  for (std::size_t i = 0; i < n_words; ++i) {
    word_id[i] = hash64(seg.words[i]);
    word_chars[i] = count_codepoints(seg.words[i]);
    total_chars += word_chars[i];
  }

  // An n-gram can only repeat where its (n-1)-gram prefix repeats, so each
  // order only revisits the positions that were duplicated at the previous one.
  FlatCounter counter;
  std::vector<std::uint64_t> gram(n_words);
  std::vector<std::size_t> alive, slots, next;
  counter.reset(n_words);
  slots.resize(n_words);
  for (std::size_t i = 0; i < n_words; ++i) {
    gram[i] = mix64(word_id[i]);
    slots[i] = counter.add_slot(gram[i]);
  }
  for (std::size_t i = 0; i < n_words; ++i) {
    if (counter.count_at(slots[i]) > 1) alive.push_back(i);
  }

  std::vector<char> covered(n_words);
  for (std::size_t n = 2; n <= 10 && n <= n_words; ++n) {
    while (!alive.empty() && alive.back() + n > n_words) alive.pop_back();
    counter.reset(alive.size());
    slots.resize(alive.size());
    for (std::size_t k = 0; k < alive.size(); ++k) {
      const std::size_t i = alive[k];
      gram[i] = hash_combine(gram[i], word_id[i + n - 1]);
      slots[k] = counter.add_slot(gram[i]);
    }
    next.clear();
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (counter.count_at(slots[k]) > 1) next.push_back(alive[k]);
    }

    if (n <= 4) {
      std::uint32_t best = 0;
      std::size_t best_at = 0;
      for (std::size_t k = 0; k < alive.size(); ++k) {
        const std::uint32_t c = counter.count_at(slots[k]);
        if (c > best) {
          best = c;
          best_at = alive[k];
        }
      }
      if (best >= 2) {
        std::size_t chars = n - 1;
        for (std::size_t k = 0; k < n; ++k) chars += word_chars[best_at + k];
        stats.top_ngram_char_frac[n] = ratio(static_cast<std::size_t>(best) * chars, total_chars);
      }
    } else if (!next.empty()) {
      std::fill(covered.begin(), covered.end(), 0);
      std::size_t cover_end = 0;
      for (const std::size_t i : next) {
        for (std::size_t k = std::max(i, cover_end); k < i + n; ++k) covered[k] = 1;
        cover_end = std::max(cover_end, i + n);
      }
      // covered runs, counted single-spaced
      std::size_t dup_chars = 0;
      for (std::size_t i = 0; i < n_words; ++i) {
        if (!covered[i]) continue;
        dup_chars += word_chars[i];
        if (i + 1 < n_words && covered[i + 1]) ++dup_chars;
      }
      stats.dup_ngram_char_frac[n] = ratio(dup_chars, total_chars);
    }
    alive.swap(next);
  }
  return stats;
}

FilterVerdict repetition_verdict(const RepetitionStats& s, const HeuristicConfig& cfg) {
  const auto& t = cfg.repetition;
  if (s.dup_line_frac > t.dup_line_frac) return FilterVerdict::reject("dup_line_frac");
  if (s.dup_para_frac > t.dup_para_frac) return FilterVerdict::reject("dup_para_frac");
  if (s.dup_line_char_frac > t.dup_line_char_frac) return FilterVerdict::reject("dup_line_char_frac");
  if (s.dup_para_char_frac > t.dup_para_char_frac) return FilterVerdict::reject("dup_para_char_frac");
  for (std::size_t n = 2; n <= 4; ++n) {
    if (s.top_ngram_char_frac[n] > t.top_ngram_char_frac[n]) {
      return FilterVerdict::reject("top_" + std::to_string(n) + "gram_char_frac");
    }
  }
  for (std::size_t n = 5; n <= 10; ++n) {
    if (s.dup_ngram_char_frac[n] > t.dup_ngram_char_frac[n]) {
      return FilterVerdict::reject("dup_" + std::to_string(n) + "gram_char_frac");
    }
  }
  return FilterVerdict::pass();
}

FilterVerdict heuristic_verdict(const Document& doc, const HeuristicConfig& cfg, const Blocklists& lists) {
  if (auto v = apply_blocklists(doc, lists); !v.keep) return v;
  const Segmentation seg = segment(doc.text);
  if (auto v = structural_verdict(doc, cfg, seg); !v.keep) return v;
  return repetition_verdict(repetition_stats(doc.text, seg), cfg);
}

// --- PII ---------------------------------------------------------------------

namespace {

bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_local_char(char c) { return is_ascii_alnum(c) || c == '.' || c == '_' || c == '%' || c == '+' || c == '-'; }
bool is_domain_char(char c) { return is_ascii_alnum(c) || c == '.' || c == '-'; }

// Returns the end of an email whose '@' is at `at`, or npos.
std::size_t match_email(std::string_view s, std::size_t at, std::size_t& start) {
  std::size_t b = at;
  while (b > 0 && is_local_char(s[b - 1])) --b;
  while (b < at && s[b] == '.') ++b;
  if (b == at) return std::string_view::npos;
  std::size_t e = at + 1;
  while (e < s.size() && is_domain_char(s[e])) ++e;
  while (e > at + 1 && (s[e - 1] == '.' || s[e - 1] == '-')) --e;
  const std::string_view domain = s.substr(at + 1, e - at - 1);
  const auto dot = domain.rfind('.');
  if (dot == std::string_view::npos || dot == 0) return std::string_view::npos;
  const std::string_view tld = domain.substr(dot + 1);
  if (tld.size() < 2) return std::string_view::npos;
  for (const char c : tld) {
    if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) return std::string_view::npos;
  }
  start = b;
  return e;
}

bool is_phone_sep(char c) { return c == ' ' || c == '-' || c == '.'; }

// Validates the digit-group shape of a candidate phone number.
bool phone_shape(std::string_view cand) {
  const bool plus = !cand.empty() && cand.front() == '+';
  std::vector<std::size_t> groups;
  std::size_t digits = 0;
  bool dot_sep = false, space_sep = false;
  std::size_t run = 0;
  for (const char c : cand) {
    if (is_digit(c)) {
      ++run;
      ++digits;
      continue;
    }
    if (run) groups.push_back(run);
    run = 0;
    if (c == '.') dot_sep = true;
    if (c == ' ') space_sep = true;
  }
  if (run) groups.push_back(run);
  if (digits < 7 || digits > 15) return false;
  if (plus) return true;
  if (dot_sep && space_sep) return false;
  if (groups.size() == 2) {
    if (groups[0] == 3 && groups[1] == 4) return true;
    const std::size_t first_digit = cand.find_first_of("0123456789");
    return cand[first_digit] == '0' && (groups[0] == 3 || groups[0] == 4) && (groups[1] == 7 || groups[1] == 8);
  }
  if (groups.size() < 3) return false;
  if (groups.back() != 4) return false;
  return std::all_of(groups.begin(), groups.end(), [](std::size_t g) { return g <= 4; });
}

// Maximal run of phone characters starting at i; returns its end.
std::size_t phone_run(std::string_view s, std::size_t i) {
  std::size_t e = i;
  if (e < s.size() && s[e] == '+') ++e;
  int open = 0;
  while (e < s.size()) {
    const char c = s[e];
    if (is_digit(c)) {
      ++e;
    } else if (c == '(') {
      ++open;
      ++e;
    } else if (c == ')' && open > 0) {
      --open;
      ++e;
    } else if (is_phone_sep(c) && e + 1 < s.size() && (is_digit(s[e + 1]) || s[e + 1] == '(') &&
               !is_phone_sep(s[e - 1])) {
      ++e;
    } else {
      break;
    }
  }
  while (e > i && !is_digit(s[e - 1]) && s[e - 1] != ')') --e;
  return e;
}

}  // namespace

PiiResult anonymize_pii(std::string_view text) {
  PiiResult r;
  std::string pass1;
  pass1.reserve(text.size());
  std::size_t copied = 0;
  for (std::size_t at = text.find('@'); at != std::string_view::npos; at = text.find('@', at + 1)) {
    if (at < copied) continue;
    std::size_t start = 0;
    const std::size_t end = match_email(text, at, start);
    if (end == std::string_view::npos || start < copied) continue;
    pass1.append(text.substr(copied, start - copied));
    pass1.append("[EMAIL]");
    copied = end;
    at = end - 1;
    ++r.replacements;
  }
  pass1.append(text.substr(copied));

  const std::string_view s = pass1;
  r.text.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const bool can_start = is_digit(c) || ((c == '+' || c == '(') && i + 1 < s.size() && is_digit(s[i + 1]));
    const bool embedded = i > 0 && (is_ascii_alnum(s[i - 1]) || s[i - 1] == '+' ||
                                    ((s[i - 1] == '-' || s[i - 1] == '.') && i > 1 && is_digit(s[i - 2])));
    if (can_start && !embedded) {
      const std::size_t e = phone_run(s, i);
      const bool clean_end = e >= s.size() || !is_ascii_alnum(s[e]);
      if (e > i && clean_end && phone_shape(s.substr(i, e - i))) {
        r.text.append("[PHONE]");
        ++r.replacements;
        i = e;
        continue;
      }
      // skip the whole digit run so its tail is never matched on its own
      std::size_t k = i + 1;
      while (k < s.size() && is_digit(s[k])) ++k;
      r.text.append(s.substr(i, k - i));
      i = k;
      continue;
    }
    r.text.push_back(c);
    ++i;
  }
  return r;
}

}  // namespace curate
