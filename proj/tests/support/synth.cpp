#include "synth.hpp"

#include <algorithm>
#include <cstdio>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "curate/bpe_tokenizer.hpp"
#include "curate/lang_stat_models.hpp"
#include "curate/learned_filters.hpp"
#include "curate/text.hpp"
#include "curate/topic_sampler.hpp"

namespace synth {

namespace {

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::string cp_utf8(char32_t cp) {
  std::string s;
  curate::append_utf8(s, cp);
  return s;
}

}  // namespace

std::vector<std::string> word_pool(Rng& rng, std::size_t n, std::size_t min_len, std::size_t max_len) {
  static const std::string consonants = "bcdfghjklmnprstvwz";
  static const std::string vowels = "aeiou";
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    const std::size_t len = uniform(rng, min_len, max_len);
    std::string w;
    for (std::size_t i = 0; i < len; ++i) {
      const std::string& from = (i % 2 == 0) ? consonants : vowels;
      w += from[uniform(rng, 0, from.size() - 1)];
    }
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

const std::string& zipf_pick(Rng& rng, const std::vector<std::string>& pool) {
  const double u = unit(rng);
  const auto i = static_cast<std::size_t>(static_cast<double>(pool.size()) * u * u);
  return pool[std::min(i, pool.size() - 1)];
}

ProseGenerator::ProseGenerator(std::uint64_t seed, std::size_t vocab) {
  Rng rng(seed);
  auto words = word_pool(rng, vocab + vocab / 2 + 300, 3, 10);
  nouns_.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(vocab / 2));
  adjectives_.assign(words.begin() + static_cast<std::ptrdiff_t>(vocab / 2), words.begin() + static_cast<std::ptrdiff_t>(vocab * 3 / 4));
  verbs_.assign(words.begin() + static_cast<std::ptrdiff_t>(vocab * 3 / 4), words.begin() + static_cast<std::ptrdiff_t>(vocab));
  for (std::size_t i = vocab; i < words.size(); ++i) names_.push_back(capitalize(words[i]));
}

std::string ProseGenerator::sentence(Rng& rng) const {
  auto n = [&] { return zipf_pick(rng, nouns_); };
  auto a = [&] { return zipf_pick(rng, adjectives_); };
  auto v = [&] { return zipf_pick(rng, verbs_); };
  auto p = [&] { return zipf_pick(rng, names_); };
  auto year = [&] { return std::to_string(uniform(rng, 1700, 2020)); };
  switch (uniform(rng, 0, 7)) {
    case 0: return "The " + a() + " " + n() + " of " + p() + " is a " + n() + " in the " + n() + ".";
    case 1: return p() + " was a " + a() + " " + n() + " who " + v() + "ed the " + n() + " of " + p() + ".";
    case 2: return "In " + year() + ", the " + n() + " " + v() + "s a " + a() + " " + n() + " and the " + n() + ".";
    case 3: return "It is known for its " + a() + " " + n() + " and " + a() + " " + n() + ".";
    case 4: return "The " + n() + " was " + v() + "ed by " + p() + " during the " + a() + " " + n() + ".";
    case 5: return "Many " + n() + "s of the " + n() + " are " + a() + ", while others remain " + a() + ".";
    case 6: return p() + " " + v() + "s that the " + n() + " has a " + a() + " " + n() + " near " + p() + ".";
    default: return "According to " + p() + ", the " + a() + " " + n() + " became a " + n() + " in " + year() + ".";
  }
}

std::string ProseGenerator::paragraph(Rng& rng, std::size_t sentences) const {
  std::string out;
  for (std::size_t i = 0; i < sentences; ++i) {
    if (i) out += " ";
    out += sentence(rng);
  }
  return out;
}

std::string ProseGenerator::document(Rng& rng, std::size_t words) const {
  std::string out;
  std::size_t count = 0;
  while (count < words) {
    const std::string para = paragraph(rng, uniform(rng, 3, 6));
    count += curate::split_words(para).size();
    if (!out.empty()) out += "\n\n";
    out += para;
  }
  return out;
}

std::string shuffle_words(const std::string& text, Rng& rng) {
  std::vector<std::string> words;
  for (const auto w : curate::split_words(text)) words.emplace_back(w);
  std::shuffle(words.begin(), words.end(), rng);
  const std::size_t n_paras = std::max<std::size_t>(1, curate::split_paragraphs(text).size());
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += (i % (words.size() / n_paras + 1) == 0) ? "\n\n" : " ";
    out += words[i];
  }
  return out;
}

std::string cjk_text(Rng& rng, std::size_t chars) {
  std::string out;
  std::size_t since_punct = 0;
  for (std::size_t i = 0; i < chars; ++i) {
    // skewed toward the low end of the block so the text has statistics
    const double u = unit(rng);
    out += cp_utf8(static_cast<char32_t>(0x4E00 + static_cast<std::uint32_t>(600 * u * u)));
    if (++since_punct > uniform(rng, 8, 25)) {
      out += (unit(rng) < 0.6) ? "，" : "。";
      since_punct = 0;
    }
  }
  out += "。";
  return out;
}

std::string random_unicode(Rng& rng, std::size_t max_codepoints) {
  const std::size_t n = uniform(rng, 0, max_codepoints);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = unit(rng);
    char32_t cp;
    if (r < 0.35) {
      cp = static_cast<char32_t>(uniform(rng, 0x20, 0x7E));
    } else if (r < 0.45) {
      static const char32_t spaces[] = {' ', ' ', '\n', '\t', 0x3000, 0x00A0, 0x2003};
      cp = spaces[uniform(rng, 0, 6)];
    } else if (r < 0.55) {
      static const char32_t bases[] = {'0', 0xFF10, 0x0660, 0x0966};
      cp = bases[uniform(rng, 0, 3)] + static_cast<char32_t>(uniform(rng, 0, 9));
    } else if (r < 0.65) {
      cp = static_cast<char32_t>(uniform(rng, 0xC0, 0x24F));
    } else if (r < 0.80) {
      cp = static_cast<char32_t>(uniform(rng, 0x4E00, 0x9FFF));
    } else if (r < 0.90) {
      cp = static_cast<char32_t>(uniform(rng, 0x1F300, 0x1FAFF));
    } else {
      do {
        cp = static_cast<char32_t>(uniform(rng, 0x370, 0xFFFD));
      } while (cp >= 0xD800 && cp <= 0xDFFF);
    }
    curate::append_utf8(out, cp);
  }
  return out;
}

namespace {

const std::vector<std::string>& topic_keywords(const std::string& label) {
  static const std::map<std::string, std::vector<std::string>> pools = [] {
    std::map<std::string, std::vector<std::string>> m{
        {"ads", {"buy", "sale", "discount", "offer", "price", "shop", "deal", "free", "shipping", "order", "coupon", "limited",
                 "save", "cheap", "bargain", "checkout", "cart", "promo"}},
        {"fiction", {"dragon", "castle", "whispered", "knight", "shadow", "forest", "princess", "sword", "ancient", "wandered",
                     "moonlight", "spell", "quest", "villain", "journey", "heart"}},
        {"forum", {"thread", "reply", "posted", "thanks", "anyone", "lol", "admin", "moderator", "quote", "bump", "signature",
                   "newbie", "topic", "upvote", "offtopic", "username"}},
        {"knowledge", {"theorem", "species", "molecule", "equation", "defined", "principle", "century", "theory", "element",
                       "organism", "hypothesis", "structure", "classified", "genus", "formula", "property"}},
        {"news", {"reported", "officials", "minister", "government", "election", "announced", "police", "yesterday", "according",
                  "statement", "spokesperson", "parliament", "crisis", "agency", "breaking", "sources"}},
        {"other", {"recipe", "garden", "weather", "hobby", "music", "travel", "pet", "kitchen", "weekend", "photo", "family",
                   "holiday", "coffee", "walk", "birthday", "cooking"}},
    };
    // widen each pool with label-specific invented words
    for (auto& [label, words] : m) {
      Rng rng(std::hash<std::string>{}(label) ^ 0x5eedULL);
      for (auto& w : word_pool(rng, 60, 5, 9)) words.push_back(label.substr(0, 2) + w);
    }
    return m;
  }();
  return pools.at(label);
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> pool = [] {
    std::vector<std::string> v{"the", "a", "and", "of", "to", "in", "is", "it", "for", "with", "on", "this", "that", "we",
                               "you", "are", "be", "at", "by", "from"};
    Rng rng(99);
    for (auto& w : word_pool(rng, 400, 3, 8)) v.push_back(w);
    return v;
  }();
  return pool;
}

}  // namespace

std::string topic_document(Rng& rng, const std::string& label, std::size_t words, double keyword_rate) {
  const auto& keys = topic_keywords(label);
  const auto& filler = filler_words();
  std::string out;
  std::size_t in_sentence = 0;
  for (std::size_t i = 0; i < words; ++i) {
    std::string w = unit(rng) < keyword_rate ? keys[uniform(rng, 0, keys.size() - 1)] : zipf_pick(rng, filler);
    if (in_sentence == 0) w = capitalize(w);
    if (!out.empty()) out += " ";
    out += w;
    if (++in_sentence >= uniform(rng, 8, 16) || i + 1 == words) {
      out += ".";
      in_sentence = 0;
    }
  }
  return out;
}

std::string unsafe_document(Rng& rng, std::size_t words) {
  static const std::vector<std::string> bad{"violence", "weapon", "kill", "attack", "brutal", "assault", "extremist",
                                            "propaganda", "gore", "massacre", "explicit", "bomb", "terror", "hatred"};
  const auto& filler = filler_words();
  std::string out;
  std::size_t in_sentence = 0;
  for (std::size_t i = 0; i < words; ++i) {
    std::string w = unit(rng) < 0.3 ? bad[uniform(rng, 0, bad.size() - 1)] : zipf_pick(rng, filler);
    if (in_sentence == 0) w = capitalize(w);
    if (!out.empty()) out += " ";
    out += w;
    if (++in_sentence >= uniform(rng, 8, 16) || i + 1 == words) {
      out += ".";
      in_sentence = 0;
    }
  }
  return out;
}

std::string mutate_words(const std::string& text, std::size_t edits, Rng& rng) {
  // keep whitespace layout; replace whole words in place
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) spans.emplace_back(start, i);
  }
  std::vector<std::size_t> idx(spans.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(edits, idx.size()));
  std::sort(idx.begin(), idx.end());
  std::string out;
  std::size_t copied = 0;
  for (const auto k : idx) {
    out.append(text, copied, spans[k].first - copied);
    out += "zq" + std::to_string(rng() % 1000000);
    copied = spans[k].second;
  }
  out.append(text, copied, std::string::npos);
  return out;
}

double exact_shingle_jaccard(const std::string& a, const std::string& b, std::size_t n) {
  auto grams = [n](const std::string& s) {
    std::vector<std::string> words;
    std::istringstream ss(s);
    std::string w;
    while (ss >> w) {
      for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      words.push_back(w);
    }
    std::set<std::string> out;
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string g;
      for (std::size_t k = 0; k < n; ++k) g += words[i + k] + '\x1f';
      out.insert(g);
    }
    return out;
  };
  const auto sa = grams(a);
  const auto sb = grams(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& g : sa) inter += sb.count(g);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

PipelineCorpus pipeline_corpus(std::uint64_t seed, std::size_t n_docs) {
  Rng rng(seed);
  const ProseGenerator prose(seed ^ 0xabcdefULL);
  PipelineCorpus c;
  std::vector<std::size_t> clean;
  std::string passage;
  {
    Rng prng(seed + 17);
    passage = prose.paragraph(prng, 14);
  }
  auto add = [&](std::string text, std::string source, std::optional<std::string> url = std::nullopt) {
    curate::Document d;
    char id[32];
    std::snprintf(id, sizeof id, "doc-%06zu", c.docs.size());
    d.id = id;
    d.source = std::move(source);
    d.url = std::move(url);
    d.text = std::move(text);
    c.docs.push_back(std::move(d));
    return c.docs.size() - 1;
  };
  while (c.docs.size() < n_docs) {
    const double r = unit(rng);
    if (r < 0.50 || clean.empty()) {
      clean.push_back(add(prose.document(rng, uniform(rng, 120, 400)), "common-crawl",
                          "http://site" + std::to_string(uniform(rng, 0, 500)) + ".example/page"));
    } else if (r < 0.55) {
      add(prose.document(rng, uniform(rng, 1200, 3000)), "books");
    } else if (r < 0.60) {
      add(cjk_text(rng, uniform(rng, 150, 500)), "common-crawl");
    } else if (r < 0.67) {
      std::string menu;
      for (std::size_t k = 0; k < uniform(rng, 20, 60); ++k) menu += capitalize(zipf_pick(rng, prose.nouns())) + "\n";
      add(menu, "common-crawl");
      ++c.boilerplate;
    } else if (r < 0.74) {
      add(topic_document(rng, "ads", uniform(rng, 80, 250)), "common-crawl");
      ++c.ads;
    } else if (r < 0.77) {
      add(unsafe_document(rng, uniform(rng, 80, 250)), "common-crawl");
    } else if (r < 0.84) {
      const auto& src = c.docs[clean[uniform(rng, 0, clean.size() - 1)]];
      add(src.text, "common-crawl");
      ++c.exact_dups;
    } else if (r < 0.91) {
      const auto& src = c.docs[clean[uniform(rng, 0, clean.size() - 1)]];
      const std::size_t words = curate::split_words(src.text).size();
      add(mutate_words(src.text, std::max<std::size_t>(1, words / 150), rng), "common-crawl");
      ++c.near_dups;
    } else if (r < 0.94) {
      add(prose.document(rng, uniform(rng, 100, 200)) + "\n\n" + passage, "common-crawl");
    } else {
      add(topic_document(rng, topic_labels()[uniform(rng, 1, 5)], uniform(rng, 100, 300)), "common-crawl");
    }
  }
  return c;
}

ModelSet train_models(const std::string& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(seed);
  const ProseGenerator prose(seed ^ 0xabcdefULL);
  ModelSet m{dir + "/lm.txt", dir + "/langid.bin", dir + "/quality.bin", dir + "/safety.bin", dir + "/topic.bin",
             dir + "/tokenizer.txt"};

  std::vector<std::string> clean;
  for (int i = 0; i < 600; ++i) clean.push_back(prose.document(rng, 200));

  curate::NgramLMConfig lm_cfg;
  lm_cfg.order = 3;
  std::vector<std::string> lm_corpus(clean.begin(), clean.begin() + 300);
  for (int i = 0; i < 40; ++i) lm_corpus.push_back(cjk_text(rng, 400));
  curate::train_ngram_lm(lm_corpus, lm_cfg).save(m.lm);

  std::vector<std::pair<std::string, std::string>> lang;
  for (int i = 0; i < 20; ++i) lang.emplace_back("en", clean[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 20; ++i) lang.emplace_back("zh", cjk_text(rng, 300));
  curate::train_langid(lang).save(m.langid);

  std::vector<std::string> shuffled;
  for (std::size_t i = 300; i < 600; ++i) shuffled.push_back(shuffle_words(clean[i], rng));
  std::vector<std::string> positives(clean.begin(), clean.begin() + 300);
  for (int i = 0; i < 30; ++i) positives.push_back(cjk_text(rng, 300));
  std::vector<std::string> negatives = shuffled;
  for (int i = 0; i < 60; ++i) negatives.push_back(topic_document(rng, "ads", 150));
  curate::train_classifier(positives, negatives).save(m.quality);

  std::vector<std::string> safe(clean.begin(), clean.begin() + 200);
  for (const auto& label : topic_labels()) {
    for (int i = 0; i < 20; ++i) safe.push_back(topic_document(rng, label, 150));
  }
  std::vector<std::string> unsafe;
  for (int i = 0; i < 200; ++i) unsafe.push_back(unsafe_document(rng, 150));
  curate::train_classifier(safe, unsafe).save(m.safety);

  std::vector<curate::LabeledText> topics;
  for (const auto& label : topic_labels()) {
    for (int i = 0; i < 60; ++i) topics.push_back({label, topic_document(rng, label, 150)});
  }
  for (int i = 0; i < 60; ++i) topics.push_back({"knowledge", clean[static_cast<std::size_t>(i)]});
  curate::train_topic(topics).save(m.topic);

  curate::TokenizerConfig tc;
  tc.vocab_size = 1024;
  std::vector<std::string> tok_corpus(clean.begin(), clean.begin() + 100);
  for (int i = 0; i < 20; ++i) tok_corpus.push_back(cjk_text(rng, 300));
  curate::train_bpe(tok_corpus, tc).save(m.tokenizer);
  return m;
}

std::vector<curate::TokenizedDoc> token_corpus(const curate::BpeTokenizer& tokenizer, std::uint64_t seed, std::size_t docs,
                                               std::size_t words_per_doc) {
  Rng rng(seed);
  const ProseGenerator prose(seed);
  std::vector<curate::TokenizedDoc> out;
  for (std::size_t i = 0; i < docs; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "tok-%05zu", i);
    out.push_back({id, tokenizer.encode(prose.document(rng, words_per_doc))});
  }
  return out;
}

}  // namespace synth
