#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "curate/dedup.hpp"
#include "curate/error.hpp"
#include "curate/text.hpp"
#include "synth.hpp"

using namespace curate;

namespace {

Document doc_of(std::string id, std::string text) {
  Document d;
  d.id = std::move(id);
  d.text = std::move(text);
  return d;
}

std::string doc_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "d%05zu", i);
  return buf;
}

std::vector<Document> by_id(std::vector<Document> docs) {
  std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
  return docs;
}

std::string random_words(synth::Rng& rng, const std::vector<std::string>& vocab, std::size_t n) {
  std::string out;
  for (std::size_t k = 0; k < n; ++k) out += (k ? " " : "") + vocab[rng() % vocab.size()];
  return out;
}

// Suffix array over integer tokens, with Kasai LCP.
struct SuffixArray {
  std::vector<std::size_t> sa, lcp;

  explicit SuffixArray(const std::vector<long>& s) {
    const std::size_t n = s.size();
    sa.resize(n);
    std::vector<long> rank(s.begin(), s.end()), tmp(n);
    for (std::size_t i = 0; i < n; ++i) sa[i] = i;
    for (std::size_t k = 1;; k <<= 1) {
      auto key = [&](std::size_t i) { return std::make_pair(rank[i], i + k < n ? rank[i + k] : std::numeric_limits<long>::min()); };
      std::sort(sa.begin(), sa.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
      tmp[sa[0]] = 0;
      for (std::size_t i = 1; i < n; ++i) tmp[sa[i]] = tmp[sa[i - 1]] + (key(sa[i - 1]) < key(sa[i]) ? 1 : 0);
      rank = tmp;
      if (static_cast<std::size_t>(rank[sa[n - 1]]) == n - 1) break;
    }
    lcp.assign(n, 0);
    std::size_t h = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rank[i] == 0) {
        h = 0;
        continue;
      }
      const std::size_t j = sa[static_cast<std::size_t>(rank[i]) - 1];
      while (i + h < n && j + h < n && s[i + h] == s[j + h]) ++h;
      lcp[static_cast<std::size_t>(rank[i])] = h;
      if (h) --h;
    }
  }
};

// Bytes removed per document when every window with an earlier identical
// occurrence (docs in id order, then position) is cut out.
std::map<std::string, std::size_t> suffix_array_excision(const std::vector<Document>& docs, std::size_t w) {
  std::vector<const Document*> order;
  for (const auto& d : docs) order.push_back(&d);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->id < b->id; });

  std::map<std::string, long> intern;
  std::vector<long> seq;
  std::vector<std::pair<std::size_t, std::size_t>> owner;  // (doc, token index)
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> spans(order.size());
  long sep = -1;
  for (std::size_t d = 0; d < order.size(); ++d) {
    const std::string& t = order[d]->text;
    std::size_t i = 0;
    while (i < t.size()) {
      while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
      const std::size_t b = i;
      while (i < t.size() && !std::isspace(static_cast<unsigned char>(t[i]))) ++i;
      if (i == b) continue;
      spans[d].emplace_back(b, i);
      seq.push_back(intern.emplace(t.substr(b, i - b), static_cast<long>(intern.size())).first->second);
      owner.emplace_back(d, spans[d].size() - 1);
    }
    seq.push_back(sep--);
    owner.emplace_back(d, std::numeric_limits<std::size_t>::max());
  }
  const SuffixArray sa(seq);

  std::vector<std::vector<char>> marked(order.size());
  for (std::size_t d = 0; d < order.size(); ++d) marked[d].assign(spans[d].size(), 0);
  std::size_t g = 0;
  while (g < seq.size()) {
    std::size_t e = g + 1;
    while (e < seq.size() && sa.lcp[e] >= w) ++e;
    if (e - g > 1) {
      std::size_t first = seq.size();
      for (std::size_t r = g; r < e; ++r) first = std::min(first, sa.sa[r]);
      for (std::size_t r = g; r < e; ++r) {
        if (sa.sa[r] == first) continue;
        const auto [d, tok] = owner[sa.sa[r]];
        for (std::size_t k = 0; k < w; ++k) marked[d][tok + k] = 1;
      }
    }
    g = e;
  }

  std::map<std::string, std::size_t> out;
  for (std::size_t d = 0; d < order.size(); ++d) {
    const auto& sp = spans[d];
    std::size_t removed = 0;
    for (std::size_t t = 0; t < sp.size();) {
      if (!marked[d][t]) {
        ++t;
        continue;
      }
      std::size_t e = t;
      while (e < sp.size() && marked[d][e]) ++e;
      const std::size_t end = e < sp.size() ? sp[e].first : order[d]->text.size();
      removed += end - sp[t].first;
      t = e;
    }
    out[order[d]->id] = removed;
  }
  return out;
}

std::vector<std::set<std::string>> partition(const std::vector<DupCluster>& clusters) {
  std::vector<std::set<std::string>> p;
  for (const auto& c : clusters) p.emplace_back(c.members.begin(), c.members.end());
  std::sort(p.begin(), p.end());
  return p;
}

}  // namespace

TEST_SUITE("dedup") {
  TEST_CASE("shingles and jaccard") {
    CHECK(shingles("one two three four").empty());
    CHECK(shingles("one two three four five").size() == 1);
    CHECK(shingles("A b c d e") == shingles("a  B c d\ne"));
    const auto a = shingles("a b c d e f g");
    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(a, shingles("v w x y z q r")) == 0.0);
    CHECK(jaccard({}, {}) == 1.0);
  }

  TEST_CASE("signatures") {
    const MinHasher h;
    CHECK(h.num_perm() == 128);
    CHECK_FALSE(h.signature({}).has_value());
    const auto s = shingles("the same text appears here twice");
    CHECK(h.signature(s) == MinHasher().signature(s));
    CHECK(h.signature(s)->size() == 128);
  }

  TEST_CASE("signature agreement is binomial around exact jaccard") {
    synth::Rng rng(50);
    const synth::ProseGenerator prose(50);
    const MinHasher h;
    std::size_t inside = 0;
    const std::size_t pairs = 500;
    for (std::size_t i = 0; i < pairs; ++i) {
      const std::string a = prose.document(rng, 80 + rng() % 200);
      const std::size_t words = split_words(a).size();
      const std::string b = i % 10 == 0 ? prose.document(rng, 100) : synth::mutate_words(a, rng() % (words / 3 + 1), rng);
      const double j = synth::exact_shingle_jaccard(a, b);
      const double agree = signature_agreement(*h.signature(shingles(a)), *h.signature(shingles(b)));
      const double sigma = std::sqrt(128.0 * j * (1 - j));
      inside += std::abs(agree * 128.0 - 128.0 * j) <= 3 * sigma + 1e-9;
    }
    CHECK(static_cast<double>(inside) / static_cast<double>(pairs) >= 0.99);
  }

  TEST_CASE("lsh basics") {
    LshIndex idx(16, 8);
    CHECK(idx.threshold() == doctest::Approx(std::pow(1.0 / 16, 1.0 / 8)));
    CHECK(idx.threshold() == doctest::Approx(0.707).epsilon(1e-3));
    MinHashSignature s(128);
    for (std::size_t i = 0; i < 128; ++i) s[i] = i * 7919;
    CHECK(idx.insert_and_candidates(s, "a").empty());
    CHECK(idx.insert_and_candidates(s, "b") == std::vector<std::string>{"a"});
    CHECK_THROWS_AS(idx.insert_and_candidates(s, "a"), Error);
    MinHashSignature t(128);
    for (std::size_t i = 0; i < 128; ++i) t[i] = s[i] + 1;
    CHECK(idx.insert_and_candidates(t, "c").empty());
    CHECK_THROWS_AS(LshIndex(16, 8).insert_and_candidates(MinHashSignature(10), "x"), Error);

    const auto path = (std::filesystem::temp_directory_path() / "curate_lsh_roundtrip.bin").string();
    idx.save(path);
    auto back = LshIndex::load(path);
    CHECK(back.size() == 3);
    auto cands = back.insert_and_candidates(s, "d");
    std::sort(cands.begin(), cands.end());
    CHECK(cands == std::vector<std::string>{"a", "b"});
  }

  TEST_CASE("band collision rate matches the analytic curve") {
    synth::Rng rng(51);
    std::uniform_real_distribution<double> u;
    for (const auto [bands, rows] : {std::pair<std::size_t, std::size_t>{16, 8}, {32, 4}}) {
      for (const double j : {0.3, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        const std::size_t trials = 2000;
        std::size_t hits = 0;
        LshIndex idx(bands, rows);
        for (std::size_t t = 0; t < trials; ++t) {
          MinHashSignature a(bands * rows), b(bands * rows);
          for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = rng();
            b[i] = u(rng) < j ? a[i] : rng();
          }
          idx.insert_and_candidates(a, "a" + std::to_string(t));
          hits += !idx.insert_and_candidates(b, "b" + std::to_string(t)).empty();
        }
        const double p = idx.candidate_probability(j);
        CHECK(p == doctest::Approx(1 - std::pow(1 - std::pow(j, static_cast<double>(rows)), static_cast<double>(bands))));
        const double sigma = std::sqrt(p * (1 - p) / trials);
        CHECK(std::abs(static_cast<double>(hits) / trials - p) <= 4 * sigma + 1e-3);
      }
    }
  }

  TEST_CASE("candidate recall above jaccard 0.8 with the default banding") {
    synth::Rng rng(52);
    const synth::ProseGenerator prose(52);
    const MinHasher h;
    const MinHashDedupParams defaults;
    std::size_t pairs = 0, found = 0;
    while (pairs < 1000) {
      const std::string a = prose.document(rng, 200);
      const std::string b = synth::mutate_words(a, 1 + rng() % 4, rng);
      if (synth::exact_shingle_jaccard(a, b) < 0.8) continue;
      LshIndex idx(defaults.bands, defaults.rows);
      idx.insert_and_candidates(*h.signature(shingles(a)), "a");
      found += !idx.insert_and_candidates(*h.signature(shingles(b)), "b").empty();
      ++pairs;
    }
    CHECK(static_cast<double>(found) / static_cast<double>(pairs) >= 0.99);
  }

  TEST_CASE("cluster resolution") {
    auto c = resolve_clusters({{"b", "a"}, {"c", "b"}});
    REQUIRE(c.size() == 1);
    CHECK(c[0].members == std::vector<std::string>{"a", "b", "c"});
    CHECK(c[0].retained == "a");
    CHECK(resolve_clusters({}).empty());

    synth::Rng rng(53);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (int i = 0; i < 300; ++i) pairs.emplace_back(doc_id(rng() % 200), doc_id(rng() % 200));
    const auto reference = resolve_clusters(pairs);
    for (int k = 0; k < 20; ++k) {
      std::shuffle(pairs.begin(), pairs.end(), rng);
      for (auto& p : pairs) {
        if (rng() % 2) std::swap(p.first, p.second);
      }
      CHECK(resolve_clusters(pairs) == reference);
    }
    for (const auto& cl : reference) {
      CHECK(std::is_sorted(cl.members.begin(), cl.members.end()));
      CHECK(cl.retained == cl.members.front());
    }

    const PairVerification verify{[](const std::string& a, const std::string& b) { return a == "a" || b == "a" ? 0.9 : 0.1; },
                                  0.7};
    c = resolve_clusters({{"a", "b"}, {"c", "d"}}, verify);
    REQUIRE(c.size() == 1);
    CHECK(c[0].members == std::vector<std::string>{"a", "b"});
  }

  TEST_CASE("paragraph dedup removes boilerplate") {
    synth::Rng rng(54);
    const synth::ProseGenerator prose(54);
    const std::string boiler = "Subscribe to our newsletter for the latest updates and offers.";
    std::vector<Document> docs;
    for (std::size_t i = 0; i < 1000; ++i) docs.push_back(doc_of(doc_id(i), prose.paragraph(rng, 6) + "\n\n" + boiler));
    ParagraphDedupParams p;
    p.max_occurrences = 10;
    p.min_words = 5;
    StageReport r;
    std::uint64_t removed = 0;
    const auto out = paragraph_dedup(docs, p, r, &removed);
    CHECK(removed == 1000);
    CHECK(out.size() == 1000);
    for (const auto& d : out) CHECK(d.text.find("Subscribe") == std::string::npos);
    CHECK(r.consistent());

    p.max_occurrences = std::numeric_limits<std::uint64_t>::max();
    StageReport r2;
    CHECK(paragraph_dedup(docs, p, r2) == docs);

    p.max_occurrences = 10;
    p.mode = ParagraphDedupMode::single_pass;
    StageReport r3;
    const auto single = paragraph_dedup(docs, p, r3, &removed);
    CHECK(removed == 990);
    std::size_t with = 0;
    for (const auto& d : single) with += d.text.find("Subscribe") != std::string::npos;
    CHECK(with == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(single[i].text.find("Subscribe") != std::string::npos);
  }

  TEST_CASE("paragraph removal count matches a hash-map count") {
    synth::Rng rng(55);
    const synth::ProseGenerator prose(55);
    std::vector<std::string> shared;
    for (int i = 0; i < 30; ++i) shared.push_back(prose.paragraph(rng, 1 + rng() % 3));
    std::vector<Document> docs;
    for (std::size_t i = 0; i < 500; ++i) {
      std::string text;
      const std::size_t paras = 1 + rng() % 6;
      for (std::size_t k = 0; k < paras; ++k) {
        std::string para = rng() % 3 == 0 ? shared[std::min(rng() % 30, rng() % 30)] : prose.paragraph(rng, 2);
        if (rng() % 7 == 0) para = "  " + std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(para[0])))) + para.substr(1) + " ";
        text += (k ? "\n\n" : "") + para;
      }
      docs.push_back(doc_of(doc_id(i), text));
    }
    for (const std::uint64_t max : {1u, 3u, 10u, 40u}) {
      std::map<std::string, std::uint64_t> counts;
      for (const auto& d : docs) {
        for (const auto p : split_paragraphs(d.text)) ++counts[dedup_normalize(p)];
      }
      std::uint64_t expected = 0;
      for (const auto& d : docs) {
        for (const auto p : split_paragraphs(d.text)) expected += counts[dedup_normalize(p)] > max;
      }
      ParagraphDedupParams p;
      p.max_occurrences = max;
      p.min_words = 0;
      StageReport r;
      std::uint64_t removed = 0;
      paragraph_dedup(docs, p, r, &removed);
      CHECK(removed == expected);
      CHECK(r.consistent());
    }
  }

  TEST_CASE("exact dedup") {
    StageReport r;
    auto out = exact_dedup({doc_of("b", "Same text."), doc_of("a", "Same text.")}, r);
    REQUIRE(out.size() == 1);
    CHECK(out[0].id == "a");
    CHECK(r.drop_reasons.at("exact-dup") == 1);
    StageReport r2;
    out = exact_dedup({doc_of("x", "Hello   World"), doc_of("y", "hello world\n")}, r2);
    CHECK(out.size() == 1);
  }

  TEST_CASE("exact dedup equals quadratic string-equality dedup") {
    synth::Rng rng(56);
    const synth::ProseGenerator prose(56);
    std::vector<std::string> bases;
    for (int i = 0; i < 300; ++i) bases.push_back(prose.paragraph(rng, 2));
    std::vector<Document> docs;
    for (std::size_t i = 0; i < 1000; ++i) {
      std::string t = bases[rng() % bases.size()];
      if (rng() % 4 == 0) t = "  " + t + "\n";
      if (rng() % 5 == 0) std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::toupper(c); });
      docs.push_back(doc_of(doc_id(rng() % 1000000) + "-" + std::to_string(i), t));
    }
    std::vector<std::string> norm;
    for (const auto& d : docs) norm.push_back(dedup_normalize(d.text));
    std::set<std::string> expected;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      bool smallest = true;
      for (std::size_t j = 0; j < docs.size() && smallest; ++j) smallest = !(j != i && norm[j] == norm[i] && docs[j].id < docs[i].id);
      if (smallest) expected.insert(docs[i].id);
    }
    StageReport r;
    std::set<std::string> got;
    for (const auto& d : exact_dedup(docs, r)) got.insert(d.id);
    CHECK(got == expected);
    CHECK(r.consistent());
  }

  TEST_CASE("substring dedup excises a shared passage") {
    synth::Rng rng(57);
    const auto vocab = synth::word_pool(rng, 3000);
    const std::string passage = random_words(rng, vocab, 200);
    std::vector<Document> docs{doc_of("b", random_words(rng, vocab, 80) + " " + passage + " " + random_words(rng, vocab, 60)),
                               doc_of("a", random_words(rng, vocab, 70) + " " + passage)};
    StageReport r;
    std::vector<std::size_t> excised;
    SubstringDedupParams p;
    const auto out = substring_dedup(docs, p, r, &excised);
    REQUIRE(out.size() == 2);
    CHECK(out[1].text == docs[1].text);
    CHECK(out[0].text.find(passage) == std::string::npos);
    CHECK(excised[0] == 200);
    CHECK(excised[1] == 0);
    CHECK(split_words(out[0].text).size() == 140);

    std::vector<Document> unique;
    for (int i = 0; i < 20; ++i) unique.push_back(doc_of(doc_id(static_cast<std::size_t>(i)), random_words(rng, vocab, 120)));
    StageReport r2;
    CHECK(substring_dedup(unique, p, r2) == unique);
  }

  TEST_CASE("substring excision matches a suffix-array reference") {
    synth::Rng rng(58);
    const auto vocab = synth::word_pool(rng, 400, 2, 7);
    std::vector<std::string> passages;
    for (int i = 0; i < 12; ++i) passages.push_back(random_words(rng, vocab, 40 + rng() % 160));
    std::vector<Document> docs;
    for (std::size_t i = 0; i < 100; ++i) {
      std::string text;
      const std::size_t pieces = 1 + rng() % 5;
      for (std::size_t k = 0; k < pieces; ++k) {
        std::string piece = rng() % 2 ? passages[rng() % passages.size()] : random_words(rng, vocab, 5 + rng() % 80);
        if (rng() % 4 == 0) {
          // partial copy of a passage
          const auto words = split_words(passages[rng() % passages.size()]);
          const std::size_t b = rng() % words.size();
          const std::size_t e = std::min(words.size(), b + 30 + rng() % 60);
          piece.clear();
          for (std::size_t t = b; t < e; ++t) piece += (t > b ? " " : "") + std::string(words[t]);
        }
        text += (k ? (rng() % 3 ? " " : "\n\n") : "") + piece;
      }
      docs.push_back(doc_of(doc_id(rng() % 100000) + "-" + std::to_string(i), text));
    }
    SubstringDedupParams p;
    p.min_words = 0;
    StageReport r;
    std::vector<std::size_t> excised;
    const auto out = substring_dedup(docs, p, r, &excised);
    REQUIRE(out.size() == docs.size());
    const auto expected = suffix_array_excision(docs, p.window);
    std::size_t touched = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const std::size_t removed = docs[i].text.size() - out[i].text.size();
      CHECK(removed == expected.at(docs[i].id));
      touched += removed > 0;
    }
    CHECK(touched > 10);
  }

  TEST_CASE("minhash dedup leaves no verified near duplicates") {
    synth::Rng rng(59);
    const synth::ProseGenerator prose(59);
    std::vector<Document> docs;
    std::vector<std::string> originals;
    for (std::size_t i = 0; i < 400; ++i) {
      std::string t;
      if (!originals.empty() && rng() % 3 == 0) {
        const std::string& src = originals[rng() % originals.size()];
        t = synth::mutate_words(src, rng() % 30, rng);
      } else {
        t = prose.document(rng, 100 + rng() % 100);
        originals.push_back(t);
      }
      docs.push_back(doc_of(doc_id(rng() % 1000000) + "-" + std::to_string(i), t));
    }
    docs.push_back(doc_of("short", "too short"));
    MinHashDedupParams p;
    StageReport r;
    std::vector<DupCluster> clusters;
    const auto out = minhash_dedup(docs, p, r, &clusters);
    CHECK(r.consistent());
    CHECK(r.drop_reasons.at("minhash-dup") == docs.size() - out.size());
    CHECK(std::any_of(out.begin(), out.end(), [](const Document& d) { return d.id == "short"; }));
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        CHECK(synth::exact_shingle_jaccard(out[i].text, out[j].text) < *p.verify_cutoff);
      }
    }
    for (const auto& c : clusters) {
      CHECK(std::any_of(out.begin(), out.end(), [&](const Document& d) { return d.id == c.retained; }));
    }

    // Input order and worker count do not change the result.
    auto shuffled = docs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    p.workers = 4;
    StageReport r2;
    std::vector<DupCluster> clusters2;
    CHECK(by_id(minhash_dedup(shuffled, p, r2, &clusters2)) == by_id(out));
    CHECK(clusters2 == clusters);
    CHECK(partition(clusters2) == partition(clusters));

    p.bands = 10;
    StageReport r3;
    CHECK_THROWS_AS(minhash_dedup(docs, p, r3), Error);
  }
}
