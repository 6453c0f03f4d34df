#include <doctest.h>

#include <algorithm>
#include <cctype>

#include "curate/heuristic_filter.hpp"
#include "curate/text.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace curate;

namespace {

Document doc_of(std::string text, std::optional<std::string> url = std::nullopt) {
  Document d;
  d.id = "t";
  d.text = std::move(text);
  d.url = std::move(url);
  return d;
}

void check_stats_equal(const RepetitionStats& a, const RepetitionStats& b) {
  CHECK(a.dup_line_frac == b.dup_line_frac);
  CHECK(a.dup_para_frac == b.dup_para_frac);
  CHECK(a.dup_line_char_frac == b.dup_line_char_frac);
  CHECK(a.dup_para_char_frac == b.dup_para_char_frac);
  for (std::size_t n = 2; n <= 4; ++n) CHECK(a.top_ngram_char_frac[n] == b.top_ngram_char_frac[n]);
  for (std::size_t n = 5; n <= 10; ++n) CHECK(a.dup_ngram_char_frac[n] == b.dup_ngram_char_frac[n]);
}

}  // namespace

TEST_SUITE("heuristic_filter") {
  TEST_CASE("segmentation") {
    auto s = segment("a b\n\nc");
    CHECK(s.lines.size() == 3);
    CHECK(s.lines[1].empty());
    REQUIRE(s.paragraphs.size() == 2);
    CHECK(s.paragraphs[0] == "a b");
    CHECK(s.paragraphs[1] == "c");
    CHECK(s.words.size() == 3);
    CHECK(segment("你好").words.size() == 2);
    s = segment("");
    CHECK(s.lines.size() == 1);
    CHECK(s.paragraphs.empty());
    CHECK(s.words.empty());
  }

  TEST_CASE("blocklists") {
    Blocklists lists;
    CHECK(apply_blocklists(doc_of("anything", "http://spam.example/x"), lists).keep);
    lists.domains.insert("spam.example");
    auto v = apply_blocklists(doc_of("anything", "http://spam.example/x"), lists);
    CHECK_FALSE(v.keep);
    CHECK(v.rule_id == "domain");
    CHECK_FALSE(apply_blocklists(doc_of("x", "http://www.spam.example/y"), lists).keep);
    CHECK(apply_blocklists(doc_of("x", "http://notspam.example/y"), lists).keep);
    lists.url_substrings.insert("/casino/");
    v = apply_blocklists(doc_of("x", "http://ok.example/casino/page"), lists);
    CHECK(v.rule_id == "url");
    lists.words.insert("casino");
    CHECK(apply_blocklists(doc_of("we like casinos here"), lists).keep);
    v = apply_blocklists(doc_of("Visit the CASINO, now"), lists);
    CHECK_FALSE(v.keep);
    CHECK(v.rule_id == "word");
  }

  TEST_CASE("structural rules") {
    HeuristicConfig cfg;
    auto v = structural_verdict(doc_of("one two three four five six seven eight nine ten."), cfg);
    CHECK(v.rule_id == "min_words");
    cfg.min_words = 1;
    v = structural_verdict(doc_of("### ### ###"), cfg);
    CHECK(v.rule_id == "symbol_ratio");

    synth::Rng rng(5);
    const synth::ProseGenerator prose(1);
    HeuristicConfig defaults;
    for (int i = 0; i < 50; ++i) {
      const auto d = doc_of(prose.document(rng, 200));
      CHECK(heuristic_verdict(d, defaults, {}).keep);
    }
  }

  TEST_CASE("repetition examples") {
    auto s = repetition_stats(doc_of("x\nx\ny"));
    CHECK(s.dup_line_frac == doctest::Approx(2.0 / 3.0));
    s = repetition_stats(doc_of("a b c a b c"));
    CHECK(s.top_ngram_char_frac[3] == doctest::Approx(10.0 / 11.0));

    synth::Rng rng(9);
    const auto vocab = synth::word_pool(rng, 5000, 4, 12);
    std::string text;
    for (std::size_t i = 0; i < 1000; ++i) text += (i ? " " : "") + vocab[i];
    s = repetition_stats(doc_of(text));
    check_stats_equal(s, RepetitionStats{});
    check_stats_equal(s, oracle::repetition_stats(text));
  }

  TEST_CASE("repetition stats match the quadratic reference") {
    synth::Rng rng(2024);
    for (int i = 0; i < 120; ++i) {
      const std::string text = oracle::repetitive_document(rng);
      check_stats_equal(repetition_stats(doc_of(text)), oracle::repetition_stats(text));
    }
  }

  TEST_CASE("repetition verdict uses strict exceedance") {
    HeuristicConfig cfg;
    RepetitionStats s;
    CHECK(repetition_verdict(s, cfg).keep);
    s.dup_para_frac = 0.5;
    CHECK(repetition_verdict(s, cfg).rule_id == "dup_para_frac");
    s.dup_para_frac = 0.30;
    CHECK(repetition_verdict(s, cfg).keep);
    s.dup_ngram_char_frac[7] = 0.1400001;
    CHECK(repetition_verdict(s, cfg).rule_id == "dup_7gram_char_frac");
  }

  TEST_CASE("pii anonymization") {
    auto r = anonymize_pii("mail a@b.com now");
    CHECK(r.text == "mail [EMAIL] now");
    CHECK(r.replacements == 1);
    r = anonymize_pii("+1 415-555-0100");
    CHECK(r.text == "[PHONE]");
    CHECK(r.replacements == 1);
    r = anonymize_pii("ISBN 9780306406157");
    CHECK(r.text == "ISBN 9780306406157");
    CHECK(r.replacements == 0);
    r = anonymize_pii("call 555-0100, write x.y+z@mail.example.org");
    CHECK(r.replacements == 2);
    synth::Rng rng(3);
    for (int i = 0; i < 500; ++i) {
      std::string x = synth::random_unicode(rng, 30) + " joe" + std::to_string(i) + "@ex.com " +
                      std::to_string(200 + i) + "-555-01" + std::to_string(10 + i % 90);
      const auto once = anonymize_pii(x);
      const auto twice = anonymize_pii(once.text);
      CHECK(twice.text == once.text);
      CHECK(twice.replacements == 0);
    }
  }

  TEST_CASE("verdicts never modify text and are deterministic") {
    synth::Rng rng(4);
    const synth::ProseGenerator prose(2);
    for (int i = 0; i < 20; ++i) {
      const Document d = doc_of(prose.document(rng, 80 + i * 10));
      const Document copy = d;
      const auto a = heuristic_verdict(d, {}, {});
      const auto b = heuristic_verdict(d, {}, {});
      CHECK(a == b);
      CHECK(d == copy);
    }
  }

  TEST_CASE("config validation") {
    HeuristicConfig c;
    CHECK(c.validate().empty());
    c.min_words = 10;
    c.max_words = 5;
    c.min_alpha_word_frac = 1.5;
    CHECK(c.validate().size() == 2);
  }
}
