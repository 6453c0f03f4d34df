#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "curate/corpus_io.hpp"

namespace curate {

struct Segmentation {
  std::vector<std::string_view> lines;
  std::vector<std::string_view> paragraphs;
  std::vector<std::string_view> words;
};

// Views point into `text`, which must outlive the result.
Segmentation segment(std::string_view text);

struct FilterVerdict {
  bool keep = true;
  std::string rule_id;

  static FilterVerdict pass() { return {}; }
  static FilterVerdict reject(std::string rule) { return {false, std::move(rule)}; }
  bool operator==(const FilterVerdict&) const = default;
};

// Per-n thresholds for n-gram repetition. Index by n directly.
struct RepetitionThresholds {
  double dup_line_frac = 0.30;
  double dup_para_frac = 0.30;
  double dup_line_char_frac = 0.20;
  double dup_para_char_frac = 0.20;
  std::array<double, 5> top_ngram_char_frac{0.0, 0.0, 0.20, 0.18, 0.16};
  std::array<double, 11> dup_ngram_char_frac{0, 0, 0, 0, 0, 0.15, 0.14, 0.13, 0.12, 0.11, 0.10};
};

struct HeuristicConfig {
  std::size_t min_words = 50;
  std::size_t max_words = 100'000;
  double max_symbol_word_ratio = 0.10;
  double max_ellipsis_line_frac = 0.30;
  double max_short_line_frac = 0.50;
  double max_incomplete_line_frac = 0.30;
  double min_alpha_word_frac = 0.80;
  std::size_t short_line_max_words = 3;
  RepetitionThresholds repetition;

  // Empty when valid; otherwise one message per violated constraint.
  std::vector<std::string> validate() const;
};

struct Blocklists {
  std::set<std::string, std::less<>> url_substrings;
  std::set<std::string, std::less<>> domains;
  std::set<std::string, std::less<>> words;

  bool empty() const noexcept { return url_substrings.empty() && domains.empty() && words.empty(); }
};

// One entry per line; '#' starts a comment. Entries are lowercased.
std::set<std::string, std::less<>> load_list_file(const std::filesystem::path& path);

std::string url_host(std::string_view url);

FilterVerdict apply_blocklists(const Document& doc, const Blocklists& lists);

FilterVerdict structural_verdict(const Document& doc, const HeuristicConfig& cfg);
FilterVerdict structural_verdict(const Document& doc, const HeuristicConfig& cfg, const Segmentation& seg);

struct RepetitionStats {
  double dup_line_frac = 0;
  double dup_para_frac = 0;
  double dup_line_char_frac = 0;
  double dup_para_char_frac = 0;
  std::array<double, 5> top_ngram_char_frac{};   // n = 2, 3, 4
  std::array<double, 11> dup_ngram_char_frac{};  // n = 5 .. 10

  bool operator==(const RepetitionStats&) const = default;
};

RepetitionStats repetition_stats(const Document& doc);
RepetitionStats repetition_stats(std::string_view text, const Segmentation& seg);

// Strict exceedance drops; equality keeps.
FilterVerdict repetition_verdict(const RepetitionStats& stats, const HeuristicConfig& cfg);

struct PiiResult {
  std::string text;
  std::size_t replacements = 0;
};

PiiResult anonymize_pii(std::string_view text);

// Blocklists, structure, then repetition; the first failing rule wins.
FilterVerdict heuristic_verdict(const Document& doc, const HeuristicConfig& cfg, const Blocklists& lists);

}  // namespace curate
