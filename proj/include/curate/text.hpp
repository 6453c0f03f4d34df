#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace curate {

bool is_valid_utf8(std::string_view s) noexcept;

// Decodes the code point starting at s[i] and advances i. Malformed bytes
// decode to U+FFFD and advance by one byte.
char32_t next_codepoint(std::string_view s, std::size_t& i) noexcept;

void append_utf8(std::string& out, char32_t cp);

std::size_t count_codepoints(std::string_view s) noexcept;

bool is_unicode_space(char32_t cp) noexcept;
bool is_cjk(char32_t cp) noexcept;
bool is_alphabetic(char32_t cp) noexcept;
bool is_decimal_digit(char32_t cp) noexcept;

bool is_blank(std::string_view line) noexcept;

// Word rule shared by every ratio filter, the language model and the
// shingler: whitespace-delimited pieces, with each CJK code point split out
// as a word of its own.
template <typename F>
void for_each_word(std::string_view text, F&& emit) {
  std::size_t i = 0;
  std::size_t start = std::string_view::npos;
  while (i < text.size()) {
    const std::size_t at = i;
    const auto byte = static_cast<unsigned char>(text[i]);
    if (byte < 0x80) {
      ++i;
      if (byte == ' ' || (byte >= 0x09 && byte <= 0x0D)) {
        if (start != std::string_view::npos) {
          emit(text.substr(start, at - start));
          start = std::string_view::npos;
        }
      } else if (start == std::string_view::npos) {
        start = at;
      }
      continue;
    }
    const char32_t cp = next_codepoint(text, i);
    if (is_unicode_space(cp)) {
      if (start != std::string_view::npos) {
        emit(text.substr(start, at - start));
        start = std::string_view::npos;
      }
    } else if (is_cjk(cp)) {
      if (start != std::string_view::npos) {
        emit(text.substr(start, at - start));
        start = std::string_view::npos;
      }
      emit(text.substr(at, i - at));
    } else if (start == std::string_view::npos) {
      start = at;
    }
  }
  if (start != std::string_view::npos) emit(text.substr(start));
}

std::vector<std::string_view> split_words(std::string_view text);

// Splits on '\n'; "" yields one empty line.
std::vector<std::string_view> split_lines(std::string_view text);

// Maximal runs of non-blank lines.
std::vector<std::string_view> split_paragraphs(std::string_view text);

std::string_view trim(std::string_view s) noexcept;

std::string join(const std::vector<std::string_view>& parts, std::string_view sep);

}  // namespace curate
