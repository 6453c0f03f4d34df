#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace curate {

inline constexpr std::uint32_t kUnkId = 0;
inline constexpr std::uint32_t kBosId = 1;
inline constexpr std::uint32_t kEosId = 2;
inline constexpr std::uint32_t kPadId = 3;
inline constexpr std::uint32_t kFirstByteId = 4;
inline constexpr std::uint32_t kNumSpecials = 4;
inline constexpr std::uint32_t kBaseVocab = kNumSpecials + 256;

struct TokenizerConfig {
  std::uint32_t vocab_size = 64000;
  bool split_digits = true;
  bool byte_fallback = true;
  bool dummy_prefix = false;

  void validate() const;
  bool operator==(const TokenizerConfig&) const = default;
};

// Whitespace and digit splitting. One whitespace character attaches as a
// prefix to a following run of non-space, non-digit characters; other
// whitespace is a piece of its own. Concatenating the pieces gives back the
// input. The dummy prefix, when enabled, is added by encode().
std::vector<std::string_view> pretokenize(std::string_view text, const TokenizerConfig& config = {});

struct MergeRule {
  std::uint32_t left;
  std::uint32_t right;
  std::uint32_t result;

  bool operator==(const MergeRule&) const = default;
};

class BpeTokenizer {
 public:
  BpeTokenizer();

  const TokenizerConfig& config() const noexcept { return config_; }
  std::uint32_t vocab_size() const noexcept { return static_cast<std::uint32_t>(tokens_.size()); }
  const std::string& token(std::uint32_t id) const;
  // Returns kUnkId when absent.
  std::uint32_t id_of(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<MergeRule>& merges() const noexcept { return merges_; }

  // Initial symbols of one piece before any merge.
  std::vector<std::uint32_t> initial_symbols(std::string_view piece) const;
  std::vector<std::uint32_t> encode_piece(std::string_view piece) const;
  std::vector<std::uint32_t> encode(std::string_view text) const;
  // Special tokens decode to nothing. Throws Error{unknown_id}.
  std::string decode(const std::vector<std::uint32_t>& ids) const;

  void save(const std::string& path) const;
  static BpeTokenizer load(const std::string& path);

  bool operator==(const BpeTokenizer& other) const {
    return config_ == other.config_ && tokens_ == other.tokens_ && merges_ == other.merges_;
  }

 private:
  friend BpeTokenizer train_bpe(const std::vector<std::string>&, const TokenizerConfig&);
  std::uint32_t add_token(std::string s);
  void add_merge(MergeRule rule);

  TokenizerConfig config_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<MergeRule> merges_;
  // (left << 32 | right) -> ranks, ascending
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> ranks_;
};

// Throws Error{empty_corpus} or Error{vocab_too_small}.
BpeTokenizer train_bpe(const std::vector<std::string>& corpus, const TokenizerConfig& config = {});

// --- token-id corpus ---------------------------------------------------------

struct TokenizedDoc {
  std::string id;
  std::vector<std::uint32_t> ids;

  bool operator==(const TokenizedDoc&) const = default;
};

void write_token_corpus(const std::vector<TokenizedDoc>& docs, const std::string& path);
std::vector<TokenizedDoc> read_token_corpus(const std::string& path);

}  // namespace curate
