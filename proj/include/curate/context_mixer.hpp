#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curate/bpe_tokenizer.hpp"

namespace curate {

struct UpsampleWeights {
  // Bucket k covers [boundaries[k-1], boundaries[k]) tokens; the last bucket
  // is open ended.
  std::vector<std::uint64_t> boundaries{4096, 32768};
  std::vector<double> weights{1.0, 1.0, 3.0};
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t bucket_of(std::uint64_t tokens) const;
};

// Expected number of emitted copies for a document of the given length.
double expected_copies(std::uint64_t tokens, const UpsampleWeights& weights);

// Each document appears floor(w) times, plus once more when
// hash(id, seed) falls below frac(w). Copies keep the document id.
std::vector<TokenizedDoc> length_upsample(const std::vector<TokenizedDoc>& docs, const UpsampleWeights& weights);

struct PackedSpan {
  std::string doc_id;
  std::uint32_t doc_offset = 0;  // first token of the span within the document
  std::uint32_t length = 0;
  std::uint32_t position = 0;  // first token of the span within the sequence

  bool operator==(const PackedSpan&) const = default;
};

struct PackedSequence {
  std::vector<std::uint32_t> tokens;
  // Every span is followed by one separator at position + length.
  std::vector<PackedSpan> spans;
  std::uint32_t pad_count = 0;
  // Set on the last sequence of a stream when it was filled with padding.
  bool partial = false;

  std::vector<std::uint32_t> separator_positions() const;
  bool operator==(const PackedSequence&) const = default;
};

// Greedy packing in stream order. A chunk of a document takes at most
// space - 1 tokens so that its separator fits; documents longer than that
// continue in the next sequence. Throws Error{invalid_argument} for
// seq_len < 2.
std::vector<PackedSequence> pack_sequences(const std::vector<TokenizedDoc>& docs, std::uint32_t seq_len);

void write_packed(const std::vector<PackedSequence>& seqs, std::uint32_t seq_len, const std::string& path);
std::vector<PackedSequence> read_packed(const std::string& path, std::uint32_t* seq_len = nullptr);

// --- needle in a haystack -------------------------------------------------

struct NeedleSpec {
  std::string needle;
  std::string question;
  std::string answer;
};

struct HaystackInstance {
  std::string instance_id;
  std::uint32_t length = 0;
  double depth = 0.0;
  std::uint32_t needle_offset = 0;
  std::uint32_t needle_length = 0;
  std::string question;
  std::string answer;
  std::vector<std::uint32_t> tokens;

  bool operator==(const HaystackInstance&) const = default;
};

// Needle offset = round(depth * (length - needle tokens)). Filler is read
// cyclically from a seeded start document. Throws Error{corpus_too_small}
// when the corpus holds fewer than `length` tokens and
// Error{invalid_argument} for a needle that does not fit or a depth
// outside [0, 1].
HaystackInstance make_haystack(const std::vector<TokenizedDoc>& corpus, const NeedleSpec& spec,
                               const BpeTokenizer& tokenizer, std::uint32_t length, double depth, std::uint64_t seed);

// Lengths must be strictly ascending and depths within [0, 1].
std::vector<HaystackInstance> haystack_grid(const std::vector<std::uint32_t>& lengths, const std::vector<double>& depths,
                                            const NeedleSpec& spec, const std::vector<TokenizedDoc>& corpus,
                                            const BpeTokenizer& tokenizer, std::uint64_t seed);

std::string haystack_instance_id(std::uint32_t length, double depth);

// JSONL manifest (one line per instance) plus a token corpus keyed by
// instance id.
void write_haystack(const std::vector<HaystackInstance>& instances, const std::string& manifest_path,
                    const std::string& tokens_path);

}  // namespace curate
