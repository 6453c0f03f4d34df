#include "curate/context_mixer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binio.hpp"
#include "curate/error.hpp"
#include "curate/hash.hpp"

namespace curate {

void UpsampleWeights::validate() const {
  if (weights.size() != boundaries.size() + 1) {
    throw Error(ErrorKind::invalid_argument, "need one weight per length bucket");
  }
  for (std::size_t k = 1; k < boundaries.size(); ++k) {
    if (boundaries[k] <= boundaries[k - 1]) throw Error(ErrorKind::invalid_argument, "bucket boundaries must ascend");
  }
  for (const double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorKind::invalid_argument, "bucket weights must be positive");
  }
}

std::size_t UpsampleWeights::bucket_of(std::uint64_t tokens) const {
  return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), tokens) - boundaries.begin());
}

double expected_copies(std::uint64_t tokens, const UpsampleWeights& weights) {
  return weights.weights.at(weights.bucket_of(tokens));
}

std::vector<TokenizedDoc> length_upsample(const std::vector<TokenizedDoc>& docs, const UpsampleWeights& weights) {
  weights.validate();
  std::vector<TokenizedDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    const double w = weights.weights[weights.bucket_of(d.ids.size())];
    const double whole = std::floor(w);
    auto copies = static_cast<std::uint64_t>(whole);
    if (unit_interval(hash64(d.id, weights.seed)) < w - whole) ++copies;
    for (std::uint64_t c = 0; c < copies; ++c) out.push_back(d);
  }
  return out;
}

std::vector<std::uint32_t> PackedSequence::separator_positions() const {
  std::vector<std::uint32_t> out;
  out.reserve(spans.size());
  for (const auto& s : spans) out.push_back(s.position + s.length);
  return out;
}

std::vector<PackedSequence> pack_sequences(const std::vector<TokenizedDoc>& docs, std::uint32_t seq_len) {
  if (seq_len < 2) throw Error(ErrorKind::invalid_argument, "seq_len must be at least 2");
  std::vector<PackedSequence> out;
  PackedSequence cur;
  auto flush = [&](bool last) {
    cur.pad_count = seq_len - static_cast<std::uint32_t>(cur.tokens.size());
    cur.tokens.resize(seq_len, kPadId);
    cur.partial = last && cur.pad_count > 0;
    out.push_back(std::move(cur));
    cur = PackedSequence{};
  };
  for (const auto& d : docs) {
    std::uint32_t offset = 0;
    const auto total = static_cast<std::uint32_t>(d.ids.size());
    while (offset < total) {
      const auto space = seq_len - static_cast<std::uint32_t>(cur.tokens.size());
      if (space < 2) {
        flush(false);
        continue;
      }
      const std::uint32_t take = std::min(total - offset, space - 1);
      PackedSpan span{d.id, offset, take, static_cast<std::uint32_t>(cur.tokens.size())};
      cur.tokens.insert(cur.tokens.end(), d.ids.begin() + offset, d.ids.begin() + offset + take);
      cur.tokens.push_back(kEosId);
      cur.spans.push_back(std::move(span));
      offset += take;
      if (cur.tokens.size() == seq_len) flush(false);
    }
  }
  if (!cur.tokens.empty()) flush(true);
  return out;
}

void write_packed(const std::vector<PackedSequence>& seqs, std::uint32_t seq_len, const std::string& path) {
  auto out = detail::open_out(path);
  detail::BinWriter w(out);
  w.put_magic("CURATE-PACKED", 1);
  w.put(seq_len);
  w.put(static_cast<std::uint64_t>(seqs.size()));
  for (const auto& s : seqs) {
    if (s.tokens.size() != seq_len) throw Error(ErrorKind::invalid_argument, "sequence length mismatch");
    w.put(static_cast<std::uint8_t>(s.partial));
    w.put(s.pad_count);
    for (const auto t : s.tokens) w.put(t);
    w.put(static_cast<std::uint32_t>(s.spans.size()));
    for (const auto& sp : s.spans) {
      w.put_string(sp.doc_id);
      w.put(sp.doc_offset);
      w.put(sp.length);
      w.put(sp.position);
    }
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

std::vector<PackedSequence> read_packed(const std::string& path, std::uint32_t* seq_len_out) {
  auto in = detail::open_in(path);
  detail::BinReader r(in, path);
  r.expect_magic("CURATE-PACKED", 1);
  const auto seq_len = r.get<std::uint32_t>();
  const auto n = r.get<std::uint64_t>();
  std::vector<PackedSequence> seqs;
  for (std::uint64_t k = 0; k < n; ++k) {
    PackedSequence s;
    s.partial = r.get<std::uint8_t>() != 0;
    s.pad_count = r.get<std::uint32_t>();
    s.tokens.resize(seq_len);
    for (auto& t : s.tokens) t = r.get<std::uint32_t>();
    const auto spans = r.get<std::uint32_t>();
    for (std::uint32_t j = 0; j < spans; ++j) {
      PackedSpan sp;
      sp.doc_id = r.get_string();
      sp.doc_offset = r.get<std::uint32_t>();
      sp.length = r.get<std::uint32_t>();
      sp.position = r.get<std::uint32_t>();
      if (static_cast<std::uint64_t>(sp.position) + sp.length >= seq_len) r.fail("span out of range");
      s.spans.push_back(std::move(sp));
    }
    seqs.push_back(std::move(s));
  }
  if (seq_len_out) *seq_len_out = seq_len;
  return seqs;
}

// --- haystack ------------------------------------------------------------------

std::string haystack_instance_id(std::uint32_t length, double depth) {
  std::ostringstream ss;
  ss.precision(6);
  ss << "len" << length << "_depth" << depth;
  return ss.str();
}

HaystackInstance make_haystack(const std::vector<TokenizedDoc>& corpus, const NeedleSpec& spec,
                               const BpeTokenizer& tokenizer, std::uint32_t length, double depth, std::uint64_t seed) {
  if (!(depth >= 0.0 && depth <= 1.0)) throw Error(ErrorKind::invalid_argument, "depth must lie in [0, 1]");
  const std::vector<std::uint32_t> needle = tokenizer.encode(spec.needle);
  if (needle.empty() || needle.size() >= length) {
    throw Error(ErrorKind::invalid_argument, "needle must be non-empty and shorter than the haystack");
  }
  std::uint64_t available = 0;
  for (const auto& d : corpus) available += d.ids.size();
  if (available < length) {
    throw Error(ErrorKind::corpus_too_small,
                "corpus has " + std::to_string(available) + " tokens, haystack needs " + std::to_string(length));
  }
  const auto filler_len = length - static_cast<std::uint32_t>(needle.size());
  std::vector<std::uint32_t> filler;
  filler.reserve(filler_len);
  std::size_t doc = static_cast<std::size_t>(hash_combine(mix64(seed), length) % corpus.size());
  while (filler.size() < filler_len) {
    const auto& ids = corpus[doc].ids;
    const std::size_t take = std::min<std::size_t>(ids.size(), filler_len - filler.size());
    filler.insert(filler.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
    doc = (doc + 1) % corpus.size();
  }

  HaystackInstance inst;
  inst.instance_id = haystack_instance_id(length, depth);
  inst.length = length;
  inst.depth = depth;
  inst.needle_offset = static_cast<std::uint32_t>(std::lround(depth * filler_len));
  inst.needle_length = static_cast<std::uint32_t>(needle.size());
  inst.question = spec.question;
  inst.answer = spec.answer;
  inst.tokens.reserve(length);
  inst.tokens.insert(inst.tokens.end(), filler.begin(), filler.begin() + inst.needle_offset);
  inst.tokens.insert(inst.tokens.end(), needle.begin(), needle.end());
  inst.tokens.insert(inst.tokens.end(), filler.begin() + inst.needle_offset, filler.end());
  return inst;
}

std::vector<HaystackInstance> haystack_grid(const std::vector<std::uint32_t>& lengths, const std::vector<double>& depths,
                                            const NeedleSpec& spec, const std::vector<TokenizedDoc>& corpus,
                                            const BpeTokenizer& tokenizer, std::uint64_t seed) {
  for (std::size_t k = 1; k < lengths.size(); ++k) {
    if (lengths[k] <= lengths[k - 1]) throw Error(ErrorKind::invalid_argument, "haystack lengths must ascend");
  }
  for (const double d : depths) {
    if (!(d >= 0.0 && d <= 1.0)) throw Error(ErrorKind::invalid_argument, "depths must lie in [0, 1]");
  }
  std::vector<HaystackInstance> out;
  out.reserve(lengths.size() * depths.size());
  for (const auto len : lengths) {
    for (const double d : depths) out.push_back(make_haystack(corpus, spec, tokenizer, len, d, seed));
  }
  return out;
}

void write_haystack(const std::vector<HaystackInstance>& instances, const std::string& manifest_path,
                    const std::string& tokens_path) {
  std::ofstream manifest = detail::open_out(manifest_path);
  std::vector<TokenizedDoc> token_docs;
  token_docs.reserve(instances.size());
  for (const auto& inst : instances) {
    nlohmann::ordered_json j;
    j["instance_id"] = inst.instance_id;
    j["length"] = inst.length;
    j["depth"] = inst.depth;
    j["needle_offset"] = inst.needle_offset;
    j["needle_length"] = inst.needle_length;
    j["question"] = inst.question;
    j["expected_answer"] = inst.answer;
    manifest << j.dump() << "\n";
    token_docs.push_back({inst.instance_id, inst.tokens});
  }
  if (!manifest) throw Error(ErrorKind::io_error, "write failed: " + manifest_path);
  write_token_corpus(token_docs, tokens_path);
}

}  // namespace curate
