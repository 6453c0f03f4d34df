#include "curate/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "binio.hpp"
#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/parallel.hpp"
#include "curate/text.hpp"

namespace curate {

ShingleSet shingles(std::string_view text, std::size_t n) {
  const std::string norm = dedup_normalize(text);
  std::vector<std::uint64_t> word_hashes;
  for_each_word(norm, [&](std::string_view w) { word_hashes.push_back(hash64(w)); });
  ShingleSet out;
  if (n == 0 || word_hashes.size() < n) return out;
  out.reserve(word_hashes.size() - n + 1);
  for (std::size_t i = 0; i + n <= word_hashes.size(); ++i) {
    std::uint64_t h = n;
    for (std::size_t k = 0; k < n; ++k) h = hash_combine(h, word_hashes[i + k]);
    out.push_back(h);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard(const ShingleSet& a, const ShingleSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// --- MinHash ---------------------------------------------------------------------

MinHasher::MinHasher(std::size_t num_perm) : seeds_(num_perm) {
  for (std::size_t i = 0; i < num_perm; ++i) seeds_[i] = splitmix64(0x6d696e68617368ULL + i);
}

std::uint64_t MinHasher::permute(std::size_t perm, std::uint64_t shingle) const noexcept {
  return mix64(shingle ^ seeds_[perm]);
}

std::optional<MinHashSignature> MinHasher::signature(const ShingleSet& set) const {
  if (set.empty()) return std::nullopt;
  const std::size_t p = seeds_.size();
  MinHashSignature sig(p, std::numeric_limits<std::uint64_t>::max());
  const std::uint64_t* seeds = seeds_.data();
  std::uint64_t* out = sig.data();
  for (const std::uint64_t s : set) {
    for (std::size_t i = 0; i < p; ++i) {
      const std::uint64_t h = mix64(s ^ seeds[i]);
      out[i] = h < out[i] ? h : out[i];
    }
  }
  return sig;
}

double signature_agreement(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorKind::invalid_argument, "signature lengths differ");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

// --- LSH -------------------------------------------------------------------------

LshIndex::LshIndex(std::size_t bands, std::size_t rows) : rows_(rows), tables_(bands) {
  if (bands == 0 || rows == 0) throw Error(ErrorKind::invalid_argument, "bands and rows must be positive");
}

double LshIndex::threshold() const {
  return std::pow(1.0 / static_cast<double>(bands()), 1.0 / static_cast<double>(rows_));
}

double LshIndex::candidate_probability(double s) const {
  return 1.0 - std::pow(1.0 - std::pow(s, static_cast<double>(rows_)), static_cast<double>(bands()));
}

std::uint64_t LshIndex::band_hash(const MinHashSignature& sig, std::size_t band) const {
  std::uint64_t h = splitmix64(band);
  for (std::size_t r = 0; r < rows_; ++r) h = hash_combine(h, sig[band * rows_ + r]);
  return h;
}

std::vector<std::string> LshIndex::insert_and_candidates(const MinHashSignature& sig, const std::string& doc_id) {
  if (sig.size() != bands() * rows_) {
    throw Error(ErrorKind::invalid_argument, "signature length " + std::to_string(sig.size()) + " != bands x rows");
  }
  if (registry_.count(doc_id)) throw Error(ErrorKind::duplicate_doc_id, doc_id);
  std::vector<std::string> candidates;
  std::vector<std::uint64_t> keys(bands());
  for (std::size_t b = 0; b < bands(); ++b) {
    keys[b] = band_hash(sig, b);
    const auto it = tables_[b].find(keys[b]);
    if (it != tables_[b].end()) candidates.insert(candidates.end(), it->second.begin(), it->second.end());
  }
  for (std::size_t b = 0; b < bands(); ++b) tables_[b][keys[b]].push_back(doc_id);
  registry_.insert(doc_id);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  return candidates;
}

void LshIndex::save(const std::string& path) const {
  auto out = detail::open_out(path);
  detail::BinWriter w(out);
  w.put_magic("CURATE-LSH", 1);
  w.put(static_cast<std::uint32_t>(bands()));
  w.put(static_cast<std::uint32_t>(rows_));
  std::vector<std::string> ids(registry_.begin(), registry_.end());
  std::sort(ids.begin(), ids.end());
  w.put(static_cast<std::uint64_t>(ids.size()));
  for (const auto& id : ids) w.put_string(id);
  for (const auto& table : tables_) {
    std::vector<std::uint64_t> keys;
    keys.reserve(table.size());
    for (const auto& [k, v] : table) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    w.put(static_cast<std::uint64_t>(keys.size()));
    for (const auto k : keys) {
      const auto& bucket = table.at(k);
      w.put(k);
      w.put(static_cast<std::uint32_t>(bucket.size()));
      for (const auto& id : bucket) w.put_string(id);
    }
  }
  if (!out) throw Error(ErrorKind::io_error, "write failed: " + path);
}

LshIndex LshIndex::load(const std::string& path) {
  auto in = detail::open_in(path);
  detail::BinReader r(in, path);
  r.expect_magic("CURATE-LSH", 1);
  const auto bands = r.get<std::uint32_t>();
  const auto rows = r.get<std::uint32_t>();
  LshIndex index(bands, rows);
  const auto n_ids = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_ids; ++i) index.registry_.insert(r.get_string());
  for (auto& table : index.tables_) {
    const auto n_keys = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n_keys; ++i) {
      const auto k = r.get<std::uint64_t>();
      const auto n = r.get<std::uint32_t>();
      auto& bucket = table[k];
      for (std::uint32_t j = 0; j < n; ++j) bucket.push_back(r.get_string());
    }
  }
  return index;
}

// --- clusters --------------------------------------------------------------------

std::vector<DupCluster> resolve_clusters(const std::vector<std::pair<std::string, std::string>>& pairs,
                                         const std::optional<PairVerification>& verify) {
  std::map<std::string, std::size_t> index;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& [a, b] : pairs) {
    if (a == b) continue;
    if (verify && verify->similarity(a, b) < verify->cutoff) continue;
    const std::size_t ia = index.try_emplace(a, index.size()).first->second;
    const std::size_t ib = index.try_emplace(b, index.size()).first->second;
    edges.emplace_back(ia, ib);
  }
  std::vector<std::size_t> parent(index.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& [a, b] : edges) {
    const std::size_t ra = find(a);
    const std::size_t rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (const auto& [name, i] : index) groups[find(i)].push_back(name);
  std::vector<DupCluster> clusters;
  clusters.reserve(groups.size());
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end());
    clusters.push_back({members, members.front()});
  }
  std::sort(clusters.begin(), clusters.end(), [](const DupCluster& a, const DupCluster& b) { return a.retained < b.retained; });
  return clusters;
}

namespace {

// Indices of docs sorted by id; ids are unique within a pass.
std::vector<std::size_t> id_order(const std::vector<Document>& docs) {
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return docs[a].id < docs[b].id; });
  return order;
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  for_each_word(text, [&](std::string_view) { ++n; });
  return n;
}

std::vector<Document> collect(std::vector<Document>& docs, const std::vector<char>& keep) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (keep[i]) out.push_back(std::move(docs[i]));
  }
  return out;
}

}  // namespace

// --- paragraph ----------------------------------------------------------------------

std::vector<Document> paragraph_dedup(std::vector<Document> docs, const ParagraphDedupParams& params, StageReport& report,
                                      std::uint64_t* paragraphs_removed) {
  report.docs_in += docs.size();
  std::vector<std::vector<std::string_view>> paras(docs.size());
  std::vector<std::vector<std::uint64_t>> keys(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    paras[i] = split_paragraphs(docs[i].text);
    for (const auto p : paras[i]) keys[i].push_back(hash64(dedup_normalize(p)));
  }
  const std::vector<std::size_t> order = id_order(docs);

  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  std::vector<std::vector<char>> remove(docs.size());
  if (params.mode == ParagraphDedupMode::two_pass) {
    for (const auto& ks : keys) {
      for (const auto k : ks) ++counts[k];
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
      remove[i].resize(keys[i].size());
      for (std::size_t j = 0; j < keys[i].size(); ++j) remove[i][j] = counts[keys[i][j]] > params.max_occurrences;
    }
  } else {
    // single pass: the first max_occurrences copies in id order survive
    for (const std::size_t i : order) {
      remove[i].resize(keys[i].size());
      for (std::size_t j = 0; j < keys[i].size(); ++j) remove[i][j] = ++counts[keys[i][j]] > params.max_occurrences;
    }
  }

  std::uint64_t removed_total = 0;
  std::vector<char> keep(docs.size(), 1);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto removed = static_cast<std::size_t>(std::count(remove[i].begin(), remove[i].end(), 1));
    if (removed == 0) continue;
    removed_total += removed;
    std::vector<std::string_view> kept;
    for (std::size_t j = 0; j < paras[i].size(); ++j) {
      if (!remove[i][j]) kept.push_back(paras[i][j]);
    }
    std::string text = join(kept, "\n\n");
    if (word_count(text) < params.min_words) {
      keep[i] = 0;
      report.drop("paragraph-dup-short");
      continue;
    }
    docs[i].text = std::move(text);
  }
  if (paragraphs_removed) *paragraphs_removed = removed_total;
  auto out = collect(docs, keep);
  report.docs_kept += out.size();
  return out;
}

// --- MinHash ------------------------------------------------------------------------

std::vector<Document> minhash_dedup(std::vector<Document> docs, const MinHashDedupParams& params, StageReport& report,
                                    std::vector<DupCluster>* clusters_out) {
  report.docs_in += docs.size();
  if (params.bands * params.rows != params.num_perm) {
    throw Error(ErrorKind::invalid_argument, "bands x rows must equal the number of permutations");
  }
  const MinHasher hasher(params.num_perm);
  std::vector<ShingleSet> sets(docs.size());
  std::vector<std::optional<MinHashSignature>> sigs(docs.size());
  parallel_for(docs.size(), params.workers, [&](std::size_t i) {
    sets[i] = shingles(docs[i].text, params.shingle_size);
    sigs[i] = hasher.signature(sets[i]);
  });

  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < docs.size(); ++i) by_id.emplace(docs[i].id, i);

  LshIndex index(params.bands, params.rows);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const std::size_t i : id_order(docs)) {
    if (!sigs[i]) continue;
    for (auto& c : index.insert_and_candidates(*sigs[i], docs[i].id)) pairs.emplace_back(std::move(c), docs[i].id);
  }

  std::optional<PairVerification> verify;
  if (params.verify_cutoff) {
    verify = PairVerification{[&](const std::string& a, const std::string& b) {
                                return jaccard(sets[by_id.at(a)], sets[by_id.at(b)]);
                              },
                              *params.verify_cutoff};
  }
  const auto clusters = resolve_clusters(pairs, verify);
  std::vector<char> keep(docs.size(), 1);
  for (const auto& c : clusters) {
    for (const auto& m : c.members) {
      if (m == c.retained) continue;
      keep[by_id.at(m)] = 0;
      report.drop("minhash-dup");
    }
  }
  if (clusters_out) *clusters_out = clusters;
  auto out = collect(docs, keep);
  report.docs_kept += out.size();
  return out;
}

// --- exact ---------------------------------------------------------------------------

std::vector<Document> exact_dedup(std::vector<Document> docs, StageReport& report) {
  report.docs_in += docs.size();
  std::vector<std::uint64_t> keys(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) keys[i] = hash64(dedup_normalize(docs[i].text));
  std::vector<std::size_t> order = id_order(docs);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

  std::vector<char> keep(docs.size(), 1);
  std::size_t g = 0;
  while (g < order.size()) {
    std::size_t end = g;
    while (end < order.size() && keys[order[end]] == keys[order[g]]) ++end;
    if (end - g > 1) {
      // same hash: compare normalized text to rule out collisions
      std::vector<std::string> retained_texts;
      for (std::size_t k = g; k < end; ++k) {
        std::string norm = dedup_normalize(docs[order[k]].text);
        if (std::find(retained_texts.begin(), retained_texts.end(), norm) != retained_texts.end()) {
          keep[order[k]] = 0;
          report.drop("exact-dup");
        } else {
          retained_texts.push_back(std::move(norm));
        }
      }
    }
    g = end;
  }
  auto out = collect(docs, keep);
  report.docs_kept += out.size();
  return out;
}

// --- substring --------------------------------------------------------------------------

namespace {

struct TokenSpan {
  std::size_t begin;
  std::size_t end;
};

std::vector<TokenSpan> token_spans(std::string_view text) {
  std::vector<TokenSpan> spans;
  for_each_word(text, [&](std::string_view w) {
    const auto b = static_cast<std::size_t>(w.data() - text.data());
    spans.push_back({b, b + w.size()});
  });
  return spans;
}

constexpr std::uint64_t kRollBase = 0x100000001b3ULL;

}  // namespace

std::vector<Document> substring_dedup(std::vector<Document> docs, const SubstringDedupParams& params, StageReport& report,
                                      std::vector<std::size_t>* excised_tokens) {
  report.docs_in += docs.size();
  const std::size_t w = params.window;
  if (w == 0) throw Error(ErrorKind::invalid_argument, "window must be positive");
  const std::size_t n = docs.size();
  std::vector<std::vector<TokenSpan>> spans(n);
  std::vector<std::vector<std::uint64_t>> windows(n);
  std::uint64_t base_pow = 1;
  for (std::size_t k = 1; k < w; ++k) base_pow *= kRollBase;

  std::vector<std::uint64_t> all;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string_view text = docs[i].text;
    spans[i] = token_spans(text);
    const auto& sp = spans[i];
    if (sp.size() < w) continue;
    std::vector<std::uint64_t> th(sp.size());
    for (std::size_t t = 0; t < sp.size(); ++t) th[t] = hash64(text.substr(sp[t].begin, sp[t].end - sp[t].begin));
    std::uint64_t h = 0;
    for (std::size_t t = 0; t < w; ++t) h = h * kRollBase + th[t];
    windows[i].push_back(h);
    for (std::size_t t = w; t < sp.size(); ++t) {
      h = (h - th[t - w] * base_pow) * kRollBase + th[t];
      windows[i].push_back(h);
    }
    all.insert(all.end(), windows[i].begin(), windows[i].end());
  }

  // pass 1: window hashes seen more than once corpus-wide
  std::sort(all.begin(), all.end());
  std::unordered_set<std::uint64_t> repeated;
  for (std::size_t k = 1; k < all.size(); ++k) {
    if (all[k] == all[k - 1]) repeated.insert(all[k]);
  }
  all.clear();
  all.shrink_to_fit();

  auto same_window = [&](std::size_t da, std::size_t pa, std::size_t db, std::size_t pb) {
    for (std::size_t k = 0; k < w; ++k) {
      const TokenSpan& a = spans[da][pa + k];
      const TokenSpan& b = spans[db][pb + k];
      if (std::string_view(docs[da].text).substr(a.begin, a.end - a.begin) !=
          std::string_view(docs[db].text).substr(b.begin, b.end - b.begin)) {
        return false;
      }
    }
    return true;
  };

  // pass 2: later occurrences, in id order, are marked for excision
  std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> first_seen;
  std::vector<std::vector<char>> marked(n);
  for (const std::size_t i : id_order(docs)) {
    marked[i].assign(spans[i].size(), 0);
    for (std::size_t p = 0; p < windows[i].size(); ++p) {
      const std::uint64_t h = windows[i][p];
      if (!repeated.count(h)) continue;
      const auto [it, inserted] = first_seen.try_emplace(h, i, p);
      if (inserted) continue;
      if (!same_window(it->second.first, it->second.second, i, p)) continue;
      std::fill(marked[i].begin() + static_cast<std::ptrdiff_t>(p), marked[i].begin() + static_cast<std::ptrdiff_t>(p + w), 1);
    }
  }

  if (excised_tokens) excised_tokens->assign(n, 0);
  std::vector<char> keep(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto count = static_cast<std::size_t>(std::count(marked[i].begin(), marked[i].end(), 1));
    if (count == 0) continue;
    if (excised_tokens) (*excised_tokens)[i] = count;
    const std::string& text = docs[i].text;
    const auto& sp = spans[i];
    std::string out;
    out.reserve(text.size());
    std::size_t copied = 0;
    std::size_t t = 0;
    while (t < sp.size()) {
      if (!marked[i][t]) {
        ++t;
        continue;
      }
      std::size_t e = t;
      while (e < sp.size() && marked[i][e]) ++e;
      out.append(text, copied, sp[t].begin - copied);
      copied = e < sp.size() ? sp[e].begin : text.size();
      t = e;
    }
    out.append(text, copied, std::string::npos);
    if (word_count(out) < params.min_words) {
      keep[i] = 0;
      report.drop("substring-dup-short");
      continue;
    }
    docs[i].text = std::move(out);
  }
  auto out = collect(docs, keep);
  report.docs_kept += out.size();
  return out;
}

}  // namespace curate
