#include "curate/corpus_io.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <charconv>
#include <cstdio>
#include <json.hpp>

#include "curate/error.hpp"
#include "curate/hash.hpp"
#include "curate/text.hpp"

namespace curate {

using json = nlohmann::json;

void set_meta_number(Document& doc, const std::string& key, double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  doc.meta[key] = buf;
}

std::optional<double> meta_number(const Document& doc, const std::string& key) {
  const auto it = doc.meta.find(key);
  if (it == doc.meta.end()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::uint64_t ids_digest(std::span<const Document> docs) noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (const auto& d : docs) h = hash64(d.id, h);
  return h;
}

void StageReport::drop(const std::string& rule, std::uint64_t n) {
  docs_dropped += n;
  drop_reasons[rule] += n;
}

bool StageReport::consistent() const noexcept {
  std::uint64_t sum = 0;
  for (const auto& [rule, n] : drop_reasons) sum += n;
  return docs_in == docs_kept + docs_dropped && sum == docs_dropped;
}

void StageReport::merge(const StageReport& other) {
  docs_in += other.docs_in;
  docs_kept += other.docs_kept;
  docs_dropped += other.docs_dropped;
  docs_born += other.docs_born;
  tokens_in += other.tokens_in;
  tokens_kept += other.tokens_kept;
  for (const auto& [rule, n] : other.drop_reasons) drop_reasons[rule] += n;
}

// --- WET -------------------------------------------------------------------

namespace {

struct WetHeaders {
  std::string_view version;
  std::map<std::string, std::string_view, std::less<>> fields;
  std::size_t payload_start = 0;
};

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

// Locates the blank line ending the header block.
bool find_header_end(std::string_view raw, std::size_t& header_end, std::size_t& payload_start) {
  const std::size_t crlf = raw.find("\r\n\r\n");
  const std::size_t lf = raw.find("\n\n");
  if (crlf == std::string_view::npos && lf == std::string_view::npos) return false;
  if (crlf != std::string_view::npos && (lf == std::string_view::npos || crlf < lf)) {
    header_end = crlf;
    payload_start = crlf + 4;
  } else {
    header_end = lf;
    payload_start = lf + 2;
  }
  return true;
}

WetHeaders parse_headers(std::string_view raw) {
  std::size_t header_end = 0;
  WetHeaders h;
  if (!find_header_end(raw, header_end, h.payload_start)) {
    throw Error(ErrorKind::malformed_record, "no header/payload boundary");
  }
  const std::string_view block = raw.substr(0, header_end);
  std::size_t pos = 0;
  bool first = true;
  while (pos <= block.size()) {
    std::size_t nl = block.find('\n', pos);
    if (nl == std::string_view::npos) nl = block.size();
    const std::string_view line = strip_cr(block.substr(pos, nl - pos));
    pos = nl + 1;
    if (first) {
      if (line.substr(0, 5) != "WARC/") throw Error(ErrorKind::malformed_record, "missing WARC version line");
      h.version = line;
      first = false;
      continue;
    }
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    h.fields[lower_ascii(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
  }
  return h;
}

std::optional<std::uint64_t> content_length(const WetHeaders& h) {
  const auto it = h.fields.find("content-length");
  if (it == h.fields.end()) return std::nullopt;
  std::uint64_t n = 0;
  const auto* b = it->second.data();
  const auto [p, ec] = std::from_chars(b, b + it->second.size(), n);
  if (ec != std::errc() || p != b + it->second.size()) return std::nullopt;
  return n;
}

std::string_view header(const WetHeaders& h, std::string_view name) {
  const auto it = h.fields.find(name);
  return it == h.fields.end() ? std::string_view{} : it->second;
}

std::optional<std::string> iso639_1(std::string_view langs) {
  const std::string_view first = langs.substr(0, langs.find(','));
  static const std::map<std::string, std::string, std::less<>> kMap = {
      {"eng", "en"}, {"zho", "zh"}, {"deu", "de"}, {"fra", "fr"}, {"spa", "es"},
      {"jpn", "ja"}, {"rus", "ru"}, {"por", "pt"}, {"ita", "it"}, {"kor", "ko"}};
  if (first.size() == 2) return std::string(first);
  const auto it = kMap.find(first);
  if (it == kMap.end()) return std::nullopt;
  return it->second;
}

}  // namespace

Document parse_wet_record(std::string_view raw) {
  const WetHeaders h = parse_headers(raw);
  const std::string_view type = header(h, "warc-type");
  if (!type.empty() && type != "conversion") {
    throw Error(ErrorKind::malformed_record, "not a conversion record: " + std::string(type));
  }

  std::string_view payload = raw.substr(h.payload_start);
  if (const auto len = content_length(h); len && *len <= payload.size()) {
    payload = payload.substr(0, *len);
  } else {
    while (!payload.empty() && (payload.back() == '\n' || payload.back() == '\r')) payload.remove_suffix(1);
  }
  if (!is_valid_utf8(payload)) throw Error(ErrorKind::invalid_utf8, "payload is not valid UTF-8");

  Document doc;
  doc.source = "common-crawl";
  doc.text = std::string(payload);
  std::string_view uri = header(h, "warc-target-uri");
  if (uri.empty()) uri = header(h, "target-uri");
  if (!uri.empty()) doc.url = std::string(uri);
  if (const auto langs = header(h, "warc-identified-content-language"); !langs.empty()) {
    doc.lang = iso639_1(langs);
  }
  std::string_view rid = header(h, "warc-record-id");
  if (!rid.empty() && rid.front() == '<' && rid.back() == '>') rid = rid.substr(1, rid.size() - 2);
  if (!rid.empty()) {
    doc.id = std::string(rid);
  } else {
    char buf[24];
    std::snprintf(buf, sizeof buf, "cc-%016llx",
                  static_cast<unsigned long long>(hash64(payload, hash64(uri))));
    doc.id = buf;
  }
  return doc;
}

std::vector<std::string_view> split_wet_records(std::string_view file) {
  std::vector<std::string_view> records;
  std::size_t pos = 0;
  while (pos < file.size()) {
    // skip inter-record CR/LF padding
    while (pos < file.size() && (file[pos] == '\r' || file[pos] == '\n')) ++pos;
    if (pos >= file.size()) break;
    const std::string_view rest = file.substr(pos);
    std::size_t header_end = 0;
    std::size_t payload_start = 0;
    std::size_t end = std::string_view::npos;
    if (find_header_end(rest, header_end, payload_start)) {
      try {
        const auto len = content_length(parse_headers(rest));
        if (len && payload_start + *len <= rest.size()) end = payload_start + *len;
      } catch (const Error&) {
      }
    }
    if (end == std::string_view::npos) {
      const std::size_t next = rest.find("\nWARC/", 1);
      end = next == std::string_view::npos ? rest.size() : next + 1;
    }
    records.push_back(rest.substr(0, end));
    pos += end;
  }
  return records;
}

std::vector<Document> read_wet(std::string_view file, WetReadStats& stats) {
  std::vector<Document> docs;
  for (const auto raw : split_wet_records(file)) {
    ++stats.records;
    try {
      docs.push_back(parse_wet_record(raw));
      ++stats.parsed;
      stats.payload_bytes += docs.back().text.size();
    } catch (const Error& e) {
      ++stats.skip_reasons[std::string(to_string(e.kind()))];
    }
  }
  return docs;
}

// --- JSONL -----------------------------------------------------------------

std::string document_to_json(const Document& doc) {
  json j;
  j["id"] = doc.id;
  j["source"] = doc.source;
  if (doc.url) j["url"] = *doc.url;
  if (doc.lang) j["lang"] = *doc.lang;
  j["text"] = doc.text;
  j["meta"] = json::object();
  for (const auto& [k, v] : doc.meta) j["meta"][k] = v;
  return j.dump();
}

Document document_from_json(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse_error, e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::parse_error, "line is not a JSON object");
  const auto id = j.find("id");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
    throw Error(ErrorKind::missing_id, "document without id");
  }
  Document doc;
  doc.id = id->get<std::string>();
  try {
    if (auto it = j.find("source"); it != j.end() && it->is_string()) doc.source = it->get<std::string>();
    if (auto it = j.find("url"); it != j.end() && it->is_string()) doc.url = it->get<std::string>();
    if (auto it = j.find("lang"); it != j.end() && it->is_string()) doc.lang = it->get<std::string>();
    if (auto it = j.find("text"); it != j.end()) {
      if (!it->is_string()) throw Error(ErrorKind::parse_error, "text is not a string");
      doc.text = it->get<std::string>();
    }
    if (auto it = j.find("meta"); it != j.end() && it->is_object()) {
      for (const auto& [k, v] : it->items()) doc.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse_error, e.what());
  }
  return doc;
}

JsonlReader::JsonlReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw Error(ErrorKind::io_error, "cannot open " + path.string());
}

std::optional<Document> JsonlReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      return document_from_json(line);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::missing_id) {
        throw Error(ErrorKind::missing_id, "line " + std::to_string(line_no_) + " has no id");
      }
      ++skipped_;
    }
  }
  return std::nullopt;
}

ShardReadResult read_jsonl_shard(const std::filesystem::path& path) {
  JsonlReader reader(path);
  ShardReadResult result;
  while (auto doc = reader.next()) result.docs.push_back(std::move(*doc));
  result.skipped = reader.skipped();
  return result;
}

ShardManifest write_jsonl_shard(std::span<const Document> docs, const std::filesystem::path& path) {
  std::filesystem::path partial = path;
  partial += ".partial";
  ShardManifest manifest;
  manifest.shard_path = path.filename().string();
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io_error, "cannot open " + partial.string());
    for (const auto& doc : docs) {
      const std::string line = document_to_json(doc);
      out.write(line.data(), static_cast<std::streamsize>(line.size()));
      out.put('\n');
      manifest.byte_count += line.size() + 1;
      ++manifest.doc_count;
    }
    out.flush();
    if (!out) throw Error(ErrorKind::io_error, "write failed for " + partial.string());
  }
  std::error_code ec;
  std::filesystem::rename(partial, path, ec);
  if (ec) throw Error(ErrorKind::io_error, "cannot finalize " + path.string() + ": " + ec.message());
  manifest.content_digest = ids_digest(docs);
  write_manifest(manifest, manifest_path_for(path));
  return manifest;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& shard) {
  std::filesystem::path p = shard;
  p += ".manifest.json";
  return p;
}

void write_manifest(const ShardManifest& m, const std::filesystem::path& path) {
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(m.content_digest));
  json j = {{"shard_path", m.shard_path},
            {"doc_count", m.doc_count},
            {"byte_count", m.byte_count},
            {"content_digest", digest}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io_error, "cannot write manifest " + path.string());
}

ShardManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path.string());
  try {
    const json j = json::parse(in);
    ShardManifest m;
    m.shard_path = j.at("shard_path").get<std::string>();
    m.doc_count = j.at("doc_count").get<std::uint64_t>();
    m.byte_count = j.at("byte_count").get<std::uint64_t>();
    m.content_digest = std::stoull(j.at("content_digest").get<std::string>(), nullptr, 16);
    return m;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::parse_error, "bad manifest " + path.string() + ": " + e.what());
  }
}

// --- normalization -----------------------------------------------------------

namespace {

bool is_ascii(std::string_view s) noexcept {
  for (const char c : s) {
    if (static_cast<unsigned char>(c) >= 0x80) return false;
  }
  return true;
}

void collapse_into(std::string_view s, std::string& out) {
  out.clear();
  out.reserve(s.size());
  bool pending_space = false;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t at = i;
    const char32_t cp = next_codepoint(s, i);
    if (is_unicode_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.append(s.substr(at, i - at));
  }
}

}  // namespace

std::string dedup_normalize(std::string_view text) {
  std::string out;
  if (is_ascii(text)) {
    out.resize(text.size());
    char* w = out.data();
    bool pending_space = false;
    for (const char ch : text) {
      const auto c = static_cast<unsigned char>(ch);
      if (c == ' ' || (c >= 0x09 && c <= 0x0D)) {
        pending_space = w != out.data();
        continue;
      }
      if (pending_space) {
        *w++ = ' ';
        pending_space = false;
      }
      *w++ = static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
    }
    out.resize(static_cast<std::size_t>(w - out.data()));
    return out;
  }

  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::invalid_argument, "ICU NFC normalizer unavailable");
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  u = nfc->normalize(u, status);
  // Simple (1:1) case mapping keeps lowercasing idempotent.
  icu::UnicodeString lowered;
  for (int32_t i = 0; i < u.length();) {
    const UChar32 c = u.char32At(i);
    lowered.append(u_tolower(c));
    i += U16_LENGTH(c);
  }
  lowered = nfc->normalize(lowered, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::invalid_argument, "NFC normalization failed");
  std::string utf8;
  lowered.toUTF8String(utf8);
  collapse_into(utf8, out);
  return out;
}

}  // namespace curate
