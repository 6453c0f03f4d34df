#include <cstdio>
#include <fstream>
#include <sstream>

#include "curate/error.hpp"
#include "curate/parallel.hpp"
#include "pipeline_internal.hpp"

namespace curate {

using nlohmann::json;
using nlohmann::ordered_json;

double MixtureReport::removal_ratio() const noexcept {
  const std::uint64_t base = docs_in + docs_born();
  return base == 0 ? 0.0 : static_cast<double>(docs_dropped()) / static_cast<double>(base);
}

std::uint64_t MixtureReport::docs_dropped() const noexcept {
  std::uint64_t n = 0;
  for (const auto& s : stages) n += s.docs_dropped;
  return n;
}

std::uint64_t MixtureReport::docs_born() const noexcept {
  std::uint64_t n = 0;
  for (const auto& s : stages) n += s.docs_born;
  return n;
}

std::vector<std::string> MixtureReport::consistency_errors() const {
  std::vector<std::string> errors;
  std::uint64_t flowing = docs_in;
  for (const auto& s : stages) {
    if (!s.consistent()) errors.push_back("stage " + s.stage_name + ": docs_in != kept + dropped or drop reasons do not add up");
    if (s.docs_in != flowing) {
      errors.push_back("stage " + s.stage_name + ": received " + std::to_string(s.docs_in) + " documents, previous stage emitted " +
                       std::to_string(flowing));
    }
    flowing = s.docs_out();
  }
  if (flowing != docs_out) errors.push_back("last stage emitted " + std::to_string(flowing) + " documents, output holds " + std::to_string(docs_out));
  if (docs_in + docs_born() != docs_dropped() + docs_out) errors.push_back("documents in + born != dropped + out");
  std::uint64_t by_source = 0;
  for (const auto& [k, c] : this->by_source) by_source += c.docs;
  if (by_source != docs_out) errors.push_back("mixture document counts do not match the output");
  return errors;
}

void MixtureReport::merge_mixture(const MixtureReport& other) {
  if (has_tokens != other.has_tokens && (docs_out > 0 && other.docs_out > 0)) {
    throw Error(ErrorKind::invalid_argument, "cannot merge reports with different token bases");
  }
  has_tokens = has_tokens || other.has_tokens;
  docs_in += other.docs_in;
  docs_out += other.docs_out;
  total_tokens += other.total_tokens;
  auto add = [](std::map<std::string, MixtureCounts>& into, const std::map<std::string, MixtureCounts>& from) {
    for (const auto& [k, c] : from) {
      into[k].docs += c.docs;
      into[k].tokens += c.tokens;
    }
  };
  add(by_source, other.by_source);
  add(by_language, other.by_language);
  add(by_topic, other.by_topic);
}

namespace detail {

MixtureReport mixture_counts(const std::vector<Document>& docs, const BpeTokenizer* tokenizer, std::size_t workers) {
  std::vector<std::uint64_t> tokens(docs.size(), 0);
  if (tokenizer) {
    parallel_for(docs.size(), workers, [&](std::size_t i) { tokens[i] = tokenizer->encode(docs[i].text).size(); });
  }
  MixtureReport r;
  r.has_tokens = tokenizer != nullptr;
  r.docs_in = docs.size();
  r.docs_out = docs.size();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const Document& d = docs[i];
    const std::string source = d.source.empty() ? "unknown" : d.source;
    const auto topic_it = d.meta.find(kTopicLabelKey);
    const std::string topic = topic_it == d.meta.end() ? "unlabeled" : topic_it->second;
    for (auto* m : {&r.by_source[source], &r.by_language[doc_language(d)], &r.by_topic[topic]}) {
      ++m->docs;
      m->tokens += tokens[i];
    }
    r.total_tokens += tokens[i];
  }
  return r;
}

ordered_json stage_report_to_json(const StageReport& r) {
  ordered_json j;
  j["name"] = r.stage_name;
  j["docs_in"] = r.docs_in;
  j["docs_kept"] = r.docs_kept;
  j["docs_dropped"] = r.docs_dropped;
  j["docs_born"] = r.docs_born;
  j["docs_out"] = r.docs_out();
  j["tokens_in"] = r.tokens_in;
  j["tokens_kept"] = r.tokens_kept;
  j["removal_ratio"] = r.docs_in == 0 ? 0.0 : static_cast<double>(r.docs_dropped) / static_cast<double>(r.docs_in);
  ordered_json reasons = ordered_json::object();
  for (const auto& [rule, n] : r.drop_reasons) reasons[rule] = n;
  j["drop_reasons"] = reasons;
  return j;
}

StageReport stage_report_from_json(const json& j) {
  StageReport r;
  r.stage_name = j.at("name").get<std::string>();
  r.docs_in = j.at("docs_in").get<std::uint64_t>();
  r.docs_kept = j.at("docs_kept").get<std::uint64_t>();
  r.docs_dropped = j.at("docs_dropped").get<std::uint64_t>();
  r.docs_born = j.at("docs_born").get<std::uint64_t>();
  r.tokens_in = j.at("tokens_in").get<std::uint64_t>();
  r.tokens_kept = j.at("tokens_kept").get<std::uint64_t>();
  for (const auto& [rule, n] : j.at("drop_reasons").items()) r.drop_reasons[rule] = n.get<std::uint64_t>();
  return r;
}

}  // namespace detail

MixtureReport report_mixture(const std::vector<Document>& docs, const BpeTokenizer* tokenizer, std::size_t workers) {
  if (!tokenizer) throw Error(ErrorKind::missing_tokenizer, "a tokenizer model is required for mixture token counts");
  return detail::mixture_counts(docs, tokenizer, workers);
}

namespace {

double percent(std::uint64_t part, std::uint64_t whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

ordered_json breakdown(const std::map<std::string, MixtureCounts>& m, const MixtureReport& r) {
  ordered_json j = ordered_json::object();
  for (const auto& [key, c] : m) {
    ordered_json e;
    e["docs"] = c.docs;
    e["doc_percent"] = percent(c.docs, r.docs_out);
    if (r.has_tokens) {
      e["tokens"] = c.tokens;
      e["token_percent"] = percent(c.tokens, r.total_tokens);
    }
    j[key] = e;
  }
  return j;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

ordered_json report_to_json(const MixtureReport& r) {
  ordered_json j;
  j["docs_in"] = r.docs_in;
  j["docs_born"] = r.docs_born();
  j["docs_dropped"] = r.docs_dropped();
  j["docs_out"] = r.docs_out;
  j["removal_ratio"] = r.removal_ratio();
  j["consistent"] = r.consistency_errors().empty();
  ordered_json stages = ordered_json::array();
  for (const auto& s : r.stages) stages.push_back(detail::stage_report_to_json(s));
  j["stages"] = stages;
  ordered_json mix;
  mix["token_basis"] = r.has_tokens ? "bpe" : "none";
  if (r.has_tokens) mix["total_tokens"] = r.total_tokens;
  mix["by_source"] = breakdown(r.by_source, r);
  mix["by_language"] = breakdown(r.by_language, r);
  mix["by_topic"] = breakdown(r.by_topic, r);
  j["mixture"] = mix;
  return j;
}

std::string report_to_text(const MixtureReport& r) {
  std::ostringstream out;
  out << "documents in:      " << r.docs_in << "\n";
  out << "documents born:    " << r.docs_born() << "\n";
  out << "documents dropped: " << r.docs_dropped() << "\n";
  out << "documents out:     " << r.docs_out << "\n";
  out << "removal ratio:     " << fixed(r.removal_ratio(), 4) << "\n";
  const auto problems = r.consistency_errors();
  out << "consistent:        " << (problems.empty() ? "yes" : "NO") << "\n";
  for (const auto& p : problems) out << "  " << p << "\n";
  if (!r.stages.empty()) {
    out << "\nstages\n";
    for (const auto& s : r.stages) {
      out << "  " << s.stage_name << ": in " << s.docs_in << ", kept " << s.docs_kept << ", dropped " << s.docs_dropped;
      if (s.docs_born) out << ", born " << s.docs_born;
      out << "\n";
      for (const auto& [rule, n] : s.drop_reasons) out << "    " << rule << ": " << n << "\n";
    }
  }
  auto section = [&](const char* title, const std::map<std::string, MixtureCounts>& m) {
    out << "\n" << title << "\n";
    for (const auto& [key, c] : m) {
      out << "  " << key << ": " << c.docs << " docs (" << fixed(percent(c.docs, r.docs_out), 2) << "%)";
      if (r.has_tokens) out << ", " << c.tokens << " tokens (" << fixed(percent(c.tokens, r.total_tokens), 2) << "%)";
      out << "\n";
    }
  };
  if (r.has_tokens) out << "\ntotal tokens: " << r.total_tokens << "\n";
  section("by source", r.by_source);
  section("by language", r.by_language);
  section("by topic", r.by_topic);
  return out.str();
}

void write_report(const MixtureReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& text_path) {
  {
    std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + json_path.string());
    out << report_to_json(report).dump(2) << "\n";
  }
  std::ofstream out(text_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + text_path.string());
  out << report_to_text(report);
}

}  // namespace curate
