#include "belforge/ontology.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "belforge/error.hpp"
#include "belforge/text.hpp"

namespace belforge {

namespace {

using ordered_json = nlohmann::ordered_json;

// Calls fn(fields) for every line; strips a trailing CR.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  if (!in.good() && !in.eof()) throw IoError("input stream is not readable");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(std::string_view(line));
  }
  if (in.bad()) throw IoError("read error on input stream");
}

bool parse_int64(std::string_view s, std::int64_t& out) {
  s = text::trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string dedupe_key(const std::string& cui, const std::string& term, bool fold_case) {
  std::string key = cui;
  key.push_back('\x1f');
  key += fold_case ? text::to_lower(term) : term;
  return key;
}

}  // namespace

const std::vector<std::string>& semantic_group_codes() {
  static const std::vector<std::string> codes = {"DISO", "CHEM", "PROC", "ANAT", "LIVB",
                                                 "PHEN", "DEVI", "PHYS", "ACTI", "OBJC",
                                                 "GENE", "OCCU", "CONC", "OTHER"};
  return codes;
}

bool is_semantic_group(const std::string& code) {
  const auto& codes = semantic_group_codes();
  return std::find(codes.begin(), codes.end(), code) != codes.end();
}

SemanticGroupMap::SemanticGroupMap(std::map<std::string, std::string> entries) {
  for (auto& [tui, group] : entries) add(tui, group);
}

void SemanticGroupMap::add(const std::string& tui, const std::string& group) {
  if (!is_semantic_group(group)) throw DataError("unknown semantic group '" + group + "'");
  entries_.emplace(tui, group);
}

const std::string& SemanticGroupMap::group_of(const std::string& tui) const {
  static const std::string other = kOtherGroup;
  const auto it = entries_.find(tui);
  return it == entries_.end() ? other : it->second;
}

void FilterConfig::validate() const {
  auto check = [](const std::set<std::string>& s, const char* name) {
    if (s.count(std::string())) throw ConfigError(std::string(name) + " contains an empty entry");
  };
  check(drop_vocabs, "drop_vocabs");
  check(drop_tuis, "drop_tuis");
  check(drug_vocabs, "drug_vocabs");
  check(languages, "languages");
  for (const auto& p : descriptive_subterm_patterns) {
    if (p.pattern.empty()) throw ConfigError("descriptive subterm pattern is empty");
    check(p.vocabs, "descriptive subterm vocabs");
  }
}

Parsed<TermRecord> parse_concepts(std::istream& in, const ConceptColumns& c) {
  Parsed<TermRecord> out;
  const std::size_t need =
      std::max({c.cui, c.language, c.vocab, c.source_code, c.text}) + 1;
  for_each_line(in, [&](std::string_view line) {
    const auto f = text::split(line, '|');
    if (f.size() < need || !text::is_cui(f[c.cui]) || text::trim(f[c.text]).empty()) {
      ++out.malformed;
      return;
    }
    TermRecord r;
    r.term_id = static_cast<std::int64_t>(out.records.size());
    r.cui = f[c.cui];
    r.language = f[c.language];
    r.vocab = f[c.vocab];
    r.source_code = f[c.source_code];
    r.text = f[c.text];
    out.records.push_back(std::move(r));
  });
  return out;
}

Parsed<SemanticTypeRow> parse_semantic_types(std::istream& in, const SemanticTypeColumns& c) {
  Parsed<SemanticTypeRow> out;
  const std::size_t need = std::max({c.cui, c.tui, c.type_name}) + 1;
  for_each_line(in, [&](std::string_view line) {
    const auto f = text::split(line, '|');
    if (f.size() < need || !text::is_cui(f[c.cui]) || !text::is_tui(f[c.tui])) {
      ++out.malformed;
      return;
    }
    out.records.push_back({std::string(f[c.cui]), std::string(f[c.tui]),
                           std::string(f[c.type_name])});
  });
  return out;
}

Parsed<RelationRow> parse_relations(std::istream& in, const RelationColumns& c) {
  Parsed<RelationRow> out;
  const std::size_t need = std::max({c.cui1, c.rel, c.cui2, c.vocab}) + 1;
  for_each_line(in, [&](std::string_view line) {
    const auto f = text::split(line, '|');
    if (f.size() < need || !text::is_cui(f[c.cui1]) || !text::is_cui(f[c.cui2])) {
      ++out.malformed;
      return;
    }
    if (f[c.cui1] == f[c.cui2]) return;
    out.records.push_back({std::string(f[c.cui1]), std::string(f[c.rel]),
                           std::string(f[c.cui2]), std::string(f[c.vocab])});
  });
  return out;
}

Parsed<CrosswalkRow> parse_crosswalk(std::istream& in, const CrosswalkColumns& c) {
  Parsed<CrosswalkRow> out;
  const std::size_t need = std::max(c.sctid, c.text) + 1;
  for_each_line(in, [&](std::string_view line) {
    const auto f = text::split(line, '|');
    std::int64_t id = 0;
    if (f.size() < need || !parse_int64(f[c.sctid], id) || id <= 0 ||
        text::trim(f[c.text]).empty()) {
      ++out.malformed;
      return;
    }
    out.records.push_back({id, std::string(f[c.text])});
  });
  return out;
}

SemanticGroupMap parse_semantic_groups(std::istream& in, const GroupColumns& c,
                                       std::size_t* malformed) {
  SemanticGroupMap map;
  std::size_t bad = 0;
  const std::size_t need = std::max(c.group, c.tui) + 1;
  for_each_line(in, [&](std::string_view line) {
    const auto f = text::split(line, '|');
    if (f.size() < need || !text::is_tui(f[c.tui]) ||
        !is_semantic_group(std::string(f[c.group]))) {
      ++bad;
      return;
    }
    map.add(std::string(f[c.tui]), std::string(f[c.group]));
  });
  if (malformed) *malformed = bad;
  return map;
}

CrosswalkResult crosswalk_terms(const std::vector<CrosswalkRow>& targets,
                                const std::vector<TermRecord>& bridge,
                                const CrosswalkOptions& options) {
  // sctid -> distinct cuis, in first-seen order.
  std::unordered_map<std::int64_t, std::vector<std::string>> cuis_by_id;
  for (const auto& b : bridge) {
    std::int64_t id = 0;
    if (!parse_int64(b.source_code, id)) continue;
    auto& cuis = cuis_by_id[id];
    if (std::find(cuis.begin(), cuis.end(), b.cui) == cuis.end()) cuis.push_back(b.cui);
  }

  CrosswalkResult result;
  std::int64_t next_id = options.first_term_id;
  for (const auto& t : targets) {
    const auto it = cuis_by_id.find(t.sctid);
    if (it == cuis_by_id.end()) {
      result.dropped.emplace(t.sctid, CrosswalkDrop::kNoMatch);
      continue;
    }
    if (it->second.size() > 1) {
      result.dropped.emplace(t.sctid, CrosswalkDrop::kAmbiguous);
      continue;
    }
    TermRecord r;
    r.term_id = next_id++;
    r.cui = it->second.front();
    r.language = options.language;
    r.vocab = options.vocab;
    r.source_code = std::to_string(t.sctid);
    r.text = t.text;
    result.added.push_back(std::move(r));
  }
  return result;
}

namespace {

// Removes every configured literal that applies to `vocab`. Returns false
// when nothing matched (text untouched).
bool strip_subterms(std::string& term, const std::string& vocab,
                    const std::vector<SubtermPattern>& patterns) {
  bool changed = false;
  for (const auto& p : patterns) {
    if (!p.vocabs.empty() && !p.vocabs.count(vocab)) continue;
    for (std::size_t pos = term.find(p.pattern); pos != std::string::npos;
         pos = term.find(p.pattern, pos)) {
      term.erase(pos, p.pattern.size());
      changed = true;
    }
  }
  if (changed) term = text::collapse_whitespace(term);
  return changed;
}

}  // namespace

OntologyBuild build_ontology(const std::vector<TermRecord>& concepts,
                             const std::vector<SemanticTypeRow>& semantic_types,
                             const SemanticGroupMap& groups,
                             const std::vector<CrosswalkRow>& crosswalk,
                             const FilterConfig& config) {
  config.validate();
  OntologyBuild build;
  auto record = [&](const char* step, std::size_t n) {
    build.stats.steps.emplace_back(step, static_cast<std::int64_t>(n));
  };

  std::vector<TermRecord> working;
  for (const auto& r : concepts) {
    if (config.languages.empty() || config.languages.count(r.language)) working.push_back(r);
  }

  // (1) vocabularies made of composed, non-informative terms
  std::erase_if(working, [&](const TermRecord& r) { return config.drop_vocabs.count(r.vocab); });
  record(kStepDropVocabs, working.size());

  // (2) descriptive subterms
  if (!config.descriptive_subterm_patterns.empty()) {
    for (auto& r : working) strip_subterms(r.text, r.vocab, config.descriptive_subterm_patterns);
    std::erase_if(working, [](const TermRecord& r) { return text::trim(r.text).empty(); });
  }
  record(kStepRemoveSubterms, working.size());

  // (3) duplicates, first occurrence wins
  std::unordered_set<std::string> seen;
  std::erase_if(working, [&](const TermRecord& r) {
    return !seen.insert(dedupe_key(r.cui, r.text, config.dedupe_case_insensitive)).second;
  });
  record(kStepDedupe, working.size());

  // (4) crosswalked target-language terms; new ids continue after the input
  std::int64_t next_id = 0;
  for (const auto& r : concepts) next_id = std::max(next_id, r.term_id + 1);
  std::vector<TermRecord> bridge;
  for (const auto& r : concepts) {
    if (r.vocab == config.bridge_vocab) bridge.push_back(r);
  }
  build.crosswalk = crosswalk_terms(
      crosswalk, bridge, {config.crosswalk_vocab, config.crosswalk_language, next_id});
  next_id += static_cast<std::int64_t>(build.crosswalk.added.size());
  for (const auto& r : build.crosswalk.added) {
    if (seen.insert(dedupe_key(r.cui, r.text, config.dedupe_case_insensitive)).second) {
      working.push_back(r);
    }
  }
  record(kStepAddCrosswalk, working.size());

  // (5) excluded semantic types
  std::unordered_set<std::string> excluded_cuis;
  for (const auto& s : semantic_types) {
    if (config.drop_tuis.count(s.tui)) excluded_cuis.insert(s.cui);
  }
  std::erase_if(working, [&](const TermRecord& r) { return excluded_cuis.count(r.cui) > 0; });
  record(kStepDropSemanticTypes, working.size());

  // (6) drug names from any language
  if (!config.drug_vocabs.empty()) {
    std::unordered_set<std::int64_t> present;
    for (const auto& r : working) present.insert(r.term_id);
    for (const auto& r : concepts) {
      if (!config.drug_vocabs.count(r.vocab) || present.count(r.term_id)) continue;
      if (seen.insert(dedupe_key(r.cui, r.text, config.dedupe_case_insensitive)).second) {
        working.push_back(r);
      }
    }
  }
  record(kStepAddDrugNames, working.size());

  // (7) first semantic type per cui decides the group
  std::unordered_map<std::string, std::string> group_by_cui;
  for (const auto& s : semantic_types) group_by_cui.emplace(s.cui, groups.group_of(s.tui));

  build.records.reserve(working.size());
  for (auto& r : working) {
    const auto it = group_by_cui.find(r.cui);
    build.records.push_back({r.term_id, std::move(r.cui), std::move(r.text), std::move(r.vocab),
                             it == group_by_cui.end() ? kOtherGroup : it->second});
  }
  std::sort(build.records.begin(), build.records.end(),
            [](const OntologyRecord& a, const OntologyRecord& b) { return a.term_id < b.term_id; });
  record(kStepAssignGroups, build.records.size());
  return build;
}

std::vector<TermRecord> to_term_records(const std::vector<OntologyRecord>& records) {
  std::vector<TermRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.term_id, r.cui, "", r.vocab, "", r.text});
  return out;
}

void serialize_ontology(const std::vector<OntologyRecord>& records, std::ostream& out) {
  std::vector<const OntologyRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->term_id < b->term_id; });
  for (const auto* r : sorted) {
    ordered_json j;
    j["term_id"] = r->term_id;
    j["cui"] = r->cui;
    j["text"] = r->text;
    j["vocab"] = r->vocab;
    j["group"] = r->group;
    out << j.dump() << '\n';
  }
}

std::vector<OntologyRecord> parse_ontology(std::istream& in) {
  std::vector<OntologyRecord> records;
  std::int64_t line_no = 0;
  for_each_line(in, [&](std::string_view line) {
    ++line_no;
    if (text::trim(line).empty()) return;
    auto fail = [&](const std::string& why) -> void {
      throw DataError("ontology line " + std::to_string(line_no) + ": " + why, line_no);
    };
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
    OntologyRecord r;
    try {
      r.term_id = j.at("term_id").get<std::int64_t>();
      r.cui = j.at("cui").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.vocab = j.at("vocab").get<std::string>();
      r.group = j.at("group").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
    if (!text::is_cui(r.cui)) fail("invalid cui '" + r.cui + "'");
    records.push_back(std::move(r));
  });
  return records;
}

std::string step_stats_json(const StepStats& stats) {
  ordered_json steps = ordered_json::array();
  for (const auto& [name, remaining] : stats.steps) {
    ordered_json s;
    s["step"] = name;
    s["remaining"] = remaining;
    steps.push_back(std::move(s));
  }
  ordered_json j;
  j["steps"] = std::move(steps);
  return j.dump(2) + "\n";
}

}  // namespace belforge
