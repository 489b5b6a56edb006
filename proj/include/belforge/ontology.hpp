#pragma once

// Ontology construction from pipe-delimited concept, semantic-type and
// relation files: parsing, SNOMED-style crosswalk, and the ordered
// filter/enrichment pipeline that yields the cleaned term list.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace belforge {

struct TermRecord {
  std::int64_t term_id = 0;
  std::string cui;
  std::string language;
  std::string vocab;
  std::string source_code;
  std::string text;

  bool operator==(const TermRecord&) const = default;
};

struct SemanticTypeRow {
  std::string cui;
  std::string tui;
  std::string type_name;

  bool operator==(const SemanticTypeRow&) const = default;
};

struct RelationRow {
  std::string cui1;
  std::string rel;
  std::string cui2;
  std::string vocab;

  bool operator==(const RelationRow&) const = default;
};

struct CrosswalkRow {
  std::int64_t sctid = 0;
  std::string text;

  bool operator==(const CrosswalkRow&) const = default;
};

inline constexpr const char* kOtherGroup = "OTHER";

// Group codes a semantic type may map to.
const std::vector<std::string>& semantic_group_codes();
bool is_semantic_group(const std::string& code);

class SemanticGroupMap {
 public:
  SemanticGroupMap() = default;
  explicit SemanticGroupMap(std::map<std::string, std::string> entries);

  // Adds tui -> group. Throws DataError for an unknown group code.
  void add(const std::string& tui, const std::string& group);

  // Unmapped tuis resolve to OTHER.
  const std::string& group_of(const std::string& tui) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct OntologyRecord {
  std::int64_t term_id = 0;
  std::string cui;
  std::string text;
  std::string vocab;
  std::string group;

  bool operator==(const OntologyRecord&) const = default;
};

struct SubtermPattern {
  std::string pattern;
  std::set<std::string> vocabs;  // empty applies the pattern to every vocabulary
};

struct FilterConfig {
  std::set<std::string> drop_vocabs;
  std::vector<SubtermPattern> descriptive_subterm_patterns;
  std::set<std::string> drop_tuis;
  std::set<std::string> drug_vocabs;
  bool dedupe_case_insensitive = true;

  // Languages forming the initial working set; empty keeps every language.
  // Records outside it only enter via the crosswalk bridge or drug import.
  std::set<std::string> languages;

  // Crosswalk wiring: concept rows of `bridge_vocab` carry the external
  // numeric id in source_code; crosswalked terms are tagged with
  // `crosswalk_vocab` / `crosswalk_language`.
  std::string bridge_vocab = "SNOMEDCT_US";
  std::string crosswalk_vocab = "SNOMEDCT_NL";
  std::string crosswalk_language = "DUT";

  // Throws ConfigError on empty set members or empty patterns.
  void validate() const;
};

struct StepStats {
  std::vector<std::pair<std::string, std::int64_t>> steps;

  bool operator==(const StepStats&) const = default;
};

// Zero-based field indices into a `|`-delimited line.
struct ConceptColumns {
  std::size_t cui = 0;
  std::size_t language = 1;
  std::size_t vocab = 2;
  std::size_t source_code = 3;
  std::size_t text = 4;
};

struct SemanticTypeColumns {
  std::size_t cui = 0;
  std::size_t tui = 1;
  std::size_t type_name = 3;
};

struct RelationColumns {
  std::size_t cui1 = 0;
  std::size_t rel = 3;
  std::size_t cui2 = 4;
  std::size_t vocab = 10;
};

struct CrosswalkColumns {
  std::size_t sctid = 0;
  std::size_t text = 1;
};

// Semantic group file, default layout GROUP|Group Name|TUI|Type Name.
struct GroupColumns {
  std::size_t group = 0;
  std::size_t tui = 2;
};

template <typename T>
struct Parsed {
  std::vector<T> records;
  std::size_t malformed = 0;
};

// One record per well-formed line; term_id follows input order from 0.
// Lines with too few fields, an invalid cui, or empty text are skipped and
// counted. Throws IoError if the stream is unreadable.
Parsed<TermRecord> parse_concepts(std::istream& in, const ConceptColumns& columns = {});
Parsed<SemanticTypeRow> parse_semantic_types(std::istream& in,
                                             const SemanticTypeColumns& columns = {});
// Self-loop rows are dropped without counting as malformed.
Parsed<RelationRow> parse_relations(std::istream& in, const RelationColumns& columns = {});
Parsed<CrosswalkRow> parse_crosswalk(std::istream& in, const CrosswalkColumns& columns = {});
SemanticGroupMap parse_semantic_groups(std::istream& in, const GroupColumns& columns = {},
                                       std::size_t* malformed = nullptr);

enum class CrosswalkDrop { kNoMatch, kAmbiguous };

struct CrosswalkResult {
  std::vector<TermRecord> added;
  std::map<std::int64_t, CrosswalkDrop> dropped;
};

struct CrosswalkOptions {
  std::string vocab = "SNOMEDCT_NL";
  std::string language = "DUT";
  std::int64_t first_term_id = 0;
};

// Joins target-language rows to bridge rows on the numeric id. An id whose
// bridge rows span two or more distinct cuis is ambiguous and dropped.
CrosswalkResult crosswalk_terms(const std::vector<CrosswalkRow>& targets,
                                const std::vector<TermRecord>& bridge,
                                const CrosswalkOptions& options = {});

struct OntologyBuild {
  std::vector<OntologyRecord> records;
  StepStats stats;
  CrosswalkResult crosswalk;
};

// Step names recorded in StepStats, in pipeline order.
inline constexpr const char* kStepDropVocabs = "drop_vocabs";
inline constexpr const char* kStepRemoveSubterms = "remove_subterms";
inline constexpr const char* kStepDedupe = "dedupe";
inline constexpr const char* kStepAddCrosswalk = "add_crosswalk";
inline constexpr const char* kStepDropSemanticTypes = "drop_semantic_types";
inline constexpr const char* kStepAddDrugNames = "add_drug_names";
inline constexpr const char* kStepAssignGroups = "assign_groups";

OntologyBuild build_ontology(const std::vector<TermRecord>& concepts,
                             const std::vector<SemanticTypeRow>& semantic_types,
                             const SemanticGroupMap& groups,
                             const std::vector<CrosswalkRow>& crosswalk,
                             const FilterConfig& config);

// Lossy view used to feed an ontology back through build_ontology
// (language and source_code are left empty).
std::vector<TermRecord> to_term_records(const std::vector<OntologyRecord>& records);

// JSON lines: {"term_id":..,"cui":..,"text":..,"vocab":..,"group":..},
// ordered by term_id.
void serialize_ontology(const std::vector<OntologyRecord>& records, std::ostream& out);
// Throws DataError carrying the 1-based line number on malformed input.
std::vector<OntologyRecord> parse_ontology(std::istream& in);

std::string step_stats_json(const StepStats& stats);

}  // namespace belforge
