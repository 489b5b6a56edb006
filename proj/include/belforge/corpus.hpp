#pragma once

// Weakly labeled corpus compilation: an article -> concept mapping joined
// with a MediaWiki dump, where hyperlink anchors become concept mentions.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "belforge/ontology.hpp"
#include "belforge/wikitext.hpp"

namespace belforge {

// Underscores become spaces, whitespace runs collapse, a `#fragment` is
// removed and the first character is lower-cased.
std::string normalize_title(std::string_view title);

struct ArticleEntry {
  std::string qid;
  std::string cui;

  bool operator==(const ArticleEntry&) const = default;
};

struct ArticleCuiMap {
  std::map<std::string, ArticleEntry> entries;  // keyed by normalized title
  std::size_t duplicates = 0;
  std::size_t malformed = 0;

  // First occurrence of a title wins; later ones are counted as duplicates.
  void add(std::string_view title, std::string qid, std::string cui);
  const ArticleEntry* find(std::string_view raw_title) const;
  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

// Rows `qid<TAB>cui<TAB>article_title`; a header row or any row with an
// invalid qid/cui is counted as malformed.
ArticleCuiMap load_article_cui_map_tsv(std::istream& in);

struct SparqlSource {
  std::string endpoint = "https://query.wikidata.org/sparql";
  std::string site = "https://nl.wikipedia.org/";
  std::string property = "P2892";
  std::string language = "nl";
  // Directory for cached responses; empty disables caching.
  std::string cache_dir;
  int timeout_seconds = 60;
};

// The concept/article query, templated with the site and property.
std::string build_sparql_query(const SparqlSource& source);

// Parses a SPARQL 1.1 JSON results document (bindings concept, cui,
// article). Malformed bindings are counted, not fatal.
ArticleCuiMap parse_sparql_results(std::string_view json);

// Issues the query with HTTP GET (format=json). Throws NetworkError when the
// endpoint is unreachable or answers with status >= 400.
ArticleCuiMap load_article_cui_map_sparql(const SparqlSource& source);

struct WikiPage {
  std::int64_t page_id = 0;
  std::string title;
  int ns = 0;
  std::string wikitext;
  // Set for redirect pages (`<redirect title=".."/>`).
  std::optional<std::string> redirect;

  bool operator==(const WikiPage&) const = default;
};

// Streams a MediaWiki export, invoking `on_page` for namespace-0 pages in
// document order. Pages without a <text> element are skipped. Throws
// DataError with the byte offset on malformed XML. Returns the number of
// pages delivered.
std::size_t parse_dump(std::istream& in, const std::function<void(WikiPage&&)>& on_page);

// Convenience wrapper collecting every page.
std::vector<WikiPage> read_dump(std::istream& in);

struct SentenceRecord {
  std::int64_t sentence_id = 0;
  std::string page_title;
  std::string text;
  std::int64_t token_count = 0;

  bool operator==(const SentenceRecord&) const = default;
};

// Offsets are UTF-8 byte offsets into the sentence text, end exclusive.
struct MentionAnnotation {
  std::int64_t sentence_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string anchor;
  std::string target_title;
  std::string cui;
  std::string qid;

  bool operator==(const MentionAnnotation&) const = default;
};

struct CorpusStats {
  std::int64_t sentences = 0;
  std::int64_t mentions = 0;
  std::int64_t unique_mentions = 0;
  std::int64_t unseen_mentions = 0;
  std::int64_t cuis = 0;
  std::int64_t unique_cuis = 0;
  std::int64_t unlinkable_cuis = 0;
  double avg_tokens_per_sentence = 0.0;
  bool ontology_supplied = false;

  bool operator==(const CorpusStats&) const = default;
};

struct CorpusSlice {
  std::vector<SentenceRecord> sentences;
  std::vector<MentionAnnotation> mentions;

  bool operator==(const CorpusSlice&) const = default;
};

struct CompileOptions {
  std::set<std::string> abbreviations = default_abbreviations();
  StripOptions strip;
  // Normalized redirect title -> raw target title, applied to link targets.
  std::unordered_map<std::string, std::string> redirects;
};

struct CompiledCorpus {
  CorpusSlice corpus;
  CorpusStats stats;
  std::size_t pages = 0;
  std::size_t strip_warnings = 0;
};

// Incremental compiler so a dump can be streamed page by page.
class CorpusCompiler {
 public:
  CorpusCompiler(const ArticleCuiMap& map, CompileOptions options = {});

  void add_page(const WikiPage& page);
  CompiledCorpus finish(const std::vector<OntologyRecord>* ontology = nullptr) &&;

 private:
  const ArticleCuiMap& map_;
  CompileOptions options_;
  CompiledCorpus out_;
};

CompiledCorpus compile_corpus(const std::vector<WikiPage>& pages, const ArticleCuiMap& map,
                              const CompileOptions& options = {},
                              const std::vector<OntologyRecord>* ontology = nullptr);

// Redirect table from a dump pass: normalized title -> target title.
std::unordered_map<std::string, std::string> collect_redirects(std::istream& dump);

// Table-2 style statistics. Unseen mentions (anchor not an exact ontology
// term) and unlinkable cuis (cui absent from the ontology) need an ontology;
// without one they stay 0 and ontology_supplied is false.
CorpusStats compute_stats(const CorpusSlice& corpus,
                          const std::vector<OntologyRecord>* ontology = nullptr);

struct StarSubset {
  CorpusSlice train;
  CorpusSlice validation;
  std::size_t kept = 0;
  std::size_t dropped_duplicates = 0;
  std::size_t dropped_unlinkable = 0;
};

// Keeps the first occurrence of each mention string (case-sensitive), drops
// mentions whose cui has no ontology record, then splits the survivors at
// `split_ratio` with a seeded shuffle. Throws ConfigError unless
// 0 < split_ratio < 1.
StarSubset build_star_subset(const CorpusSlice& corpus, const std::vector<OntologyRecord>& ontology,
                             double split_ratio, std::uint64_t seed);

// <corpus><sentence id=".." page="..">text<mention cui=".." qid=".."
// target=".." start=".." end="..">anchor</mention>text</sentence></corpus>
void serialize_corpus(const CorpusSlice& slice, std::ostream& out);
// Throws DataError (with line number) on schema violations.
CorpusSlice parse_corpus(std::istream& in);

std::string corpus_stats_json(const CorpusStats& stats);

}  // namespace belforge
