#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <istream>
#include <memory>
#include <ostream>
#include <unordered_set>

#include <expat.h>

#include "json.hpp"

#include "belforge/corpus.hpp"
#include "belforge/error.hpp"
#include "belforge/random.hpp"
#include "belforge/text.hpp"

namespace belforge {

CorpusCompiler::CorpusCompiler(const ArticleCuiMap& map, CompileOptions options)
    : map_(map), options_(std::move(options)) {}

void CorpusCompiler::add_page(const WikiPage& page) {
  ++out_.pages;
  if (page.redirect) return;
  StrippedText stripped = strip_wikitext(page.wikitext, options_.strip);
  out_.strip_warnings += stripped.warnings;
  if (stripped.links.empty()) return;

  auto resolve = [&](const std::string& target) -> const ArticleEntry* {
    const auto r = options_.redirects.find(normalize_title(target));
    return map_.find(r == options_.redirects.end() ? target : r->second);
  };

  std::size_t next_link = 0;
  for (const SentenceSpan& span : split_sentences(stripped.text, options_.abbreviations)) {
    while (next_link < stripped.links.size() && stripped.links[next_link].start < span.start) {
      ++next_link;
    }
    std::vector<std::pair<const WikiLink*, const ArticleEntry*>> hits;
    for (std::size_t k = next_link;
         k < stripped.links.size() && stripped.links[k].start < span.end; ++k) {
      const WikiLink& link = stripped.links[k];
      if (link.end > span.end) continue;
      if (const ArticleEntry* entry = resolve(link.target_title)) hits.emplace_back(&link, entry);
    }
    if (hits.empty()) continue;

    SentenceRecord sentence;
    sentence.sentence_id = static_cast<std::int64_t>(out_.corpus.sentences.size());
    sentence.page_title = page.title;
    sentence.text = stripped.text.substr(span.start, span.end - span.start);
    sentence.token_count = text::count_tokens(sentence.text);
    for (const auto& [link, entry] : hits) {
      MentionAnnotation m;
      m.sentence_id = sentence.sentence_id;
      m.start = link->start - span.start;
      m.end = link->end - span.start;
      m.anchor = link->anchor;
      m.target_title = link->target_title;
      m.cui = entry->cui;
      m.qid = entry->qid;
      out_.corpus.mentions.push_back(std::move(m));
    }
    out_.corpus.sentences.push_back(std::move(sentence));
  }
}

CompiledCorpus CorpusCompiler::finish(const std::vector<OntologyRecord>* ontology) && {
  out_.stats = compute_stats(out_.corpus, ontology);
  return std::move(out_);
}

CompiledCorpus compile_corpus(const std::vector<WikiPage>& pages, const ArticleCuiMap& map,
                              const CompileOptions& options,
                              const std::vector<OntologyRecord>* ontology) {
  CorpusCompiler compiler(map, options);
  for (const auto& page : pages) compiler.add_page(page);
  return std::move(compiler).finish(ontology);
}

CorpusStats compute_stats(const CorpusSlice& corpus, const std::vector<OntologyRecord>* ontology) {
  CorpusStats stats;
  stats.sentences = static_cast<std::int64_t>(corpus.sentences.size());
  stats.mentions = static_cast<std::int64_t>(corpus.mentions.size());
  stats.cuis = stats.mentions;

  std::unordered_set<std::string> anchors;
  std::unordered_set<std::string> cuis;
  for (const auto& m : corpus.mentions) {
    anchors.insert(m.anchor);
    cuis.insert(m.cui);
  }
  stats.unique_mentions = static_cast<std::int64_t>(anchors.size());
  stats.unique_cuis = static_cast<std::int64_t>(cuis.size());

  std::int64_t tokens = 0;
  for (const auto& s : corpus.sentences) tokens += s.token_count;
  stats.avg_tokens_per_sentence =
      corpus.sentences.empty() ? 0.0
                               : static_cast<double>(tokens) / static_cast<double>(stats.sentences);

  if (ontology) {
    stats.ontology_supplied = true;
    std::unordered_set<std::string> terms;
    std::unordered_set<std::string> known_cuis;
    for (const auto& r : *ontology) {
      terms.insert(r.text);
      known_cuis.insert(r.cui);
    }
    for (const auto& m : corpus.mentions) {
      if (!terms.count(m.anchor)) ++stats.unseen_mentions;
      if (!known_cuis.count(m.cui)) ++stats.unlinkable_cuis;
    }
  }
  return stats;
}

namespace {

CorpusSlice slice_of(const CorpusSlice& corpus, std::vector<std::size_t> mention_indices) {
  std::sort(mention_indices.begin(), mention_indices.end());
  std::unordered_map<std::int64_t, const SentenceRecord*> by_id;
  for (const auto& s : corpus.sentences) by_id.emplace(s.sentence_id, &s);
  CorpusSlice slice;
  std::int64_t last_sentence = -1;
  for (std::size_t idx : mention_indices) {
    const MentionAnnotation& m = corpus.mentions[idx];
    if (m.sentence_id != last_sentence) {
      const auto it = by_id.find(m.sentence_id);
      if (it == by_id.end()) {
        throw DataError("mention refers to unknown sentence " + std::to_string(m.sentence_id));
      }
      slice.sentences.push_back(*it->second);
      last_sentence = m.sentence_id;
    }
    slice.mentions.push_back(m);
  }
  return slice;
}

}  // namespace

StarSubset build_star_subset(const CorpusSlice& corpus, const std::vector<OntologyRecord>& ontology,
                             double split_ratio, std::uint64_t seed) {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("split_ratio must lie strictly between 0 and 1");
  }
  std::unordered_set<std::string> known_cuis;
  for (const auto& r : ontology) known_cuis.insert(r.cui);

  StarSubset subset;
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < corpus.mentions.size(); ++i) {
    const auto& m = corpus.mentions[i];
    if (!seen.insert(m.anchor).second) {
      ++subset.dropped_duplicates;
    } else if (!known_cuis.count(m.cui)) {
      ++subset.dropped_unlinkable;
    } else {
      kept.push_back(i);
    }
  }
  subset.kept = kept.size();

  Rng rng = make_rng(seed, 0x57A2);
  std::vector<std::size_t> order = kept;
  shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(split_ratio * static_cast<double>(order.size())));
  subset.train = slice_of(corpus, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)});
  subset.validation = slice_of(corpus, {order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end()});
  return subset;
}

namespace {

void escape_text(std::ostream& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out << "&amp;"; break;
      case '<': out << "&lt;"; break;
      case '>': out << "&gt;"; break;
      case '\r': out << "&#13;"; break;
      default: out << c;
    }
  }
}

void escape_attr(std::ostream& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out << "&amp;"; break;
      case '<': out << "&lt;"; break;
      case '>': out << "&gt;"; break;
      case '"': out << "&quot;"; break;
      case '\t': out << "&#9;"; break;
      case '\n': out << "&#10;"; break;
      case '\r': out << "&#13;"; break;
      default: out << c;
    }
  }
}

}  // namespace

void serialize_corpus(const CorpusSlice& slice, std::ostream& out) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (slice.sentences.empty()) {
    out << "<corpus/>\n";
    return;
  }
  std::unordered_map<std::int64_t, std::vector<const MentionAnnotation*>> by_sentence;
  for (const auto& m : slice.mentions) by_sentence[m.sentence_id].push_back(&m);

  out << "<corpus>\n";
  for (const auto& s : slice.sentences) {
    auto& mentions = by_sentence[s.sentence_id];
    std::stable_sort(mentions.begin(), mentions.end(),
                     [](const auto* a, const auto* b) { return a->start < b->start; });
    out << "  <sentence id=\"" << s.sentence_id << "\" page=\"";
    escape_attr(out, s.page_title);
    out << "\">";
    std::size_t cursor = 0;
    for (const auto* m : mentions) {
      if (m->start < cursor || m->end > s.text.size() || m->start >= m->end) {
        throw DataError("mention [" + std::to_string(m->start) + "," + std::to_string(m->end) +
                        ") overlaps or exceeds sentence " + std::to_string(s.sentence_id));
      }
      escape_text(out, std::string_view(s.text).substr(cursor, m->start - cursor));
      out << "<mention cui=\"";
      escape_attr(out, m->cui);
      out << "\" qid=\"";
      escape_attr(out, m->qid);
      out << "\" target=\"";
      escape_attr(out, m->target_title);
      out << "\" start=\"" << m->start << "\" end=\"" << m->end << "\">";
      escape_text(out, std::string_view(s.text).substr(m->start, m->end - m->start));
      out << "</mention>";
      cursor = m->end;
    }
    escape_text(out, std::string_view(s.text).substr(cursor));
    out << "</sentence>\n";
  }
  out << "</corpus>\n";
}

namespace {

struct CorpusParseState {
  XML_Parser parser = nullptr;
  CorpusSlice slice;
  int depth = 0;
  bool seen_root = false;
  bool in_sentence = false;
  bool in_mention = false;
  SentenceRecord sentence;
  MentionAnnotation mention;
  std::size_t mention_declared_start = 0;
  std::size_t mention_declared_end = 0;
  std::unordered_set<std::int64_t> ids;
  std::exception_ptr error;
};

[[noreturn]] void schema_error(CorpusParseState& s, const std::string& why) {
  const auto line = static_cast<std::int64_t>(XML_GetCurrentLineNumber(s.parser));
  throw DataError("corpus XML line " + std::to_string(line) + ": " + why, line);
}

const char* find_attr(const XML_Char** attrs, const char* key) {
  for (int i = 0; attrs[i]; i += 2) {
    if (std::strcmp(attrs[i], key) == 0) return attrs[i + 1];
  }
  return nullptr;
}

std::int64_t int_attr(CorpusParseState& s, const XML_Char** attrs, const char* key) {
  const char* v = find_attr(attrs, key);
  if (!v || !*v) schema_error(s, std::string("missing attribute '") + key + "'");
  char* end = nullptr;
  const long long value = std::strtoll(v, &end, 10);
  if (*end != '\0' || value < 0) schema_error(s, std::string("bad integer in '") + key + "'");
  return value;
}

template <typename Fn>
void guarded(CorpusParseState& s, Fn&& fn) {
  if (s.error) return;
  try {
    fn();
  } catch (...) {
    s.error = std::current_exception();
    XML_StopParser(s.parser, XML_FALSE);
  }
}

void XMLCALL corpus_start(void* data, const XML_Char* name, const XML_Char** attrs) {
  auto& s = *static_cast<CorpusParseState*>(data);
  guarded(s, [&] {
    const std::string_view element(name);
    ++s.depth;
    if (s.depth == 1) {
      if (element != "corpus") schema_error(s, "root element must be <corpus>");
      s.seen_root = true;
    } else if (s.depth == 2) {
      if (element != "sentence") schema_error(s, "expected <sentence>");
      s.in_sentence = true;
      s.sentence = SentenceRecord{};
      s.sentence.sentence_id = int_attr(s, attrs, "id");
      const char* page = find_attr(attrs, "page");
      if (!page) schema_error(s, "missing attribute 'page'");
      s.sentence.page_title = page;
      if (!s.ids.insert(s.sentence.sentence_id).second) {
        schema_error(s, "duplicate sentence id " + std::to_string(s.sentence.sentence_id));
      }
    } else if (s.depth == 3) {
      if (element != "mention") schema_error(s, "expected <mention>");
      s.in_mention = true;
      s.mention = MentionAnnotation{};
      s.mention.sentence_id = s.sentence.sentence_id;
      const char* cui = find_attr(attrs, "cui");
      const char* qid = find_attr(attrs, "qid");
      if (!cui || !text::is_cui(cui)) schema_error(s, "mention needs a valid cui");
      s.mention.cui = cui;
      s.mention.qid = qid ? qid : "";
      const char* target = find_attr(attrs, "target");
      s.mention.target_title = target ? target : "";
      s.mention_declared_start = static_cast<std::size_t>(int_attr(s, attrs, "start"));
      s.mention_declared_end = static_cast<std::size_t>(int_attr(s, attrs, "end"));
      s.mention.start = s.sentence.text.size();
    } else {
      schema_error(s, "unexpected nested element <" + std::string(element) + ">");
    }
  });
}

void XMLCALL corpus_chars(void* data, const XML_Char* chars, int len) {
  auto& s = *static_cast<CorpusParseState*>(data);
  guarded(s, [&] {
    const std::string_view piece(chars, static_cast<std::size_t>(len));
    if (s.in_sentence) {
      s.sentence.text.append(piece);
    } else if (!text::trim(piece).empty()) {
      schema_error(s, "text outside <sentence>");
    }
  });
}

void XMLCALL corpus_end(void* data, const XML_Char*) {
  auto& s = *static_cast<CorpusParseState*>(data);
  guarded(s, [&] {
    if (s.depth == 3) {
      s.mention.end = s.sentence.text.size();
      s.mention.anchor = s.sentence.text.substr(s.mention.start);
      if (s.mention.start != s.mention_declared_start || s.mention.end != s.mention_declared_end) {
        schema_error(s, "mention offsets do not match its position in the sentence");
      }
      if (s.mention.start == s.mention.end) schema_error(s, "empty mention");
      s.slice.mentions.push_back(std::move(s.mention));
      s.in_mention = false;
    } else if (s.depth == 2) {
      s.sentence.token_count = text::count_tokens(s.sentence.text);
      s.slice.sentences.push_back(std::move(s.sentence));
      s.in_sentence = false;
    }
    --s.depth;
  });
}

}  // namespace

CorpusSlice parse_corpus(std::istream& in) {
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreate("UTF-8"), &XML_ParserFree);
  if (!parser) throw std::bad_alloc();
  CorpusParseState state;
  state.parser = parser.get();
  XML_SetUserData(parser.get(), &state);
  XML_SetElementHandler(parser.get(), corpus_start, corpus_end);
  XML_SetCharacterDataHandler(parser.get(), corpus_chars);

  constexpr std::size_t kChunk = 1 << 16;
  std::vector<char> chunk(kChunk);
  for (;;) {
    in.read(chunk.data(), static_cast<std::streamsize>(kChunk));
    const std::streamsize got = in.gcount();
    if (in.bad()) throw IoError("read error on corpus XML");
    const bool last = got < static_cast<std::streamsize>(kChunk);
    if (XML_Parse(parser.get(), chunk.data(), static_cast<int>(got), last) == XML_STATUS_ERROR) {
      if (state.error) std::rethrow_exception(state.error);
      const auto line = static_cast<std::int64_t>(XML_GetCurrentLineNumber(parser.get()));
      throw DataError("corpus XML line " + std::to_string(line) + ": " +
                          XML_ErrorString(XML_GetErrorCode(parser.get())),
                      line);
    }
    if (last) break;
  }
  if (state.error) std::rethrow_exception(state.error);
  if (!state.seen_root) throw DataError("corpus XML has no <corpus> root");
  return std::move(state.slice);
}

std::string corpus_stats_json(const CorpusStats& stats) {
  nlohmann::ordered_json j;
  j["sentences"] = stats.sentences;
  j["avg_tokens_per_sentence"] = stats.avg_tokens_per_sentence;
  j["mentions"] = stats.mentions;
  j["unique_mentions"] = stats.unique_mentions;
  j["unseen_mentions"] = stats.unseen_mentions;
  j["cuis"] = stats.cuis;
  j["unique_cuis"] = stats.unique_cuis;
  j["unlinkable_cuis"] = stats.unlinkable_cuis;
  j["ontology_supplied"] = stats.ontology_supplied;
  return j.dump(2) + "\n";
}

}  // namespace belforge
