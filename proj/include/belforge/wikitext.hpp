#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace belforge {

// A wiki link as rendered in stripped text. Offsets are UTF-8 byte offsets
// into StrippedText::text, end exclusive.
struct WikiLink {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string anchor;
  std::string target_title;

  bool operator==(const WikiLink&) const = default;
};

struct StrippedText {
  std::string text;
  std::vector<WikiLink> links;
  // Unbalanced or unterminated constructs whose remainder was dropped.
  std::size_t warnings = 0;
};

struct StripOptions {
  // Link namespaces removed together with their caption (files, images,
  // categories). Compared case-insensitively against the text before ':'.
  std::set<std::string> dropped_link_namespaces = {
      "file", "image", "media", "category", "bestand", "afbeelding", "categorie"};
  // Tags removed together with everything up to the matching close tag.
  std::set<std::string> dropped_tags = {"ref",    "math",     "gallery",         "timeline",
                                        "score",  "imagemap", "syntaxhighlight", "source",
                                        "references"};
};

// Reduces wikitext to plain text, keeping the anchor text of internal links
// and recording where each one landed.
StrippedText strip_wikitext(std::string_view markup, const StripOptions& options = {});

struct SentenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const SentenceSpan&) const = default;
};

// Rule-based splitter: a sentence ends after a run of '.', '!' or '?' that is
// followed by whitespace and then an upper-case letter or a digit, unless the
// token ending at the punctuation is a listed abbreviation. A blank line is
// always a boundary. Spans are trimmed and never empty.
std::vector<SentenceSpan> split_sentences(std::string_view text,
                                          const std::set<std::string>& abbreviations = {});

// Default abbreviation list for Dutch medical prose.
const std::set<std::string>& default_abbreviations();

}  // namespace belforge
