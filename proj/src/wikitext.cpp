#include "belforge/wikitext.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>

#include "belforge/text.hpp"

namespace belforge {

namespace {

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.size() >= pos + prefix.size() && s.compare(pos, prefix.size(), prefix) == 0;
}

bool starts_with_icase(std::string_view s, std::size_t pos, std::string_view lower_prefix) {
  if (s.size() < pos + lower_prefix.size()) return false;
  for (std::size_t k = 0; k < lower_prefix.size(); ++k) {
    char c = s[pos + k];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != lower_prefix[k]) return false;
  }
  return true;
}

bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

// Heading markers, list markers, horizontal rules and behaviour switches
// are line-level syntax; rewrite them before the inline scan.
std::string preprocess_lines(std::string_view markup) {
  std::string out;
  out.reserve(markup.size() + 16);
  std::size_t pos = 0;
  while (pos <= markup.size()) {
    std::size_t nl = markup.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    if (last) nl = markup.size();
    std::string_view line = markup.substr(pos, nl - pos);
    const std::string_view trimmed = text::trim(line);

    if (!line.empty() && line.front() == '=' && trimmed.size() >= 2 && trimmed.back() == '=') {
      std::size_t lead = 0;
      while (lead < trimmed.size() && trimmed[lead] == '=') ++lead;
      std::size_t tail = 0;
      while (tail < trimmed.size() - lead && trimmed[trimmed.size() - 1 - tail] == '=') ++tail;
      const std::size_t strip = std::min(lead, tail);
      const std::string_view inner =
          strip * 2 < trimmed.size() ? trimmed.substr(strip, trimmed.size() - 2 * strip)
                                     : std::string_view();
      out += "\n";
      out += text::trim(inner);
      out += "\n";
    } else if (trimmed.size() >= 4 && trimmed.find_first_not_of('-') == std::string_view::npos) {
      // horizontal rule
    } else {
      std::size_t k = 0;
      while (k < line.size() && (line[k] == '*' || line[k] == '#' || line[k] == ':' ||
                                 line[k] == ';')) {
        ++k;
      }
      if (k > 0) {
        while (k < line.size() && (line[k] == ' ' || line[k] == '\t')) ++k;
      }
      out += line.substr(k);
    }
    if (last) break;
    out.push_back('\n');
    pos = nl + 1;
  }

  // __TOC__ style switches
  std::string cleaned;
  cleaned.reserve(out.size());
  for (std::size_t i = 0; i < out.size();) {
    if (starts_with_at(out, i, "__")) {
      std::size_t j = i + 2;
      while (j < out.size() && out[j] >= 'A' && out[j] <= 'Z') ++j;
      if (j > i + 2 && starts_with_at(out, j, "__")) {
        i = j + 2;
        continue;
      }
    }
    cleaned.push_back(out[i++]);
  }
  return cleaned;
}

class Stripper {
 public:
  Stripper(std::string_view in, const StripOptions& options, bool record_links)
      : in_(in), options_(options), record_links_(record_links) {}

  StrippedText run() {
    while (pos_ < in_.size()) step();
    return {std::move(out_), std::move(links_), warnings_};
  }

 private:
  void step() {
    const char c = in_[pos_];
    if (starts_with_at(in_, pos_, "<!--")) {
      const std::size_t close = in_.find("-->", pos_ + 4);
      if (close == std::string_view::npos) {
        drop_rest();
      } else {
        pos_ = close + 3;
      }
    } else if (starts_with_at(in_, pos_, "{{")) {
      skip_balanced("{{", "}}");
    } else if (starts_with_at(in_, pos_, "{|") && at_line_start()) {
      skip_balanced("{|", "|}");
    } else if (c == '<') {
      tag();
    } else if (starts_with_at(in_, pos_, "[[")) {
      internal_link();
    } else if (c == '[') {
      external_link();
    } else if (starts_with_at(in_, pos_, "''")) {
      while (pos_ < in_.size() && in_[pos_] == '\'') ++pos_;
    } else if (c == '&') {
      entity();
    } else {
      out_.push_back(c);
      ++pos_;
    }
  }

  bool at_line_start() const {
    std::size_t k = pos_;
    while (k > 0 && (in_[k - 1] == ' ' || in_[k - 1] == '\t')) --k;
    return k == 0 || in_[k - 1] == '\n';
  }

  void drop_rest() {
    ++warnings_;
    pos_ = in_.size();
  }

  // Finds the end (exclusive) of a construct opened at `from`, honouring
  // nesting of the same delimiters. npos when unbalanced.
  std::size_t match(std::size_t from, std::string_view open, std::string_view close) const {
    int depth = 0;
    std::size_t j = from;
    while (j < in_.size()) {
      if (starts_with_at(in_, j, open)) {
        ++depth;
        j += open.size();
      } else if (starts_with_at(in_, j, close)) {
        --depth;
        j += close.size();
        if (depth == 0) return j;
      } else {
        ++j;
      }
    }
    return std::string_view::npos;
  }

  void skip_balanced(std::string_view open, std::string_view close) {
    const std::size_t end = match(pos_, open, close);
    if (end == std::string_view::npos) {
      drop_rest();
    } else {
      pos_ = end;
    }
  }

  void tag() {
    std::size_t j = pos_ + 1;
    const bool closing = j < in_.size() && in_[j] == '/';
    if (closing) ++j;
    const std::size_t name_start = j;
    while (j < in_.size() && (is_ascii_alpha(in_[j]) || (j > name_start && std::isdigit(
                                                             static_cast<unsigned char>(in_[j]))))) {
      ++j;
    }
    const std::size_t gt = in_.find('>', j);
    if (j == name_start || gt == std::string_view::npos) {
      out_.push_back('<');
      ++pos_;
      return;
    }
    const std::string name = text::to_lower(in_.substr(name_start, j - name_start));
    const bool self_closing = in_[gt - 1] == '/';
    pos_ = gt + 1;
    if (closing || self_closing) return;
    if (options_.dropped_tags.count(name)) {
      const std::string close = "</" + name;
      std::size_t k = pos_;
      while (k < in_.size() && !starts_with_icase(in_, k, close)) ++k;
      if (k >= in_.size()) {
        drop_rest();
        return;
      }
      const std::size_t end = in_.find('>', k);
      pos_ = end == std::string_view::npos ? in_.size() : end + 1;
    } else if (name == "br") {
      out_.push_back(' ');
    }
  }

  // First '|' at nesting depth zero, or npos.
  static std::size_t top_level_bar(std::string_view inner) {
    int links = 0;
    int templates = 0;
    for (std::size_t k = 0; k < inner.size(); ++k) {
      if (starts_with_at(inner, k, "[[")) {
        ++links;
        ++k;
      } else if (starts_with_at(inner, k, "]]")) {
        --links;
        ++k;
      } else if (starts_with_at(inner, k, "{{")) {
        ++templates;
        ++k;
      } else if (starts_with_at(inner, k, "}}")) {
        --templates;
        ++k;
      } else if (inner[k] == '|' && links == 0 && templates == 0) {
        return k;
      }
    }
    return std::string_view::npos;
  }

  std::size_t link_trail_end(std::size_t from) const {
    std::size_t k = from;
    while (k < in_.size()) {
      const auto b = static_cast<unsigned char>(in_[k]);
      if (b >= 'a' && b <= 'z') {
        ++k;
      } else if (b == 0xC3 && k + 1 < in_.size() &&
                 static_cast<unsigned char>(in_[k + 1]) >= 0x9F &&
                 static_cast<unsigned char>(in_[k + 1]) != 0xB7) {
        // U+00DF..U+00FF lower-case Latin-1 letters, minus the division sign
        k += 2;
      } else {
        break;
      }
    }
    return k;
  }

  void internal_link() {
    const std::size_t end = match(pos_, "[[", "]]");
    if (end == std::string_view::npos) {
      ++warnings_;
      const std::size_t nl = in_.find('\n', pos_);
      pos_ = nl == std::string_view::npos ? in_.size() : nl;
      return;
    }
    const std::string_view inner = in_.substr(pos_ + 2, end - pos_ - 4);
    pos_ = end;

    const std::size_t bar = top_level_bar(inner);
    std::string_view target = text::trim(inner.substr(0, bar));
    const bool forced_visible = !target.empty() && target.front() == ':';
    if (forced_visible) target = text::trim(target.substr(1));
    if (target.empty()) return;

    if (!forced_visible) {
      const std::size_t colon = target.find(':');
      if (colon != std::string_view::npos &&
          options_.dropped_link_namespaces.count(
              text::to_lower(text::trim(target.substr(0, colon))))) {
        return;
      }
    }

    std::string anchor;
    if (bar != std::string_view::npos) {
      Stripper nested(inner.substr(bar + 1), options_, false);
      StrippedText rendered = nested.run();
      warnings_ += rendered.warnings;
      anchor = text::collapse_whitespace(rendered.text);
    }
    if (anchor.empty()) {
      Stripper nested(target, options_, false);
      anchor = text::collapse_whitespace(nested.run().text);
    }
    const std::size_t trail = link_trail_end(pos_);
    anchor.append(in_.substr(pos_, trail - pos_));
    pos_ = trail;
    if (anchor.empty()) return;

    const std::size_t start = out_.size();
    out_ += anchor;
    if (record_links_) links_.push_back({start, out_.size(), anchor, std::string(target)});
  }

  void external_link() {
    static constexpr std::string_view kSchemes[] = {"http://", "https://", "ftp://", "//",
                                                    "mailto:"};
    const bool is_url = std::any_of(std::begin(kSchemes), std::end(kSchemes),
                                    [&](std::string_view s) {
                                      return starts_with_icase(in_, pos_ + 1, s);
                                    });
    const std::size_t close = in_.find(']', pos_);
    const std::size_t nl = in_.find('\n', pos_);
    if (!is_url || close == std::string_view::npos || (nl != std::string_view::npos && nl < close)) {
      out_.push_back('[');
      ++pos_;
      return;
    }
    const std::string_view inner = in_.substr(pos_ + 1, close - pos_ - 1);
    pos_ = close + 1;
    const std::size_t space = inner.find(' ');
    if (space == std::string_view::npos) return;
    Stripper nested(inner.substr(space + 1), options_, false);
    out_ += text::trim(nested.run().text);
  }

  void entity() {
    struct Named {
      std::string_view name;
      char32_t cp;
    };
    static constexpr Named kNamed[] = {{"&nbsp;", U' '},   {"&amp;", U'&'},
                                       {"&lt;", U'<'},     {"&gt;", U'>'},
                                       {"&quot;", U'"'},   {"&ndash;", 0x2013},
                                       {"&mdash;", 0x2014}};
    for (const auto& e : kNamed) {
      if (starts_with_at(in_, pos_, e.name)) {
        text::append_utf8(out_, e.cp);
        pos_ += e.name.size();
        return;
      }
    }
    if (starts_with_at(in_, pos_, "&#")) {
      std::size_t k = pos_ + 2;
      const bool hex = k < in_.size() && (in_[k] == 'x' || in_[k] == 'X');
      if (hex) ++k;
      std::uint32_t cp = 0;
      const std::size_t digits_start = k;
      while (k < in_.size() && k - digits_start < 7 &&
             std::isxdigit(static_cast<unsigned char>(in_[k]))) {
        const char d = in_[k];
        if (!hex && !std::isdigit(static_cast<unsigned char>(d))) break;
        const int v = std::isdigit(static_cast<unsigned char>(d)) ? d - '0'
                                                                  : (std::tolower(d) - 'a' + 10);
        cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
        ++k;
      }
      if (k > digits_start && k < in_.size() && in_[k] == ';' && cp > 0 && cp < 0x110000) {
        text::append_utf8(out_, static_cast<char32_t>(cp));
        pos_ = k + 1;
        return;
      }
    }
    out_.push_back('&');
    ++pos_;
  }

  std::string_view in_;
  const StripOptions& options_;
  bool record_links_;
  std::size_t pos_ = 0;
  std::string out_;
  std::vector<WikiLink> links_;
  std::size_t warnings_ = 0;
};

bool is_sentence_punct(char c) { return c == '.' || c == '!' || c == '?'; }

}  // namespace

StrippedText strip_wikitext(std::string_view markup, const StripOptions& options) {
  const std::string prepared = preprocess_lines(markup);
  Stripper stripper(prepared, options, true);
  return stripper.run();
}

std::vector<SentenceSpan> split_sentences(std::string_view s,
                                          const std::set<std::string>& abbreviations) {
  std::vector<std::size_t> cuts;
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    if (is_sentence_punct(s[i])) {
      std::size_t last = i;
      while (last + 1 < n && is_sentence_punct(s[last + 1])) ++last;
      std::size_t next = last + 1;
      if (next < n && text::is_space(s[next])) {
        while (next < n && text::is_space(s[next])) ++next;
        if (next < n) {
          const auto cps = text::decode_utf8(s.substr(next, std::min<std::size_t>(4, n - next)));
          if (!cps.empty() && (text::is_upper(cps.front()) || text::is_digit(cps.front()))) {
            std::size_t t = i;
            while (t > 0 && !text::is_space(s[t - 1])) --t;
            while (t < i && (s[t] == '(' || s[t] == '"' || s[t] == '\'')) ++t;
            const std::string token(s.substr(t, last + 1 - t));
            if (!abbreviations.count(token) && !abbreviations.count(text::to_lower(token))) {
              cuts.push_back(last + 1);
            }
          }
        }
      }
      i = last + 1;
    } else if (s[i] == '\n') {
      std::size_t k = i + 1;
      while (k < n && (s[k] == ' ' || s[k] == '\t' || s[k] == '\r')) ++k;
      if (k < n && s[k] == '\n') cuts.push_back(i);
      i = k;
    } else {
      ++i;
    }
  }
  cuts.push_back(n);

  std::vector<SentenceSpan> spans;
  std::size_t begin = 0;
  for (std::size_t cut : cuts) {
    if (cut < begin) continue;
    std::size_t a = begin;
    std::size_t b = cut;
    while (a < b && text::is_space(s[a])) ++a;
    while (b > a && text::is_space(s[b - 1])) --b;
    if (a < b) spans.push_back({a, b});
    begin = cut;
  }
  return spans;
}

const std::set<std::string>& default_abbreviations() {
  static const std::set<std::string> abbreviations = {
      "a.u.b.", "blz.",  "bijv.",  "bv.",  "ca.",    "d.w.z.", "dhr.",  "dr.",   "drs.",
      "e.d.",   "e.g.",  "enz.",   "etc.", "excl.",  "fig.",   "i.e.",  "i.v.m.", "incl.",
      "ing.",   "ir.",   "jr.",    "m.a.w.", "m.b.t.", "max.", "mevr.", "mg.",   "min.",
      "mr.",    "mw.",   "n.v.t.", "nr.",  "no.",    "o.a.",   "o.b.v.", "prof.", "resp.",
      "sr.",    "st.",   "t.o.v.", "vgl.", "vs.",    "z.g.",   "z.s.m.", "zgn."};
  return abbreviations;
}

}  // namespace belforge
