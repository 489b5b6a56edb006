#include <cstring>
#include <exception>
#include <istream>
#include <memory>

#include <expat.h>

#include "belforge/corpus.hpp"
#include "belforge/error.hpp"

namespace belforge {

namespace {

// Fields of the MediaWiki export we capture. `id` is only taken when it is a
// direct child of <page>, not the revision or contributor id.
enum class Field { kNone, kTitle, kNs, kId, kText };

struct DumpState {
  const std::function<void(WikiPage&&)>* on_page = nullptr;
  XML_Parser parser = nullptr;
  std::vector<std::string> stack;
  bool in_page = false;
  bool has_text = false;
  WikiPage page;
  Field field = Field::kNone;
  std::string buffer;
  std::size_t delivered = 0;
  std::exception_ptr error;
};

void XMLCALL on_start(void* data, const XML_Char* name, const XML_Char** attrs) {
  auto& s = *static_cast<DumpState*>(data);
  const std::string_view element(name);
  const std::string_view parent = s.stack.empty() ? std::string_view() : s.stack.back();
  s.stack.emplace_back(element);
  if (element == "page") {
    s.in_page = true;
    s.has_text = false;
    s.page = WikiPage{};
    return;
  }
  if (!s.in_page) return;
  s.buffer.clear();
  if (element == "title" && parent == "page") {
    s.field = Field::kTitle;
  } else if (element == "ns" && parent == "page") {
    s.field = Field::kNs;
  } else if (element == "id" && parent == "page") {
    s.field = Field::kId;
  } else if (element == "text" && parent == "revision") {
    s.field = Field::kText;
    s.has_text = true;
  } else if (element == "redirect" && parent == "page") {
    for (int i = 0; attrs[i]; i += 2) {
      if (std::strcmp(attrs[i], "title") == 0) s.page.redirect = attrs[i + 1];
    }
  }
}

void XMLCALL on_chars(void* data, const XML_Char* chars, int len) {
  auto& s = *static_cast<DumpState*>(data);
  if (s.field != Field::kNone) s.buffer.append(chars, static_cast<std::size_t>(len));
}

void XMLCALL on_end(void* data, const XML_Char* name) {
  auto& s = *static_cast<DumpState*>(data);
  const std::string_view element(name);
  if (!s.stack.empty()) s.stack.pop_back();
  switch (s.field) {
    case Field::kTitle:
      s.page.title = std::move(s.buffer);
      break;
    case Field::kNs:
      s.page.ns = std::atoi(s.buffer.c_str());
      break;
    case Field::kId:
      s.page.page_id = std::atoll(s.buffer.c_str());
      break;
    case Field::kText:
      s.page.wikitext = std::move(s.buffer);
      break;
    case Field::kNone:
      break;
  }
  s.field = Field::kNone;
  s.buffer.clear();

  if (element == "page" && s.in_page) {
    s.in_page = false;
    if (s.page.ns != 0 || !s.has_text) return;
    try {
      (*s.on_page)(std::move(s.page));
      ++s.delivered;
    } catch (...) {
      s.error = std::current_exception();
      XML_StopParser(s.parser, XML_FALSE);
    }
  }
}

}  // namespace

std::size_t parse_dump(std::istream& in, const std::function<void(WikiPage&&)>& on_page) {
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreate("UTF-8"), &XML_ParserFree);
  if (!parser) throw std::bad_alloc();
  DumpState state;
  state.on_page = &on_page;
  state.parser = parser.get();
  XML_SetUserData(parser.get(), &state);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_chars);

  constexpr std::size_t kChunk = 1 << 16;
  std::vector<char> chunk(kChunk);
  for (;;) {
    in.read(chunk.data(), static_cast<std::streamsize>(kChunk));
    const std::streamsize got = in.gcount();
    if (in.bad()) throw IoError("read error while streaming dump");
    const bool last = got < static_cast<std::streamsize>(kChunk);
    if (XML_Parse(parser.get(), chunk.data(), static_cast<int>(got), last) == XML_STATUS_ERROR) {
      if (state.error) std::rethrow_exception(state.error);
      const auto offset = static_cast<std::int64_t>(XML_GetCurrentByteIndex(parser.get()));
      throw DataError("malformed dump XML at byte " + std::to_string(offset) + ": " +
                          XML_ErrorString(XML_GetErrorCode(parser.get())),
                      offset);
    }
    if (last) break;
  }
  return state.delivered;
}

std::vector<WikiPage> read_dump(std::istream& in) {
  std::vector<WikiPage> pages;
  parse_dump(in, [&](WikiPage&& page) { pages.push_back(std::move(page)); });
  return pages;
}

std::unordered_map<std::string, std::string> collect_redirects(std::istream& dump) {
  std::unordered_map<std::string, std::string> redirects;
  parse_dump(dump, [&](WikiPage&& page) {
    if (page.redirect) redirects.emplace(normalize_title(page.title), *page.redirect);
  });
  return redirects;
}

}  // namespace belforge
