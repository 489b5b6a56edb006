#include <cstdio>
#include <filesystem>
#include <istream>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

#include "belforge/corpus.hpp"
#include "belforge/error.hpp"
#include "belforge/io.hpp"
#include "belforge/log.hpp"
#include "belforge/text.hpp"

namespace belforge {

std::string normalize_title(std::string_view title) {
  std::string s(title);
  if (const auto hash = s.find('#'); hash != std::string::npos) s.erase(hash);
  for (char& c : s) {
    if (c == '_') c = ' ';
  }
  return text::lower_first(text::collapse_whitespace(s));
}

void ArticleCuiMap::add(std::string_view title, std::string qid, std::string cui) {
  const std::string key = normalize_title(title);
  if (key.empty()) {
    ++malformed;
    return;
  }
  if (!entries.emplace(key, ArticleEntry{std::move(qid), std::move(cui)}).second) ++duplicates;
}

const ArticleEntry* ArticleCuiMap::find(std::string_view raw_title) const {
  const auto it = entries.find(normalize_title(raw_title));
  return it == entries.end() ? nullptr : &it->second;
}

ArticleCuiMap load_article_cui_map_tsv(std::istream& in) {
  ArticleCuiMap map;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, '\t');
    if (f.size() < 3 || !text::is_qid(text::trim(f[0])) || !text::is_cui(text::trim(f[1]))) {
      ++map.malformed;
      continue;
    }
    map.add(text::trim(f[2]), std::string(text::trim(f[0])), std::string(text::trim(f[1])));
  }
  if (in.bad()) throw IoError("read error on article map");
  return map;
}

std::string build_sparql_query(const SparqlSource& source) {
  return "SELECT ?concept ?conceptLabel ?cui ?article  WHERE {\n"
         "  ?concept wdt:" + source.property + " ?cui .\n"
         "  ?article schema:about ?concept .\n"
         "  ?article schema:isPartOf \n"
         "        <" + source.site + ">.\n"
         "\n"
         "  SERVICE wikibase:label {\n"
         "    bd:serviceParam wikibase:language \"" + source.language + "\"\n"
         "  }\n"
         "}\n";
}

namespace {

// Last path segment of an entity or article IRI, percent-decoded.
std::string last_segment(std::string_view iri, std::string_view marker) {
  const auto pos = iri.rfind(marker);
  if (pos == std::string_view::npos) return {};
  return httplib::detail::decode_url(std::string(iri.substr(pos + marker.size())), false);
}

}  // namespace

ArticleCuiMap parse_sparql_results(std::string_view body) {
  const nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("results") || !doc["results"].contains("bindings")) {
    throw DataError("SPARQL response is not a results document");
  }
  ArticleCuiMap map;
  for (const auto& b : doc["results"]["bindings"]) {
    auto value = [&](const char* key) -> std::string {
      if (!b.is_object() || !b.contains(key) || !b[key].contains("value") ||
          !b[key]["value"].is_string()) {
        return {};
      }
      return b[key]["value"].get<std::string>();
    };
    const std::string qid = last_segment(value("concept"), "/entity/");
    const std::string cui(text::trim(value("cui")));
    const std::string title = last_segment(value("article"), "/wiki/");
    if (!text::is_qid(qid) || !text::is_cui(cui) || title.empty()) {
      ++map.malformed;
      continue;
    }
    map.add(title, qid, cui);
  }
  return map;
}

ArticleCuiMap load_article_cui_map_sparql(const SparqlSource& source) {
  namespace fs = std::filesystem;
  const std::string query = build_sparql_query(source);

  fs::path cache_file;
  if (!source.cache_dir.empty()) {
    char name[40];
    std::snprintf(name, sizeof(name), "sparql-%016llx.json",
                  static_cast<unsigned long long>(text::fnv1a64(source.endpoint + "\n" + query)));
    cache_file = fs::path(source.cache_dir) / name;
    if (fs::exists(cache_file)) {
      log::info("using cached SPARQL response " + cache_file.string());
      return parse_sparql_results(io::read_file(cache_file));
    }
  }

  // endpoint = scheme://host[:port]/path
  const auto scheme_end = source.endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("invalid endpoint '" + source.endpoint + "'");
  const auto path_start = source.endpoint.find('/', scheme_end + 3);
  const std::string origin = source.endpoint.substr(0, path_start);
  const std::string path =
      path_start == std::string::npos ? std::string("/") : source.endpoint.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(source.timeout_seconds, 0);
  client.set_read_timeout(source.timeout_seconds, 0);
  client.set_follow_location(true);
  const httplib::Params params = {{"query", query}, {"format", "json"}};
  const httplib::Headers headers = {{"Accept", "application/sparql-results+json"},
                                    {"User-Agent", "belforge/1.0 (entity-linking corpus builder)"}};
  const auto res = client.Get(path, params, headers);
  if (!res) {
    throw NetworkError("SPARQL endpoint unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status >= 400) {
    throw NetworkError("SPARQL endpoint returned HTTP " + std::to_string(res->status), res->status);
  }
  ArticleCuiMap map = parse_sparql_results(res->body);
  if (!cache_file.empty()) io::write_atomic(cache_file, res->body);
  return map;
}

}  // namespace belforge
