#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "belforge/error.hpp"
#include "belforge/ontology.hpp"
#include "belforge/random.hpp"
#include "belforge/text.hpp"
#include "oracles.hpp"

using namespace belforge;
using belforge::testing::data_path;

namespace {

FilterConfig fixture_config() {
  FilterConfig f;
  f.drop_vocabs = {"LNC-NL-NL", "ICPC2ICD10DUT"};
  f.descriptive_subterm_patterns = {{", niet gespecificeerd", {"MDRDUT"}}, {"NAO", {"MDRDUT"}}};
  f.drop_tuis = {"T079", "T080"};
  f.drug_vocabs = {"RXNORM"};
  f.languages = {"DUT"};
  return f;
}

struct Fixture {
  std::vector<TermRecord> concepts;
  std::vector<SemanticTypeRow> types;
  SemanticGroupMap groups;
  std::vector<CrosswalkRow> crosswalk;
};

Fixture load_fixture() {
  Fixture f;
  std::ifstream c(data_path("ontology/concepts.rrf"));
  f.concepts = parse_concepts(c).records;
  std::ifstream t(data_path("ontology/semantic_types.rrf"));
  f.types = parse_semantic_types(t).records;
  std::ifstream g(data_path("ontology/semantic_groups.txt"));
  f.groups = parse_semantic_groups(g);
  std::ifstream x(data_path("ontology/crosswalk.txt"));
  f.crosswalk = parse_crosswalk(x).records;
  return f;
}

}  // namespace

TEST_CASE("parse_concepts: identity column map") {
  std::istringstream in("C0000001|DUT|MDRDUT|10001|koorts\n");
  const auto p = parse_concepts(in);
  REQUIRE(p.records.size() == 1);
  CHECK(p.malformed == 0);
  const TermRecord& r = p.records[0];
  CHECK(r.term_id == 0);
  CHECK(r.cui == "C0000001");
  CHECK(r.language == "DUT");
  CHECK(r.vocab == "MDRDUT");
  CHECK(r.source_code == "10001");
  CHECK(r.text == "koorts");
}

TEST_CASE("parse_concepts: empty and short lines") {
  std::istringstream empty("");
  const auto e = parse_concepts(empty);
  CHECK(e.records.empty());
  CHECK(e.malformed == 0);

  std::istringstream in("C0000001|DUT|MDRDUT\nC0000002|DUT|MSHDUT|x|hoofdpijn\n");
  const auto p = parse_concepts(in);
  CHECK(p.malformed == 1);
  REQUIRE(p.records.size() == 1);
  CHECK(p.records[0].term_id == 0);
}

TEST_CASE("parse_concepts: MRCONSO-style column map") {
  std::istringstream in("C0000005|DUT|P|L1|PF|S1|Y|A1||M1|D1|MSHDUT|MH|D006973|hypertensie|0|N||\n");
  const auto p = parse_concepts(in, ConceptColumns{0, 1, 11, 13, 14});
  REQUIRE(p.records.size() == 1);
  CHECK(p.records[0].vocab == "MSHDUT");
  CHECK(p.records[0].source_code == "D006973");
  CHECK(p.records[0].text == "hypertensie");
}

TEST_CASE("parse_relations drops self-loops silently") {
  std::istringstream in(
      "C0000001|A|AUI|RN|C0000002|B|AUI||R||MSH|\n"
      "C0000003|A|AUI|RO|C0000003|B|AUI||R||MSH|\n");
  const auto p = parse_relations(in);
  CHECK(p.records.size() == 1);
  CHECK(p.malformed == 0);
  CHECK(p.records[0] == RelationRow{"C0000001", "RN", "C0000002", "MSH"});
}

TEST_CASE("semantic groups") {
  SemanticGroupMap m;
  m.add("T047", "DISO");
  CHECK(m.group_of("T047") == "DISO");
  CHECK(m.group_of("T999") == "OTHER");
  CHECK_THROWS_AS(m.add("T001", "NOPE"), DataError);
}

TEST_CASE("crosswalk_terms examples") {
  const std::vector<TermRecord> bridge = {
      {0, "C0000002", "ENG", "SNOMEDCT_US", "123", "fever"},
      {1, "C0000002", "ENG", "SNOMEDCT_US", "456", "pyrexia"},
      {2, "C0000003", "ENG", "SNOMEDCT_US", "456", "high temperature"},
  };
  const auto r = crosswalk_terms({{123, "koorts"}, {456, "verhoging"}, {789, "onbekend"}}, bridge,
                                 {"SNOMEDCT_NL", "DUT", 100});
  REQUIRE(r.added.size() == 1);
  CHECK(r.added[0].cui == "C0000002");
  CHECK(r.added[0].term_id == 100);
  CHECK(r.added[0].text == "koorts");
  CHECK(r.added[0].vocab == "SNOMEDCT_NL");
  CHECK(r.dropped.at(456) == CrosswalkDrop::kAmbiguous);
  CHECK(r.dropped.at(789) == CrosswalkDrop::kNoMatch);

  CHECK(crosswalk_terms({}, bridge).added.empty());
}

TEST_CASE("build_ontology small examples") {
  FilterConfig cfg;
  cfg.drop_vocabs = {"LNC-NL-NL"};
  auto out = build_ontology({{0, "C0000001", "DUT", "LNC-NL-NL", "", "glucose"}}, {}, {}, {}, cfg);
  CHECK(out.records.empty());
  CHECK(out.stats.steps.front() == std::pair<std::string, std::int64_t>{"drop_vocabs", 0});

  FilterConfig plain;
  out = build_ontology({{0, "C0000001", "DUT", "MSHDUT", "", "Koorts"},
                        {1, "C0000001", "DUT", "MDRDUT", "", "koorts"}},
                       {}, {}, {}, plain);
  REQUIRE(out.records.size() == 1);
  CHECK(out.records[0].text == "Koorts");
  CHECK(out.records[0].group == "OTHER");
}

TEST_CASE("build_ontology: 60-record fixture matches the hand-simulated pipeline") {
  const Fixture f = load_fixture();
  REQUIRE(f.concepts.size() == 60);
  const OntologyBuild b = build_ontology(f.concepts, f.types, f.groups, f.crosswalk, fixture_config());

  const StepStats expected{{{"drop_vocabs", 32},
                            {"remove_subterms", 31},
                            {"dedupe", 28},
                            {"add_crosswalk", 32},
                            {"drop_semantic_types", 27},
                            {"add_drug_names", 32},
                            {"assign_groups", 32}}};
  CHECK(b.stats == expected);

  std::ifstream in(data_path("ontology/expected_ontology.jsonl"));
  const auto want = parse_ontology(in);
  CHECK(b.records == want);
  CHECK(b.crosswalk.added.size() == 5);
  CHECK(b.crosswalk.dropped.at(22298006) == CrosswalkDrop::kAmbiguous);
  CHECK(b.crosswalk.dropped.at(999999999) == CrosswalkDrop::kNoMatch);
}

TEST_CASE("fixture: OTHER exactly for cuis without a mapped type") {
  const Fixture f = load_fixture();
  const OntologyBuild b = build_ontology(f.concepts, f.types, f.groups, f.crosswalk, fixture_config());
  for (const auto& r : b.records) {
    bool mapped = false;
    for (const auto& t : f.types) {
      if (t.cui == r.cui) {
        mapped = f.groups.entries().count(t.tui) > 0;
        break;
      }
    }
    CHECK_MESSAGE((r.group == "OTHER") == !mapped, r.cui);
  }
}

TEST_CASE("dedupe idempotence on the fixture output") {
  const Fixture f = load_fixture();
  FilterConfig cfg = fixture_config();
  const OntologyBuild first = build_ontology(f.concepts, f.types, f.groups, f.crosswalk, cfg);
  cfg.languages.clear();
  cfg.drug_vocabs.clear();
  const OntologyBuild again = build_ontology(to_term_records(first.records), f.types, f.groups, {}, cfg);
  CHECK(again.records == first.records);
}

TEST_CASE("property: step monotonicity and unique dedupe keys on random inputs") {
  Rng rng = make_rng(11, 1);
  const std::vector<std::string> vocabs = {"A", "B", "C", "DRUG", "DROP"};
  const std::vector<std::string> words = {"koorts", "Koorts", "pijn", "PIJN", "hoofd pijn", "x NAO", "NAO"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TermRecord> concepts;
    const std::size_t n = uniform_below(rng, 40);
    for (std::size_t i = 0; i < n; ++i) {
      concepts.push_back({static_cast<std::int64_t>(i), "C000000" + std::to_string(uniform_below(rng, 6)),
                          uniform01(rng) < 0.7 ? "DUT" : "ENG", vocabs[uniform_below(rng, vocabs.size())],
                          std::to_string(uniform_below(rng, 5) + 1), words[uniform_below(rng, words.size())]});
    }
    std::vector<SemanticTypeRow> types;
    for (int c = 0; c < 6; ++c) {
      if (uniform01(rng) < 0.8) types.push_back({"C000000" + std::to_string(c), c % 3 ? "T047" : "T079", ""});
    }
    std::vector<CrosswalkRow> xw;
    for (int i = 0; i < 4; ++i) xw.push_back({static_cast<std::int64_t>(uniform_below(rng, 7) + 1), words[uniform_below(rng, words.size())]});
    FilterConfig cfg;
    cfg.drop_vocabs = {"DROP"};
    cfg.descriptive_subterm_patterns = {{"NAO", {"A", "B"}}};
    cfg.drop_tuis = {"T079"};
    cfg.drug_vocabs = {"DRUG"};
    cfg.languages = {"DUT"};
    cfg.bridge_vocab = "C";
    SemanticGroupMap groups;
    groups.add("T047", "DISO");
    const auto b = build_ontology(concepts, types, groups, xw, cfg);
    const auto& s = b.stats.steps;
    REQUIRE(s.size() == 7);
    CHECK(s[1].second <= s[0].second);
    CHECK(s[2].second <= s[1].second);
    CHECK(s[3].second >= s[2].second);
    CHECK(s[4].second <= s[3].second);
    CHECK(s[5].second >= s[4].second);
    CHECK(s[6].second == static_cast<std::int64_t>(b.records.size()));
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& r : b.records) CHECK(keys.insert({r.cui, text::to_lower(r.text)}).second);
  }
}

TEST_CASE("serialize/parse round trip") {
  const std::vector<OntologyRecord> recs = {
      {0, "C0000001", "koorts", "MDRDUT", "DISO"},
      {4, "C0000002", "a|b \"quoted\" \\ tab\t", "MSHDUT", "OTHER"},
      {9, "C0000003", "Patiënt ĳs 漢字 😀", "X", "CHEM"},
  };
  std::stringstream ss;
  serialize_ontology(recs, ss);
  CHECK(ss.str().find("\"a|b \\\"quoted\\\" \\\\ tab\\t\"") != std::string::npos);
  CHECK(parse_ontology(ss) == recs);

  std::stringstream empty;
  serialize_ontology({}, empty);
  CHECK(empty.str().empty());
  CHECK(parse_ontology(empty).empty());
}

TEST_CASE("serialize orders by term_id") {
  std::stringstream ss;
  serialize_ontology({{5, "C0000001", "b", "V", "DISO"}, {1, "C0000001", "a", "V", "DISO"}}, ss);
  CHECK(ss.str().rfind("{\"term_id\":1,", 0) == 0);
}

TEST_CASE("property: random unicode records round-trip") {
  Rng rng = make_rng(5, 2);
  const std::vector<std::string> pieces = {"a", "Z", " ", "|", "\"", "\\", "ë", "ĳ", "漢", "😀", "\t", "/", "{"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<OntologyRecord> recs;
    const std::size_t n = uniform_below(rng, 8);
    for (std::size_t i = 0; i < n; ++i) {
      std::string t;
      const std::size_t len = 1 + uniform_below(rng, 12);
      for (std::size_t k = 0; k < len; ++k) t += pieces[uniform_below(rng, pieces.size())];
      recs.push_back({static_cast<std::int64_t>(i * 3), "C0000001", t, "V", "DISO"});
    }
    std::stringstream ss;
    serialize_ontology(recs, ss);
    CHECK(parse_ontology(ss) == recs);
  }
}

TEST_CASE("parse_ontology reports the failing line") {
  std::istringstream in("{\"term_id\":0,\"cui\":\"C0000001\",\"text\":\"a\",\"vocab\":\"V\",\"group\":\"DISO\"}\n{oops\n");
  try {
    parse_ontology(in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.location() == 2);
  }
}

TEST_CASE("step stats json") {
  StepStats s{{{"drop_vocabs", 3}}};
  CHECK(step_stats_json(s).find("\"drop_vocabs\"") != std::string::npos);
}

TEST_CASE("empty subterm vocab list applies everywhere") {
  FilterConfig cfg;
  cfg.descriptive_subterm_patterns = {{" NAO", {}}};
  const auto b = build_ontology({{0, "C0000001", "DUT", "ANY", "", "koorts NAO"}}, {}, {}, {}, cfg);
  REQUIRE(b.records.size() == 1);
  CHECK(b.records[0].text == "koorts");
}

TEST_CASE("config validation") {
  FilterConfig cfg;
  cfg.drop_vocabs = {""};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
