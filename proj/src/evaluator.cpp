#include "belforge/evaluator.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

#include "belforge/error.hpp"

namespace belforge {

bool RelationGraph::add_edge(const std::string& a, const std::string& b) {
  if (a == b) return false;
  if (!adjacency_[a].insert(b).second) return false;
  adjacency_[b].insert(a);
  ++edges_;
  return true;
}

bool RelationGraph::connected(const std::string& a, const std::string& b) const {
  const auto it = adjacency_.find(a);
  return it != adjacency_.end() && it->second.count(b) > 0;
}

const std::set<std::string>* RelationGraph::neighbors(const std::string& cui) const {
  const auto it = adjacency_.find(cui);
  return it == adjacency_.end() ? nullptr : &it->second;
}

RelationGraph build_relation_graph(const std::vector<RelationRow>& rows) {
  RelationGraph g;
  for (const auto& r : rows) g.add_edge(r.cui1, r.cui2);
  return g;
}

EvalReport evaluate(const Predictions& predictions, const std::vector<GoldMention>& gold,
                    const RelationGraph& graph, bool per_group) {
  EvalReport report;
  report.total.group = "Total";
  std::map<std::string, GroupScore> groups;
  for (const auto& g : gold) {
    bool exact = false;
    bool near = false;
    const auto it = predictions.find(g.mention);
    if (it != predictions.end()) {
      exact = it->second == g.gold_cui;
      near = exact || graph.connected(it->second, g.gold_cui);
    }
    for (GroupScore* row : {&report.total, per_group ? &groups[g.group] : nullptr}) {
      if (!row) continue;
      ++row->count;
      row->correct += exact;
      row->one_dist_correct += near;
    }
  }
  for (auto& [code, row] : groups) {
    row.group = code;
    report.groups.push_back(row);
  }
  std::stable_sort(report.groups.begin(), report.groups.end(),
                   [](const GroupScore& a, const GroupScore& b) { return a.count > b.count; });
  return report;
}

std::vector<GoldMention> gold_from_corpus(const CorpusSlice& corpus,
                                          const std::vector<OntologyRecord>& ontology) {
  std::unordered_map<std::string, std::string> group_by_cui;
  for (const auto& r : ontology) group_by_cui.emplace(r.cui, r.group);
  std::vector<GoldMention> gold;
  gold.reserve(corpus.mentions.size());
  for (const auto& m : corpus.mentions) {
    const auto it = group_by_cui.find(m.cui);
    gold.push_back({m.anchor, m.cui, it == group_by_cui.end() ? kOtherGroup : it->second});
  }
  return gold;
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

nlohmann::ordered_json row_json(const GroupScore& s) {
  nlohmann::ordered_json j;
  j["group"] = s.group;
  j["count"] = s.count;
  j["correct"] = s.correct;
  j["one_dist_correct"] = s.one_dist_correct;
  j["accuracy"] = s.accuracy();
  j["one_dist_accuracy"] = s.one_dist_accuracy();
  return j;
}

GroupScore row_from_json(const nlohmann::json& j) {
  GroupScore s;
  s.group = j.at("group").get<std::string>();
  s.count = j.at("count").get<std::int64_t>();
  s.correct = j.at("correct").get<std::int64_t>();
  s.one_dist_correct = j.at("one_dist_correct").get<std::int64_t>();
  if (s.count < 0 || s.correct < 0 || s.correct > s.one_dist_correct || s.one_dist_correct > s.count) {
    throw DataError("report row '" + s.group + "' has inconsistent counts");
  }
  return s;
}

}  // namespace

std::string render_report_text(const EvalReport& report) {
  std::vector<const GroupScore*> rows;
  for (const auto& g : report.groups) rows.push_back(&g);
  rows.push_back(&report.total);

  std::size_t width = 5;
  for (const auto* r : rows) width = std::max(width, r->group.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %7s %9s %12s\n", static_cast<int>(width), "Group", "Count",
                "Accuracy", "1-dist acc.");
  out += line;
  for (const auto* r : rows) {
    std::snprintf(line, sizeof line, "%-*s %7lld %9s %12s\n", static_cast<int>(width),
                  r->group.c_str(), static_cast<long long>(r->count), percent(r->accuracy()).c_str(),
                  percent(r->one_dist_accuracy()).c_str());
    out += line;
  }
  return out;
}

std::string render_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["seed"] = report.seed;
  j["epochs"] = report.epochs;
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : report.groups) j["groups"].push_back(row_json(g));
  j["total"] = row_json(report.total);
  return j.dump();
}

EvalReport parse_report_json(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    EvalReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.epochs = j.at("epochs").get<std::int64_t>();
    for (const auto& g : j.at("groups")) r.groups.push_back(row_from_json(g));
    r.total = row_from_json(j.at("total"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

}  // namespace belforge
