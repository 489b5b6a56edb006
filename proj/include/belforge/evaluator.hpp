#pragma once

// Accuracy and 1-distance accuracy (prediction equals the gold concept or is
// one relation edge away from it), per semantic group and micro-averaged.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "belforge/corpus.hpp"
#include "belforge/ontology.hpp"

namespace belforge {

struct GoldMention {
  std::string mention;
  std::string gold_cui;
  std::string group;

  bool operator==(const GoldMention&) const = default;
};

// Undirected, relation-type-agnostic adjacency without self-loops.
class RelationGraph {
 public:
  // Returns false for self-loops and edges already present.
  bool add_edge(const std::string& a, const std::string& b);
  bool connected(const std::string& a, const std::string& b) const;
  const std::set<std::string>* neighbors(const std::string& cui) const;

  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edges_; }

 private:
  std::map<std::string, std::set<std::string>> adjacency_;
  std::size_t edges_ = 0;
};

RelationGraph build_relation_graph(const std::vector<RelationRow>& rows);

struct GroupScore {
  std::string group;
  std::int64_t count = 0;
  std::int64_t correct = 0;
  std::int64_t one_dist_correct = 0;

  double accuracy() const { return count ? double(correct) / double(count) : 0.0; }
  double one_dist_accuracy() const {
    return count ? double(one_dist_correct) / double(count) : 0.0;
  }
  bool operator==(const GroupScore&) const = default;
};

struct EvalReport {
  std::vector<GroupScore> groups;  // descending count, then group code
  GroupScore total;                // group "Total"
  std::uint64_t seed = 0;
  std::int64_t epochs = 0;

  bool operator==(const EvalReport&) const = default;
};

using Predictions = std::unordered_map<std::string, std::string>;

// A gold mention without a prediction counts as wrong on both metrics.
// With per_group false only the total row is filled.
EvalReport evaluate(const Predictions& predictions, const std::vector<GoldMention>& gold,
                    const RelationGraph& graph, bool per_group = true);

// Gold mentions from a corpus slice; the group is that of the first
// ontology record carrying the cui, OTHER when the cui is not in it.
std::vector<GoldMention> gold_from_corpus(const CorpusSlice& corpus,
                                          const std::vector<OntologyRecord>& ontology);

// Aligned table, percentages to one decimal.
std::string render_report_text(const EvalReport& report);
// Full-precision JSON document (single line).
std::string render_report_json(const EvalReport& report);
// Throws DataError on malformed documents.
EvalReport parse_report_json(std::string_view json);

}  // namespace belforge
