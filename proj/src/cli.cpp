#include "belforge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_set>

#include "CLI11.hpp"
#include "json.hpp"

#include "belforge/ann_index.hpp"
#include "belforge/corpus.hpp"
#include "belforge/encoder.hpp"
#include "belforge/error.hpp"
#include "belforge/evaluator.hpp"
#include "belforge/io.hpp"
#include "belforge/log.hpp"
#include "belforge/ontology.hpp"
#include "belforge/text.hpp"
#include "belforge/trainer.hpp"

namespace belforge::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kDefaults = R"({
  "seed": 0,
  "paths": {
    "concepts": null, "semantic_types": null, "semantic_groups": null,
    "relations": null, "crosswalk": null,
    "dump": null, "article_map": null, "abbreviations": null,
    "ontology": null, "ontology_stats": null,
    "corpus": null, "corpus_stats": null,
    "star_train": null, "star_validation": null,
    "pairs": null, "finetune_pairs": null,
    "encoder": null, "resume_from": null, "checkpoint_dir": null, "loss_log": null,
    "finetuned_encoder": null, "finetune_loss_log": null,
    "link_encoder": null, "pca": null, "index": null,
    "gold": null, "report": null, "report_text": null
  },
  "ontology": {
    "drop_vocabs": [], "descriptive_subterm_patterns": [], "drop_tuis": [],
    "drug_vocabs": [], "dedupe_case_insensitive": true, "languages": [],
    "bridge_vocab": "SNOMEDCT_US", "crosswalk_vocab": "SNOMEDCT_NL",
    "crosswalk_language": "DUT",
    "concept_columns": {"cui": 0, "language": 1, "vocab": 2, "source_code": 3, "text": 4},
    "semantic_type_columns": {"cui": 0, "tui": 1, "type_name": 3},
    "relation_columns": {"cui1": 0, "rel": 3, "cui2": 4, "vocab": 10},
    "crosswalk_columns": {"sctid": 0, "text": 1},
    "group_columns": {"group": 0, "tui": 2}
  },
  "corpus": {
    "source": "tsv", "endpoint": "https://query.wikidata.org/sparql",
    "site": "https://nl.wikipedia.org/", "property": "P2892", "language": "nl",
    "cache_dir": "", "timeout_seconds": 60, "resolve_redirects": true,
    "split_ratio": 0.8
  },
  "pairs": { "per_mention_cap": 50 },
  "encoder": {
    "n_min": 2, "n_max": 4, "buckets": 16384, "hidden": 128, "dim": 64,
    "lowercase": false, "normalize_output": true
  },
  "train": {
    "epochs": 1, "start_epoch": 0, "learning_rate": 1e-4, "weight_decay": 0.01,
    "batch_size": 512, "margin": 0.2, "sample_anchors": false,
    "alpha": 2.0, "beta": 50.0, "base": 0.5
  },
  "finetune": {
    "epochs": 1, "learning_rate": null, "weight_decay": null, "batch_size": null
  },
  "index": {
    "components": 256, "type": "flat", "nlist": 64, "nprobe": 8,
    "kmeans_iters": 20, "top_k": 5
  }
})";

const json& defaults() {
  static const json d = json::parse(kDefaults);
  return d;
}

const std::map<std::string, std::string>& command_sections() {
  static const std::map<std::string, std::string> m = {
      {"ontology-build", "ontology"}, {"corpus-compile", "corpus"}, {"corpus-subset", "corpus"},
      {"pairs", "pairs"},             {"train", "train"},           {"finetune", "finetune"},
      {"index-build", "index"},       {"link", "index"},            {"evaluate", "index"},
      {"stats", "corpus"}};
  return m;
}

json merge_config(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  json merged = defaults();
  for (const auto& [key, value] : user.items()) {
    if (!merged.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (!merged[key].is_object()) {
      merged[key] = value;
      continue;
    }
    if (!value.is_object()) throw ConfigError("config section '" + key + "' must be an object");
    for (const auto& [leaf, v] : value.items()) {
      if (!merged[key].contains(leaf)) throw ConfigError("unknown config key '" + key + "." + leaf + "'");
      json& slot = merged[key][leaf];
      if (!slot.is_object()) {
        slot = v;
        continue;
      }
      // column maps: partial objects override individual indices
      if (!v.is_object()) throw ConfigError("config key '" + key + "." + leaf + "' must be an object");
      for (const auto& [field, index] : v.items()) {
        if (!slot.contains(field)) {
          throw ConfigError("unknown config key '" + key + "." + leaf + "." + field + "'");
        }
        slot[field] = index;
      }
    }
  }
  return merged;
}

// Resolves an override key to (section, leaf); section is empty for
// top-level keys.
std::pair<std::string, std::string> resolve_key(const std::string& command, std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  const json& d = defaults();
  if (const auto dot = key.find('.'); dot != std::string::npos) {
    std::string section = key.substr(0, dot);
    std::string leaf = key.substr(dot + 1);
    if (d.contains(section) && d[section].is_object() && d[section].contains(leaf)) return {section, leaf};
    throw ConfigError("unknown option --" + key);
  }
  const std::string& own = command_sections().at(command);
  if (d[own].contains(key)) return {own, key};
  if (d.contains(key) && !d[key].is_object()) return {"", key};
  std::vector<std::string> hits;
  for (const auto& [section, body] : d.items()) {
    if (body.is_object() && body.contains(key)) hits.push_back(section);
  }
  if (hits.size() == 1) return {hits.front(), key};
  if (hits.empty()) throw ConfigError("unknown option --" + key);
  std::string all;
  for (const auto& h : hits) all += (all.empty() ? "" : ", ") + h + "." + key;
  throw ConfigError("ambiguous option --" + key + " (" + all + ")");
}

void apply_override(json& merged, const std::string& command, const std::string& key,
                    const std::string& raw) {
  const auto [section, leaf] = resolve_key(command, key);
  const json& def = section.empty() ? defaults()[leaf] : defaults()[section][leaf];
  json& slot = section.empty() ? merged[leaf] : merged[section][leaf];
  if (section == "paths") {
    // An empty value unsets an optional path.
    slot = raw.empty() ? json(nullptr) : json(raw);
    return;
  }
  if (def.is_string()) {
    slot = raw;
    return;
  }
  json parsed = json::parse(raw, nullptr, false);
  if (parsed.is_discarded()) parsed = raw;
  if ((def.is_number() && !parsed.is_number()) || (def.is_boolean() && !parsed.is_boolean()) ||
      (def.is_array() && !parsed.is_array()) || (def.is_object() && !parsed.is_object())) {
    throw ConfigError("option --" + key + " has the wrong type: " + raw);
  }
  slot = std::move(parsed);
}

class Config {
 public:
  Config(json root, fs::path base) : root_(std::move(root)), base_(std::move(base)) {}

  const json& section(const std::string& name) const { return root_.at(name); }

  template <typename T>
  T get(const std::string& sec, const std::string& key) const {
    try {
      return root_.at(sec).at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config value " + sec + "." + key + " has the wrong type");
    }
  }

  // Falls back to train.<key> when finetune.<key> is null.
  template <typename T>
  T finetune_or_train(const std::string& key) const {
    if (root_.at("finetune").at(key).is_null()) return get<T>("train", key);
    return get<T>("finetune", key);
  }

  std::uint64_t seed() const {
    try {
      return root_.at("seed").get<std::uint64_t>();
    } catch (const json::exception&) {
      throw ConfigError("seed must be a non-negative integer");
    }
  }

  std::optional<fs::path> path(const std::string& key) const {
    const json& v = root_.at("paths").at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string() || v.get<std::string>().empty()) {
      throw ConfigError("paths." + key + " must be a non-empty string");
    }
    fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base_ / p;
  }

  fs::path input(const std::string& key) const {
    auto p = path(key);
    if (!p) throw ConfigError("paths." + key + " is required by this command");
    if (!fs::exists(*p)) throw IoError("input " + key + " not found: " + p->string());
    return *p;
  }

  std::optional<fs::path> optional_input(const std::string& key) const {
    auto p = path(key);
    if (p && !fs::exists(*p)) throw IoError("input " + key + " not found: " + p->string());
    return p;
  }

  fs::path output(const std::string& key) const {
    auto p = path(key);
    if (!p) throw ConfigError("paths." + key + " is required by this command");
    return *p;
  }

 private:
  json root_;
  fs::path base_;
};

std::set<std::string> string_set(const Config& c, const std::string& sec, const std::string& key) {
  const auto v = c.get<std::vector<std::string>>(sec, key);
  return {v.begin(), v.end()};
}

FilterConfig filter_config(const Config& c) {
  FilterConfig f;
  f.drop_vocabs = string_set(c, "ontology", "drop_vocabs");
  f.drop_tuis = string_set(c, "ontology", "drop_tuis");
  f.drug_vocabs = string_set(c, "ontology", "drug_vocabs");
  f.languages = string_set(c, "ontology", "languages");
  f.dedupe_case_insensitive = c.get<bool>("ontology", "dedupe_case_insensitive");
  f.bridge_vocab = c.get<std::string>("ontology", "bridge_vocab");
  f.crosswalk_vocab = c.get<std::string>("ontology", "crosswalk_vocab");
  f.crosswalk_language = c.get<std::string>("ontology", "crosswalk_language");
  // Either a bare pattern (applies to every vocabulary) or {"pattern", "vocabs"}.
  for (const auto& p : c.section("ontology").at("descriptive_subterm_patterns")) {
    SubtermPattern sp;
    if (p.is_string()) {
      sp.pattern = p.get<std::string>();
    } else if (p.is_object() && p.contains("pattern") && p["pattern"].is_string()) {
      sp.pattern = p["pattern"].get<std::string>();
      if (p.contains("vocabs")) {
        if (!p["vocabs"].is_array()) throw ConfigError("subterm pattern vocabs must be a list");
        for (const auto& v : p["vocabs"]) sp.vocabs.insert(v.get<std::string>());
      }
    } else {
      throw ConfigError("descriptive_subterm_patterns entries must be strings or {pattern, vocabs}");
    }
    f.descriptive_subterm_patterns.push_back(std::move(sp));
  }
  f.validate();
  return f;
}

std::size_t column(const Config& c, const std::string& map, const std::string& field) {
  try {
    return c.section("ontology").at(map).at(field).get<std::size_t>();
  } catch (const json::exception&) {
    throw ConfigError("ontology." + map + "." + field + " must be a non-negative integer");
  }
}

ConceptColumns concept_columns(const Config& c) {
  const std::string m = "concept_columns";
  return {column(c, m, "cui"), column(c, m, "language"), column(c, m, "vocab"),
          column(c, m, "source_code"), column(c, m, "text")};
}

SemanticTypeColumns semantic_type_columns(const Config& c) {
  const std::string m = "semantic_type_columns";
  return {column(c, m, "cui"), column(c, m, "tui"), column(c, m, "type_name")};
}

RelationColumns relation_columns(const Config& c) {
  const std::string m = "relation_columns";
  return {column(c, m, "cui1"), column(c, m, "rel"), column(c, m, "cui2"), column(c, m, "vocab")};
}

CrosswalkColumns crosswalk_columns(const Config& c) {
  const std::string m = "crosswalk_columns";
  return {column(c, m, "sctid"), column(c, m, "text")};
}

GroupColumns group_columns(const Config& c) {
  const std::string m = "group_columns";
  return {column(c, m, "group"), column(c, m, "tui")};
}

EncoderConfig encoder_config(const Config& c) {
  EncoderConfig e;
  e.n_min = c.get<int>("encoder", "n_min");
  e.n_max = c.get<int>("encoder", "n_max");
  e.buckets = c.get<std::size_t>("encoder", "buckets");
  e.hidden = c.get<std::size_t>("encoder", "hidden");
  e.dim = c.get<std::size_t>("encoder", "dim");
  e.lowercase = c.get<bool>("encoder", "lowercase");
  e.normalize_output = c.get<bool>("encoder", "normalize_output");
  e.validate();
  return e;
}

MiningConfig mining_config(const Config& c) {
  MiningConfig m;
  m.margin = c.get<double>("train", "margin");
  m.sample_anchors = c.get<bool>("train", "sample_anchors");
  m.validate();
  return m;
}

MsLossConfig loss_config(const Config& c) {
  MsLossConfig l;
  l.alpha = c.get<double>("train", "alpha");
  l.beta = c.get<double>("train", "beta");
  l.base = c.get<double>("train", "base");
  l.validate();
  return l;
}

template <typename T, typename F>
T read_with(const fs::path& p, F&& fn) {
  auto in = io::open_input(p);
  return fn(in);
}

std::vector<OntologyRecord> load_ontology(const fs::path& p) {
  return read_with<std::vector<OntologyRecord>>(p, [](std::istream& in) { return parse_ontology(in); });
}

CorpusSlice load_corpus(const fs::path& p) {
  return read_with<CorpusSlice>(p, [](std::istream& in) { return parse_corpus(in); });
}

EncoderParams load_encoder(const fs::path& p) {
  return read_with<EncoderParams>(p, [](std::istream& in) { return load_params(in); });
}

std::vector<PositivePair> load_pairs(const fs::path& p) {
  auto parsed = read_with<Parsed<PositivePair>>(p, [](std::istream& in) { return read_pairs(in); });
  if (parsed.malformed) log::warn(std::to_string(parsed.malformed) + " malformed pair lines skipped");
  return std::move(parsed.records);
}

void save_encoder(const fs::path& p, const EncoderParams& params) {
  io::write_atomic(p, [&](std::ostream& out) { save_params(params, out); });
}

std::set<std::string> load_abbreviations(const fs::path& p) {
  std::set<std::string> out;
  std::istringstream in(io::read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (!t.empty() && t.front() != '#') out.emplace(t);
  }
  return out;
}

fs::path link_encoder_path(const Config& c) {
  if (c.path("link_encoder")) return c.input("link_encoder");
  return c.input("encoder");
}

struct LoadedModel {
  std::vector<OntologyRecord> ontology;
  LinkModel model;
};

LoadedModel load_link_model(const Config& c) {
  LoadedModel m;
  m.ontology = load_ontology(c.input("ontology"));
  m.model.params = load_encoder(link_encoder_path(c));
  m.model.transform = read_with<PcaTransform>(c.input("pca"), [](std::istream& in) { return load_pca(in); });
  m.model.index = read_with<AnnIndex>(c.input("index"), [](std::istream& in) { return load_index(in); });
  if (m.model.transform.input_dim() != m.model.params.config.dim) {
    throw DataError("PCA input dimension does not match the encoder output");
  }
  m.model.cui_by_term = cui_lookup(m.ontology);
  return m;
}

ojson summary(const std::string& command) {
  ojson j;
  j["command"] = command;
  return j;
}

// ---------------------------------------------------------------- commands

ojson cmd_ontology_build(const Config& c) {
  const FilterConfig filter = filter_config(c);
  auto concepts = read_with<Parsed<TermRecord>>(c.input("concepts"),
                                                [&](std::istream& in) { return parse_concepts(in, concept_columns(c)); });
  auto types = read_with<Parsed<SemanticTypeRow>>(
      c.input("semantic_types"), [&](std::istream& in) { return parse_semantic_types(in, semantic_type_columns(c)); });
  std::size_t group_malformed = 0;
  const SemanticGroupMap groups = read_with<SemanticGroupMap>(
      c.input("semantic_groups"),
      [&](std::istream& in) { return parse_semantic_groups(in, group_columns(c), &group_malformed); });
  Parsed<CrosswalkRow> crosswalk;
  if (auto p = c.optional_input("crosswalk")) {
    crosswalk = read_with<Parsed<CrosswalkRow>>(*p, [&](std::istream& in) { return parse_crosswalk(in, crosswalk_columns(c)); });
  }
  const OntologyBuild build =
      build_ontology(concepts.records, types.records, groups, crosswalk.records, filter);

  io::write_atomic(c.output("ontology"),
                   [&](std::ostream& out) { serialize_ontology(build.records, out); });
  if (auto p = c.path("ontology_stats")) io::write_atomic(*p, step_stats_json(build.stats));

  ojson j = summary("ontology-build");
  j["records"] = build.records.size();
  ojson steps;
  for (const auto& [name, remaining] : build.stats.steps) steps[name] = remaining;
  j["steps"] = steps;
  j["crosswalk_added"] = build.crosswalk.added.size();
  j["crosswalk_dropped"] = build.crosswalk.dropped.size();
  j["malformed"] = {{"concepts", concepts.malformed},
                    {"semantic_types", types.malformed},
                    {"semantic_groups", group_malformed},
                    {"crosswalk", crosswalk.malformed}};
  return j;
}

ojson cmd_corpus_compile(const Config& c) {
  const std::string source = c.get<std::string>("corpus", "source");
  ArticleCuiMap map;
  if (source == "tsv") {
    map = read_with<ArticleCuiMap>(c.input("article_map"),
                                   [](std::istream& in) { return load_article_cui_map_tsv(in); });
  } else if (source == "sparql") {
    SparqlSource s;
    s.endpoint = c.get<std::string>("corpus", "endpoint");
    s.site = c.get<std::string>("corpus", "site");
    s.property = c.get<std::string>("corpus", "property");
    s.language = c.get<std::string>("corpus", "language");
    s.timeout_seconds = c.get<int>("corpus", "timeout_seconds");
    s.cache_dir = c.get<std::string>("corpus", "cache_dir");
    if (const char* env = std::getenv("BELFORGE_CACHE_DIR"); env && *env) s.cache_dir = env;
    map = load_article_cui_map_sparql(s);
  } else {
    throw ConfigError("corpus.source must be 'tsv' or 'sparql', got '" + source + "'");
  }
  if (map.empty()) log::warn("the article-to-concept mapping is empty; no mentions will be produced");

  const fs::path dump = c.input("dump");
  CompileOptions options;
  if (auto p = c.optional_input("abbreviations")) options.abbreviations = load_abbreviations(*p);
  if (c.get<bool>("corpus", "resolve_redirects")) {
    auto in = io::open_input(dump);
    options.redirects = collect_redirects(in);
  }
  std::optional<std::vector<OntologyRecord>> ontology;
  if (auto p = c.path("ontology"); p && fs::exists(*p)) ontology = load_ontology(*p);

  CorpusCompiler compiler(map, options);
  {
    auto in = io::open_input(dump);
    parse_dump(in, [&](WikiPage&& page) { compiler.add_page(page); });
  }
  const CompiledCorpus compiled = std::move(compiler).finish(ontology ? &*ontology : nullptr);

  io::write_atomic(c.output("corpus"), [&](std::ostream& out) { serialize_corpus(compiled.corpus, out); });
  if (auto p = c.path("corpus_stats")) io::write_atomic(*p, corpus_stats_json(compiled.stats));

  ojson j = summary("corpus-compile");
  j["pages"] = compiled.pages;
  j["sentences"] = compiled.corpus.sentences.size();
  j["mentions"] = compiled.corpus.mentions.size();
  j["map_entries"] = map.size();
  j["map_duplicates"] = map.duplicates;
  j["map_malformed"] = map.malformed;
  j["redirects"] = options.redirects.size();
  j["strip_warnings"] = compiled.strip_warnings;
  return j;
}

ojson cmd_corpus_subset(const Config& c) {
  const CorpusSlice corpus = load_corpus(c.input("corpus"));
  const auto ontology = load_ontology(c.input("ontology"));
  const StarSubset star =
      build_star_subset(corpus, ontology, c.get<double>("corpus", "split_ratio"), c.seed());
  io::write_atomic(c.output("star_train"), [&](std::ostream& out) { serialize_corpus(star.train, out); });
  io::write_atomic(c.output("star_validation"),
                   [&](std::ostream& out) { serialize_corpus(star.validation, out); });
  ojson j = summary("corpus-subset");
  j["kept"] = star.kept;
  j["train"] = star.train.mentions.size();
  j["validation"] = star.validation.mentions.size();
  j["dropped_duplicates"] = star.dropped_duplicates;
  j["dropped_unlinkable"] = star.dropped_unlinkable;
  return j;
}

ojson cmd_pairs(const Config& c) {
  const auto ontology = load_ontology(c.input("ontology"));
  const auto pretrain = generate_pretrain_pairs(ontology);
  io::write_atomic(c.output("pairs"), [&](std::ostream& out) { write_pairs(pretrain, out); });
  ojson j = summary("pairs");
  j["pretrain_pairs"] = pretrain.size();
  if (c.path("finetune_pairs")) {
    const CorpusSlice star = load_corpus(c.input("star_train"));
    const auto cap = c.get<std::size_t>("pairs", "per_mention_cap");
    const auto finetune = generate_finetune_pairs(star, ontology, cap);
    io::write_atomic(c.output("finetune_pairs"), [&](std::ostream& out) { write_pairs(finetune, out); });
    j["finetune_pairs"] = finetune.size();
  }
  return j;
}

ojson cmd_train(const Config& c) {
  const auto pairs = load_pairs(c.input("pairs"));
  TrainConfig train;
  train.learning_rate = c.get<double>("train", "learning_rate");
  train.weight_decay = c.get<double>("train", "weight_decay");
  train.batch_size = c.get<std::size_t>("train", "batch_size");
  train.seed = c.seed();
  train.validate();
  TrainingOptions options;
  options.epochs = c.get<int>("train", "epochs");
  options.start_epoch = c.get<int>("train", "start_epoch");
  if (auto p = c.path("checkpoint_dir")) options.checkpoint_dir = *p;

  std::optional<EncoderParams> initial;
  if (options.start_epoch > 0) {
    if (!c.path("resume_from")) throw ConfigError("train.start_epoch > 0 needs paths.resume_from");
    initial = load_encoder(c.input("resume_from"));
  }
  const EncoderConfig encoder = initial ? initial->config : encoder_config(c);
  const TrainingRun run = run_training(Stage::kPretrain, pairs, initial, encoder, train,
                                       mining_config(c), loss_config(c), options);
  save_encoder(c.output("encoder"), run.params);
  if (auto p = c.path("loss_log")) io::write_atomic(*p, loss_log_json(run.loss_log));

  ojson j = summary("train");
  j["pairs"] = pairs.size();
  j["epochs"] = options.epochs;
  j["loss"] = run.loss_log;
  return j;
}

ojson cmd_finetune(const Config& c) {
  const auto pairs = load_pairs(c.input("finetune_pairs"));
  const EncoderParams initial = load_encoder(c.input("encoder"));
  TrainConfig train;
  train.learning_rate = c.finetune_or_train<double>("learning_rate");
  train.weight_decay = c.finetune_or_train<double>("weight_decay");
  train.batch_size = c.finetune_or_train<std::size_t>("batch_size");
  train.seed = c.seed();
  train.validate();
  TrainingOptions options;
  options.epochs = c.get<int>("finetune", "epochs");
  const TrainingRun run = run_training(Stage::kFinetune, pairs, initial, initial.config, train,
                                       mining_config(c), loss_config(c), options);
  save_encoder(c.output("finetuned_encoder"), run.params);
  if (auto p = c.path("finetune_loss_log")) io::write_atomic(*p, loss_log_json(run.loss_log));

  ojson j = summary("finetune");
  j["pairs"] = pairs.size();
  j["epochs"] = options.epochs;
  j["loss"] = run.loss_log;
  return j;
}

ojson cmd_index_build(const Config& c) {
  const auto ontology = load_ontology(c.input("ontology"));
  const EncoderParams params = load_encoder(link_encoder_path(c));
  IndexBuildOptions options;
  options.components = c.get<std::size_t>("index", "components");
  const std::string type = c.get<std::string>("index", "type");
  if (type != "flat" && type != "ivf") throw ConfigError("index.type must be 'flat' or 'ivf'");
  options.ivf = type == "ivf";
  options.ivf_options.nlist = c.get<std::size_t>("index", "nlist");
  options.ivf_options.nprobe = c.get<std::size_t>("index", "nprobe");
  options.ivf_options.kmeans_iters = c.get<int>("index", "kmeans_iters");
  options.ivf_options.seed = c.seed();

  const LinkModel model = build_link_model(params, ontology, options);
  io::write_atomic(c.output("pca"), [&](std::ostream& out) { save_pca(model.transform, out); });
  io::write_atomic(c.output("index"), [&](std::ostream& out) { save_index(model.index, out); });

  double kept = 0.0;
  for (double v : model.transform.explained_variance) kept += v;
  ojson j = summary("index-build");
  j["terms"] = ontology.size();
  j["components"] = options.components;
  j["type"] = type;
  j["explained_variance"] = kept;
  return j;
}

ojson cmd_link(const Config& c, const std::string& mention) {
  const LoadedModel m = load_link_model(c);
  const auto top_k = c.get<std::size_t>("index", "top_k");
  const LinkResult r = link_mention(mention, m.model, top_k);
  return ojson::parse(link_result_json(mention, r, m.model.cui_by_term));
}

ojson cmd_evaluate(const Config& c) {
  const LoadedModel m = load_link_model(c);
  const fs::path gold_path = c.path("gold") ? c.input("gold") : c.input("star_validation");
  const CorpusSlice gold_corpus = load_corpus(gold_path);
  const auto gold = gold_from_corpus(gold_corpus, m.ontology);

  RelationGraph graph;
  if (auto p = c.optional_input("relations")) {
    auto rows = read_with<Parsed<RelationRow>>(*p, [&](std::istream& in) { return parse_relations(in, relation_columns(c)); });
    graph = build_relation_graph(rows.records);
  } else {
    log::warn("paths.relations not set; 1-distance accuracy equals accuracy");
  }

  Predictions predictions;
  std::size_t unencodable = 0;
  for (const auto& g : gold) {
    if (predictions.count(g.mention)) continue;
    try {
      predictions.emplace(g.mention, link_mention(g.mention, m.model, 1).predicted_cui);
    } catch (const UnencodableError&) {
      ++unencodable;
    }
  }
  EvalReport report = evaluate(predictions, gold, graph, true);
  report.seed = c.seed();
  report.epochs = c.get<std::int64_t>("train", "epochs");

  if (auto p = c.path("report")) io::write_atomic(*p, render_report_json(report) + "\n");
  if (auto p = c.path("report_text")) io::write_atomic(*p, render_report_text(report));
  if (!log::quiet()) std::cerr << render_report_text(report);

  ojson j = summary("evaluate");
  j["mentions"] = report.total.count;
  j["accuracy"] = report.total.accuracy();
  j["one_dist_accuracy"] = report.total.one_dist_accuracy();
  j["unencodable"] = unencodable;
  j["relation_edges"] = graph.edge_count();
  return j;
}

ojson cmd_stats(const Config& c) {
  const CorpusSlice corpus = load_corpus(c.input("corpus"));
  std::optional<std::vector<OntologyRecord>> ontology;
  if (auto p = c.path("ontology"); p && fs::exists(*p)) ontology = load_ontology(*p);
  const CorpusStats stats = compute_stats(corpus, ontology ? &*ontology : nullptr);
  ojson j = summary("stats");
  const ojson parsed = ojson::parse(corpus_stats_json(stats));
  for (const auto& [k, v] : parsed.items()) j[k] = v;
  return j;
}

Config load_config(const std::string& path, const std::string& command,
                   const std::vector<std::pair<std::string, std::string>>& overrides) {
  const fs::path p = path;
  const std::string text = io::read_file(p);
  json user = json::parse(text, nullptr, false);
  if (user.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
  json merged = merge_config(user);
  for (const auto& [k, v] : overrides) apply_override(merged, command, k, v);
  fs::path base = fs::absolute(p).parent_path();
  return Config(std::move(merged), std::move(base));
}

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.size() < 3 || a.compare(0, 2, "--") != 0) throw ConfigError("unexpected argument '" + a + "'");
    const std::string body = a.substr(2);
    if (const auto eq = body.find('='); eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      throw ConfigError("option " + a + " needs a value");
    }
  }
  return out;
}

struct Command {
  const char* name;
  const char* help;
};

constexpr Command kCommands[] = {
    {"ontology-build", "Filter and enrich the concept files into the ontology term list"},
    {"corpus-compile", "Compile the weakly labeled corpus from a wiki dump"},
    {"corpus-subset", "Deduplicate, restrict to the ontology and split the corpus"},
    {"pairs", "Write synonym pair files for pretraining (and fine-tuning)"},
    {"train", "Self-alignment pretraining of the encoder"},
    {"finetune", "Fine-tune the encoder on weakly labeled mentions"},
    {"index-build", "Embed the ontology, fit PCA and build the search index"},
    {"link", "Link a single mention"},
    {"evaluate", "Accuracy and 1-distance accuracy on a gold corpus"},
    {"stats", "Corpus statistics"},
};

}  // namespace

std::string default_config_json() { return defaults().dump(2); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Biomedical entity linking toolkit", "belforge"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::string mention;
  bool quiet = false;
  for (const auto& cmd : kCommands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->allow_extras();
    sub->add_option("--config", config_path, "JSON pipeline config")->required();
    sub->add_flag("--quiet", quiet, "Suppress progress output");
    if (std::string(cmd.name) == "link") sub->add_option("--mention", mention, "Mention text")->required();
  }
  app.footer("Any config key can be overridden with --key value or --section.key value.");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "belforge: " << e.what() << "\n" << app.help();
    return kUsageError;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const bool was_quiet = log::quiet();
  log::set_quiet(quiet || was_quiet);
  log::reset_warning_count();
  int code = kOk;
  try {
    const Config c = load_config(config_path, command, parse_overrides(sub->remaining()));
    ojson j;
    if (command == "ontology-build") j = cmd_ontology_build(c);
    else if (command == "corpus-compile") j = cmd_corpus_compile(c);
    else if (command == "corpus-subset") j = cmd_corpus_subset(c);
    else if (command == "pairs") j = cmd_pairs(c);
    else if (command == "train") j = cmd_train(c);
    else if (command == "finetune") j = cmd_finetune(c);
    else if (command == "index-build") j = cmd_index_build(c);
    else if (command == "link") j = cmd_link(c, mention);
    else if (command == "evaluate") j = cmd_evaluate(c);
    else j = cmd_stats(c);
    if (command != "link") j["warnings"] = log::warning_count();
    out << j.dump() << std::endl;
  } catch (const ConfigError& e) {
    err << "belforge: configuration error: " << e.what() << "\n";
    code = kUsageError;
  } catch (const DataError& e) {
    err << "belforge: data error: " << e.what() << "\n";
    code = kDataError;
  } catch (const IoError& e) {
    err << "belforge: I/O error: " << e.what() << "\n";
    code = kIoError;
  } catch (const json::exception& e) {
    err << "belforge: configuration error: " << e.what() << "\n";
    code = kUsageError;
  } catch (const std::exception& e) {
    err << "belforge: error: " << e.what() << "\n";
    code = kDataError;
  }
  log::set_quiet(was_quiet);
  return code;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace belforge::cli
