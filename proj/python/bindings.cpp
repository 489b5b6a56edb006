#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "belforge/ann_index.hpp"
#include "belforge/cli.hpp"
#include "belforge/encoder.hpp"
#include "belforge/evaluator.hpp"
#include "belforge/io.hpp"
#include "belforge/log.hpp"
#include "belforge/ontology.hpp"
#include "belforge/trainer.hpp"

namespace py = pybind11;
using namespace belforge;
namespace fs = std::filesystem;

namespace {

template <typename T, typename Loader>
T load_file(const fs::path& path, Loader loader) {
  auto in = io::open_input(path);
  return loader(in);
}

py::dict group_dict(const GroupScore& s) {
  py::dict d;
  d["group"] = s.group;
  d["count"] = s.count;
  d["correct"] = s.correct;
  d["one_dist_correct"] = s.one_dist_correct;
  d["accuracy"] = s.accuracy();
  d["one_dist_accuracy"] = s.one_dist_accuracy();
  return d;
}

// Loaded link artifacts: encoder, PCA transform, index and ontology.
class Linker {
 public:
  Linker(const fs::path& encoder, const fs::path& pca, const fs::path& index, const fs::path& ontology) {
    model_.params = load_file<EncoderParams>(encoder, [](std::istream& in) { return load_params(in); });
    model_.transform = load_file<PcaTransform>(pca, [](std::istream& in) { return load_pca(in); });
    model_.index = load_file<AnnIndex>(index, [](std::istream& in) { return load_index(in); });
    if (model_.transform.input_dim() != model_.params.config.dim) {
      throw DataError("PCA input dimension does not match the encoder output");
    }
    model_.cui_by_term = cui_lookup(load_file<std::vector<OntologyRecord>>(
        ontology, [](std::istream& in) { return parse_ontology(in); }));
  }

  py::dict link(const std::string& mention, std::size_t top_k) const {
    const LinkResult r = link_mention(mention, model_, top_k);
    py::list neighbors;
    for (const auto& n : r.neighbors) {
      const auto it = model_.cui_by_term.find(n.term_id);
      neighbors.append(py::make_tuple(n.term_id, it == model_.cui_by_term.end() ? "" : it->second, n.score));
    }
    py::dict d;
    d["mention"] = mention;
    d["predicted_cui"] = r.predicted_cui;
    d["neighbors"] = neighbors;
    return d;
  }

  std::size_t size() const { return index_size(model_.index); }

 private:
  LinkModel model_;
};

}  // namespace

PYBIND11_MODULE(_belforge, m) {
  m.doc() = "Entity-linking toolkit: ontology building, corpus compilation, training and linking.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<UnencodableError>(m, "UnencodableError", data.ptr());
  py::register_exception<LinkError>(m, "LinkError", data.ptr());
  auto io_error = py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NetworkError>(m, "NetworkError", io_error.ptr());

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command; returns (exit_code, stdout, stderr).");
  m.def("default_config", &cli::default_config_json, "Default configuration as a JSON string.");
  m.def("set_quiet", &log::set_quiet, py::arg("quiet"));

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("n_min", &EncoderConfig::n_min)
      .def_readwrite("n_max", &EncoderConfig::n_max)
      .def_readwrite("buckets", &EncoderConfig::buckets)
      .def_readwrite("hidden", &EncoderConfig::hidden)
      .def_readwrite("dim", &EncoderConfig::dim)
      .def_readwrite("lowercase", &EncoderConfig::lowercase)
      .def_readwrite("normalize_output", &EncoderConfig::normalize_output);

  py::class_<EncoderParams>(m, "Encoder")
      .def_static("init", &init_params, py::arg("seed"), py::arg("config") = EncoderConfig{})
      .def_static(
          "load", [](const fs::path& p) { return load_file<EncoderParams>(p, [](std::istream& in) { return load_params(in); }); },
          py::arg("path"))
      .def(
          "save",
          [](const EncoderParams& p, const fs::path& path) {
            io::write_atomic(path, [&](std::ostream& out) { save_params(p, out); });
          },
          py::arg("path"))
      .def("encode", [](const EncoderParams& p, const std::string& text) { return encode(p, text); }, py::arg("text"))
      .def_property_readonly("config", [](const EncoderParams& p) { return p.config; })
      .def_property_readonly("parameter_count", &EncoderParams::parameter_count)
      .def("__eq__", [](const EncoderParams& a, const EncoderParams& b) { return a == b; });

  py::class_<Linker>(m, "Linker")
      .def(py::init<const fs::path&, const fs::path&, const fs::path&, const fs::path&>(), py::arg("encoder"),
           py::arg("pca"), py::arg("index"), py::arg("ontology"))
      .def("link", &Linker::link, py::arg("mention"), py::arg("top_k") = 5)
      .def("__len__", &Linker::size);

  m.def(
      "load_ontology",
      [](const fs::path& path) {
        py::list out;
        for (const auto& r : load_file<std::vector<OntologyRecord>>(path, [](std::istream& in) { return parse_ontology(in); })) {
          py::dict d;
          d["term_id"] = r.term_id;
          d["cui"] = r.cui;
          d["text"] = r.text;
          d["vocab"] = r.vocab;
          d["group"] = r.group;
          out.append(d);
        }
        return out;
      },
      py::arg("path"));

  m.def(
      "pretrain_pairs",
      [](const fs::path& ontology) {
        const auto records = load_file<std::vector<OntologyRecord>>(ontology, [](std::istream& in) { return parse_ontology(in); });
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& p : generate_pretrain_pairs(records)) out.emplace_back(p.cui, p.term_a, p.term_b);
        return out;
      },
      py::arg("ontology"), "Synonym pairs (cui, term_a, term_b) from an ontology file.");

  m.def(
      "evaluate",
      [](const std::unordered_map<std::string, std::string>& predictions,
         const std::vector<std::tuple<std::string, std::string, std::string>>& gold,
         const std::vector<std::pair<std::string, std::string>>& relations) {
        std::vector<GoldMention> g;
        for (const auto& [mention, cui, group] : gold) g.push_back({mention, cui, group});
        std::vector<RelationRow> rows;
        for (const auto& [a, b] : relations) rows.push_back({a, "", b, ""});
        const EvalReport r = evaluate(predictions, g, build_relation_graph(rows));
        py::dict d;
        py::list groups;
        for (const auto& s : r.groups) groups.append(group_dict(s));
        d["groups"] = groups;
        d["total"] = group_dict(r.total);
        return d;
      },
      py::arg("predictions"), py::arg("gold"), py::arg("relations") = std::vector<std::pair<std::string, std::string>>{},
      "predictions: mention -> cui; gold: (mention, cui, group); relations: undirected cui pairs.");
}
