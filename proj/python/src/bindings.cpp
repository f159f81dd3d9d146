#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "magnn/dataset.hpp"
#include "magnn/error.hpp"
#include "magnn/evaluation.hpp"
#include "magnn/metapath.hpp"
#include "magnn/run.hpp"

namespace py = pybind11;
using namespace magnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

std::vector<int> to_ints(const IntArray& a) { return {a.data(), a.data() + a.size()}; }
std::vector<double> to_doubles(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::dict report_dict(const EvalReport& r) {
  py::dict d, metrics;
  d["task"] = r.task;
  d["variant"] = r.variant;
  d["train_fraction"] = r.train_fraction ? py::object(py::float_(*r.train_fraction)) : py::object(py::none());
  d["runs"] = r.runs;
  for (const auto& [k, v] : r.metrics) metrics[py::str(k)] = v;
  d["metrics"] = metrics;
  return d;
}

py::dict result_dict(const RunResult& res, const Schema& schema) {
  py::dict d;
  py::list reports, nodes;
  for (const auto& r : res.reports) reports.append(report_dict(r));
  for (const auto& n : res.export_nodes) nodes.append(py::make_tuple(schema.node_type(n.type).symbol, n.index));
  d["reports"] = reports;
  d["nodes"] = nodes;
  d["embeddings"] = to_array(res.export_values);
  if (res.training) {
    const auto& t = *res.training;
    d["training"] = py::dict(py::arg("train_loss") = t.train_loss, py::arg("validation_loss") = t.validation_loss,
                             py::arg("best_epoch") = t.best_epoch,
                             py::arg("best_validation_loss") = t.best_validation_loss);
  }
  d["warnings"] = res.warnings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MAGNN heterogeneous graph embedding";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<GraphInput>(m, "Dataset")
      .def_property_readonly("node_types",
                             [](const GraphInput& g) {
                               std::vector<std::string> s;
                               for (std::size_t t = 0; t < g.schema.num_node_types(); ++t)
                                 s.push_back(g.schema.node_type(static_cast<NodeTypeId>(t)).symbol);
                               return s;
                             })
      .def_property_readonly("relations",
                             [](const GraphInput& g) {
                               std::vector<std::string> s;
                               for (std::size_t r = 0; r < g.schema.num_relations(); ++r)
                                 s.push_back(g.schema.relation(static_cast<RelationId>(r)).name);
                               return s;
                             })
      .def_readonly("node_counts", &GraphInput::node_counts)
      .def_property_readonly("num_edges", [](const GraphInput& g) { return g.edges.size(); })
      .def("write", [](const GraphInput& g, const std::filesystem::path& dir) { write_dataset(g, dir); },
           py::arg("directory"), "Write schema.json and data files into a directory.");

  m.def("load_dataset",
        [](const std::filesystem::path& schema, std::optional<std::filesystem::path> data_dir) {
          auto d = load_dataset(schema, data_dir.value_or(std::filesystem::path()));
          return py::make_tuple(std::move(d.input), d.warnings);
        },
        py::arg("schema"), py::arg("data_dir") = std::nullopt,
        "Load a dataset; returns (dataset, warnings).");

  m.def("synth_hetgraph",
        [](int classes, std::size_t movies, std::size_t directors, std::size_t actors, double p_in, double p_out,
           double feature_noise, std::uint64_t seed) {
          SynthConfig c;
          c.classes = classes;
          c.movies = movies;
          c.directors = directors;
          c.actors = actors;
          c.p_in = p_in;
          c.p_out = p_out;
          c.feature_noise = feature_noise;
          c.seed = seed;
          return synth_hetgraph(c);
        },
        py::arg("classes") = 3, py::arg("movies") = 300, py::arg("directors") = 100, py::arg("actors") = 300,
        py::arg("p_in") = 0.05, py::arg("p_out") = 0.005, py::arg("feature_noise") = 1.0, py::arg("seed") = 0);

  m.def("synth_bipartite",
        [](std::size_t users, std::size_t artists, int blocks, double p_in, double p_out, std::uint64_t seed) {
          SynthLinkConfig c;
          c.users = users;
          c.artists = artists;
          c.blocks = blocks;
          c.p_in = p_in;
          c.p_out = p_out;
          c.seed = seed;
          return synth_bipartite(c);
        },
        py::arg("users") = 200, py::arg("artists") = 200, py::arg("blocks") = 8, py::arg("p_in") = 0.4,
        py::arg("p_out") = 0.002, py::arg("seed") = 0);

  m.def("enumerate_instances",
        [](const GraphInput& input, const std::string& metapath, std::optional<std::size_t> cap, std::uint64_t seed) {
          auto g = build_graph(input);
          auto t = enumerate_instances(g, parse_metapath(metapath, g.schema()), {}, {cap, seed, 1});
          py::array_t<std::uint32_t> nodes({t.num_instances(), t.width()});
          std::copy(t.nodes().begin(), t.nodes().end(), nodes.mutable_data());
          return py::dict(py::arg("targets") = std::vector<std::uint32_t>(t.targets().begin(), t.targets().end()),
                          py::arg("offsets") = std::vector<std::size_t>(t.offsets().begin(), t.offsets().end()),
                          py::arg("instances") = nodes);
        },
        py::arg("dataset"), py::arg("metapath"), py::arg("cap") = std::nullopt, py::arg("seed") = 0,
        "Metapath instances grouped per target; each row lists node indices, target last.");

  m.def("_run_pipeline",
        [](const GraphInput& input, const std::string& config_json) {
          auto cfg = RunConfig::from_json(config_json);
          RunResult res;
          {
            py::gil_scoped_release release;
            res = run_pipeline(cfg, input);
          }
          return result_dict(res, input.schema);
        },
        py::arg("dataset"), py::arg("config_json"));

  m.def("_run",
        [](const std::string& config_json) {
          auto cfg = RunConfig::from_json(config_json);
          RunResult res;
          {
            py::gil_scoped_release release;
            res = run(cfg);
          }
          // Node symbols for the exported rows come from the dataset's schema.
          return result_dict(res, load_dataset(cfg.schema, cfg.data_dir).input.schema);
        },
        py::arg("config_json"));

  m.def("_default_config", [] { return RunConfig{}.to_json(); });

  m.def("f1_scores",
        [](const IntArray& y_true, const IntArray& y_pred, int classes) {
          auto s = f1_scores(to_ints(y_true), to_ints(y_pred), classes);
          return py::make_tuple(s.macro, s.micro);
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("num_classes"), "Returns (macro, micro).");
  m.def("linear_probe",
        [](const Array& x, const IntArray& y, double fraction, std::uint64_t seed, std::size_t runs) {
          auto r = linear_probe(to_matrix(x), to_ints(y), fraction, seed, runs);
          return py::dict(py::arg("macro_f1") = r.mean.macro, py::arg("micro_f1") = r.mean.micro,
                          py::arg("macro_f1_std") = r.stddev.macro, py::arg("micro_f1_std") = r.stddev.micro);
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("train_fraction"), py::arg("seed") = 0,
        py::arg("runs") = 10);
  m.def("kmeans",
        [](const Array& x, std::size_t k, std::uint64_t seed, std::size_t restarts) {
          return kmeans(to_matrix(x), k, seed, restarts).assignment;
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("restarts") = 10);
  m.def("nmi", [](const IntArray& a, const IntArray& b) { return nmi(to_ints(a), to_ints(b)); });
  m.def("ari", [](const IntArray& a, const IntArray& b) { return ari(to_ints(a), to_ints(b)); });
  m.def("roc_auc", [](const Array& p, const Array& n) { return roc_auc(to_doubles(p), to_doubles(n)); },
        py::arg("positive_scores"), py::arg("negative_scores"));
  m.def("average_precision",
        [](const Array& p, const Array& n) { return average_precision(to_doubles(p), to_doubles(n)); },
        py::arg("positive_scores"), py::arg("negative_scores"));
}
