#include "magnn/run.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>

#include <json.hpp>

#include "magnn/checkpoint.hpp"
#include "magnn/dataset.hpp"
#include "magnn/error.hpp"
#include "magnn/metapath.hpp"
#include "magnn/rng.hpp"

namespace magnn {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kTaskNames[] = {"classify", "cluster", "linkpred", "ablation", "enumerate", "gradcheck"};

}  // namespace

std::string to_string(Task t) { return kTaskNames[static_cast<int>(t)]; }

Task parse_task(std::string_view s) {
  for (int i = 0; i < 6; ++i)
    if (s == kTaskNames[i]) return static_cast<Task>(i);
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

std::string RunConfig::to_json() const {
  json j;
  j["task"] = magnn::to_string(task);
  j["schema"] = schema.string();
  j["data_dir"] = data_dir.string();
  j["output_dir"] = output_dir.string();
  j["checkpoint"] = checkpoint.string();
  j["seed"] = seed;
  j["metapaths"] = metapaths;
  j["target"] = target;
  j["link_relation"] = link_relation;
  j["instance_cap"] = instance_cap ? json(*instance_cap) : json(nullptr);
  j["hidden_dim"] = hidden_dim;
  j["attn_dim"] = attn_dim;
  j["out_dim"] = out_dim;
  j["heads"] = heads;
  j["layers"] = layers;
  j["encoder"] = magnn::to_string(encoder);
  j["activation"] = magnn::to_string(activation);
  j["output_activation"] = magnn::to_string(output_activation);
  j["endpoints_only"] = endpoints_only;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["patience"] = patience;
  j["dropout"] = dropout;
  j["negatives_per_positive"] = negatives_per_positive;
  j["train_fractions"] = train_fractions;
  j["probe_runs"] = probe_runs;
  j["cluster_runs"] = cluster_runs;
  j["link_validation_fraction"] = link_validation_fraction;
  j["link_test_fraction"] = link_test_fraction;
  j["variants"] = variants;
  j["ablation_fraction"] = ablation_fraction;
  j["gradcheck_coords"] = gradcheck_coords;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "task") c.task = parse_task(v.get<std::string>());
      else if (key == "schema") c.schema = v.get<std::string>();
      else if (key == "data_dir") c.data_dir = v.get<std::string>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "checkpoint") c.checkpoint = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "metapaths") c.metapaths = v.get<std::vector<std::string>>();
      else if (key == "target") c.target = v.get<std::string>();
      else if (key == "link_relation") c.link_relation = v.get<std::string>();
      else if (key == "instance_cap") c.instance_cap = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
      else if (key == "hidden_dim") c.hidden_dim = v.get<std::size_t>();
      else if (key == "attn_dim") c.attn_dim = v.get<std::size_t>();
      else if (key == "out_dim") c.out_dim = v.get<std::size_t>();
      else if (key == "heads") c.heads = v.get<std::size_t>();
      else if (key == "layers") c.layers = v.get<std::size_t>();
      else if (key == "encoder") c.encoder = parse_encoder(v.get<std::string>());
      else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
      else if (key == "output_activation") c.output_activation = parse_activation(v.get<std::string>());
      else if (key == "endpoints_only") c.endpoints_only = v.get<bool>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "patience") c.patience = v.get<std::size_t>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "negatives_per_positive") c.negatives_per_positive = v.get<std::size_t>();
      else if (key == "train_fractions") c.train_fractions = v.get<std::vector<double>>();
      else if (key == "probe_runs") c.probe_runs = v.get<std::size_t>();
      else if (key == "cluster_runs") c.cluster_runs = v.get<std::size_t>();
      else if (key == "link_validation_fraction") c.link_validation_fraction = v.get<double>();
      else if (key == "link_test_fraction") c.link_test_fraction = v.get<double>();
      else if (key == "variants") c.variants = v.get<std::vector<std::string>>();
      else if (key == "ablation_fraction") c.ablation_fraction = v.get<double>();
      else if (key == "gradcheck_coords") c.gradcheck_coords = v.get<std::size_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

ModelConfig model_config(const RunConfig& config, const Schema& schema) {
  ModelConfig m;
  m.hidden_dim = config.hidden_dim;
  m.attn_dim = config.attn_dim;
  m.out_dim = config.out_dim;
  m.heads = config.heads;
  m.layers = config.layers;
  m.encoder = config.encoder;
  m.dropout = config.dropout;
  m.activation = config.activation;
  m.output_activation = config.output_activation;
  m.endpoints_only = config.endpoints_only;
  if (config.metapaths.empty()) throw ConfigError("at least one metapath is required");
  for (const auto& text : config.metapaths) {
    try {
      m.metapaths.push_back(parse_metapath(text, schema));
    } catch (const SchemaError& e) {
      throw ConfigError("metapath '" + text + "': " + e.what());
    }
  }
  return m;
}

TrainConfig train_config(const RunConfig& config) {
  TrainConfig t;
  t.learning_rate = config.learning_rate;
  t.weight_decay = config.weight_decay;
  t.epochs = config.epochs;
  t.patience = config.patience;
  t.dropout = config.dropout;
  t.seed = config.seed;
  t.negatives_per_positive = config.negatives_per_positive;
  t.mode = config.task == Task::Linkpred || (config.target.empty() && !config.link_relation.empty())
               ? TrainMode::Unsupervised
               : TrainMode::SemiSupervised;
  return t;
}

namespace {

NodeTypeId find_type(const Schema& schema, const std::string& symbol) {
  auto t = schema.find_node_type(symbol);
  if (!t) throw ConfigError("unknown node type '" + symbol + "'");
  return *t;
}

RelationId find_relation(const Schema& schema, const std::string& name) {
  auto r = schema.find_relation(name);
  if (!r) throw ConfigError("unknown relation '" + name + "'");
  return *r;
}

std::vector<InstanceTable> enumerate_all(const HetGraph& graph, const ModelConfig& model, const RunConfig& config) {
  std::vector<InstanceTable> tables;
  const auto root = substream_seed(config.seed, "enumerate");
  for (std::size_t i = 0; i < model.metapaths.size(); ++i)
    tables.push_back(enumerate_instances(graph, model.metapaths[i], {},
                                         {config.instance_cap, substream_seed(root, std::uint64_t(i)), 1}));
  return tables;
}

/// Graph, model and supervision for one training run.
struct Prepared {
  HetGraph graph;
  ModelConfig model;
  TrainConfig train;
  std::vector<InstanceTable> tables;
  std::optional<NodeTypeId> target;
  std::optional<LinkTask> link;
};

Prepared prepare(const RunConfig& config, const GraphInput& input, TrainMode mode) {
  if (mode == TrainMode::SemiSupervised) {
    if (config.target.empty()) throw ConfigError("classification needs a target node type");
    Prepared p{build_graph(input), {}, train_config(config), {}, {}, {}};
    p.train.mode = mode;
    p.target = find_type(p.graph.schema(), config.target);
    if (!p.graph.has_labels(*p.target))
      throw DataError("node type '" + config.target + "' has no labels");
    p.model = model_config(config, p.graph.schema());
    // The classifier's last layer predicts class probabilities.
    p.model.out_dim = static_cast<std::size_t>(p.graph.num_classes(*p.target));
    p.model.output_activation = Activation::Softmax;
    p.model.validate(p.graph.schema());
    p.tables = enumerate_all(p.graph, p.model, config);
    return p;
  }
  if (config.link_relation.empty()) throw ConfigError("link prediction needs a relation");
  const auto rel = find_relation(input.schema, config.link_relation);
  auto split = split_links(input, rel, config.link_validation_fraction, config.link_test_fraction,
                           substream_seed(config.seed, "link-split"));
  Prepared p{build_graph(std::move(split.train_graph)), {}, train_config(config), {}, {}, std::move(split.task)};
  p.train.mode = mode;
  p.model = model_config(config, p.graph.schema());
  p.model.validate(p.graph.schema());
  p.tables = enumerate_all(p.graph, p.model, config);
  return p;
}

ModelParams fit(const Prepared& p, const RunConfig& config, RunResult* result) {
  if (!config.checkpoint.empty()) {
    auto loaded = load_checkpoint(config.checkpoint);
    check_compatible(init_params(p.graph, p.model, 0), loaded);
    return loaded;
  }
  auto trained = train(p.graph, p.tables, p.model, p.train, p.target, p.link ? &*p.link : nullptr);
  if (result) result->training = trained.report;
  return std::move(trained.params);
}

struct TestRows {
  Matrix embedding;
  std::vector<int> labels;
};

/// Fused embeddings and labels of the target's test-mask nodes.
TestRows test_rows(const Prepared& p, const ForwardResult& res) {
  const auto t = *p.target;
  auto rows = p.graph.nodes_in_split(t, Split::Test);
  if (rows.empty()) throw DataError("the target type has no test-mask nodes");
  const auto& e = res.embedding[index_of(t)];
  TestRows out{Matrix(rows.size(), e.cols()), {}};
  const auto y = p.graph.labels(t);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < e.cols(); ++j) out.embedding(i, j) = e.at(rows[i], j);
    if (y[rows[i]] < 0) throw DataError("test-mask node " + std::to_string(rows[i]) + " is unlabeled");
    out.labels.push_back(y[rows[i]]);
  }
  return out;
}

EvalReport probe_report(const TestRows& rows, double fraction, const RunConfig& config, std::string variant) {
  auto r = linear_probe(rows.embedding, rows.labels, fraction, substream_seed(config.seed, "probe-split"),
                        config.probe_runs);
  return {"classify", std::move(variant), fraction, r.runs,
          {{"macro_f1", r.mean.macro}, {"micro_f1", r.mean.micro},
           {"macro_f1_std", r.stddev.macro}, {"micro_f1_std", r.stddev.micro}}};
}

EvalReport cluster_report(const TestRows& rows, int classes, const RunConfig& config) {
  if (config.cluster_runs == 0) throw ConfigError("at least one clustering run is required");
  const auto root = substream_seed(config.seed, "kmeans");
  double nmi_sum = 0, ari_sum = 0, nmi_sq = 0, ari_sq = 0;
  for (std::size_t r = 0; r < config.cluster_runs; ++r) {
    auto s = cluster_eval(rows.embedding, rows.labels, static_cast<std::size_t>(classes), substream_seed(root, r));
    nmi_sum += s.nmi;
    ari_sum += s.ari;
    nmi_sq += s.nmi * s.nmi;
    ari_sq += s.ari * s.ari;
  }
  const double n = double(config.cluster_runs);
  auto sd = [n](double sum, double sq) { return std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n))); };
  return {"cluster", "", std::nullopt, config.cluster_runs,
          {{"nmi", nmi_sum / n}, {"ari", ari_sum / n}, {"nmi_std", sd(nmi_sum, nmi_sq)}, {"ari_std", sd(ari_sum, ari_sq)}}};
}

Matrix to_matrix(const ad::Tensor& t) {
  return Matrix(t.rows(), t.cols(), std::vector<double>(t.values().begin(), t.values().end()));
}

EvalReport link_report(const Prepared& p, const ForwardResult& res, std::string variant) {
  const auto& task = *p.link;
  auto s = link_predict_eval(to_matrix(res.output[index_of(task.left_type)]),
                             to_matrix(res.output[index_of(task.right_type)]), task.test_positive,
                             task.test_negative);
  return {"linkpred", std::move(variant), std::nullopt, 1, {{"auc", s.auc}, {"ap", s.ap}}};
}

void export_outputs(const Prepared& p, const ForwardResult& res, RunResult& out) {
  std::size_t rows = 0, dim = 0;
  for (auto t : p.model.target_types(p.graph.schema())) {
    rows += p.graph.node_count(t);
    dim = res.output[index_of(t)].cols();
  }
  out.export_values = Matrix(rows, dim);
  out.export_nodes.clear();
  for (auto t : p.model.target_types(p.graph.schema())) {
    const auto& o = res.output[index_of(t)];
    for (std::uint32_t v = 0; v < p.graph.node_count(t); ++v) {
      const auto r = out.export_nodes.size();
      for (std::size_t j = 0; j < dim; ++j) out.export_values(r, j) = o.at(v, j);
      out.export_nodes.push_back({t, v});
    }
  }
}

TrainMode ablation_mode(const RunConfig& config) {
  return config.target.empty() ? TrainMode::Unsupervised : TrainMode::SemiSupervised;
}

/// Every way of keeping exactly one metapath per target type.
std::vector<std::vector<std::string>> single_metapath_choices(const RunConfig& config, const Schema& schema) {
  const auto model = model_config(config, schema);
  std::vector<std::vector<std::string>> out{{}};
  for (auto t : model.target_types(schema)) {
    std::vector<std::vector<std::string>> next;
    for (const auto& prefix : out)
      for (auto i : model.metapaths_for(t)) {
        auto c = prefix;
        c.push_back(config.metapaths[i]);
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  return out;
}

EvalReport evaluate_variant(const Prepared& p, const ModelParams& params, const RunConfig& config,
                            const std::string& variant) {
  ad::NoGradGuard guard;
  auto res = forward(p.graph, p.tables, params, p.model);
  if (p.target) return probe_report(test_rows(p, res), config.ablation_fraction, config, variant);
  return link_report(p, res, variant);
}

ad::Tensor gradcheck_loss(const Prepared& p, const ModelParams& params, std::span<const std::uint32_t> rows) {
  auto res = forward(p.graph, p.tables, params, p.model);
  if (p.target) return semi_supervised_loss(res.output[index_of(*p.target)], p.graph.labels(*p.target), rows);
  const auto& l = *p.link;
  return unsupervised_loss(res.output[index_of(l.left_type)], res.output[index_of(l.right_type)], l.train_positive,
                           l.validation_negative);
}

}  // namespace

EvalReport ablation_run(const std::string& variant, const GraphInput& input, const RunConfig& config) {
  RunConfig cfg = config;
  cfg.checkpoint.clear();
  cfg.encoder = Encoder::Rotation;
  cfg.endpoints_only = false;
  const GraphInput* data = &input;
  GraphInput featureless;
  if (variant == "feat") {
    featureless = input;
    for (auto& f : featureless.features) f.reset();
    data = &featureless;
  } else if (variant == "nb") {
    cfg.endpoints_only = true;
  } else if (variant == "avg") {
    cfg.encoder = Encoder::Mean;
  } else if (variant == "linear") {
    cfg.encoder = Encoder::Linear;
  } else if (variant == "sm") {
    const auto mode = ablation_mode(cfg);
    double best = std::numeric_limits<double>::infinity();
    std::optional<Prepared> chosen;
    ModelParams chosen_params;
    for (auto& paths : single_metapath_choices(cfg, input.schema)) {
      RunConfig one = cfg;
      one.metapaths = std::move(paths);
      auto p = prepare(one, input, mode);
      auto trained = train(p.graph, p.tables, p.model, p.train, p.target, p.link ? &*p.link : nullptr);
      if (trained.report.best_validation_loss < best) {
        best = trained.report.best_validation_loss;
        chosen = std::move(p);
        chosen_params = std::move(trained.params);
      }
    }
    return evaluate_variant(*chosen, chosen_params, cfg, variant);
  } else if (variant != "rot") {
    throw ConfigError("unknown ablation variant '" + variant + "' (expected feat, nb, sm, avg, linear or rot)");
  }
  auto p = prepare(cfg, *data, ablation_mode(cfg));
  auto params = fit(p, cfg, nullptr);
  return evaluate_variant(p, params, cfg, variant);
}

RunResult run_pipeline(const RunConfig& config, const GraphInput& input) {
  RunResult out;
  switch (config.task) {
    case Task::Enumerate: {
      auto graph = build_graph(input);
      auto model = model_config(config, graph.schema());
      auto tables = enumerate_all(graph, model, config);
      for (const auto& t : tables)
        out.reports.push_back({"enumerate", t.path().to_string(graph.schema()), std::nullopt, 1,
                               {{"targets", double(t.num_targets())}, {"instances", double(t.num_instances())}}});
      return out;
    }
    case Task::Gradcheck: {
      auto p = prepare(config, input, ablation_mode(config));
      auto params = config.checkpoint.empty() ? init_params(p.graph, p.model, substream_seed(config.seed, "init"))
                                              : fit(p, config, nullptr);
      std::vector<std::uint32_t> rows;
      if (p.target) rows = p.graph.nodes_in_split(*p.target, Split::Train);
      auto f = [&] { return gradcheck_loss(p, params, rows); };
      auto r = ad::grad_check(f, params.tensors(), {.max_coords_per_param = config.gradcheck_coords, .seed = substream_seed(config.seed, "gradcheck")});
      out.reports.push_back({"gradcheck", "", std::nullopt, 1,
                             {{"max_relative_error", r.max_relative_error},
                              {"checked", double(r.checked)},
                              {"skipped", double(r.skipped)}}});
      return out;
    }
    case Task::Ablation: {
      for (const auto& v : config.variants) out.reports.push_back(ablation_run(v, input, config));
      return out;
    }
    case Task::Classify:
    case Task::Cluster: {
      auto p = prepare(config, input, TrainMode::SemiSupervised);
      out.params = fit(p, config, &out);
      ad::NoGradGuard guard;
      auto res = forward(p.graph, p.tables, out.params, p.model);
      auto rows = test_rows(p, res);
      if (config.task == Task::Classify) {
        if (config.train_fractions.empty()) throw ConfigError("at least one probe train fraction is required");
        for (double f : config.train_fractions) out.reports.push_back(probe_report(rows, f, config, ""));
      } else {
        out.reports.push_back(cluster_report(rows, p.graph.num_classes(*p.target), config));
      }
      export_outputs(p, res, out);
      return out;
    }
    case Task::Linkpred: {
      auto p = prepare(config, input, TrainMode::Unsupervised);
      out.params = fit(p, config, &out);
      ad::NoGradGuard guard;
      auto res = forward(p.graph, p.tables, out.params, p.model);
      out.reports.push_back(link_report(p, res, ""));
      export_outputs(p, res, out);
      return out;
    }
  }
  throw ConfigError("unhandled task");
}

void write_embeddings(std::ostream& out, const Schema& schema, const std::vector<NodeHandle>& nodes,
                      const Matrix& values) {
  if (nodes.size() != values.rows) throw ShapeError("one node handle per exported row is required");
  out << values.rows << ' ' << values.cols << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out << schema.node_type(nodes[i].type).symbol << ':' << nodes[i].index;
    for (double v : values.row(i)) out << ' ' << v;
    out << '\n';
  }
}

RunResult run(const RunConfig& config) {
  if (config.schema.empty()) throw ConfigError("a dataset schema file is required");
  auto data = load_dataset(config.schema, config.data_dir);
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
  auto result = run_pipeline(config, data.input);
  result.warnings = data.warnings;

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + config.output_dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(config.output_dir / name);
    if (!f) throw ConfigError("cannot write " + (config.output_dir / name).string());
    return f;
  };

  json manifest;
  manifest["version"] = "0.1.0";
  manifest["config"] = json::parse(config.to_json());
  json counts;
  for (std::size_t t = 0; t < data.input.node_counts.size(); ++t)
    counts[data.input.schema.node_type(static_cast<NodeTypeId>(t)).symbol] = data.input.node_counts[t];
  manifest["node_counts"] = counts;
  manifest["edges"] = data.input.edges.size();
  manifest["warnings"] = data.warnings;
  manifest["protocol"] = {{"probe", "logistic regression (in place of a linear SVM)"},
                          {"clustering", "k-means++, best of 10 restarts"},
                          {"link_score", "dot product"}};
  if (result.training) {
    const auto& t = *result.training;
    manifest["training"] = {{"epochs_run", t.epochs_run()},
                            {"best_epoch", t.best_epoch},
                            {"best_validation_loss", t.best_validation_loss},
                            {"train_loss", t.train_loss},
                            {"validation_loss", t.validation_loss}};
  }
  open("manifest.json") << manifest.dump(2) << '\n';

  auto reports = open("reports.jsonl");
  for (const auto& r : result.reports) reports << r.to_json() << '\n';

  if (!result.export_nodes.empty()) {
    auto emb = open("embeddings.txt");
    write_embeddings(emb, data.input.schema, result.export_nodes, result.export_values);
    save_checkpoint(config.output_dir / "checkpoint.bin", result.params);
  }
  return result;
}

}  // namespace magnn
