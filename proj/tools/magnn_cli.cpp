// magnn command-line entry point.
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "magnn/dataset.hpp"
#include "magnn/error.hpp"
#include "magnn/evaluation.hpp"
#include "magnn/run.hpp"

using namespace magnn;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

/// Flags that override the config file only when given.
struct Overrides {
  std::optional<std::string> config_file, schema, data_dir, out, checkpoint, target, link_relation, task;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> metapaths;
  std::optional<std::size_t> cap, hidden, attn, out_dim, heads, layers, epochs, patience, negatives, probe_runs,
      cluster_runs, gradcheck_coords;
  std::optional<std::string> encoder, activation, output_activation;
  bool endpoints_only = false;
  std::optional<double> lr, weight_decay, dropout, ablation_fraction;
  std::vector<double> fractions;
  std::vector<std::string> variants;
};

void add_run_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "RunConfig JSON file, or a manifest.json from an earlier run");
  app->add_option("--schema", o.schema, "dataset schema file");
  app->add_option("--data-dir", o.data_dir, "directory holding the dataset files (default: the schema's)");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--seed", o.seed, "root random seed");
  app->add_option("--metapath,-m", o.metapaths, "metapath such as M-D-M (repeatable)");
  app->add_option("--target", o.target, "node type symbol to classify or cluster");
  app->add_option("--link-relation", o.link_relation, "relation whose links are predicted");
  app->add_option("--cap", o.cap, "max metapath instances kept per target node");
  app->add_option("--hidden", o.hidden, "hidden dimension d'");
  app->add_option("--attn", o.attn, "inter-metapath attention dimension");
  app->add_option("--out-dim", o.out_dim, "output dimension (link prediction)");
  app->add_option("--heads", o.heads, "attention heads");
  app->add_option("--layers", o.layers, "number of layers");
  app->add_option("--encoder", o.encoder, "instance encoder: mean, linear or rotation");
  app->add_option("--activation", o.activation, "hidden activation");
  app->add_option("--output-activation", o.output_activation, "output activation (link prediction)");
  app->add_flag("--endpoints-only", o.endpoints_only, "encode only instance endpoints");
  app->add_option("--lr", o.lr, "learning rate");
  app->add_option("--weight-decay", o.weight_decay, "L2 penalty");
  app->add_option("--epochs", o.epochs, "maximum epochs");
  app->add_option("--patience", o.patience, "early-stopping patience");
  app->add_option("--dropout", o.dropout, "dropout rate");
  app->add_option("--negatives", o.negatives, "negative pairs per positive");
  app->add_option("--fractions", o.fractions, "probe train fractions");
  app->add_option("--probe-runs", o.probe_runs, "probe repeats per fraction");
  app->add_option("--cluster-runs", o.cluster_runs, "k-means repeats");
  app->add_option("--variants", o.variants, "ablation variants");
  app->add_option("--ablation-fraction", o.ablation_fraction, "probe fraction used by ablations");
  app->add_option("--gradcheck-coords", o.gradcheck_coords, "coordinates checked per tensor, 0 = all");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig resolve(const Overrides& o, std::optional<Task> fixed) {
  RunConfig c;
  if (o.config_file) {
    auto text = read_file(*o.config_file);
    auto doc = nlohmann::ordered_json::parse(text, nullptr, false);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("config")) text = doc["config"].dump();
    c = RunConfig::from_json(text);
  }
  if (o.schema) c.schema = *o.schema;
  if (o.data_dir) c.data_dir = *o.data_dir;
  if (o.out) c.output_dir = *o.out;
  if (o.checkpoint) c.checkpoint = *o.checkpoint;
  if (o.seed) c.seed = *o.seed;
  if (!o.metapaths.empty()) c.metapaths = o.metapaths;
  if (o.target) c.target = *o.target;
  if (o.link_relation) c.link_relation = *o.link_relation;
  if (o.cap) c.instance_cap = *o.cap;
  if (o.hidden) c.hidden_dim = *o.hidden;
  if (o.attn) c.attn_dim = *o.attn;
  if (o.out_dim) c.out_dim = *o.out_dim;
  if (o.heads) c.heads = *o.heads;
  if (o.layers) c.layers = *o.layers;
  if (o.encoder) c.encoder = parse_encoder(*o.encoder);
  if (o.activation) c.activation = parse_activation(*o.activation);
  if (o.output_activation) c.output_activation = parse_activation(*o.output_activation);
  if (o.endpoints_only) c.endpoints_only = true;
  if (o.lr) c.learning_rate = *o.lr;
  if (o.weight_decay) c.weight_decay = *o.weight_decay;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.patience) c.patience = *o.patience;
  if (o.dropout) c.dropout = *o.dropout;
  if (o.negatives) c.negatives_per_positive = *o.negatives;
  if (!o.fractions.empty()) c.train_fractions = o.fractions;
  if (o.probe_runs) c.probe_runs = *o.probe_runs;
  if (o.cluster_runs) c.cluster_runs = *o.cluster_runs;
  if (!o.variants.empty()) c.variants = o.variants;
  if (o.ablation_fraction) c.ablation_fraction = *o.ablation_fraction;
  if (o.gradcheck_coords) c.gradcheck_coords = *o.gradcheck_coords;
  if (fixed) c.task = *fixed;
  else if (o.task) c.task = parse_task(*o.task);
  return c;
}

int execute(const RunConfig& config) {
  auto result = run(config);
  for (const auto& r : result.reports) std::cout << r.to_json() << '\n';
  if (result.training)
    std::cerr << "trained " << result.training->epochs_run() << " epochs, best epoch " << result.training->best_epoch
              << " (" << result.training->seconds << " s)\n";
  if (config.task == Task::Gradcheck) {
    const double err = result.reports.front().metric("max_relative_error");
    std::cout << "max relative error " << err << '\n';
    if (!(err < 1e-3)) throw NumericError("gradient check failed: max relative error " + std::to_string(err));
  }
  return kOk;
}

struct SynthOptions {
  std::string kind = "hetgraph";
  std::string out;
  SynthConfig het;
  SynthLinkConfig link;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAGNN heterogeneous graph embedding"};
  app.require_subcommand(1);

  Overrides train_o, eval_o, enum_o, grad_o, abl_o;
  auto* train = app.add_subcommand("train", "train a model and evaluate it (classify, cluster or linkpred)");
  add_run_options(train, train_o);
  train->add_option("--task", train_o.task, "classify, cluster or linkpred")
      ->check(CLI::IsMember({"classify", "cluster", "linkpred"}));
  auto* eval = app.add_subcommand("eval", "evaluate saved parameters without training");
  add_run_options(eval, eval_o);
  eval->add_option("--task", eval_o.task, "classify, cluster or linkpred")
      ->check(CLI::IsMember({"classify", "cluster", "linkpred"}));
  eval->add_option("--checkpoint", eval_o.checkpoint, "checkpoint.bin written by train")->required();
  auto* enumerate = app.add_subcommand("enumerate", "count metapath instances");
  add_run_options(enumerate, enum_o);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the loss gradient");
  add_run_options(gradcheck, grad_o);
  auto* ablation = app.add_subcommand("ablation", "train and evaluate model variants");
  add_run_options(ablation, abl_o);

  SynthOptions s;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--kind", s.kind, "hetgraph (movies) or bipartite (users and artists)")
      ->check(CLI::IsMember({"hetgraph", "bipartite"}));
  synth->add_option("--out", s.out, "output directory")->required();
  synth->add_option("--seed", s.het.seed, "generator seed");
  synth->add_option("--classes", s.het.classes);
  synth->add_option("--movies", s.het.movies);
  synth->add_option("--directors", s.het.directors);
  synth->add_option("--actors", s.het.actors);
  synth->add_option("--p-in", s.het.p_in, "within-class (within-block) edge probability");
  synth->add_option("--p-out", s.het.p_out, "cross-class (cross-block) edge probability");
  synth->add_option("--noise", s.het.feature_noise, "feature noise standard deviation");
  synth->add_option("--users", s.link.users);
  synth->add_option("--artists", s.link.artists);
  synth->add_option("--blocks", s.link.blocks);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return execute(resolve(train_o, std::nullopt));
    if (*eval) return execute(resolve(eval_o, std::nullopt));
    if (*enumerate) return execute(resolve(enum_o, Task::Enumerate));
    if (*gradcheck) return execute(resolve(grad_o, Task::Gradcheck));
    if (*ablation) return execute(resolve(abl_o, Task::Ablation));
    if (*synth) {
      if (s.kind == "hetgraph") {
        write_dataset(synth_hetgraph(s.het), s.out);
      } else {
        if (synth->count("--p-in")) s.link.p_in = s.het.p_in;
        if (synth->count("--p-out")) s.link.p_out = s.het.p_out;
        s.link.seed = s.het.seed;
        write_dataset(synth_bipartite(s.link), s.out);
      }
      std::cout << "wrote " << s.out << "/schema.json\n";
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
