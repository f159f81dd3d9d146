#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "magnn/evaluation.hpp"
#include "magnn/graph.hpp"
#include "magnn/model.hpp"
#include "magnn/training.hpp"

namespace magnn {

enum class Task { Classify, Cluster, Linkpred, Ablation, Enumerate, Gradcheck };

std::string to_string(Task t);
Task parse_task(std::string_view s);

/// Everything one run needs. Defaults follow the paper's training protocol.
struct RunConfig {
  Task task = Task::Classify;
  std::filesystem::path schema;    // dataset schema file
  std::filesystem::path data_dir;  // defaults to the schema's directory
  std::filesystem::path output_dir = "out";
  std::filesystem::path checkpoint;  // eval only: skip training and load these parameters
  std::uint64_t seed = 0;

  std::vector<std::string> metapaths;  // "M-D-M", ...
  std::string target;                  // node type symbol for classify/cluster
  std::string link_relation;           // relation name for linkpred
  std::optional<std::size_t> instance_cap;

  std::size_t hidden_dim = 64;
  std::size_t attn_dim = 128;
  std::size_t out_dim = 64;
  std::size_t heads = 8;
  std::size_t layers = 1;
  Encoder encoder = Encoder::Rotation;
  Activation activation = Activation::Elu;
  Activation output_activation = Activation::Elu;  // linkpred only; classifiers end in softmax
  bool endpoints_only = false;

  double learning_rate = 0.005;
  double weight_decay = 0.001;
  std::size_t epochs = 100;
  std::size_t patience = 30;
  double dropout = 0.5;
  std::size_t negatives_per_positive = 1;

  std::vector<double> train_fractions{0.2, 0.4, 0.6, 0.8};
  std::size_t probe_runs = 10;
  std::size_t cluster_runs = 10;
  double link_validation_fraction = 0.1;
  double link_test_fraction = 0.1;
  std::vector<std::string> variants{"feat", "nb", "sm", "avg", "linear", "rot"};
  double ablation_fraction = 0.8;  // probe fraction reported by classification ablations
  std::size_t gradcheck_coords = 20;  // sampled coordinates per parameter tensor, 0 = all

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  bool operator==(const RunConfig&) const = default;
};

/// Model and training settings derived from a RunConfig for a given graph.
ModelConfig model_config(const RunConfig& config, const Schema& schema);
TrainConfig train_config(const RunConfig& config);

/// In-memory outcome of one pipeline.
struct RunResult {
  std::vector<EvalReport> reports;
  std::optional<TrainReport> training;
  ModelParams params;
  /// Exported rows: node handles with the final-layer outputs of every
  /// metapath-target type (classify/cluster/linkpred).
  std::vector<NodeHandle> export_nodes;
  Matrix export_values;
  std::vector<std::string> warnings;
};

/// Runs `config.task` on an already loaded dataset. Nothing is written.
RunResult run_pipeline(const RunConfig& config, const GraphInput& input);

/// One full train-and-evaluate cycle under an ablation variant
/// (feat, nb, sm, avg, linear, rot). Classifies `config.target` when set,
/// otherwise predicts links of `config.link_relation`.
EvalReport ablation_run(const std::string& variant, const GraphInput& input, const RunConfig& config);

/// Loads the dataset, runs the pipeline and writes manifest.json,
/// reports.jsonl, embeddings.txt and checkpoint.bin (the last two when a
/// model was trained) into config.output_dir.
RunResult run(const RunConfig& config);

/// "count dim" header, then one "<symbol>:<index> v1 ... vd" line per node.
void write_embeddings(std::ostream& out, const Schema& schema, const std::vector<NodeHandle>& nodes,
                      const Matrix& values);

}  // namespace magnn
