#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "magnn/graph.hpp"
#include "magnn/model.hpp"

namespace magnn {

using NodePair = std::pair<std::uint32_t, std::uint32_t>;

enum class TrainMode { SemiSupervised, Unsupervised };

std::string to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view s);

struct TrainConfig {
  TrainMode mode = TrainMode::SemiSupervised;
  double learning_rate = 0.005;
  double weight_decay = 0.001;
  std::size_t epochs = 100;
  std::size_t patience = 30;
  double dropout = 0.5;  // replaces ModelConfig::dropout during training
  std::uint64_t seed = 0;
  std::size_t negatives_per_positive = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;       // before each epoch's update
  std::vector<double> validation_loss;  // after each epoch's update
  std::size_t best_epoch = 0;           // 1-based
  double best_validation_loss = 0.0;
  double seconds = 0.0;

  std::size_t epochs_run() const { return train_loss.size(); }
};

/// Eq. 10: -sum over `rows` of log p[v, y_v], log clamped at 1e-12.
ad::Tensor semi_supervised_loss(const ad::Tensor& probabilities, std::span<const int> labels,
                                std::span<const std::uint32_t> rows);

/// Eq. 11 with clamped logs. Pairs index rows of `left` and `right`.
ad::Tensor unsupervised_loss(const ad::Tensor& left, const ad::Tensor& right, std::span<const NodePair> positives,
                             std::span<const NodePair> negatives);

/// Observed pairs between two node types. For a homogeneous relation the
/// pair is unordered.
class PairSet {
 public:
  PairSet(std::size_t left_count, std::size_t right_count, bool unordered = false)
      : left_(left_count), right_(right_count), unordered_(unordered) {}
  void insert(std::uint32_t a, std::uint32_t b) { keys_.insert(key(a, b)); }
  bool contains(std::uint32_t a, std::uint32_t b) const { return keys_.count(key(a, b)) != 0; }
  std::size_t size() const { return keys_.size(); }
  std::size_t left_count() const { return left_; }
  std::size_t right_count() const { return right_; }
  bool unordered() const { return unordered_; }
  /// Number of distinct pairs that could be drawn.
  std::size_t universe() const;

 private:
  std::uint64_t key(std::uint32_t a, std::uint32_t b) const {
    if (unordered_ && a > b) std::swap(a, b);
    return (std::uint64_t(a) << 32) | b;
  }
  std::size_t left_, right_;
  bool unordered_;
  std::unordered_set<std::uint64_t> keys_;
};

/// Uniform draws of pairs not in `positives` (rejection sampling).
/// Throws DataError when every pair is positive.
std::vector<NodePair> negative_sample(const PairSet& positives, std::size_t count, Rng& rng);

/// Supervision for unsupervised training and link-prediction evaluation.
struct LinkTask {
  RelationId relation{};
  NodeTypeId left_type{}, right_type{};
  std::vector<NodePair> train_positive;
  std::vector<NodePair> validation_positive, validation_negative;
  std::vector<NodePair> test_positive, test_negative;
  PairSet all_positive{0, 0};
};

struct LinkSplit {
  GraphInput train_graph;  // input with held-out edges removed
  LinkTask task;
};

/// Holds out validation and test edges of `relation` with an equal number of
/// sampled negatives each; the remaining edges form both the message-passing
/// graph and the training positives.
LinkSplit split_links(const GraphInput& input, RelationId relation, double validation_fraction,
                      double test_fraction, std::uint64_t seed);

/// Adam with an L2 penalty folded into the gradient (g += decay * theta).
class Adam {
 public:
  Adam(const ModelParams& params, double learning_rate, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update from the gradients currently stored in the parameters.
  void step(ModelParams& params);

 private:
  double lr_, decay_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
  ModelParams params;  // best-validation parameters
  TrainReport report;
};

/// Full-batch training with early stopping on the validation loss.
/// Semi-supervised mode classifies `target` using its labels and masks; the
/// model must end in a softmax with one output per class. Unsupervised mode
/// needs `link`.
TrainResult train(const HetGraph& graph, const std::vector<InstanceTable>& tables, const ModelConfig& model,
                  const TrainConfig& config, std::optional<NodeTypeId> target, const LinkTask* link = nullptr);

}  // namespace magnn
