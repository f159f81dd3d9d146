#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "magnn/graph.hpp"
#include "magnn/matrix.hpp"
#include "magnn/rng.hpp"

namespace magnn {

/// One evaluation record. Metrics keep insertion order.
struct EvalReport {
  std::string task;     // classify, cluster, linkpred, ...
  std::string variant;  // model variant tag, empty for plain runs
  std::optional<double> train_fraction;
  std::size_t runs = 1;
  std::vector<std::pair<std::string, double>> metrics;

  double metric(const std::string& name) const;
  /// Single-line JSON record.
  std::string to_json() const;
};

struct F1Scores {
  double macro = 0.0;
  double micro = 0.0;
};

/// Macro-F1 averages over classes present in y_true or y_pred; a class with
/// no true and no predicted members is ignored.
F1Scores f1_scores(std::span<const int> y_true, std::span<const int> y_pred, int num_classes);

struct LogisticOptions {
  std::size_t iterations = 300;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

/// Multinomial logistic regression on standardized features, full-batch
/// gradient descent from zero weights. Deterministic.
class LogisticRegression {
 public:
  void fit(const Matrix& x, std::span<const int> y, int num_classes, const LogisticOptions& options = {});
  std::vector<int> predict(const Matrix& x) const;

 private:
  int classes_ = 0;
  std::vector<double> mean_, scale_;
  std::vector<double> weights_;  // classes x (dim + 1), bias last
};

struct ProbeResult {
  F1Scores mean;
  F1Scores stddev;
  std::size_t runs = 0;
};

/// Trains a linear probe on a random `train_fraction` of the given rows and
/// scores the rest, averaged over `runs` splits. Rows are the embeddings of
/// test-mask nodes only. Splits missing a class are redrawn.
ProbeResult linear_probe(const Matrix& embeddings, std::span<const int> labels, double train_fraction,
                         std::uint64_t seed, std::size_t runs = 10, const LogisticOptions& options = {});

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations, best inertia over `restarts`.
/// Ties go to the lowest centroid index.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                    std::size_t max_iterations = 300);

/// Normalized mutual information with arithmetic-mean normalization.
/// Defined as 1 when both partitions are trivial and identical, 0 when only one is.
double nmi(std::span<const int> a, std::span<const int> b);
/// Adjusted Rand index; 0 when the expected and maximum indices coincide
/// unless the partitions are identical.
double ari(std::span<const int> a, std::span<const int> b);

struct ClusterScores {
  double nmi = 0.0;
  double ari = 0.0;
};

ClusterScores cluster_eval(const Matrix& embeddings, std::span<const int> labels, std::size_t k, std::uint64_t seed,
                           std::size_t restarts = 10);

/// Tie-aware ROC AUC: probability a random positive outscores a random
/// negative, ties counting one half.
double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores);
/// Average precision with tied scores forming one threshold.
double average_precision(std::span<const double> positive_scores, std::span<const double> negative_scores);

struct LinkScores {
  double auc = 0.0;
  double ap = 0.0;
};

/// Scores p = sigmoid(left_u . right_v) for each pair and ranks them.
LinkScores link_predict_eval(const Matrix& left, const Matrix& right,
                             std::span<const std::pair<std::uint32_t, std::uint32_t>> positives,
                             std::span<const std::pair<std::uint32_t, std::uint32_t>> negatives);

/// IMDb-shaped planted-class graph: movies (labeled, featured), directors and
/// actors, relations M-D and M-A.
struct SynthConfig {
  int classes = 3;
  std::size_t movies = 300;
  std::size_t directors = 100;
  std::size_t actors = 300;
  double p_in = 0.05;
  double p_out = 0.005;
  double feature_noise = 1.0;  // stddev of Gaussian noise on one-hot class features
  double train_fraction = 0.1;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

GraphInput synth_hetgraph(const SynthConfig& config);

/// Bipartite user-artist graph with planted preference blocks; users and
/// artists in the same block link with p_in, otherwise p_out.
struct SynthLinkConfig {
  std::size_t users = 200;
  std::size_t artists = 200;
  int blocks = 8;
  double p_in = 0.4;
  double p_out = 0.002;
  std::uint64_t seed = 0;
};

GraphInput synth_bipartite(const SynthLinkConfig& config);

}  // namespace magnn
