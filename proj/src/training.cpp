#include "magnn/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "magnn/error.hpp"
#include "magnn/rng.hpp"

namespace magnn {

using ad::Tensor;

std::string to_string(TrainMode m) { return m == TrainMode::SemiSupervised ? "semi" : "unsup"; }

TrainMode parse_train_mode(std::string_view s) {
  if (s == "semi" || s == "semi-supervised") return TrainMode::SemiSupervised;
  if (s == "unsup" || s == "unsupervised") return TrainMode::Unsupervised;
  throw ConfigError("unknown training mode '" + std::string(s) + "' (expected semi or unsup)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be a finite non-negative number");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (epochs == 0) throw ConfigError("at least one epoch is required");
  if (patience == 0 || patience > epochs) throw ConfigError("patience must lie in [1, epochs]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (negatives_per_positive == 0) throw ConfigError("at least one negative per positive is required");
}

Tensor semi_supervised_loss(const Tensor& probabilities, std::span<const int> labels,
                            std::span<const std::uint32_t> rows) {
  const std::size_t n = probabilities.rows(), C = probabilities.cols();
  if (labels.size() != n) throw ShapeError("one label per row of the prediction matrix is required");
  std::vector<std::uint32_t> cols;
  cols.reserve(rows.size());
  const auto P = probabilities.values();
  for (auto v : rows) {
    if (v >= n) throw ShapeError("labeled node " + std::to_string(v) + " is out of range");
    const int y = labels[v];
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw DataError("label " + std::to_string(y) + " of node " + std::to_string(v) + " is outside [0, " +
                      std::to_string(C) + ")");
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (P[v * C + c] < 0.0) throw NumericError("negative probability in row " + std::to_string(v));
      total += P[v * C + c];
    }
    if (std::abs(total - 1.0) > 1e-9) throw NumericError("row " + std::to_string(v) + " is not a probability vector");
    cols.push_back(static_cast<std::uint32_t>(y));
  }
  if (rows.empty()) return Tensor::scalar(0.0);
  return ad::scale(ad::sum(ad::log_clamped(ad::pick(probabilities, rows, cols))), -1.0);
}

namespace {

Tensor pair_scores(const Tensor& left, const Tensor& right, std::span<const NodePair> pairs) {
  std::vector<std::uint32_t> a, b;
  for (const auto& [u, v] : pairs) {
    a.push_back(u);
    b.push_back(v);
  }
  return ad::row_dot(ad::gather_rows(left, a), ad::gather_rows(right, b));
}

}  // namespace

Tensor unsupervised_loss(const Tensor& left, const Tensor& right, std::span<const NodePair> positives,
                         std::span<const NodePair> negatives) {
  if (left.cols() != right.cols()) throw ShapeError("paired embeddings must share one dimension");
  Tensor loss = Tensor::scalar(0.0);
  if (!positives.empty())
    loss = ad::sum(ad::log_clamped(ad::sigmoid(pair_scores(left, right, positives))));
  if (!negatives.empty())
    loss = ad::add(loss, ad::sum(ad::log_clamped(ad::sigmoid(ad::scale(pair_scores(left, right, negatives), -1.0)))));
  return ad::scale(loss, -1.0);
}

std::size_t PairSet::universe() const {
  if (unordered_) return left_ * (left_ + 1) / 2;
  return left_ * right_;
}

std::vector<NodePair> negative_sample(const PairSet& positives, std::size_t count, Rng& rng) {
  if (count == 0) return {};
  if (positives.size() >= positives.universe())
    throw DataError("cannot sample negatives: every node pair is already positive");
  std::vector<NodePair> out;
  out.reserve(count);
  while (out.size() < count) {
    const auto a = static_cast<std::uint32_t>(uniform_index(rng, positives.left_count()));
    const auto b = static_cast<std::uint32_t>(uniform_index(rng, positives.right_count()));
    if (!positives.contains(a, b)) out.emplace_back(a, b);
  }
  return out;
}

LinkSplit split_links(const GraphInput& input, RelationId relation, double validation_fraction,
                      double test_fraction, std::uint64_t seed) {
  if (index_of(relation) >= input.schema.num_relations()) throw ConfigError("unknown link relation");
  if (!(validation_fraction >= 0.0 && test_fraction >= 0.0 && validation_fraction + test_fraction < 1.0))
    throw ConfigError("held-out link fractions must be non-negative and sum below 1");
  const auto& rel = input.schema.relation(relation);
  LinkSplit out;
  auto& task = out.task;
  task.relation = relation;
  task.left_type = rel.source;
  task.right_type = rel.target;
  task.all_positive = PairSet(input.node_counts.at(index_of(rel.source)), input.node_counts.at(index_of(rel.target)),
                              rel.is_homogeneous());

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < input.edges.size(); ++i)
    if (input.edges[i].relation == relation) {
      idx.push_back(i);
      task.all_positive.insert(input.edges[i].source, input.edges[i].target);
    }
  auto rng = make_rng(seed, "link-split");
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * double(idx.size())));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(idx.size())));
  std::vector<bool> held(input.edges.size(), false);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& e = input.edges[idx[k]];
    if (k < n_val) {
      task.validation_positive.emplace_back(e.source, e.target);
      held[idx[k]] = true;
    } else if (k < n_val + n_test) {
      task.test_positive.emplace_back(e.source, e.target);
      held[idx[k]] = true;
    }
  }
  out.train_graph = input;
  out.train_graph.edges.clear();
  for (std::size_t i = 0; i < input.edges.size(); ++i) {
    if (held[i]) continue;
    out.train_graph.edges.push_back(input.edges[i]);
    if (input.edges[i].relation == relation) task.train_positive.emplace_back(input.edges[i].source, input.edges[i].target);
  }
  std::sort(task.train_positive.begin(), task.train_positive.end());
  task.validation_negative = negative_sample(task.all_positive, task.validation_positive.size(), rng);
  task.test_negative = negative_sample(task.all_positive, task.test_positive.size(), rng);
  return out;
}

Adam::Adam(const ModelParams& params, double learning_rate, double weight_decay, double beta1, double beta2,
           double eps)
    : lr_(learning_rate), decay_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& t : params.tensors()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(ModelParams& params) {
  if (params.size() != m_.size()) throw ShapeError("optimizer state does not match the parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, double(t_));
  const double c2 = 1.0 - std::pow(b2_, double(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& tensor = params.get(params.names()[p]);
    auto theta = tensor.data();
    const auto grad = tensor.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = (grad.empty() ? 0.0 : grad[i]) + decay_ * theta[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * g;
      v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
      theta[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

struct Objective {
  const HetGraph& graph;
  const std::vector<InstanceTable>& tables;
  const ModelConfig& model;
  TrainMode mode;
  NodeTypeId target{};
  std::vector<std::uint32_t> train_rows, validation_rows;
  const LinkTask* link = nullptr;

  Tensor loss(const ModelParams& params, bool train, std::uint64_t dropout_seed,
              std::span<const std::uint32_t> rows, std::span<const NodePair> pos,
              std::span<const NodePair> neg) const {
    auto res = forward(graph, tables, params, model, {train, dropout_seed});
    if (mode == TrainMode::SemiSupervised)
      return semi_supervised_loss(res.output[index_of(target)], graph.labels(target), rows);
    return unsupervised_loss(res.output[index_of(link->left_type)], res.output[index_of(link->right_type)], pos, neg);
  }
};

}  // namespace

TrainResult train(const HetGraph& graph, const std::vector<InstanceTable>& tables, const ModelConfig& model_config,
                  const TrainConfig& config, std::optional<NodeTypeId> target, const LinkTask* link) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  ModelConfig model = model_config;
  model.dropout = config.dropout;
  model.validate(graph.schema());

  Objective obj{graph, tables, model, config.mode, {}, {}, {}, nullptr};
  if (config.mode == TrainMode::SemiSupervised) {
    if (!target) throw ConfigError("semi-supervised training needs a target node type");
    obj.target = *target;
    const auto& sym = graph.schema().node_type(*target).symbol;
    if (!graph.has_labels(*target) || !graph.has_splits(*target))
      throw DataError("semi-supervised training needs labels and train/validation masks for type '" + sym + "'");
    if (model.metapaths_for(*target).empty()) throw ConfigError("no metapath targets node type '" + sym + "'");
    if (model.output_activation != Activation::Softmax)
      throw ConfigError("semi-supervised training needs a softmax output layer");
    if (static_cast<int>(model.out_dim) != graph.num_classes(*target))
      throw ConfigError("output dimension " + std::to_string(model.out_dim) + " differs from the " +
                        std::to_string(graph.num_classes(*target)) + " classes of type '" + sym + "'");
    obj.train_rows = graph.nodes_in_split(*target, Split::Train);
    obj.validation_rows = graph.nodes_in_split(*target, Split::Validation);
    if (obj.train_rows.empty() || obj.validation_rows.empty())
      throw DataError("semi-supervised training needs non-empty train and validation masks for type '" + sym + "'");
  } else {
    if (!link) throw ConfigError("unsupervised training needs a link task");
    obj.link = link;
    for (auto t : {link->left_type, link->right_type})
      if (model.metapaths_for(t).empty())
        throw ConfigError("no metapath targets node type '" + graph.schema().node_type(t).symbol + "'");
    if (link->train_positive.empty() || link->validation_positive.empty())
      throw DataError("unsupervised training needs training and validation positive pairs");
  }

  auto params = init_params(graph, model, substream_seed(config.seed, "init"));
  Adam adam(params, config.learning_rate, config.weight_decay);
  TrainResult result{params.clone(), {}};
  auto& report = result.report;
  report.best_validation_loss = std::numeric_limits<double>::infinity();

  PairSet train_pairs(0, 0);
  if (link) {
    train_pairs = PairSet(link->all_positive.left_count(), link->all_positive.right_count(),
                          link->all_positive.unordered());
    for (const auto& [a, b] : link->train_positive) train_pairs.insert(a, b);
  }
  auto sampling = make_rng(config.seed, "sampling");
  const auto dropout_root = substream_seed(config.seed, "dropout");
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    params.zero_grad();
    std::vector<NodePair> negatives;
    if (link) negatives = negative_sample(train_pairs, link->train_positive.size() * config.negatives_per_positive, sampling);
    auto loss = obj.loss(params, true, substream_seed(dropout_root, epoch), obj.train_rows,
                         link ? std::span<const NodePair>(link->train_positive) : std::span<const NodePair>{},
                         negatives);
    const double train_loss = loss.item();
    if (!std::isfinite(train_loss)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    ad::backward(loss);
    adam.step(params);

    double val;
    {
      ad::NoGradGuard guard;
      val = obj.loss(params, false, 0, obj.validation_rows,
                     link ? std::span<const NodePair>(link->validation_positive) : std::span<const NodePair>{},
                     link ? std::span<const NodePair>(link->validation_negative) : std::span<const NodePair>{})
                .item();
    }
    if (!std::isfinite(val)) throw NumericError("validation loss became non-finite at epoch " + std::to_string(epoch));
    report.train_loss.push_back(train_loss);
    report.validation_loss.push_back(val);
    if (val < report.best_validation_loss) {
      report.best_validation_loss = val;
      report.best_epoch = epoch;
      result.params = params.clone();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace magnn
