#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "magnn/matrix.hpp"

namespace magnn {

enum class NodeTypeId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::size_t index_of(NodeTypeId t) { return static_cast<std::size_t>(t); }
constexpr std::size_t index_of(RelationId r) { return static_cast<std::size_t>(r); }

/// Global node handle: node type plus 0-based index within that type.
struct NodeHandle {
  NodeTypeId type{};
  std::uint32_t index = 0;

  auto operator<=>(const NodeHandle&) const = default;
};

struct NodeTypeInfo {
  std::string symbol;  // short token used in metapath strings, e.g. "M"
  std::string name;    // human-readable, e.g. "movie"
};

struct RelationInfo {
  std::string name;
  NodeTypeId source{};
  NodeTypeId target{};

  bool connects(NodeTypeId a, NodeTypeId b) const {
    return (source == a && target == b) || (source == b && target == a);
  }
  bool is_homogeneous() const { return source == target; }
};

/// Node types and relation types of a heterogeneous graph.
class Schema {
 public:
  NodeTypeId add_node_type(std::string symbol, std::string name = {});
  RelationId add_relation(std::string name, NodeTypeId source, NodeTypeId target);

  std::size_t num_node_types() const { return types_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  const NodeTypeInfo& node_type(NodeTypeId t) const;
  const RelationInfo& relation(RelationId r) const;

  std::optional<NodeTypeId> find_node_type(std::string_view symbol) const;
  std::optional<RelationId> find_relation(std::string_view name) const;
  /// All relations whose endpoints are {a, b} in either orientation.
  std::vector<RelationId> relations_between(NodeTypeId a, NodeTypeId b) const;

  bool operator==(const Schema&) const;

 private:
  std::vector<NodeTypeInfo> types_;
  std::vector<RelationInfo> relations_;
};

inline bool operator==(const NodeTypeInfo& a, const NodeTypeInfo& b) {
  return a.symbol == b.symbol && a.name == b.name;
}
inline bool operator==(const RelationInfo& a, const RelationInfo& b) {
  return a.name == b.name && a.source == b.source && a.target == b.target;
}

/// Per-type node features. Featureless types carry an implicit identity
/// matrix (one-hot id vectors) that is never materialized.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  static FeatureMatrix one_hot(std::size_t n);
  static FeatureMatrix dense(Matrix m);

  bool is_identity() const { return identity_; }
  std::size_t rows() const { return identity_ ? n_ : values_.rows; }
  std::size_t dim() const { return identity_ ? n_ : values_.cols; }
  /// Dense values; only valid when !is_identity().
  const Matrix& values() const { return values_; }
  Matrix to_dense() const;

 private:
  bool identity_ = false;
  std::size_t n_ = 0;
  Matrix values_;
};

enum class Split : std::uint8_t { None = 0, Train = 1, Validation = 2, Test = 3 };

struct TypedEdge {
  RelationId relation{};
  std::uint32_t source = 0;
  std::uint32_t target = 0;
};

/// Everything needed to construct a HetGraph. Optional per-type entries may
/// be left empty (features default to one-hot ids).
struct GraphInput {
  Schema schema;
  std::vector<std::size_t> node_counts;
  std::vector<TypedEdge> edges;
  std::vector<std::optional<Matrix>> features;
  std::vector<std::optional<std::vector<int>>> labels;  // -1 marks unlabeled
  std::vector<std::optional<std::vector<Split>>> splits;
};

/// Compressed neighbor lists for one direction of one relation.
struct Adjacency {
  std::vector<std::size_t> offsets;  // size = node count + 1
  std::vector<std::uint32_t> neighbors;

  std::span<const std::uint32_t> of(std::uint32_t v) const {
    return {neighbors.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }
  std::size_t degree(std::uint32_t v) const { return offsets[v + 1] - offsets[v]; }
};

/// Immutable typed heterogeneous graph. Every edge is stored in both
/// directions under its relation; homogeneous relations (same source and
/// target type) use one symmetric neighbor list for both directions.
class HetGraph {
 public:
  const Schema& schema() const { return schema_; }
  std::size_t num_node_types() const { return schema_.num_node_types(); }
  std::size_t num_relations() const { return schema_.num_relations(); }
  std::size_t node_count(NodeTypeId t) const { return node_counts_.at(index_of(t)); }
  std::size_t total_nodes() const;
  std::size_t edge_count(RelationId r) const { return edge_counts_.at(index_of(r)); }

  /// Source-to-target neighbor lists (indexed by source node).
  const Adjacency& forward(RelationId r) const { return forward_.at(index_of(r)); }
  /// Target-to-source neighbor lists (indexed by target node).
  const Adjacency& reverse(RelationId r) const { return reverse_.at(index_of(r)); }
  /// Neighbors of `node` (of type `from`) across relation r.
  std::span<const std::uint32_t> neighbors(RelationId r, NodeTypeId from, std::uint32_t node) const;

  /// Re-extracts the undirected edge list, sorted; homogeneous relations report (min, max).
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges(RelationId r) const;

  const FeatureMatrix& features(NodeTypeId t) const { return features_.at(index_of(t)); }
  bool has_labels(NodeTypeId t) const { return !labels_.at(index_of(t)).empty(); }
  std::span<const int> labels(NodeTypeId t) const { return labels_.at(index_of(t)); }
  bool has_splits(NodeTypeId t) const { return !splits_.at(index_of(t)).empty(); }
  std::span<const Split> splits(NodeTypeId t) const { return splits_.at(index_of(t)); }
  /// Node indices of type t assigned to split s, ascending.
  std::vector<std::uint32_t> nodes_in_split(NodeTypeId t, Split s) const;
  /// Number of distinct classes (max label + 1) for a labeled type.
  int num_classes(NodeTypeId t) const;

 private:
  friend HetGraph build_graph(GraphInput input);

  Schema schema_;
  std::vector<std::size_t> node_counts_;
  std::vector<std::size_t> edge_counts_;
  std::vector<Adjacency> forward_;
  std::vector<Adjacency> reverse_;
  std::vector<FeatureMatrix> features_;
  std::vector<std::vector<int>> labels_;
  std::vector<std::vector<Split>> splits_;
};

/// Validates the input and builds bidirectional adjacency.
/// Throws SchemaError on endpoint/index violations or duplicate edges and
/// ShapeError on feature/label/split size mismatches.
HetGraph build_graph(GraphInput input);

}  // namespace magnn
