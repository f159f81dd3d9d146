#include "magnn/graph.hpp"

#include <algorithm>
#include <numeric>

#include "magnn/error.hpp"

namespace magnn {

NodeTypeId Schema::add_node_type(std::string symbol, std::string name) {
  if (symbol.empty()) throw SchemaError("node type symbol must be non-empty");
  if (find_node_type(symbol)) throw SchemaError("duplicate node type symbol '" + symbol + "'");
  if (symbol.find('-') != std::string::npos || symbol.find('[') != std::string::npos)
    throw SchemaError("node type symbol '" + symbol + "' may not contain '-' or '['");
  types_.push_back({std::move(symbol), std::move(name)});
  return NodeTypeId(types_.size() - 1);
}

RelationId Schema::add_relation(std::string name, NodeTypeId source, NodeTypeId target) {
  if (index_of(source) >= types_.size() || index_of(target) >= types_.size())
    throw SchemaError("relation '" + name + "' references an undeclared node type");
  if (name.empty()) name = types_[index_of(source)].symbol + "-" + types_[index_of(target)].symbol;
  if (find_relation(name)) throw SchemaError("duplicate relation name '" + name + "'");
  relations_.push_back({std::move(name), source, target});
  return RelationId(relations_.size() - 1);
}

const NodeTypeInfo& Schema::node_type(NodeTypeId t) const {
  if (index_of(t) >= types_.size()) throw SchemaError("unknown node type id");
  return types_[index_of(t)];
}

const RelationInfo& Schema::relation(RelationId r) const {
  if (index_of(r) >= relations_.size()) throw SchemaError("unknown relation id");
  return relations_[index_of(r)];
}

std::optional<NodeTypeId> Schema::find_node_type(std::string_view symbol) const {
  for (std::size_t i = 0; i < types_.size(); ++i)
    if (types_[i].symbol == symbol) return NodeTypeId(i);
  return std::nullopt;
}

std::optional<RelationId> Schema::find_relation(std::string_view name) const {
  for (std::size_t i = 0; i < relations_.size(); ++i)
    if (relations_[i].name == name) return RelationId(i);
  return std::nullopt;
}

std::vector<RelationId> Schema::relations_between(NodeTypeId a, NodeTypeId b) const {
  std::vector<RelationId> out;
  for (std::size_t i = 0; i < relations_.size(); ++i)
    if (relations_[i].connects(a, b)) out.push_back(RelationId(i));
  return out;
}

bool Schema::operator==(const Schema& other) const {
  return types_ == other.types_ && relations_ == other.relations_;
}

FeatureMatrix FeatureMatrix::one_hot(std::size_t n) {
  FeatureMatrix f;
  f.identity_ = true;
  f.n_ = n;
  return f;
}

FeatureMatrix FeatureMatrix::dense(Matrix m) {
  FeatureMatrix f;
  f.values_ = std::move(m);
  return f;
}

Matrix FeatureMatrix::to_dense() const { return identity_ ? Matrix::identity(n_) : values_; }

std::size_t HetGraph::total_nodes() const {
  return std::accumulate(node_counts_.begin(), node_counts_.end(), std::size_t{0});
}

std::span<const std::uint32_t> HetGraph::neighbors(RelationId r, NodeTypeId from,
                                                   std::uint32_t node) const {
  const auto& rel = schema_.relation(r);
  if (rel.source == from) return forward(r).of(node);
  if (rel.target == from) return reverse(r).of(node);
  throw SchemaError("relation '" + rel.name + "' does not touch node type '" +
                    schema_.node_type(from).symbol + "'");
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> HetGraph::edges(RelationId r) const {
  const auto& rel = schema_.relation(r);
  const auto& adj = forward(r);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::uint32_t u = 0; u + 1 < adj.offsets.size(); ++u)
    for (auto v : adj.of(u))
      if (!rel.is_homogeneous() || u <= v) out.emplace_back(u, v);
  return out;
}

std::vector<std::uint32_t> HetGraph::nodes_in_split(NodeTypeId t, Split s) const {
  std::vector<std::uint32_t> out;
  const auto& sp = splits_.at(index_of(t));
  for (std::size_t i = 0; i < sp.size(); ++i)
    if (sp[i] == s) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

int HetGraph::num_classes(NodeTypeId t) const {
  const auto& y = labels_.at(index_of(t));
  if (y.empty()) return 0;
  return *std::max_element(y.begin(), y.end()) + 1;
}

namespace {

Adjacency make_csr(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
  Adjacency adj;
  adj.offsets.assign(n + 1, 0);
  for (const auto& [a, b] : pairs) ++adj.offsets[a + 1];
  std::partial_sum(adj.offsets.begin(), adj.offsets.end(), adj.offsets.begin());
  adj.neighbors.resize(pairs.size());
  std::vector<std::size_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
  for (const auto& [a, b] : pairs) adj.neighbors[cursor[a]++] = b;
  for (std::size_t v = 0; v < n; ++v)
    std::sort(adj.neighbors.begin() + adj.offsets[v], adj.neighbors.begin() + adj.offsets[v + 1]);
  return adj;
}

}  // namespace

HetGraph build_graph(GraphInput input) {
  HetGraph g;
  const auto& schema = input.schema;
  const std::size_t types = schema.num_node_types();
  const std::size_t rels = schema.num_relations();
  if (types == 0) throw SchemaError("graph needs at least one node type");
  if (input.node_counts.size() != types)
    throw ShapeError("node_counts has " + std::to_string(input.node_counts.size()) +
                     " entries for " + std::to_string(types) + " node types");
  if (input.features.size() > types || input.labels.size() > types || input.splits.size() > types)
    throw ShapeError("per-type feature/label/split vectors exceed the number of node types");
  input.features.resize(types);
  input.labels.resize(types);
  input.splits.resize(types);

  // Bucket edges per relation, normalizing homogeneous edges to (min, max).
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> per_rel(rels);
  for (const auto& e : input.edges) {
    if (index_of(e.relation) >= rels) throw SchemaError("edge references an undeclared relation");
    const auto& rel = schema.relation(e.relation);
    const auto ns = input.node_counts[index_of(rel.source)];
    const auto nt = input.node_counts[index_of(rel.target)];
    if (e.source >= ns || e.target >= nt)
      throw SchemaError("edge (" + std::to_string(e.source) + ", " + std::to_string(e.target) +
                        ") of relation '" + rel.name + "' is out of range for its endpoint types (" +
                        std::to_string(ns) + " x " + std::to_string(nt) + " nodes)");
    auto p = std::make_pair(e.source, e.target);
    if (rel.is_homogeneous() && p.first > p.second) std::swap(p.first, p.second);
    per_rel[index_of(e.relation)].push_back(p);
  }

  g.forward_.resize(rels);
  g.reverse_.resize(rels);
  g.edge_counts_.resize(rels);
  for (std::size_t r = 0; r < rels; ++r) {
    auto& pairs = per_rel[r];
    std::sort(pairs.begin(), pairs.end());
    auto dup = std::adjacent_find(pairs.begin(), pairs.end());
    const auto& rel = schema.relation(RelationId(r));
    if (dup != pairs.end())
      throw SchemaError("duplicate edge (" + std::to_string(dup->first) + ", " +
                        std::to_string(dup->second) + ") in relation '" + rel.name + "'");
    g.edge_counts_[r] = pairs.size();
    const auto ns = input.node_counts[index_of(rel.source)];
    const auto nt = input.node_counts[index_of(rel.target)];
    if (rel.is_homogeneous()) {
      std::vector<std::pair<std::uint32_t, std::uint32_t>> sym;
      sym.reserve(2 * pairs.size());
      for (const auto& [a, b] : pairs) {
        sym.emplace_back(a, b);
        if (a != b) sym.emplace_back(b, a);
      }
      g.forward_[r] = make_csr(ns, sym);
      g.reverse_[r] = g.forward_[r];
    } else {
      std::vector<std::pair<std::uint32_t, std::uint32_t>> flipped;
      flipped.reserve(pairs.size());
      for (const auto& [a, b] : pairs) flipped.emplace_back(b, a);
      g.forward_[r] = make_csr(ns, pairs);
      g.reverse_[r] = make_csr(nt, flipped);
    }
  }

  g.features_.resize(types);
  g.labels_.resize(types);
  g.splits_.resize(types);
  for (std::size_t t = 0; t < types; ++t) {
    const auto n = input.node_counts[t];
    const auto& sym = schema.node_type(NodeTypeId(t)).symbol;
    if (auto& f = input.features[t]) {
      if (f->rows != n)
        throw ShapeError("feature matrix of type '" + sym + "' has " + std::to_string(f->rows) +
                         " rows for " + std::to_string(n) + " nodes");
      if (f->data.size() != f->rows * f->cols) throw ShapeError("feature matrix buffer size mismatch");
      g.features_[t] = FeatureMatrix::dense(std::move(*f));
    } else {
      g.features_[t] = FeatureMatrix::one_hot(n);
    }
    if (auto& y = input.labels[t]) {
      if (y->size() != n) throw ShapeError("label vector of type '" + sym + "' has wrong length");
      for (int c : *y)
        if (c < -1) throw DataError("negative class index in labels of type '" + sym + "'");
      g.labels_[t] = std::move(*y);
    }
    if (auto& s = input.splits[t]) {
      if (s->size() != n) throw ShapeError("split vector of type '" + sym + "' has wrong length");
      g.splits_[t] = std::move(*s);
    }
  }
  g.schema_ = std::move(input.schema);
  g.node_counts_ = std::move(input.node_counts);
  return g;
}

}  // namespace magnn
