#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "magnn/graph.hpp"

namespace magnn {

/// Schema-level path A1 -R1- A2 ... -Rl- A(l+1). Instances are stored in the
/// same order, so position 0 holds the metapath-based neighbor and the last
/// position holds the target node; targets are therefore of type A(l+1).
struct Metapath {
  std::vector<NodeTypeId> types;      // l + 1 entries
  std::vector<RelationId> relations;  // l entries
  bool symmetric = false;

  std::size_t length() const { return relations.size(); }
  NodeTypeId target_type() const { return types.back(); }
  NodeTypeId neighbor_type() const { return types.front(); }
  Metapath reversed() const;
  /// "M-D-M" style string; relation names are added in brackets only when
  /// the type pair is ambiguous in `schema`.
  std::string to_string(const Schema& schema) const;

  bool operator==(const Metapath& o) const { return types == o.types && relations == o.relations; }
};

/// Checks schema consistency and computes the symmetry flag.
/// Throws SchemaError naming the first offending position.
Metapath validate_metapath(const Schema& schema, Metapath path);

/// Parses "A-P-V-P-A" (type symbols joined by '-'), inferring the unique
/// relation between consecutive types. Ambiguous pairs need an explicit
/// relation name: "U-[friend]-U".
Metapath parse_metapath(std::string_view text, const Schema& schema);

/// Metapath instances of one metapath, grouped per target node in
/// contiguous blocks. Each instance holds length()+1 local node indices whose
/// types follow the metapath's type sequence.
class InstanceTable {
 public:
  InstanceTable() = default;
  InstanceTable(Metapath path, std::vector<std::uint32_t> targets, std::vector<std::size_t> offsets,
                std::vector<std::uint32_t> nodes);

  const Metapath& path() const { return path_; }
  std::size_t width() const { return path_.length() + 1; }
  std::size_t num_targets() const { return targets_.size(); }
  std::size_t num_instances() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::span<const std::uint32_t> targets() const { return targets_; }
  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const std::uint32_t> nodes() const { return nodes_; }

  std::span<const std::uint32_t> instance(std::size_t i) const {
    return {nodes_.data() + i * width(), width()};
  }
  std::size_t block_size(std::size_t target_pos) const {
    return offsets_[target_pos + 1] - offsets_[target_pos];
  }
  /// Position of node v in targets(), if present.
  std::optional<std::size_t> find_target(std::uint32_t v) const;
  /// True when targets() is exactly 0..n-1 for the target type.
  bool covers_all(std::size_t target_type_count) const;

  bool operator==(const InstanceTable&) const = default;

 private:
  Metapath path_;
  std::vector<std::uint32_t> targets_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> nodes_;
};

struct EnumerateOptions {
  std::optional<std::size_t> cap;  // max instances kept per target; uniform sample when exceeded
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Enumerates every walk following `path` that ends at each target.
/// Blocks are sorted lexicographically by node indices; nodes may repeat
/// inside an instance. With an empty `targets` list every node of the target
/// type is used.
InstanceTable enumerate_instances(const HetGraph& graph, const Metapath& path,
                                  std::span<const std::uint32_t> targets = {},
                                  const EnumerateOptions& options = {});

/// Metapath-based neighbors of v: endpoint t0 of every instance in block(v),
/// duplicates kept.
std::vector<NodeHandle> metapath_neighbors(const InstanceTable& table, std::uint32_t v);

/// (v, u) pairs over all blocks, one per instance.
std::vector<std::pair<NodeHandle, NodeHandle>> build_metapath_graph(const InstanceTable& table);

/// Versioned text dump of a table for caching between runs.
void write_instance_table(std::ostream& out, const InstanceTable& table, const Schema& schema);
InstanceTable read_instance_table(std::istream& in, const Schema& schema);

}  // namespace magnn
