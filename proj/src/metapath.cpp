#include "magnn/metapath.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "magnn/error.hpp"
#include "magnn/rng.hpp"

namespace magnn {

Metapath Metapath::reversed() const {
  Metapath r;
  r.types.assign(types.rbegin(), types.rend());
  r.relations.assign(relations.rbegin(), relations.rend());
  r.symmetric = symmetric;
  return r;
}

std::string Metapath::to_string(const Schema& schema) const {
  std::string s;
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (i > 0) {
      s += '-';
      const auto& rel = schema.relation(relations[i - 1]);
      if (schema.relations_between(types[i - 1], types[i]).size() > 1) s += "[" + rel.name + "]-";
    }
    s += schema.node_type(types[i]).symbol;
  }
  return s;
}

Metapath validate_metapath(const Schema& schema, Metapath path) {
  if (path.relations.empty()) throw SchemaError("metapath must contain at least one relation");
  if (path.types.size() != path.relations.size() + 1)
    throw SchemaError("metapath needs exactly one more node type than relations");
  for (auto t : path.types)
    if (index_of(t) >= schema.num_node_types()) throw SchemaError("metapath references an undeclared node type");
  for (std::size_t i = 0; i < path.relations.size(); ++i) {
    if (index_of(path.relations[i]) >= schema.num_relations())
      throw SchemaError("metapath references an undeclared relation at position " + std::to_string(i));
    const auto& rel = schema.relation(path.relations[i]);
    if (!rel.connects(path.types[i], path.types[i + 1]))
      throw SchemaError("relation '" + rel.name + "' at position " + std::to_string(i) +
                        " does not connect '" + schema.node_type(path.types[i]).symbol + "' and '" +
                        schema.node_type(path.types[i + 1]).symbol + "'");
  }
  const auto rev = path.reversed();
  path.symmetric = rev.types == path.types && rev.relations == path.relations;
  return path;
}

Metapath parse_metapath(std::string_view text, const Schema& schema) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (c == '-') {
      tokens.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  tokens.push_back(cur);

  Metapath path;
  std::optional<std::string> pending_relation;
  for (const auto& tok : tokens) {
    if (tok.empty()) throw SchemaError("empty token in metapath '" + std::string(text) + "'");
    if (tok.front() == '[') {
      if (tok.back() != ']' || tok.size() < 3 || path.types.empty() || pending_relation)
        throw SchemaError("malformed relation annotation '" + tok + "' in metapath '" + std::string(text) + "'");
      pending_relation = tok.substr(1, tok.size() - 2);
      continue;
    }
    auto type = schema.find_node_type(tok);
    if (!type) throw SchemaError("unknown node type symbol '" + tok + "' in metapath '" + std::string(text) + "'");
    if (!path.types.empty()) {
      const auto prev = path.types.back();
      if (pending_relation) {
        auto r = schema.find_relation(*pending_relation);
        if (!r) throw SchemaError("unknown relation '" + *pending_relation + "'");
        path.relations.push_back(*r);
        pending_relation.reset();
      } else {
        auto candidates = schema.relations_between(prev, *type);
        if (candidates.empty())
          throw SchemaError("no relation between '" + schema.node_type(prev).symbol + "' and '" + tok +
                            "' in metapath '" + std::string(text) + "'");
        if (candidates.size() > 1)
          throw SchemaError("ambiguous relation between '" + schema.node_type(prev).symbol + "' and '" +
                            tok + "'; annotate it as X-[name]-Y");
        path.relations.push_back(candidates.front());
      }
    }
    path.types.push_back(*type);
  }
  if (pending_relation) throw SchemaError("metapath ends with a relation annotation");
  return validate_metapath(schema, std::move(path));
}

InstanceTable::InstanceTable(Metapath path, std::vector<std::uint32_t> targets,
                             std::vector<std::size_t> offsets, std::vector<std::uint32_t> nodes)
    : path_(std::move(path)), targets_(std::move(targets)), offsets_(std::move(offsets)), nodes_(std::move(nodes)) {
  if (offsets_.size() != targets_.size() + 1) throw ShapeError("instance table offsets/targets size mismatch");
  if (!offsets_.empty() && offsets_.front() != 0) throw ShapeError("instance table offsets must start at 0");
  if (!std::is_sorted(offsets_.begin(), offsets_.end())) throw ShapeError("instance table offsets must be nondecreasing");
  if (nodes_.size() != num_instances() * width()) throw ShapeError("instance table node buffer size mismatch");
}

std::optional<std::size_t> InstanceTable::find_target(std::uint32_t v) const {
  if (v < targets_.size() && targets_[v] == v) return v;
  auto it = std::find(targets_.begin(), targets_.end(), v);
  if (it == targets_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - targets_.begin());
}

bool InstanceTable::covers_all(std::size_t n) const {
  if (targets_.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (targets_[i] != i) return false;
  return true;
}

namespace {

struct BlockEnumerator {
  const HetGraph& graph;
  const Metapath& path;
  const EnumerateOptions& options;
  std::vector<std::uint32_t> seq;
  std::vector<std::uint32_t> block;  // flat, width per instance
  std::size_t seen = 0;
  Rng rng;

  BlockEnumerator(const HetGraph& g, const Metapath& p, const EnumerateOptions& o)
      : graph(g), path(p), options(o), seq(p.length() + 1) {}

  void emit() {
    const std::size_t w = seq.size();
    ++seen;
    if (!options.cap || block.size() / w < *options.cap) {
      block.insert(block.end(), seq.begin(), seq.end());
      return;
    }
    // Reservoir sampling keeps a uniform subset of size cap.
    const auto j = uniform_index(rng, seen);
    if (j < *options.cap) std::copy(seq.begin(), seq.end(), block.begin() + j * w);
  }

  void walk(std::size_t pos) {
    if (pos == 0) {
      emit();
      return;
    }
    for (auto nb : graph.neighbors(path.relations[pos - 1], path.types[pos], seq[pos])) {
      seq[pos - 1] = nb;
      walk(pos - 1);
    }
  }

  std::vector<std::uint32_t> run(std::uint32_t target) {
    block.clear();
    seen = 0;
    rng.seed(substream_seed(options.seed, std::uint64_t{target}));
    seq.back() = target;
    walk(seq.size() - 1);
    sort_block();
    return std::move(block);
  }

  void sort_block() {
    const std::size_t w = seq.size();
    const std::size_t n = block.size() / w;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(block.begin() + a * w, block.begin() + (a + 1) * w,
                                          block.begin() + b * w, block.begin() + (b + 1) * w);
    });
    std::vector<std::uint32_t> sorted;
    sorted.reserve(block.size());
    for (auto i : order) sorted.insert(sorted.end(), block.begin() + i * w, block.begin() + (i + 1) * w);
    block = std::move(sorted);
  }
};

}  // namespace

InstanceTable enumerate_instances(const HetGraph& graph, const Metapath& path_in,
                                  std::span<const std::uint32_t> targets_in, const EnumerateOptions& options) {
  const Metapath path = validate_metapath(graph.schema(), path_in);
  if (options.cap && *options.cap == 0) throw ConfigError("instance cap must be positive");

  std::vector<std::uint32_t> targets(targets_in.begin(), targets_in.end());
  const auto n_target_type = graph.node_count(path.target_type());
  if (targets.empty()) {
    targets.resize(n_target_type);
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<std::uint32_t>(i);
  }
  for (auto t : targets)
    if (t >= n_target_type) throw SchemaError("target node " + std::to_string(t) + " out of range");

  std::vector<std::vector<std::uint32_t>> blocks(targets.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(targets.size())));
  auto work = [&](std::size_t begin, std::size_t end) {
    BlockEnumerator en(graph, path, options);
    for (std::size_t i = begin; i < end; ++i) blocks[i] = en.run(targets[i]);
  };
  if (threads <= 1) {
    work(0, targets.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (targets.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(targets.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }

  const std::size_t w = path.length() + 1;
  std::vector<std::size_t> offsets(targets.size() + 1, 0);
  for (std::size_t i = 0; i < blocks.size(); ++i) offsets[i + 1] = offsets[i] + blocks[i].size() / w;
  std::vector<std::uint32_t> nodes;
  nodes.reserve(offsets.back() * w);
  for (auto& b : blocks) nodes.insert(nodes.end(), b.begin(), b.end());
  return InstanceTable(path, std::move(targets), std::move(offsets), std::move(nodes));
}

std::vector<NodeHandle> metapath_neighbors(const InstanceTable& table, std::uint32_t v) {
  auto pos = table.find_target(v);
  if (!pos) throw SchemaError("node " + std::to_string(v) + " is not a target of this instance table");
  std::vector<NodeHandle> out;
  const auto type = table.path().neighbor_type();
  for (auto i = table.offsets()[*pos]; i < table.offsets()[*pos + 1]; ++i)
    out.push_back({type, table.instance(i).front()});
  return out;
}

std::vector<std::pair<NodeHandle, NodeHandle>> build_metapath_graph(const InstanceTable& table) {
  std::vector<std::pair<NodeHandle, NodeHandle>> out;
  out.reserve(table.num_instances());
  const auto tt = table.path().target_type();
  const auto nt = table.path().neighbor_type();
  for (std::size_t b = 0; b < table.num_targets(); ++b)
    for (auto i = table.offsets()[b]; i < table.offsets()[b + 1]; ++i)
      out.push_back({{tt, table.targets()[b]}, {nt, table.instance(i).front()}});
  return out;
}

void write_instance_table(std::ostream& out, const InstanceTable& table, const Schema& schema) {
  out << "magnn-instances 1\n";
  out << "metapath " << table.path().to_string(schema) << '\n';
  out << "counts " << table.num_targets() << ' ' << table.num_instances() << ' ' << table.width() << '\n';
  out << "targets";
  for (auto t : table.targets()) out << ' ' << t;
  out << "\noffsets";
  for (auto o : table.offsets()) out << ' ' << o;
  out << '\n';
  for (std::size_t i = 0; i < table.num_instances(); ++i) {
    auto inst = table.instance(i);
    for (std::size_t j = 0; j < inst.size(); ++j) out << (j ? " " : "") << inst[j];
    out << '\n';
  }
}

InstanceTable read_instance_table(std::istream& in, const Schema& schema) {
  std::string tag, path_text;
  int version = 0;
  if (!(in >> tag >> version) || tag != "magnn-instances") throw DataError("not an instance table dump");
  if (version != 1) throw DataError("unsupported instance table version " + std::to_string(version));
  if (!(in >> tag >> path_text) || tag != "metapath") throw DataError("instance table: missing metapath line");
  auto path = parse_metapath(path_text, schema);
  std::size_t n_targets = 0, n_instances = 0, width = 0;
  if (!(in >> tag >> n_targets >> n_instances >> width) || tag != "counts")
    throw DataError("instance table: missing counts line");
  if (width != path.length() + 1) throw DataError("instance table: width does not match metapath");
  std::vector<std::uint32_t> targets(n_targets);
  std::vector<std::size_t> offsets(n_targets + 1);
  std::vector<std::uint32_t> nodes(n_instances * width);
  if (!(in >> tag) || tag != "targets") throw DataError("instance table: missing targets line");
  for (auto& t : targets)
    if (!(in >> t)) throw DataError("instance table: truncated targets");
  if (!(in >> tag) || tag != "offsets") throw DataError("instance table: missing offsets line");
  for (auto& o : offsets)
    if (!(in >> o)) throw DataError("instance table: truncated offsets");
  for (auto& v : nodes)
    if (!(in >> v)) throw DataError("instance table: truncated instances");
  if (offsets.back() != n_instances) throw DataError("instance table: offsets disagree with instance count");
  return InstanceTable(std::move(path), std::move(targets), std::move(offsets), std::move(nodes));
}

}  // namespace magnn
