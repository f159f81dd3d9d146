#include "magnn/dataset.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "magnn/error.hpp"

namespace magnn {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& name, std::size_t line, const std::string& what) {
  throw DataError(name + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

/// Calls f(tokens, line number) for every line that is neither blank nor a
/// '#' comment.
template <class F>
void for_each_record(std::istream& in, F&& f) {
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    auto t = tokens(line);
    if (t.empty() || t[0].front() == '#') continue;
    f(t, no);
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::uint32_t parse_index(std::string_view s, const std::string& name, std::size_t line) {
  std::uint32_t v;
  if (!parse_number(s, v)) fail(name, line, "'" + std::string(s) + "' is not a node index");
  return v;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::string file_field(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  if (!j[key].is_string()) throw DataError(std::string("schema field '") + key + "' must be a file name");
  return j[key].get<std::string>();
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
    default: return "none";
  }
}

}  // namespace

std::vector<std::pair<std::uint32_t, std::uint32_t>> read_edge_list(std::istream& in, const std::string& name) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for_each_record(in, [&](const auto& t, std::size_t line) {
    if (t.size() != 2) fail(name, line, "expected two node indices, found " + std::to_string(t.size()) + " fields");
    edges.emplace_back(parse_index(t[0], name, line), parse_index(t[1], name, line));
  });
  return edges;
}

Matrix read_matrix(std::istream& in, const std::string& name) {
  Matrix m;
  bool header = false;
  std::size_t row = 0;
  for_each_record(in, [&](const auto& t, std::size_t line) {
    if (!header) {
      std::size_t r, c;
      if (t.size() != 2 || !parse_number(t[0], r) || !parse_number(t[1], c))
        fail(name, line, "expected a 'rows cols' header");
      m = Matrix(r, c);
      header = true;
      return;
    }
    if (row >= m.rows) fail(name, line, "more rows than the header declares");
    if (t.size() != m.cols)
      fail(name, line, "expected " + std::to_string(m.cols) + " values, found " + std::to_string(t.size()));
    for (std::size_t j = 0; j < m.cols; ++j) {
      // from_chars for double is available in libstdc++ 11+
      if (!parse_number(t[j], m(row, j)) || !std::isfinite(m(row, j)))
        fail(name, line, "'" + std::string(t[j]) + "' is not a finite number");
    }
    ++row;
  });
  if (!header) throw DataError(name + ": missing 'rows cols' header");
  if (row != m.rows)
    throw DataError(name + ": header declares " + std::to_string(m.rows) + " rows, found " + std::to_string(row));
  return m;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows << ' ' << m.cols << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
}

std::vector<int> read_labels(std::istream& in, const std::string& name, std::size_t count) {
  std::vector<int> y(count, -1);
  for_each_record(in, [&](const auto& t, std::size_t line) {
    if (t.size() != 2) fail(name, line, "expected 'node label'");
    const auto v = parse_index(t[0], name, line);
    int label;
    if (!parse_number(t[1], label) || label < 0) fail(name, line, "label must be a non-negative integer");
    if (v >= count) fail(name, line, "node " + std::to_string(v) + " is out of range");
    if (y[v] != -1) fail(name, line, "node " + std::to_string(v) + " is labeled twice");
    y[v] = label;
  });
  return y;
}

std::vector<Split> read_splits(std::istream& in, const std::string& name, std::size_t count) {
  std::vector<Split> s(count, Split::None);
  for_each_record(in, [&](const auto& t, std::size_t line) {
    if (t.size() != 2) fail(name, line, "expected 'node split'");
    const auto v = parse_index(t[0], name, line);
    if (v >= count) fail(name, line, "node " + std::to_string(v) + " is out of range");
    if (t[1] == "train") s[v] = Split::Train;
    else if (t[1] == "val") s[v] = Split::Validation;
    else if (t[1] == "test") s[v] = Split::Test;
    else fail(name, line, "unknown split '" + std::string(t[1]) + "' (expected train, val or test)");
  });
  return s;
}

LoadedDataset load_dataset(const fs::path& schema_file, const fs::path& data_dir) {
  const fs::path dir = data_dir.empty() ? schema_file.parent_path() : data_dir;
  json doc;
  {
    auto in = open_in(schema_file);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError(schema_file.string() + ": " + e.what());
    }
  }
  LoadedDataset out;
  auto& g = out.input;
  try {
    const auto& types = doc.at("node_types");
    if (!types.is_array() || types.empty()) throw DataError("schema needs a non-empty 'node_types' array");
    for (const auto& t : types) {
      const auto symbol = t.at("symbol").get<std::string>();
      if (g.schema.find_node_type(symbol)) throw DataError("node type '" + symbol + "' is declared twice");
      g.schema.add_node_type(symbol, t.value("name", symbol));
      g.node_counts.push_back(t.at("count").get<std::size_t>());
    }
    for (const auto& r : doc.value("relations", json::array())) {
      const auto name = r.at("name").get<std::string>();
      auto endpoint = [&](const char* key) {
        const auto sym = r.at(key).get<std::string>();
        auto id = g.schema.find_node_type(sym);
        if (!id) throw DataError("relation '" + name + "' names unknown node type '" + sym + "'");
        return *id;
      };
      if (g.schema.find_relation(name)) throw DataError("relation '" + name + "' is declared twice");
      g.schema.add_relation(name, endpoint("source"), endpoint("target"));
    }
  } catch (const json::exception& e) {
    throw DataError(schema_file.string() + ": " + e.what());
  }

  const auto& types = doc["node_types"];
  const std::size_t T = g.schema.num_node_types();
  g.features.assign(T, std::nullopt);
  g.labels.assign(T, std::nullopt);
  g.splits.assign(T, std::nullopt);
  for (std::size_t i = 0; i < T; ++i) {
    const auto& t = types[i];
    const std::size_t n = g.node_counts[i];
    if (auto f = file_field(t, "features"); !f.empty()) {
      auto in = open_in(dir / f);
      auto m = read_matrix(in, f);
      if (m.rows != n)
        throw DataError(f + ": " + std::to_string(m.rows) + " feature rows for " + std::to_string(n) + " nodes");
      g.features[i] = std::move(m);
    }
    if (auto f = file_field(t, "labels"); !f.empty()) {
      auto in = open_in(dir / f);
      g.labels[i] = read_labels(in, f, n);
    }
    if (auto f = file_field(t, "splits"); !f.empty()) {
      auto in = open_in(dir / f);
      g.splits[i] = read_splits(in, f, n);
    }
  }

  const auto rels = doc.value("relations", json::array());
  for (std::size_t r = 0; r < rels.size(); ++r) {
    const auto& rel = rels[r];
    const auto name = rel.at("name").get<std::string>();
    const auto f = file_field(rel, "file");
    if (f.empty()) throw DataError("relation '" + name + "' has no 'file'");
    auto in = open_in(dir / f);
    const auto edges = read_edge_list(in, f);
    const auto rid = static_cast<RelationId>(r);
    for (const auto& [s, t] : edges) g.edges.push_back({rid, s, t});
    if (edges.empty()) out.warnings.push_back("relation '" + name + "' has no edges (" + f + ")");
    if (rel.contains("edges") && rel["edges"].get<std::size_t>() != edges.size())
      out.warnings.push_back("relation '" + name + "' declares " + std::to_string(rel["edges"].get<std::size_t>()) +
                             " edges, file has " + std::to_string(edges.size()));
  }
  return out;
}

void write_dataset(const GraphInput& input, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& schema = input.schema;
  json doc;
  doc["node_types"] = json::array();
  for (std::size_t i = 0; i < schema.num_node_types(); ++i) {
    const auto& info = schema.node_type(static_cast<NodeTypeId>(i));
    json t;
    t["symbol"] = info.symbol;
    t["name"] = info.name;
    t["count"] = input.node_counts.at(i);
    if (i < input.features.size() && input.features[i]) {
      const auto f = info.symbol + "_features.txt";
      auto out = open_out(dir / f);
      write_matrix(out, *input.features[i]);
      t["features"] = f;
    }
    if (i < input.labels.size() && input.labels[i]) {
      const auto f = info.symbol + "_labels.txt";
      auto out = open_out(dir / f);
      const auto& y = *input.labels[i];
      for (std::size_t v = 0; v < y.size(); ++v)
        if (y[v] >= 0) out << v << ' ' << y[v] << '\n';
      t["labels"] = f;
    }
    if (i < input.splits.size() && input.splits[i]) {
      const auto f = info.symbol + "_splits.txt";
      auto out = open_out(dir / f);
      const auto& s = *input.splits[i];
      for (std::size_t v = 0; v < s.size(); ++v)
        if (s[v] != Split::None) out << v << ' ' << split_name(s[v]) << '\n';
      t["splits"] = f;
    }
    doc["node_types"].push_back(t);
  }
  doc["relations"] = json::array();
  std::vector<std::ofstream> files;
  std::vector<std::size_t> counts(schema.num_relations(), 0);
  for (std::size_t r = 0; r < schema.num_relations(); ++r) {
    const auto& info = schema.relation(static_cast<RelationId>(r));
    const auto f = "edges_" + std::to_string(r) + ".txt";
    files.push_back(open_out(dir / f));
    json rel;
    rel["name"] = info.name;
    rel["source"] = schema.node_type(info.source).symbol;
    rel["target"] = schema.node_type(info.target).symbol;
    rel["file"] = f;
    doc["relations"].push_back(rel);
  }
  for (const auto& e : input.edges) {
    files.at(index_of(e.relation)) << e.source << ' ' << e.target << '\n';
    ++counts[index_of(e.relation)];
  }
  for (std::size_t r = 0; r < counts.size(); ++r) doc["relations"][r]["edges"] = counts[r];
  auto out = open_out(dir / "schema.json");
  out << doc.dump(2) << '\n';
}

}  // namespace magnn
