#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "magnn/graph.hpp"
#include "magnn/matrix.hpp"

namespace magnn {

/// A dataset read from disk plus the non-fatal problems found while reading
/// it (empty edge files, count mismatches).
struct LoadedDataset {
  GraphInput input;
  std::vector<std::string> warnings;
};

/// Reads a schema file (JSON, see docs/formats.md) and the files it names,
/// resolved relative to `data_dir` (the schema's directory when empty).
/// Parse errors throw DataError with "file:line: message".
LoadedDataset load_dataset(const std::filesystem::path& schema_file, const std::filesystem::path& data_dir = {});

/// Writes `input` in the same format: schema.json plus one file per relation,
/// per featured type, per labeled type and per split-carrying type.
void write_dataset(const GraphInput& input, const std::filesystem::path& dir);

/// Edge list: one "source target" pair of 0-based indices per line.
std::vector<std::pair<std::uint32_t, std::uint32_t>> read_edge_list(std::istream& in, const std::string& name);
/// Dense matrix: header "rows cols" followed by one row per line.
Matrix read_matrix(std::istream& in, const std::string& name);
void write_matrix(std::ostream& out, const Matrix& m);
/// "node label" lines; unlisted nodes get -1.
std::vector<int> read_labels(std::istream& in, const std::string& name, std::size_t count);
/// "node train|val|test" lines; unlisted nodes get Split::None.
std::vector<Split> read_splits(std::istream& in, const std::string& name, std::size_t count);

}  // namespace magnn
