#pragma once

#include <filesystem>
#include <iosfwd>

#include "magnn/model.hpp"

namespace magnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary parameter dump: magic "MAGNNCKP", u32 version, u64 tensor count,
/// then per tensor: u32 name length, name bytes, u32 rank, rank u64 extents
/// and the values as little-endian IEEE doubles.
void write_checkpoint(std::ostream& out, const ModelParams& params);
/// Throws DataError on a bad magic, unknown version or truncated stream.
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& file, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& file);

/// Throws ConfigError unless `loaded` has exactly the names and shapes of
/// `expected` (e.g. a fresh init_params for the configured model).
void check_compatible(const ModelParams& expected, const ModelParams& loaded);

}  // namespace magnn
