#include "magnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "magnn/error.hpp"

namespace magnn {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'G', 'N', 'N', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("checkpoint is truncated");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.names()[i];
    const auto& t = params.tensors()[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    const auto v = t.values();
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed to write checkpoint");
}

ModelParams read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError("not a checkpoint file (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint64_t>(in);
  ModelParams params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) throw DataError("checkpoint tensor name is implausibly long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("checkpoint is truncated");
    const auto rank = get<std::uint32_t>(in);
    if (rank > 3) throw DataError("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
    ad::Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(get<std::uint64_t>(in));
      n *= shape.back();
    }
    if (n > (std::uint64_t(1) << 32)) throw DataError("checkpoint tensor '" + name + "' is implausibly large");
    std::vector<double> values(n);
    if (!in.read(reinterpret_cast<char*>(values.data()), std::streamsize(n * sizeof(double))))
      throw DataError("checkpoint is truncated");
    if (params.has(name)) throw DataError("checkpoint repeats tensor '" + name + "'");
    params.add(name, ad::Tensor::parameter(std::move(shape), std::move(values)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& file, const ModelParams& params) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  return read_checkpoint(in);
}

void check_compatible(const ModelParams& expected, const ModelParams& loaded) {
  if (expected.names() != loaded.names())
    throw ConfigError("checkpoint parameters do not match the configured model");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (expected.tensors()[i].shape() != loaded.tensors()[i].shape())
      throw ConfigError("checkpoint tensor '" + expected.names()[i] + "' has the wrong shape");
}

}  // namespace magnn
