#include "skelbridge/ad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace skelbridge::ad {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'K', 'B', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.value.rows()));
    write_u32(out, static_cast<std::uint32_t>(tensor.value.cols()));
    out.write(reinterpret_cast<const char*>(tensor.value.data()),
              static_cast<std::streamsize>(sizeof(double) * tensor.value.size()));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = read_u32(in, "parameter count");

  std::map<std::string, Tensor> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in, "name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("checkpoint: truncated name");
    const std::uint32_t rows = read_u32(in, "rows");
    const std::uint32_t cols = read_u32(in, "cols");
    Tensor t(MatX(rows, cols), true);
    if (!in.read(reinterpret_cast<char*>(t.value.data()),
                 static_cast<std::streamsize>(sizeof(double) * t.value.size())))
      throw IoError("checkpoint: truncated values for '" + name + "'");
    params.emplace(std::move(name), std::move(t));
  }
  return params;
}

}  // namespace skelbridge::ad
