#include "lqg/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace lqg {

namespace {

constexpr char kMagic[4] = {'L', 'Q', 'G', '1'};

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw DataError(std::string("truncated checkpoint while reading ") + what);
  return v;
}

}  // namespace

CheckpointBlock CheckpointBlock::from_f64(const std::string& name,
                                          const std::vector<std::uint32_t>& dims,
                                          const double* data) {
  CheckpointBlock b;
  b.name = name;
  b.dtype = 1;
  b.dims = dims;
  b.raw.resize(b.count() * sizeof(double));
  std::memcpy(b.raw.data(), data, b.raw.size());
  return b;
}

CheckpointBlock CheckpointBlock::from_f32(const std::string& name,
                                          const std::vector<std::uint32_t>& dims,
                                          const float* data) {
  CheckpointBlock b;
  b.name = name;
  b.dtype = 0;
  b.dims = dims;
  b.raw.resize(b.count() * sizeof(float));
  std::memcpy(b.raw.data(), data, b.raw.size());
  return b;
}

std::vector<double> CheckpointBlock::as_f64() const {
  std::vector<double> out(count());
  if (dtype == 1) {
    std::memcpy(out.data(), raw.data(), raw.size());
  } else {
    const float* f = reinterpret_cast<const float*>(raw.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(f[i]);
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointBlock>& blocks) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    if (b.name.size() > 0xFFFF) throw DataError("checkpoint block name too long: " + b.name);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(b.name.size()));
    os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put<std::uint8_t>(os, b.dtype);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(b.dims.size()));
    for (auto d : b.dims) put<std::uint32_t>(os, d);
    os.write(reinterpret_cast<const char*>(b.raw.data()),
             static_cast<std::streamsize>(b.raw.size()));
  }
  if (!os) throw DataError("failed writing checkpoint: " + path.string());
}

std::vector<CheckpointBlock> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad checkpoint magic in " + path.string());
  const auto n = get<std::uint32_t>(is, "block count");
  std::vector<CheckpointBlock> blocks;
  blocks.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    CheckpointBlock b;
    const auto name_len = get<std::uint16_t>(is, "name length");
    b.name.resize(name_len);
    if (!is.read(b.name.data(), name_len)) throw DataError("truncated checkpoint block name");
    b.dtype = get<std::uint8_t>(is, "dtype");
    if (b.dtype > 1) throw DataError("unknown dtype tag in block '" + b.name + "'");
    const auto rank = get<std::uint32_t>(is, "rank");
    b.dims.resize(rank);
    for (auto& d : b.dims) d = get<std::uint32_t>(is, "dim");
    const std::size_t bytes = b.count() * (b.dtype == 1 ? sizeof(double) : sizeof(float));
    b.raw.resize(bytes);
    if (!is.read(reinterpret_cast<char*>(b.raw.data()), static_cast<std::streamsize>(bytes)))
      throw DataError("truncated checkpoint data in block '" + b.name + "'");
    blocks.push_back(std::move(b));
  }
  return blocks;
}

const CheckpointBlock* find_block(const std::vector<CheckpointBlock>& blocks,
                                  const std::string& name) {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const CheckpointBlock& require_block(const std::vector<CheckpointBlock>& blocks,
                                     const std::string& name) {
  const auto* b = find_block(blocks, name);
  if (!b) throw DataError("checkpoint is missing block '" + name + "'");
  return *b;
}

}  // namespace lqg
