#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/tensor.hpp"

namespace lqg {

// Parameter checkpoint container. File layout (little-endian):
//   magic "LQG1"
//   u32 block count
//   per block: u16 name length, name bytes, u8 dtype (0=f32, 1=f64),
//              u32 rank, u32 dims..., raw values
// Round trips are bit-exact.
struct CheckpointBlock {
  std::string name;
  std::uint8_t dtype = 1;  // 0 = f32, 1 = f64
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> raw;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  static CheckpointBlock from_f64(const std::string& name, const std::vector<std::uint32_t>& dims,
                                  const double* data);
  static CheckpointBlock from_f32(const std::string& name, const std::vector<std::uint32_t>& dims,
                                  const float* data);
  // Values widened/narrowed to double regardless of stored dtype.
  std::vector<double> as_f64() const;
};

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointBlock>& blocks);
std::vector<CheckpointBlock> read_checkpoint(const std::filesystem::path& path);

const CheckpointBlock* find_block(const std::vector<CheckpointBlock>& blocks,
                                  const std::string& name);
const CheckpointBlock& require_block(const std::vector<CheckpointBlock>& blocks,
                                     const std::string& name);

template <class S>
CheckpointBlock block_from_tensor(const std::string& name, const ad::Tensor<S>& t) {
  std::vector<std::uint32_t> dims;
  for (auto d : t.shape()) dims.push_back(static_cast<std::uint32_t>(d));
  if (dims.empty()) dims.push_back(1);  // rank-0 stored as [1]
  if constexpr (sizeof(S) == 8) {
    return CheckpointBlock::from_f64(name, dims, reinterpret_cast<const double*>(t.data()));
  } else {
    return CheckpointBlock::from_f32(name, dims, reinterpret_cast<const float*>(t.data()));
  }
}

template <class S>
void load_tensor_from_block(const CheckpointBlock& b, ad::Tensor<S>& t) {
  if (static_cast<std::size_t>(t.size()) != b.count())
    throw DataError("checkpoint block '" + b.name + "' has " + std::to_string(b.count()) +
                    " values, expected " + std::to_string(t.size()));
  auto vals = b.as_f64();
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()(i) = static_cast<S>(vals[static_cast<std::size_t>(i)]);
}

}  // namespace lqg
