#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/rng.hpp"

namespace lqg::data {

// Image tensor in file order: index = ((i*H + y)*W + x)*C + c, pixels in
// [0,1]. File format "LQGD": magic, u32 n, u32 H, u32 W, u32 C, then
// n*H*W*C little-endian f32.
struct ImageDataset {
  std::uint32_t n = 0, height = 0, width = 0, channels = 0;
  std::vector<float> pixels;
  std::string source_tag;
  std::uint64_t subselect_seed = 0;
  // Class labels, populated only by synth_dataset (not part of the LQGD file).
  std::vector<std::uint8_t> labels;

  std::size_t image_size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  const float* image(std::size_t i) const { return pixels.data() + i * image_size(); }

  // One image per row, flattened, as doubles.
  Eigen::MatrixXd as_rows() const;
  Eigen::MatrixXd rows_subset(const std::vector<std::size_t>& indices) const;
};

void save_dataset(const std::filesystem::path& path, const ImageDataset& ds);
ImageDataset load_dataset(const std::filesystem::path& path);

// Deterministic sample of n images without replacement; the same seed always
// selects the same subset (shared between the AE and GAN runs of that seed).
ImageDataset subselect(const ImageDataset& ds, std::size_t n, std::uint64_t seed);

// Procedural 28x28x3 sets with four class structures (soft blobs or striped
// fields), used for desk-scale end-to-end runs.
ImageDataset synth_dataset(std::size_t n, std::uint64_t seed, const std::string& kind,
                           std::uint32_t height = 28, std::uint32_t width = 28);

// Epoch batching: shuffle order is a pure function of (seed, epoch), batches
// cover each selected image exactly once per epoch.
class Batcher {
 public:
  Batcher(std::size_t count, std::size_t batch, std::uint64_t seed)
      : count_(count), batch_(batch), seed_(seed) {
    if (count == 0) throw DataError("Batcher: empty dataset");
    if (batch == 0) throw ConfigError("Batcher: batch size must be >= 1");
  }

  std::size_t batches_per_epoch() const { return count_ / batch_ == 0 ? 1 : count_ / batch_; }

  // Indices of batch `b` within epoch `epoch`. The trailing remainder that
  // does not fill a batch is dropped (except when count < batch).
  std::vector<std::size_t> batch_indices(std::uint64_t epoch, std::size_t b) const;

 private:
  std::size_t count_, batch_;
  std::uint64_t seed_;
};

}  // namespace lqg::data
