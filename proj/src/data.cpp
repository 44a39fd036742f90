#include "lqg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace lqg::data {

namespace {

constexpr char kMagic[4] = {'L', 'Q', 'G', 'D'};

std::uint32_t get_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4))
    throw DataError(std::string("truncated dataset header: ") + what);
  return v;
}

}  // namespace

Eigen::MatrixXd ImageDataset::as_rows() const {
  Eigen::MatrixXd m(n, image_size());
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < image_size(); ++j)
      m(i, static_cast<Eigen::Index>(j)) = image(i)[j];
  return m;
}

Eigen::MatrixXd ImageDataset::rows_subset(const std::vector<std::size_t>& indices) const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(indices.size()), image_size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t j = 0; j < image_size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = image(indices[i])[j];
  return m;
}

void save_dataset(const std::filesystem::path& path, const ImageDataset& ds) {
  if (ds.pixels.size() != static_cast<std::size_t>(ds.n) * ds.image_size())
    throw DataError("save_dataset: pixel buffer does not match header");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open dataset for writing: " + path.string());
  os.write(kMagic, 4);
  for (std::uint32_t v : {ds.n, ds.height, ds.width, ds.channels})
    os.write(reinterpret_cast<const char*>(&v), 4);
  os.write(reinterpret_cast<const char*>(ds.pixels.data()),
           static_cast<std::streamsize>(ds.pixels.size() * sizeof(float)));
  if (!os) throw DataError("failed writing dataset: " + path.string());
}

ImageDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad dataset magic in " + path.string());
  ImageDataset ds;
  ds.n = get_u32(is, "count");
  ds.height = get_u32(is, "height");
  ds.width = get_u32(is, "width");
  ds.channels = get_u32(is, "channels");
  const std::size_t count = static_cast<std::size_t>(ds.n) * ds.image_size();
  ds.pixels.resize(count);
  if (!is.read(reinterpret_cast<char*>(ds.pixels.data()),
               static_cast<std::streamsize>(count * sizeof(float))))
    throw DataError("dataset payload shorter than header count in " + path.string());
  char extra;
  if (is.read(&extra, 1))
    throw DataError("dataset payload longer than header count in " + path.string());
  for (std::size_t i = 0; i < count; ++i) {
    const float v = ds.pixels[i];
    if (!(v >= -1e-6f && v <= 1.0f + 1e-6f))
      throw DataError("pixel " + std::to_string(i) + " = " + std::to_string(v) +
                      " outside [0,1] in " + path.string());
  }
  ds.source_tag = path.filename().string();
  return ds;
}

ImageDataset subselect(const ImageDataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.n)
    throw DataError("subselect: requested " + std::to_string(n) + " of " +
                    std::to_string(ds.n) + " images");
  RngStream rng(seed, "subselect");
  auto perm = random_permutation(ds.n, rng);
  perm.resize(n);
  ImageDataset out;
  out.n = static_cast<std::uint32_t>(n);
  out.height = ds.height;
  out.width = ds.width;
  out.channels = ds.channels;
  out.source_tag = ds.source_tag;
  out.subselect_seed = seed;
  out.pixels.resize(n * ds.image_size());
  if (!ds.labels.empty()) out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(out.pixels.data() + i * ds.image_size(), ds.image(perm[i]),
                ds.image_size() * sizeof(float));
    if (!ds.labels.empty()) out.labels[i] = ds.labels[perm[i]];
  }
  return out;
}

ImageDataset synth_dataset(std::size_t n, std::uint64_t seed, const std::string& kind,
                           std::uint32_t height, std::uint32_t width) {
  if (n < 1) throw ConfigError("synth_dataset: n must be >= 1");
  const bool blobs = kind == "gaussian-blobs";
  if (!blobs && kind != "striped-fields")
    throw ConfigError("synth_dataset: unknown kind '" + kind + "'");
  ImageDataset ds;
  ds.n = static_cast<std::uint32_t>(n);
  ds.height = height;
  ds.width = width;
  ds.channels = 3;
  ds.source_tag = "synth:" + kind;
  ds.pixels.resize(n * ds.image_size());
  ds.labels.resize(n);
  RngStream rng(seed, "synth." + kind);

  // Four classes with well-separated mean images.
  // blobs: blob center per class; stripes: orientation/phase per class.
  const double cx[4] = {0.25, 0.75, 0.25, 0.75};
  const double cy[4] = {0.25, 0.25, 0.75, 0.75};
  const double base[4][3] = {
      {0.9, 0.2, 0.2}, {0.2, 0.9, 0.2}, {0.2, 0.2, 0.9}, {0.85, 0.85, 0.15}};

  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(rng.below(4));
    ds.labels[i] = static_cast<std::uint8_t>(cls);
    const double jx = 0.04 * rng.normal(), jy = 0.04 * rng.normal();
    const double phase = rng.uniform() * 2.0 * 3.14159265358979323846;
    float* img = ds.pixels.data() + i * ds.image_size();
    for (std::uint32_t y = 0; y < height; ++y) {
      for (std::uint32_t x = 0; x < width; ++x) {
        const double fx = (x + 0.5) / width, fy = (y + 0.5) / height;
        double v;
        if (blobs) {
          const double dx = fx - (cx[cls] + jx), dy = fy - (cy[cls] + jy);
          v = std::exp(-(dx * dx + dy * dy) / 0.02);
        } else {
          const double axis = (cls % 2 == 0) ? fx : fy;
          const double freq = (cls < 2) ? 4.0 : 8.0;
          v = 0.5 + 0.5 * std::sin(2.0 * 3.14159265358979323846 * freq * axis + phase);
        }
        for (std::uint32_t c = 0; c < 3; ++c) {
          const double noise = 0.02 * rng.normal();
          const double px = std::clamp(v * base[cls][c] + 0.05 + noise, 0.0, 1.0);
          img[(static_cast<std::size_t>(y) * width + x) * 3 + c] = static_cast<float>(px);
        }
      }
    }
  }
  return ds;
}

std::vector<std::size_t> Batcher::batch_indices(std::uint64_t epoch, std::size_t b) const {
  RngStream rng(seed_, "shuffle", epoch);
  auto perm = random_permutation(count_, rng);
  const std::size_t nb = batches_per_epoch();
  if (b >= nb) throw ConfigError("Batcher: batch index out of range");
  const std::size_t size = std::min(batch_, count_);
  std::vector<std::size_t> out(perm.begin() + static_cast<std::ptrdiff_t>(b * size),
                               perm.begin() + static_cast<std::ptrdiff_t>(b * size + size));
  return out;
}

}  // namespace lqg::data
