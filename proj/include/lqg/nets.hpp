#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lqg/data.hpp"
#include "lqg/nn_ops.hpp"
#include "lqg/optim.hpp"
#include "lqg/rng.hpp"
#include "lqg/tensor.hpp"

// Classical networks: two-hidden-layer MLPs for the latent critic/generator
// and the convolutional autoencoder. All parameters are LeCun-normal
// initialized from named streams of the run seed.
namespace lqg::nets {

enum class Activation { none, relu, leaky_relu, tanh };

struct MlpConfig {
  int d_in = 0;
  std::array<int, 2> hidden{0, 0};
  int d_out = 0;
  Activation hidden_activation = Activation::relu;
  double leak = 0.2;  // slope for leaky_relu
  Activation output_activation = Activation::none;
};

inline std::int64_t mlp_param_count(const MlpConfig& c) {
  return static_cast<std::int64_t>(c.d_in + 1) * c.hidden[0] +
         static_cast<std::int64_t>(c.hidden[0] + 1) * c.hidden[1] +
         static_cast<std::int64_t>(c.hidden[1] + 1) * c.d_out;
}

// Critic D(z): latent in, unbounded scalar score out, leaky-ReLU hidden.
inline MlpConfig critic_config(int d_z, int n1, int n2) {
  return MlpConfig{d_z, {n1, n2}, 1, Activation::leaky_relu, 0.2, Activation::none};
}

// Classical generator G(xi): noise in (first layer only), tanh-bounded latent out.
inline MlpConfig generator_config(int d_xi, int n1, int n2, int d_z) {
  return MlpConfig{d_xi, {n1, n2}, d_z, Activation::relu, 0.2, Activation::tanh};
}

template <class S>
ad::Tensor<S> activate(const ad::Tensor<S>& x, Activation a, double leak) {
  switch (a) {
    case Activation::none: return x;
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x, static_cast<S>(leak));
    case Activation::tanh: return ad::tanh(x);
  }
  throw ConfigError("unknown activation");
}

template <class S>
struct Mlp {
  MlpConfig cfg;
  ad::Tensor<S> w1, b1, w2, b2, w3, b3;

  static Mlp init(const MlpConfig& cfg, std::uint64_t seed, const std::string& prefix) {
    Mlp m;
    m.cfg = cfg;
    auto mk = [&](const char* name, int rows, int cols, int fan_in) {
      RngStream rng(seed, "init." + prefix + "." + name);
      return lecun_normal_init<S>(ad::Shape{rows, cols}, fan_in, rng, prefix + "." + name);
    };
    auto mkb = [&](const char* name, int n) {
      auto t = ad::Tensor<S>::leaf(ad::Shape{n}, true, prefix + "." + name);
      return t;  // biases start at zero
    };
    m.w1 = mk("w1", cfg.d_in, cfg.hidden[0], cfg.d_in);
    m.b1 = mkb("b1", cfg.hidden[0]);
    m.w2 = mk("w2", cfg.hidden[0], cfg.hidden[1], cfg.hidden[0]);
    m.b2 = mkb("b2", cfg.hidden[1]);
    m.w3 = mk("w3", cfg.hidden[1], cfg.d_out, cfg.hidden[1]);
    m.b3 = mkb("b3", cfg.d_out);
    return m;
  }

  // x: [batch, d_in] -> [batch, d_out]
  ad::Tensor<S> forward(const ad::Tensor<S>& x) const {
    auto h1 = activate(ad::add_rowvec(ad::matmul(x, w1), b1), cfg.hidden_activation, cfg.leak);
    auto h2 = activate(ad::add_rowvec(ad::matmul(h1, w2), b2), cfg.hidden_activation, cfg.leak);
    return activate(ad::add_rowvec(ad::matmul(h2, w3), b3), cfg.output_activation, cfg.leak);
  }

  std::vector<ad::Tensor<S>> params() const { return {w1, b1, w2, b2, w3, b3}; }

  std::int64_t param_count() const { return mlp_param_count(cfg); }
};

// ---------------------------------------------------------------------------
// Convolutional autoencoder
// ---------------------------------------------------------------------------

struct AeConfig {
  int height = 28, width = 28, channels = 3;
  std::array<int, 2> conv_channels{64, 128};
  int fc_width = 1024;
  int latent_dim = 24;
  double dropout = 0.0;
  bool batchnorm = true;
  int kernel = 4, stride = 2, pad = 1;

  int conv1_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  int conv2_h() const { return (conv1_h() + 2 * pad - kernel) / stride + 1; }
  int flat_dim() const { return conv_channels[1] * conv2_h() * conv2_h(); }
};

template <class S>
struct Autoencoder {
  AeConfig cfg;
  // encoder
  ad::Tensor<S> c1w, c1b, bn1g, bn1b, c2w, c2b, bn2g, bn2b, f1w, f1b, f2w, f2b;
  // decoder
  ad::Tensor<S> d1w, d1b, d2w, d2b, t1w, t1b, bn3g, bn3b, t2w, t2b;

  static Autoencoder init(const AeConfig& cfg, std::uint64_t seed) {
    Autoencoder a;
    a.cfg = cfg;
    auto mk = [&](const char* name, ad::Shape shape, int fan_in) {
      RngStream rng(seed, std::string("init.ae.") + name);
      return lecun_normal_init<S>(std::move(shape), fan_in, rng, std::string("ae.") + name);
    };
    auto zeros = [&](const char* name, int n, S fill = S(0)) {
      auto t = ad::Tensor<S>::leaf(ad::Shape{n}, true, std::string("ae.") + name);
      t.values().setConstant(fill);
      return t;
    };
    const int k = cfg.kernel, c0 = cfg.channels, c1 = cfg.conv_channels[0],
              c2 = cfg.conv_channels[1];
    a.c1w = mk("c1w", {c1, c0, k, k}, c0 * k * k);
    a.c1b = zeros("c1b", c1);
    a.bn1g = zeros("bn1g", c1, S(1));
    a.bn1b = zeros("bn1b", c1);
    a.c2w = mk("c2w", {c2, c1, k, k}, c1 * k * k);
    a.c2b = zeros("c2b", c2);
    a.bn2g = zeros("bn2g", c2, S(1));
    a.bn2b = zeros("bn2b", c2);
    a.f1w = mk("f1w", {cfg.flat_dim(), cfg.fc_width}, cfg.flat_dim());
    a.f1b = zeros("f1b", cfg.fc_width);
    a.f2w = mk("f2w", {cfg.fc_width, cfg.latent_dim}, cfg.fc_width);
    a.f2b = zeros("f2b", cfg.latent_dim);
    a.d1w = mk("d1w", {cfg.latent_dim, cfg.fc_width}, cfg.latent_dim);
    a.d1b = zeros("d1b", cfg.fc_width);
    a.d2w = mk("d2w", {cfg.fc_width, cfg.flat_dim()}, cfg.fc_width);
    a.d2b = zeros("d2b", cfg.flat_dim());
    a.t1w = mk("t1w", {c2, c1, k, k}, c2 * k * k);
    a.t1b = zeros("t1b", c1);
    a.bn3g = zeros("bn3g", c1, S(1));
    a.bn3b = zeros("bn3b", c1);
    a.t2w = mk("t2w", {c1, c0, k, k}, c1 * k * k);
    a.t2b = zeros("t2b", c0);
    return a;
  }

  // x: [B, C, H, W] in [0,1] -> z in [-1,1]^{latent_dim} (tanh bounded, so
  // real latents share the range of the quantum generator's expectations).
  ad::Tensor<S> encode(const ad::Tensor<S>& x, bool training = false,
                       RngStream* drop = nullptr) const {
    auto h = ad::add_chan(ad::conv2d(x, c1w, cfg.stride, cfg.pad), c1b);
    if (cfg.batchnorm) h = ad::batchnorm2d(h, bn1g, bn1b);
    h = ad::relu(h);
    h = maybe_dropout(h, training, drop);
    h = ad::add_chan(ad::conv2d(h, c2w, cfg.stride, cfg.pad), c2b);
    if (cfg.batchnorm) h = ad::batchnorm2d(h, bn2g, bn2b);
    h = ad::relu(h);
    h = maybe_dropout(h, training, drop);
    auto flat = ad::reshape(h, ad::Shape{x.shape()[0], cfg.flat_dim()});
    auto fc = ad::relu(ad::add_rowvec(ad::matmul(flat, f1w), f1b));
    fc = maybe_dropout(fc, training, drop);
    return ad::tanh(ad::add_rowvec(ad::matmul(fc, f2w), f2b));
  }

  // z: [B, latent_dim] -> images [B, C, H, W] in [0,1].
  ad::Tensor<S> decode(const ad::Tensor<S>& z, bool training = false,
                       RngStream* drop = nullptr) const {
    auto h = ad::relu(ad::add_rowvec(ad::matmul(z, d1w), d1b));
    h = maybe_dropout(h, training, drop);
    h = ad::relu(ad::add_rowvec(ad::matmul(h, d2w), d2b));
    h = maybe_dropout(h, training, drop);
    auto grid = ad::reshape(
        h, ad::Shape{z.shape()[0], cfg.conv_channels[1], cfg.conv2_h(), cfg.conv2_h()});
    auto up = ad::add_chan(ad::conv_transpose2d(grid, t1w, cfg.stride, cfg.pad), t1b);
    if (cfg.batchnorm) up = ad::batchnorm2d(up, bn3g, bn3b);
    up = ad::relu(up);
    up = maybe_dropout(up, training, drop);
    return ad::sigmoid(ad::add_chan(ad::conv_transpose2d(up, t2w, cfg.stride, cfg.pad), t2b));
  }

  ad::Tensor<S> reconstruct(const ad::Tensor<S>& x, bool training = false,
                            RngStream* drop = nullptr) const {
    return decode(encode(x, training, drop), training, drop);
  }

  std::vector<ad::Tensor<S>> params() const {
    std::vector<ad::Tensor<S>> p{c1w, c1b, c2w, c2b, f1w, f1b, f2w, f2b,
                                 d1w, d1b, d2w, d2b, t1w, t1b, t2w, t2b};
    if (cfg.batchnorm) {
      for (auto t : {bn1g, bn1b, bn2g, bn2b, bn3g, bn3b}) p.push_back(t);
    }
    return p;
  }

 private:
  ad::Tensor<S> maybe_dropout(const ad::Tensor<S>& x, bool training, RngStream* drop) const {
    if (!training || cfg.dropout <= 0.0 || drop == nullptr) return x;
    return ad::dropout(x, cfg.dropout, *drop);
  }
};

// ---------------------------------------------------------------------------
// Batch assembly and AE training
// ---------------------------------------------------------------------------

// HWC images (dataset order) -> NCHW batch tensor.
template <class S>
ad::Tensor<S> to_nchw(const data::ImageDataset& ds, const std::vector<std::size_t>& indices) {
  const Eigen::Index b = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index c = ds.channels, h = ds.height, w = ds.width;
  auto t = ad::Tensor<S>::leaf(ad::Shape{b, c, h, w}, false, "batch");
  for (Eigen::Index i = 0; i < b; ++i) {
    const float* img = ds.image(indices[static_cast<std::size_t>(i)]);
    for (Eigen::Index ch = 0; ch < c; ++ch)
      for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
          t.values()(((i * c + ch) * h + y) * w + x) =
              static_cast<S>(img[(y * w + x) * c + ch]);
  }
  return t;
}

// NCHW batch tensor -> rows of flattened HWC pixels (metric space).
template <class S>
Eigen::MatrixXd nchw_to_rows(const ad::Tensor<S>& t) {
  const Eigen::Index b = t.shape()[0], c = t.shape()[1], h = t.shape()[2], w = t.shape()[3];
  Eigen::MatrixXd rows(b, c * h * w);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index ch = 0; ch < c; ++ch)
      for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
          rows(i, (y * w + x) * c + ch) =
              static_cast<double>(t.values()(((i * c + ch) * h + y) * w + x));
  return rows;
}

template <class S>
ad::Tensor<S> mse_loss(const ad::Tensor<S>& pred, const ad::Tensor<S>& target) {
  return ad::mean(ad::square(ad::sub(pred, target)));
}

struct AeHyper {
  int epochs = 100;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  int batch = 12;
};

struct AeEpochStats {
  int epoch = 0;
  double train_mse = 0;
  double val_mse = 0;
};

// Plain MSE training of the AE (always separate from the GAN). The hook runs
// after each epoch; callers use it to log rFID and checkpoint.
template <class S>
std::vector<AeEpochStats> train_ae(
    Autoencoder<S>& ae, const data::ImageDataset& train, const data::ImageDataset& val,
    const AeHyper& hyper, std::uint64_t seed,
    const std::function<void(const AeEpochStats&)>& on_epoch = nullptr) {
  if (train.n == 0) throw DataError("train_ae: empty training set");
  Adam<S> opt(ae.params(), AdamConfig<S>{static_cast<S>(hyper.lr), static_cast<S>(hyper.beta1),
                                         static_cast<S>(hyper.beta2), S(1e-8),
                                         static_cast<S>(hyper.weight_decay)});
  data::Batcher batcher(train.n, static_cast<std::size_t>(hyper.batch), seed);
  RngStream drop(seed, "ae.dropout");
  std::vector<AeEpochStats> history;
  for (int e = 0; e < hyper.epochs; ++e) {
    double mse_sum = 0;
    const std::size_t nb = batcher.batches_per_epoch();
    for (std::size_t b = 0; b < nb; ++b) {
      auto x = to_nchw<S>(train, batcher.batch_indices(static_cast<std::uint64_t>(e), b));
      auto loss = mse_loss(ae.reconstruct(x, true, &drop), x);
      if (!std::isfinite(static_cast<double>(loss.item())))
        throw NumericError("train_ae: non-finite loss at epoch " + std::to_string(e));
      opt.zero_grad();
      auto params = opt.params();
      ad::backward(loss, std::span<ad::Tensor<S>>(params));
      opt.step();
      mse_sum += static_cast<double>(loss.item());
    }
    AeEpochStats st;
    st.epoch = e;
    st.train_mse = mse_sum / static_cast<double>(batcher.batches_per_epoch());
    if (val.n > 0) {
      ad::NoGradGuard ng;
      std::vector<std::size_t> all(val.n);
      for (std::size_t i = 0; i < val.n; ++i) all[i] = i;
      auto xv = to_nchw<S>(val, all);
      st.val_mse = static_cast<double>(mse_loss(ae.reconstruct(xv, false), xv).item());
    }
    history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return history;
}

}  // namespace lqg::nets
