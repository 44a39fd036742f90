#pragma once

#include <memory>

#include "lqg/rng.hpp"
#include "lqg/tensor.hpp"

// Convolution / normalization ops over NCHW tensors. Forward passes use
// im2col + GEMM; backward passes are exact first-order VJPs (these ops are
// not double-differentiable, unlike the elementwise/matmul core — the
// gradient-penalty path never touches them).
namespace lqg::ad {

namespace convdetail {

struct ConvGeom {
  Eigen::Index in_c, in_h, in_w, out_c, k, stride, pad, out_h, out_w;
};

inline ConvGeom conv_geometry(const Shape& x, const Shape& w, Eigen::Index stride,
                              Eigen::Index pad) {
  if (x.size() != 4 || w.size() != 4) throw ShapeError("conv2d", "inputs must be rank-4");
  ConvGeom g;
  g.in_c = x[1];
  g.in_h = x[2];
  g.in_w = x[3];
  g.out_c = w[0];
  g.k = w[2];
  g.stride = stride;
  g.pad = pad;
  if (w[1] != g.in_c)
    throw ShapeError("conv2d", "weight expects " + std::to_string(w[1]) + " input channels, got " +
                                   std::to_string(g.in_c));
  if (w[3] != g.k) throw ShapeError("conv2d", "only square kernels supported");
  g.out_h = (g.in_h + 2 * pad - g.k) / stride + 1;
  g.out_w = (g.in_w + 2 * pad - g.k) / stride + 1;
  if ((g.in_h + 2 * pad - g.k) % stride != 0 || g.out_h < 1)
    throw ShapeError("conv2d", "kernel/stride/pad do not tile the input height");
  return g;
}

// Patches of one image (C,H,W) as a [C*K*K x OH*OW] row-major matrix.
template <class S>
void im2col(const S* img, const ConvGeom& g, S* col) {
  const Eigen::Index ohw = g.out_h * g.out_w;
  Eigen::Index rr = 0;
  for (Eigen::Index c = 0; c < g.in_c; ++c) {
    const S* plane = img + c * g.in_h * g.in_w;
    for (Eigen::Index kh = 0; kh < g.k; ++kh) {
      for (Eigen::Index kw = 0; kw < g.k; ++kw, ++rr) {
        S* row = col + rr * ohw;
        for (Eigen::Index oh = 0; oh < g.out_h; ++oh) {
          const Eigen::Index ih = oh * g.stride - g.pad + kh;
          for (Eigen::Index ow = 0; ow < g.out_w; ++ow) {
            const Eigen::Index iw = ow * g.stride - g.pad + kw;
            const bool in = ih >= 0 && ih < g.in_h && iw >= 0 && iw < g.in_w;
            row[oh * g.out_w + ow] = in ? plane[ih * g.in_w + iw] : S(0);
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatters a [C*K*K x OH*OW] matrix back into (C,H,W).
template <class S>
void col2im_add(const S* col, const ConvGeom& g, S* img) {
  const Eigen::Index ohw = g.out_h * g.out_w;
  Eigen::Index rr = 0;
  for (Eigen::Index c = 0; c < g.in_c; ++c) {
    S* plane = img + c * g.in_h * g.in_w;
    for (Eigen::Index kh = 0; kh < g.k; ++kh) {
      for (Eigen::Index kw = 0; kw < g.k; ++kw, ++rr) {
        const S* row = col + rr * ohw;
        for (Eigen::Index oh = 0; oh < g.out_h; ++oh) {
          const Eigen::Index ih = oh * g.stride - g.pad + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (Eigen::Index ow = 0; ow < g.out_w; ++ow) {
            const Eigen::Index iw = ow * g.stride - g.pad + kw;
            if (iw < 0 || iw >= g.in_w) continue;
            plane[ih * g.in_w + iw] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

}  // namespace convdetail

// x [B,Cin,H,W] * w [Cout,Cin,K,K] -> [B,Cout,OH,OW]; bias is a separate op.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, Eigen::Index stride,
                 Eigen::Index pad) {
  using M = typename Tensor<S>::Matrix;
  const auto g = convdetail::conv_geometry(x.shape(), w.shape(), stride, pad);
  const Eigen::Index batch = x.shape()[0];
  const Eigen::Index kk = g.in_c * g.k * g.k, ohw = g.out_h * g.out_w;
  typename Tensor<S>::Array out(batch * g.out_c * ohw);
  typename Tensor<S>::Array col(kk * ohw);
  Eigen::Map<const M> wm(w.data(), g.out_c, kk);
  for (Eigen::Index i = 0; i < batch; ++i) {
    convdetail::im2col(x.data() + i * g.in_c * g.in_h * g.in_w, g, col.data());
    Eigen::Map<M>(out.data() + i * g.out_c * ohw, g.out_c, ohw).noalias() =
        wm * Eigen::Map<const M>(col.data(), kk, ohw);
  }
  return detail::make_op<S>(
      "conv2d", Shape{batch, g.out_c, g.out_h, g.out_w}, std::move(out), {x, w},
      [g, stride, pad](const Tensor<S>& grad, const Tensor<S>& self) {
        const auto& x2 = self.node()->parents[0];
        const auto& w2 = self.node()->parents[1];
        const Eigen::Index batch2 = x2.shape()[0];
        const Eigen::Index kk = g.in_c * g.k * g.k, ohw = g.out_h * g.out_w;
        auto dx = Tensor<S>::zeros(x2.shape());
        auto dw = Tensor<S>::zeros(w2.shape());
        Eigen::Map<const M> wm(w2.data(), g.out_c, kk);
        Eigen::Map<M> dwm(dw.data(), g.out_c, kk);
        typename Tensor<S>::Array col(kk * ohw), colg(kk * ohw);
        for (Eigen::Index i = 0; i < batch2; ++i) {
          Eigen::Map<const M> gm(grad.data() + i * g.out_c * ohw, g.out_c, ohw);
          convdetail::im2col(x2.data() + i * g.in_c * g.in_h * g.in_w, g, col.data());
          dwm.noalias() += gm * Eigen::Map<const M>(col.data(), kk, ohw).transpose();
          Eigen::Map<M>(colg.data(), kk, ohw).noalias() = wm.transpose() * gm;
          convdetail::col2im_add(colg.data(), g, dx.data() + i * g.in_c * g.in_h * g.in_w);
        }
        return std::vector<Tensor<S>>{dx, dw};
      });
}

// x [B,Cin,H,W] * w [Cin,Cout,K,K] -> [B,Cout,(H-1)s-2p+K,(W-1)s-2p+K].
template <class S>
Tensor<S> conv_transpose2d(const Tensor<S>& x, const Tensor<S>& w, Eigen::Index stride,
                           Eigen::Index pad) {
  using M = typename Tensor<S>::Matrix;
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv_transpose2d", "inputs must be rank-4");
  if (x.shape()[1] != w.shape()[0])
    throw ShapeError("conv_transpose2d", "channel mismatch " + shape_str(x.shape()) + " vs " +
                                             shape_str(w.shape()));
  const Eigen::Index batch = x.shape()[0];
  const Eigen::Index in_h = x.shape()[2], in_w = x.shape()[3];
  const Eigen::Index out_h = (in_h - 1) * stride - 2 * pad + w.shape()[2];
  const Eigen::Index out_w = (in_w - 1) * stride - 2 * pad + w.shape()[3];
  if (out_h < 1 || out_w < 1) throw ShapeError("conv_transpose2d", "empty output");
  // Geometry of the equivalent forward conv mapping output -> input.
  convdetail::ConvGeom g;
  g.in_c = w.shape()[1];  // Cout of the transpose
  g.in_h = out_h;
  g.in_w = out_w;
  g.out_c = x.shape()[1];
  g.k = w.shape()[2];
  g.stride = stride;
  g.pad = pad;
  g.out_h = in_h;
  g.out_w = in_w;

  const Eigen::Index cin = x.shape()[1], cout = g.in_c;
  const Eigen::Index kk = cout * g.k * g.k, hw = in_h * in_w;
  typename Tensor<S>::Array out = Tensor<S>::Array::Zero(batch * cout * out_h * out_w);
  typename Tensor<S>::Array col(kk * hw);
  Eigen::Map<const M> wm(w.data(), cin, kk);
  for (Eigen::Index i = 0; i < batch; ++i) {
    Eigen::Map<const M> xm(x.data() + i * cin * hw, cin, hw);
    Eigen::Map<M>(col.data(), kk, hw).noalias() = wm.transpose() * xm;
    convdetail::col2im_add(col.data(), g, out.data() + i * cout * out_h * out_w);
  }
  return detail::make_op<S>(
      "conv_transpose2d", Shape{batch, cout, out_h, out_w}, std::move(out), {x, w},
      [g, cin, kk, hw](const Tensor<S>& grad, const Tensor<S>& self) {
        const auto& x2 = self.node()->parents[0];
        const auto& w2 = self.node()->parents[1];
        const Eigen::Index batch2 = x2.shape()[0];
        auto dx = Tensor<S>::zeros(x2.shape());
        auto dw = Tensor<S>::zeros(w2.shape());
        Eigen::Map<const M> wm(w2.data(), cin, kk);
        Eigen::Map<M> dwm(dw.data(), cin, kk);
        typename Tensor<S>::Array col(kk * hw);
        const Eigen::Index gplane = g.in_c * g.in_h * g.in_w;
        for (Eigen::Index i = 0; i < batch2; ++i) {
          convdetail::im2col(grad.data() + i * gplane, g, col.data());
          Eigen::Map<const M> cm(col.data(), kk, hw);
          Eigen::Map<const M> xm(x2.data() + i * cin * hw, cin, hw);
          Eigen::Map<M>(dx.data() + i * cin * hw, cin, hw).noalias() = wm * cm;
          dwm.noalias() += xm * cm.transpose();
        }
        return std::vector<Tensor<S>>{dx, dw};
      });
}

// Per-channel bias add on NCHW.
template <class S>
Tensor<S> add_chan(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.rank() != 4 || b.rank() != 1 || b.dim(0) != x.shape()[1])
    throw ShapeError("add_chan", shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  const Eigen::Index batch = x.shape()[0], ch = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
  typename Tensor<S>::Array out = x.values();
  for (Eigen::Index i = 0; i < batch; ++i)
    for (Eigen::Index c = 0; c < ch; ++c)
      out.segment((i * ch + c) * plane, plane) += b.values()(c);
  return detail::make_op<S>(
      "add_chan", x.shape(), std::move(out), {x, b},
      [batch, ch, plane](const Tensor<S>& g, const Tensor<S>&) {
        auto db = Tensor<S>::zeros(Shape{ch});
        for (Eigen::Index i = 0; i < batch; ++i)
          for (Eigen::Index c = 0; c < ch; ++c)
            db.values()(c) += g.values().segment((i * ch + c) * plane, plane).sum();
        return std::vector<Tensor<S>>{g, db};
      });
}

// Batch normalization over (B,H,W) per channel, batch statistics (biased
// variance). This artifact uses batch statistics in train and eval alike, so
// with dropout 0 the two modes are bit-identical.
template <class S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      S eps = S(1e-5)) {
  if (x.rank() != 4 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.dim(0) != x.shape()[1] || beta.dim(0) != x.shape()[1])
    throw ShapeError("batchnorm2d", shape_str(x.shape()) + " with gamma " +
                                        shape_str(gamma.shape()));
  using Array = typename Tensor<S>::Array;
  const Eigen::Index batch = x.shape()[0], ch = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
  const Eigen::Index n = batch * plane;

  auto xhat = std::make_shared<Array>(x.size());
  auto invstd = std::make_shared<Array>(ch);
  Array out(x.size());
  for (Eigen::Index c = 0; c < ch; ++c) {
    S mean = 0;
    for (Eigen::Index i = 0; i < batch; ++i)
      mean += x.values().segment((i * ch + c) * plane, plane).sum();
    mean /= static_cast<S>(n);
    S var = 0;
    for (Eigen::Index i = 0; i < batch; ++i)
      var += (x.values().segment((i * ch + c) * plane, plane) - mean).square().sum();
    var /= static_cast<S>(n);
    const S is = S(1) / std::sqrt(var + eps);
    (*invstd)(c) = is;
    for (Eigen::Index i = 0; i < batch; ++i) {
      auto seg = xhat->segment((i * ch + c) * plane, plane);
      seg = (x.values().segment((i * ch + c) * plane, plane) - mean) * is;
      out.segment((i * ch + c) * plane, plane) =
          seg * gamma.values()(c) + beta.values()(c);
    }
  }
  return detail::make_op<S>(
      "batchnorm2d", x.shape(), std::move(out), {x, gamma, beta},
      [xhat, invstd, batch, ch, plane, n](const Tensor<S>& g, const Tensor<S>& self) {
        const auto& gamma2 = self.node()->parents[1];
        auto dx = Tensor<S>::zeros(self.shape());
        auto dgamma = Tensor<S>::zeros(Shape{ch});
        auto dbeta = Tensor<S>::zeros(Shape{ch});
        for (Eigen::Index c = 0; c < ch; ++c) {
          S sum_g = 0, sum_gx = 0;
          for (Eigen::Index i = 0; i < batch; ++i) {
            const auto gs = g.values().segment((i * ch + c) * plane, plane);
            const auto xs = xhat->segment((i * ch + c) * plane, plane);
            sum_g += gs.sum();
            sum_gx += (gs * xs).sum();
          }
          dbeta.values()(c) = sum_g;
          dgamma.values()(c) = sum_gx;
          const S k = gamma2.values()(c) * (*invstd)(c) / static_cast<S>(n);
          for (Eigen::Index i = 0; i < batch; ++i) {
            const auto gs = g.values().segment((i * ch + c) * plane, plane);
            const auto xs = xhat->segment((i * ch + c) * plane, plane);
            dx.values().segment((i * ch + c) * plane, plane) =
                k * (static_cast<S>(n) * gs - sum_g - xs * sum_gx);
          }
        }
        return std::vector<Tensor<S>>{dx, dgamma, dbeta};
      });
}

// Inverted dropout; rate 0 is an exact pass-through.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double rate, RngStream& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  using Array = typename Tensor<S>::Array;
  Array coeff(x.size());
  const S keep_inv = S(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < x.size(); ++i)
    coeff(i) = rng.uniform() < rate ? S(0) : keep_inv;
  auto coeff_t = Tensor<S>::constant(x.shape(), std::move(coeff), "dropout_mask");
  return mul(x, coeff_t);
}

}  // namespace lqg::ad
