#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "eam/tensor.hpp"

namespace eam {

/// 2D convolution parameters (cross-correlation convention, zero padding).
/// weights shape: (out_channels, in_channels, k, k).
template <class S>
struct Conv2dParams {
  Tensor4<S> weights;
  VecX<S> bias;
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  Index out_channels() const { return weights.shape().n; }
  Index in_channels() const { return weights.shape().c; }
  Index kernel() const { return weights.shape().h; }
};

/// Shared two-layer perceptron over channel vectors: w2 * relu(w1*v + b1) + b2.
/// w1 maps c_in -> c_in/r, w2 maps back c_in/r -> c_in.
template <class S>
struct MlpParams {
  MatX<S> w1;
  VecX<S> b1;
  MatX<S> w2;
  VecX<S> b2;
  int reduction = 1;
};

namespace detail {

template <class S>
inline void check_conv_geometry(const Shape4& x, const Conv2dParams<S>& p) {
  if (p.weights.shape().h != p.weights.shape().w)
    throw ShapeError("kernel", "kernel must be square, got " + p.weights.shape().str());
  if (p.stride < 1) throw ValueError("conv2d: stride must be >= 1");
  if (p.padding < 0) throw ValueError("conv2d: padding must be >= 0");
  if (p.dilation < 1) throw ValueError("conv2d: dilation must be >= 1");
  if (x.c != p.in_channels())
    throw ShapeError("channel", "input has " + std::to_string(x.c) + " channels, kernel expects " +
                                    std::to_string(p.in_channels()));
  const Index eff = static_cast<Index>(p.dilation) * (p.kernel() - 1) + 1;
  if (eff > x.h + 2 * p.padding)
    throw ShapeError("height", "effective kernel extent " + std::to_string(eff) +
                                   " exceeds padded extent " + std::to_string(x.h + 2 * p.padding));
  if (eff > x.w + 2 * p.padding)
    throw ShapeError("width", "effective kernel extent " + std::to_string(eff) +
                                  " exceeds padded extent " + std::to_string(x.w + 2 * p.padding));
  if (static_cast<Index>(p.bias.size()) != p.out_channels())
    throw ShapeError("channel", "bias length " + std::to_string(p.bias.size()) +
                                    " != out_channels " + std::to_string(p.out_channels()));
}

inline Index conv_out_extent(Index in, Index k, int stride, int pad, int dil) {
  return (in + 2 * pad - (static_cast<Index>(dil) * (k - 1) + 1)) / stride + 1;
}

/// Unrolls one sample into a (c*k*k, oh*ow) patch matrix; out-of-bounds taps are zero.
template <class S>
void im2col(const Tensor4<S>& x, Index i, Index k, int stride, int pad, int dil, Index oh,
            Index ow, MatX<S>& cols) {
  const Shape4& s = x.shape();
  cols.setZero(s.c * k * k, oh * ow);
  for (Index ch = 0; ch < s.c; ++ch) {
    const S* src = x.plane(i, ch);
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (ch * k + ky) * k + kx;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index y = oy * stride - pad + ky * dil;
          if (y < 0 || y >= s.h) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index xx = ox * stride - pad + kx * dil;
            if (xx < 0 || xx >= s.w) continue;
            cols(row, oy * ow + ox) = src[y * s.w + xx];
          }
        }
      }
    }
  }
}

/// Scatter-add transpose of im2col; accumulates into sample i of dst.
template <class S>
void col2im_add(const MatX<S>& cols, Index i, Index k, int stride, int pad, int dil, Index oh,
                Index ow, Tensor4<S>& dst) {
  const Shape4& s = dst.shape();
  for (Index ch = 0; ch < s.c; ++ch) {
    S* out = dst.plane(i, ch);
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (ch * k + ky) * k + kx;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index y = oy * stride - pad + ky * dil;
          if (y < 0 || y >= s.h) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index xx = ox * stride - pad + kx * dil;
            if (xx < 0 || xx >= s.w) continue;
            out[y * s.w + xx] += cols(row, oy * ow + ox);
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation with zero padding, implemented as im2col + GEMM.
template <class S>
Tensor4<S> conv2d(const Tensor4<S>& x, const Conv2dParams<S>& p) {
  detail::check_conv_geometry(x.shape(), p);
  const Shape4& s = x.shape();
  const Index k = p.kernel();
  const Index oh = detail::conv_out_extent(s.h, k, p.stride, p.padding, p.dilation);
  const Index ow = detail::conv_out_extent(s.w, k, p.stride, p.padding, p.dilation);
  Tensor4<S> out({s.n, p.out_channels(), oh, ow});

  ConstRowMajorMap<S> wmat(p.weights.data(), p.out_channels(), p.in_channels() * k * k);
  MatX<S> cols;
  for (Index i = 0; i < s.n; ++i) {
    detail::im2col(x, i, k, p.stride, p.padding, p.dilation, oh, ow, cols);
    RowMajorMap<S> omat(out.plane(i, 0), p.out_channels(), oh * ow);
    omat.noalias() = wmat * cols;
    omat.colwise() += p.bias;
  }
  return out;
}

template <class S>
Tensor4<S> sigmoid(const Tensor4<S>& x) {
  Tensor4<S> out = x;
  out.array() = S(1) / (S(1) + (-out.array()).exp());
  return out;
}

template <class S>
Tensor4<S> relu(const Tensor4<S>& x) {
  Tensor4<S> out = x;
  out.array() = out.array().max(S(0));
  return out;
}

/// Mean over each channel plane; result shape (n, c, 1, 1).
template <class S>
Tensor4<S> channel_pool_avg(const Tensor4<S>& x) {
  const Shape4& s = x.shape();
  Tensor4<S> out({s.n, s.c, 1, 1});
  for (Index i = 0; i < s.n; ++i)
    for (Index ch = 0; ch < s.c; ++ch) {
      Eigen::Map<const ArrX<S>> pl(x.plane(i, ch), s.h * s.w);
      out(i, ch, 0, 0) = pl.sum() / static_cast<S>(s.h * s.w);
    }
  return out;
}

/// Max over each channel plane; result shape (n, c, 1, 1).
template <class S>
Tensor4<S> channel_pool_max(const Tensor4<S>& x) {
  const Shape4& s = x.shape();
  Tensor4<S> out({s.n, s.c, 1, 1});
  for (Index i = 0; i < s.n; ++i)
    for (Index ch = 0; ch < s.c; ++ch) {
      Eigen::Map<const ArrX<S>> pl(x.plane(i, ch), s.h * s.w);
      out(i, ch, 0, 0) = pl.maxCoeff();
    }
  return out;
}

/// Per-pixel statistics across channels: plane 0 mean, plane 1 max.
/// Result shape (n, 2, h, w).
template <class S>
Tensor4<S> spatial_pool(const Tensor4<S>& x) {
  const Shape4& s = x.shape();
  Tensor4<S> out({s.n, 2, s.h, s.w});
  const Index hw = s.h * s.w;
  for (Index i = 0; i < s.n; ++i) {
    Eigen::Map<ArrX<S>> avg(out.plane(i, 0), hw);
    Eigen::Map<ArrX<S>> mx(out.plane(i, 1), hw);
    avg = Eigen::Map<const ArrX<S>>(x.plane(i, 0), hw);
    mx = avg;
    for (Index ch = 1; ch < s.c; ++ch) {
      Eigen::Map<const ArrX<S>> pl(x.plane(i, ch), hw);
      avg += pl;
      mx = mx.max(pl);
    }
    avg /= static_cast<S>(s.c);
  }
  return out;
}

/// Shared MLP applied to pooled channel vectors of shape (n, c, 1, 1).
template <class S>
Tensor4<S> mlp_shared(const Tensor4<S>& v, const MlpParams<S>& p) {
  const Shape4& s = v.shape();
  if (s.h != 1 || s.w != 1)
    throw ShapeError("height", "mlp_shared expects (n,c,1,1), got " + s.str());
  if (p.w1.cols() != s.c)
    throw ShapeError("channel", "mlp width " + std::to_string(p.w1.cols()) +
                                    " != input channels " + std::to_string(s.c));
  Tensor4<S> out({s.n, s.c, 1, 1});
  for (Index i = 0; i < s.n; ++i) {
    Eigen::Map<const VecX<S>> vin(v.plane(i, 0), s.c);
    VecX<S> hidden = ((p.w1 * vin + p.b1).array().max(S(0))).matrix();
    Eigen::Map<VecX<S>> vout(out.plane(i, 0), s.c);
    vout = p.w2 * hidden + p.b2;
  }
  return out;
}

namespace detail {

enum class Broadcast { None, ChannelMap, SpatialMap };

/// Decides how `b` broadcasts against `a`; shapes must be equal, or b one of
/// (n,c,1,1) / (n,1,h,w) against a's (n,c,h,w).
inline Broadcast broadcast_kind(const Shape4& a, const Shape4& b) {
  if (a == b) return Broadcast::None;
  if (a.n != b.n) throw ShapeError("batch", "cannot broadcast " + b.str() + " onto " + a.str());
  if (b.c == a.c && b.h == 1 && b.w == 1) return Broadcast::ChannelMap;
  if (b.c == 1 && b.h == a.h && b.w == a.w) return Broadcast::SpatialMap;
  throw ShapeError("channel", "cannot broadcast " + b.str() + " onto " + a.str());
}

template <class S, class F>
Tensor4<S> eltwise(const Tensor4<S>& a, const Tensor4<S>& b, F&& f) {
  // One of the operands may be the broadcast-shaped one; normalize so the
  // full-shape tensor drives the loop.
  const bool swap = a.shape() != b.shape() && a.size() < b.size();
  const Tensor4<S>& full = swap ? b : a;
  const Tensor4<S>& small = swap ? a : b;
  const Broadcast kind = broadcast_kind(full.shape(), small.shape());
  const Shape4& s = full.shape();
  Tensor4<S> out({s.n, s.c, s.h, s.w});
  const Index hw = s.h * s.w;
  switch (kind) {
    case Broadcast::None:
      for (Index t = 0; t < out.size(); ++t) out.data()[t] = f(full.data()[t], small.data()[t]);
      break;
    case Broadcast::ChannelMap:
      for (Index i = 0; i < s.n; ++i)
        for (Index ch = 0; ch < s.c; ++ch) {
          const S scale = small(i, ch, 0, 0);
          const S* src = full.plane(i, ch);
          S* dst = out.plane(i, ch);
          for (Index t = 0; t < hw; ++t) dst[t] = f(src[t], scale);
        }
      break;
    case Broadcast::SpatialMap:
      for (Index i = 0; i < s.n; ++i) {
        const S* map = small.plane(i, 0);
        for (Index ch = 0; ch < s.c; ++ch) {
          const S* src = full.plane(i, ch);
          S* dst = out.plane(i, ch);
          for (Index t = 0; t < hw; ++t) dst[t] = f(src[t], map[t]);
        }
      }
      break;
  }
  return out;
}

}  // namespace detail

/// Elementwise product; one operand may be a per-channel (n,c,1,1) or
/// per-pixel (n,1,h,w) map broadcast over the other.
template <class S>
Tensor4<S> eltwise_mul(const Tensor4<S>& a, const Tensor4<S>& b) {
  return detail::eltwise(a, b, [](S x, S y) { return x * y; });
}

template <class S>
Tensor4<S> eltwise_add(const Tensor4<S>& a, const Tensor4<S>& b) {
  return detail::eltwise(a, b, [](S x, S y) { return x + y; });
}

/// Concatenates along the channel axis, preserving part order.
template <class S>
Tensor4<S> concat_channels(const std::vector<const Tensor4<S>*>& parts) {
  if (parts.empty()) throw ValueError("concat_channels: no parts");
  const Shape4& s0 = parts.front()->shape();
  Index total_c = 0;
  for (const auto* p : parts) {
    const Shape4& s = p->shape();
    if (s.n != s0.n) throw ShapeError("batch", "part extent " + s.str() + " vs " + s0.str());
    if (s.h != s0.h) throw ShapeError("height", "part extent " + s.str() + " vs " + s0.str());
    if (s.w != s0.w) throw ShapeError("width", "part extent " + s.str() + " vs " + s0.str());
    total_c += s.c;
  }
  Tensor4<S> out({s0.n, total_c, s0.h, s0.w});
  const Index hw = s0.h * s0.w;
  for (Index i = 0; i < s0.n; ++i) {
    Index ch0 = 0;
    for (const auto* p : parts) {
      std::copy(p->plane(i, 0), p->plane(i, 0) + p->shape().c * hw, out.plane(i, ch0));
      ch0 += p->shape().c;
    }
  }
  return out;
}

template <class S>
Tensor4<S> concat_channels(const std::vector<Tensor4<S>>& parts) {
  std::vector<const Tensor4<S>*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_channels(ptrs);
}

/// Channels [c0, c1) of x, as a standalone tensor.
template <class S>
Tensor4<S> slice_channels(const Tensor4<S>& x, Index c0, Index c1) {
  const Shape4& s = x.shape();
  if (c0 < 0 || c1 > s.c || c0 >= c1)
    throw ShapeError("channel", "invalid slice [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") of " + s.str());
  Tensor4<S> out({s.n, c1 - c0, s.h, s.w});
  const Index hw = s.h * s.w;
  for (Index i = 0; i < s.n; ++i)
    std::copy(x.plane(i, c0), x.plane(i, c0) + (c1 - c0) * hw, out.plane(i, 0));
  return out;
}

/// Global average pooling: per (sample, channel) mean over the spatial plane.
/// Result is an n-by-c matrix.
template <class S>
MatX<S> global_avg_pool(const Tensor4<S>& x) {
  const Shape4& s = x.shape();
  MatX<S> out(s.n, s.c);
  for (Index i = 0; i < s.n; ++i)
    for (Index ch = 0; ch < s.c; ++ch) {
      Eigen::Map<const ArrX<S>> pl(x.plane(i, ch), s.h * s.w);
      out(i, ch) = pl.sum() / static_cast<S>(s.h * s.w);
    }
  return out;
}

/// 2x2 max pooling with stride 2; both spatial extents must be even.
template <class S>
Tensor4<S> max_pool2(const Tensor4<S>& x) {
  const Shape4& s = x.shape();
  if (s.h % 2 != 0) throw ShapeError("height", "odd extent " + std::to_string(s.h));
  if (s.w % 2 != 0) throw ShapeError("width", "odd extent " + std::to_string(s.w));
  Tensor4<S> out({s.n, s.c, s.h / 2, s.w / 2});
  for (Index i = 0; i < s.n; ++i)
    for (Index ch = 0; ch < s.c; ++ch) {
      const S* src = x.plane(i, ch);
      S* dst = out.plane(i, ch);
      for (Index oy = 0; oy < s.h / 2; ++oy)
        for (Index ox = 0; ox < s.w / 2; ++ox) {
          const Index base = 2 * oy * s.w + 2 * ox;
          S m = src[base];
          m = std::max(m, src[base + 1]);
          m = std::max(m, src[base + s.w]);
          m = std::max(m, src[base + s.w + 1]);
          dst[oy * (s.w / 2) + ox] = m;
        }
    }
  return out;
}

/// Row-wise softmax with max subtraction.
template <class S>
MatX<S> softmax_rows(const MatX<S>& logits) {
  if (logits.cols() < 2) throw ShapeError("channel", "softmax needs K >= 2 columns");
  MatX<S> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const S m = logits.row(r).maxCoeff();
    ArrX<S> e = (logits.row(r).transpose().array() - m).exp();
    out.row(r) = (e / e.sum()).matrix().transpose();
  }
  return out;
}

}  // namespace eam
