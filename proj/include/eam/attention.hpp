#pragma once

#include <random>
#include <string>

#include "eam/autodiff.hpp"

namespace eam {

enum class AttentionVariant { ICBAM, CBAM };

inline const char* to_string(AttentionVariant v) {
  return v == AttentionVariant::ICBAM ? "icbam" : "cbam";
}

/// Structural hyperparameters of one enhanced attention module.
struct EamConfig {
  int c_prime = 64;
  int mlp_reduction = 16;
  AttentionVariant variant = AttentionVariant::ICBAM;
  bool include_conv_features = true;
};

/// Largest divisor of c_prime that is <= requested and keeps the hidden
/// width at or above 4 (falling back to 1 for very narrow modules).
inline int effective_mlp_reduction(int c_prime, int requested) {
  if (requested < 1) throw ValueError("mlp reduction must be positive");
  for (int r = std::min(requested, c_prime); r >= 1; --r) {
    if (c_prime % r == 0 && (c_prime / r >= 4 || r == 1)) return r;
  }
  return 1;
}

namespace init {

template <class S>
Tensor4<S> he_normal(Shape4 shape, Index fan_in, std::mt19937_64& rng) {
  Tensor4<S> t(shape);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(dist(rng));
  return t;
}

}  // namespace init

/// Learnable tensors of one EAM instance: the 1x1 reduction, the shared
/// channel MLP, and the single 7x7 spatial-attention convolution. The same
/// MLP and 7x7 kernel serve both the sequential and the parallel branch.
template <class S>
struct EamParamVars {
  Var<S> reduce_w, reduce_b;
  Var<S> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Var<S> spatial_w, spatial_b;
  int c_prime = 0;

  std::vector<Var<S>> all() const {
    return {reduce_w, reduce_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2, spatial_w, spatial_b};
  }
};

/// Registers the parameters for one module with `in_channels` input channels.
/// Enforces C' <= C and a valid hidden width.
template <class S>
EamParamVars<S> make_eam_params(ParamStore<S>& store, const std::string& prefix,
                                Index in_channels, const EamConfig& cfg, std::mt19937_64& rng) {
  const Index cp = cfg.c_prime;
  if (cp < 1) throw ValueError(prefix + ": c_prime must be >= 1");
  if (cp > in_channels)
    throw ShapeError("channel", prefix + ": C'=" + std::to_string(cp) + " exceeds C=" +
                                    std::to_string(in_channels));
  const int r = effective_mlp_reduction(static_cast<int>(cp), cfg.mlp_reduction);
  const Index hidden = cp / r;

  EamParamVars<S> p;
  p.c_prime = static_cast<int>(cp);
  p.reduce_w =
      store.create(prefix + ".reduce.w", init::he_normal<S>({cp, in_channels, 1, 1}, in_channels, rng));
  p.reduce_b = store.create(prefix + ".reduce.b", Tensor4<S>({cp, 1, 1, 1}));
  p.mlp_w1 = store.create(prefix + ".mlp.w1", init::he_normal<S>({hidden, cp, 1, 1}, cp, rng));
  p.mlp_b1 = store.create(prefix + ".mlp.b1", Tensor4<S>({hidden, 1, 1, 1}));
  p.mlp_w2 = store.create(prefix + ".mlp.w2", init::he_normal<S>({cp, hidden, 1, 1}, hidden, rng));
  p.mlp_b2 = store.create(prefix + ".mlp.b2", Tensor4<S>({cp, 1, 1, 1}));
  p.spatial_w =
      store.create(prefix + ".spatial.w", init::he_normal<S>({1, 2, 7, 7}, 2 * 49, rng));
  p.spatial_b = store.create(prefix + ".spatial.b", Tensor4<S>({1, 1, 1, 1}));
  return p;
}

/// 1x1 convolution squeezing C channels down to C'.
template <class S>
Var<S> reduce_dim(const Var<S>& input, const EamParamVars<S>& p) {
  return conv2d(input, p.reduce_w, p.reduce_b, ConvGeom{1, 0, 1});
}

/// Channel gate: sigma(MLP(AvgP(x)) + MLP(MaxP(x))) with the shared MLP.
/// Result shape (n, C', 1, 1), entries in (0,1).
template <class S>
Var<S> channel_attention(const Var<S>& x, const EamParamVars<S>& p) {
  auto branch = [&](const Var<S>& pooled) {
    return linear(relu(linear(pooled, p.mlp_w1, p.mlp_b1)), p.mlp_w2, p.mlp_b2);
  };
  return sigmoid(eltwise_add(branch(channel_pool_avg(x)), branch(channel_pool_max(x))));
}

/// Spatial gate: sigma(conv7x7([AvgP(x); MaxP(x)] over channels)), padding 3
/// so the map matches the input extent. Result shape (n, 1, h, w).
template <class S>
Var<S> spatial_attention(const Var<S>& x, const EamParamVars<S>& p) {
  return sigmoid(conv2d(spatial_pool(x), p.spatial_w, p.spatial_b, ConvGeom{1, 3, 1}));
}

/// Sequential channel-then-spatial attention (the upper block).
template <class S>
Var<S> cbam_forward(const Var<S>& iprime, const EamParamVars<S>& p) {
  Var<S> fprime = eltwise_mul(channel_attention(iprime, p), iprime);
  return eltwise_mul(spatial_attention(fprime, p), fprime);
}

/// Upper + middle block. The channel gate of the sequential path and of the
/// parallel path are one and the same expression, so the node is reused.
template <class S>
Var<S> icbam_forward(const Var<S>& iprime, const EamParamVars<S>& p) {
  Var<S> ch = channel_attention(iprime, p);
  Var<S> fprime = eltwise_mul(ch, iprime);  // doubles as the parallel-branch lambda
  Var<S> fsecond = eltwise_mul(spatial_attention(fprime, p), fprime);
  Var<S> beta = eltwise_mul(spatial_attention(iprime, p), iprime);
  Var<S> delta = eltwise_mul(fprime, beta);
  return eltwise_add(fsecond, delta);
}

/// Full module: dimension reduction, attention, and (optionally) the
/// concatenation of convolutional with attention features. Output has
/// 2C' channels when conv features are kept, C' otherwise.
template <class S>
Var<S> eam_forward(const Var<S>& stage_input, const EamParamVars<S>& p, const EamConfig& cfg) {
  Var<S> iprime = reduce_dim(stage_input, p);
  Var<S> attended = cfg.variant == AttentionVariant::ICBAM ? icbam_forward(iprime, p)
                                                           : cbam_forward(iprime, p);
  if (!cfg.include_conv_features) return attended;
  return concat_channels<S>({iprime, attended});
}

}  // namespace eam
