#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "eam/attention.hpp"
#include "eam/autodiff.hpp"

namespace eam {

// ---------------------------------------------------------------------------
// Backbone: a stem plus four stages with stride-2 entries, tapping the last
// layer of each stage. Taps sit at 1/4, 1/8, 1/16 and 1/32 of the input.
// ---------------------------------------------------------------------------

struct BackboneConfig {
  std::array<int, 4> stage_channels = {16, 32, 64, 128};
};

template <class S>
struct BackboneVars {
  Var<S> stem_w, stem_b;
  std::array<Var<S>, 4> entry_w, entry_b;  // stride-2 3x3 per stage
  std::array<Var<S>, 4> inner_w, inner_b;  // stride-1 3x3 per stage
  BackboneConfig cfg;

  std::vector<Var<S>> all() const {
    std::vector<Var<S>> v = {stem_w, stem_b};
    for (int i = 0; i < 4; ++i) {
      v.push_back(entry_w[i]);
      v.push_back(entry_b[i]);
      v.push_back(inner_w[i]);
      v.push_back(inner_b[i]);
    }
    return v;
  }
};

template <class S>
BackboneVars<S> make_backbone_params(ParamStore<S>& store, const BackboneConfig& cfg,
                                     std::mt19937_64& rng) {
  for (int i = 0; i + 1 < 4; ++i) {
    if (cfg.stage_channels[i + 1] != 2 * cfg.stage_channels[i])
      throw ValueError("backbone stage channels must double, got " +
                       std::to_string(cfg.stage_channels[i]) + " -> " +
                       std::to_string(cfg.stage_channels[i + 1]));
  }
  if (cfg.stage_channels[0] < 2) throw ValueError("backbone stage 2 needs >= 2 channels");

  BackboneVars<S> p;
  p.cfg = cfg;
  const Index stem_c = cfg.stage_channels[0] / 2;
  p.stem_w = store.create("backbone.stem.w", init::he_normal<S>({stem_c, 3, 3, 3}, 3 * 9, rng));
  p.stem_b = store.create("backbone.stem.b", Tensor4<S>({stem_c, 1, 1, 1}));
  Index in_c = stem_c;
  for (int i = 0; i < 4; ++i) {
    const Index out_c = cfg.stage_channels[i];
    const std::string sp = "backbone.stage" + std::to_string(i + 2);
    p.entry_w[i] = store.create(sp + ".entry.w", init::he_normal<S>({out_c, in_c, 3, 3}, in_c * 9, rng));
    p.entry_b[i] = store.create(sp + ".entry.b", Tensor4<S>({out_c, 1, 1, 1}));
    p.inner_w[i] = store.create(sp + ".inner.w", init::he_normal<S>({out_c, out_c, 3, 3}, out_c * 9, rng));
    p.inner_b[i] = store.create(sp + ".inner.b", Tensor4<S>({out_c, 1, 1, 1}));
    in_c = out_c;
  }
  return p;
}

/// Runs the backbone on (n,3,H,W) images, H and W divisible by 32, and
/// returns the four stage taps [S2, S3, S4, S5].
template <class S>
std::array<Var<S>, 4> backbone_forward(const Var<S>& image, const BackboneVars<S>& p) {
  const Shape4& s = image->value.shape();
  if (s.h % 32 != 0)
    throw ShapeError("height", "input extent " + std::to_string(s.h) + " not divisible by 32");
  if (s.w % 32 != 0)
    throw ShapeError("width", "input extent " + std::to_string(s.w) + " not divisible by 32");

  Var<S> x = relu(conv2d(image, p.stem_w, p.stem_b, ConvGeom{2, 1, 1}));
  std::array<Var<S>, 4> taps;
  for (int i = 0; i < 4; ++i) {
    x = relu(conv2d(x, p.entry_w[i], p.entry_b[i], ConvGeom{2, 1, 1}));
    x = relu(conv2d(x, p.inner_w[i], p.inner_b[i], ConvGeom{1, 1, 1}));
    taps[i] = x;
  }
  return taps;
}

// ---------------------------------------------------------------------------
// ASPP: four parallel branches (1x1 d1, 3x3 d6, 3x3 d12, 3x3 d18), channel
// concatenation, then a 1x1 projection with ReLU.
// ---------------------------------------------------------------------------

struct AsppBranchSpec {
  int kernel = 3;
  int dilation = 1;
};

struct AsppConfig {
  int branch_width = 32;
  int out_channels = 32;
  std::array<AsppBranchSpec, 4> branches = {{{1, 1}, {3, 6}, {3, 12}, {3, 18}}};
};

/// A dilation reduced to fit a small feature map; kept for the run log.
struct DilationClamp {
  std::string where;
  int requested = 0;
  int used = 0;
  Index h = 0;
  Index w = 0;
};

template <class S>
struct AsppVars {
  std::array<Var<S>, 4> branch_w, branch_b;
  Var<S> proj_w, proj_b;
  AsppConfig cfg;
  std::string name;

  std::vector<Var<S>> all() const {
    std::vector<Var<S>> v;
    for (int i = 0; i < 4; ++i) {
      v.push_back(branch_w[i]);
      v.push_back(branch_b[i]);
    }
    v.push_back(proj_w);
    v.push_back(proj_b);
    return v;
  }
};

template <class S>
AsppVars<S> make_aspp_params(ParamStore<S>& store, const std::string& prefix, Index in_channels,
                             const AsppConfig& cfg, std::mt19937_64& rng) {
  AsppVars<S> p;
  p.cfg = cfg;
  p.name = prefix;
  const Index B = cfg.branch_width;
  for (int i = 0; i < 4; ++i) {
    const Index k = cfg.branches[i].kernel;
    const std::string bp = prefix + ".branch" + std::to_string(i);
    p.branch_w[i] =
        store.create(bp + ".w", init::he_normal<S>({B, in_channels, k, k}, in_channels * k * k, rng));
    p.branch_b[i] = store.create(bp + ".b", Tensor4<S>({B, 1, 1, 1}));
  }
  p.proj_w = store.create(prefix + ".proj.w",
                          init::he_normal<S>({cfg.out_channels, 4 * B, 1, 1}, 4 * B, rng));
  p.proj_b = store.create(prefix + ".proj.b", Tensor4<S>({cfg.out_channels, 1, 1, 1}));
  return p;
}

inline int clamp_dilation(int requested, Index h, Index w) {
  const Index bound = std::max<Index>(1, (std::min(h, w) - 1) / 2);
  return static_cast<int>(std::min<Index>(requested, bound));
}

/// The four extent-preserving branches, concatenated (pre-projection).
template <class S>
Var<S> aspp_branches(const Var<S>& x, const AsppVars<S>& p,
                     std::vector<DilationClamp>* clamp_log = nullptr) {
  const Shape4& s = x->value.shape();
  std::vector<Var<S>> outs;
  outs.reserve(4);
  for (int i = 0; i < 4; ++i) {
    const AsppBranchSpec& br = p.cfg.branches[i];
    int dil = br.dilation;
    if (br.kernel > 1) {
      dil = clamp_dilation(br.dilation, s.h, s.w);
      if (dil != br.dilation && clamp_log)
        clamp_log->push_back({p.name, br.dilation, dil, s.h, s.w});
    }
    const int pad = br.kernel > 1 ? dil : 0;
    outs.push_back(conv2d(x, p.branch_w[i], p.branch_b[i], ConvGeom{1, pad, dil}));
  }
  return concat_channels(outs);
}

template <class S>
Var<S> aspp_forward(const Var<S>& x, const AsppVars<S>& p,
                    std::vector<DilationClamp>* clamp_log = nullptr) {
  return relu(conv2d(aspp_branches(x, p, clamp_log), p.proj_w, p.proj_b, ConvGeom{1, 0, 1}));
}

// ---------------------------------------------------------------------------
// Fusion head and the assembled classifier
// ---------------------------------------------------------------------------

enum class Strategy { GAP, ASPP_GAP, EAM_GAP, EAM_ASPP_GAP };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::GAP: return "gap";
    case Strategy::ASPP_GAP: return "aspp+gap";
    case Strategy::EAM_GAP: return "eam+gap";
    case Strategy::EAM_ASPP_GAP: return "eam+aspp+gap";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "gap") return Strategy::GAP;
  if (s == "aspp+gap") return Strategy::ASPP_GAP;
  if (s == "eam+gap") return Strategy::EAM_GAP;
  if (s == "eam+aspp+gap") return Strategy::EAM_ASPP_GAP;
  throw ValueError("unknown strategy '" + s + "'");
}

inline AttentionVariant parse_variant(const std::string& s) {
  if (s == "icbam") return AttentionVariant::ICBAM;
  if (s == "cbam") return AttentionVariant::CBAM;
  throw ValueError("unknown attention variant '" + s + "'");
}

inline bool strategy_uses_eam(Strategy s) {
  return s == Strategy::EAM_GAP || s == Strategy::EAM_ASPP_GAP;
}
inline bool strategy_uses_aspp(Strategy s) {
  return s == Strategy::ASPP_GAP || s == Strategy::EAM_ASPP_GAP;
}

struct ModelConfig {
  Strategy strategy = Strategy::EAM_ASPP_GAP;
  AttentionVariant variant = AttentionVariant::ICBAM;
  bool include_conv_features = true;
  int c_prime = 16;
  int mlp_reduction = 16;
  std::array<int, 4> stage_channels = {16, 32, 64, 128};
  int aspp_branch_width = 0;  // 0 -> 2 * c_prime
  int aspp_out = 0;           // 0 -> 2 * c_prime
  int classes = 4;
  int input_extent = 64;

  int eam_out_channels() const { return include_conv_features ? 2 * c_prime : c_prime; }
  int aspp_branch_width_eff() const { return aspp_branch_width > 0 ? aspp_branch_width : 2 * c_prime; }
  int aspp_out_eff() const { return aspp_out > 0 ? aspp_out : 2 * c_prime; }

  /// Width of G_i, the pooled feature of level index li (0 -> stage 2).
  int level_width(int li) const {
    if (strategy_uses_aspp(strategy)) return aspp_out_eff();
    if (strategy_uses_eam(strategy)) return eam_out_channels();
    return stage_channels[static_cast<size_t>(li)];
  }

  int fused_width() const {
    int total = 0;
    for (int li = 0; li < 4; ++li) total += level_width(li);
    return total;
  }

  EamConfig eam_config() const {
    return EamConfig{c_prime, mlp_reduction, variant, include_conv_features};
  }
};

/// One full forward pass. `level_feats` holds the per-level activations used
/// as Grad-CAM targets: the EAM outputs when the strategy includes EAM, the
/// raw backbone taps otherwise.
template <class S>
struct ForwardTrace {
  Var<S> logits;                       // (n, K, 1, 1)
  std::array<Var<S>, 4> taps;          // S2..S5
  std::array<Var<S>, 4> level_feats;   // S''_2..S''_5
};

/// The classifier: backbone taps -> per-level EAM -> ASPP -> GAP -> fused
/// concatenation -> linear head. Strategy toggles skip EAM and/or ASPP.
template <class S>
class EamClassifier {
 public:
  EamClassifier(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    std::mt19937_64 rng(seed);
    backbone_ = make_backbone_params<S>(store_, {cfg.stage_channels}, rng);
    for (int li = 0; li < 4; ++li) {
      const std::string level = "level" + std::to_string(li + 2);
      Index feat_c = cfg.stage_channels[static_cast<size_t>(li)];
      if (strategy_uses_eam(cfg.strategy)) {
        eam_[li] = make_eam_params<S>(store_, level + ".eam", feat_c, cfg.eam_config(), rng);
        feat_c = cfg.eam_out_channels();
      }
      if (strategy_uses_aspp(cfg.strategy)) {
        AsppConfig ac;
        ac.branch_width = cfg.aspp_branch_width_eff();
        ac.out_channels = cfg.aspp_out_eff();
        aspp_[li] = make_aspp_params<S>(store_, level + ".aspp", feat_c, ac, rng);
      }
    }
    // Zero-initialized classifier: the initial softmax is uniform.
    head_w_ = store_.create("head.w", Tensor4<S>({cfg.classes, cfg.fused_width(), 1, 1}));
    head_b_ = store_.create("head.b", Tensor4<S>({cfg.classes, 1, 1, 1}));
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }
  const BackboneVars<S>& backbone() const { return backbone_; }
  const EamParamVars<S>& eam(int li) const { return eam_[static_cast<size_t>(li)]; }
  const AsppVars<S>& aspp(int li) const { return aspp_[static_cast<size_t>(li)]; }
  const Var<S>& head_w() const { return head_w_; }
  const Var<S>& head_b() const { return head_b_; }
  std::vector<DilationClamp>& dilation_log() { return clamp_log_; }

  ForwardTrace<S> forward(const Tensor4<S>& images) {
    ForwardTrace<S> tr;
    tr.taps = backbone_forward(constant(images), backbone_);
    std::vector<Var<S>> pooled;
    pooled.reserve(4);
    for (int li = 0; li < 4; ++li) {
      Var<S> f = tr.taps[static_cast<size_t>(li)];
      if (strategy_uses_eam(cfg_.strategy))
        f = eam_forward(f, eam_[static_cast<size_t>(li)], cfg_.eam_config());
      tr.level_feats[static_cast<size_t>(li)] = f;
      if (strategy_uses_aspp(cfg_.strategy))
        f = aspp_forward(f, aspp_[static_cast<size_t>(li)], &clamp_log_);
      pooled.push_back(global_avg_pool(f));
    }
    tr.logits = linear(concat_channels(pooled), head_w_, head_b_);
    return tr;
  }

  std::vector<int> predict(const Tensor4<S>& images) {
    ForwardTrace<S> tr = forward(images);
    const Shape4& s = tr.logits->value.shape();
    std::vector<int> labels(static_cast<size_t>(s.n));
    for (Index i = 0; i < s.n; ++i) {
      Eigen::Map<const ArrX<S>> row(tr.logits->value.plane(i, 0), s.c);
      Index best = 0;
      row.maxCoeff(&best);
      labels[static_cast<size_t>(i)] = static_cast<int>(best);
    }
    return labels;
  }

 private:
  ModelConfig cfg_;
  ParamStore<S> store_;
  BackboneVars<S> backbone_;
  std::array<EamParamVars<S>, 4> eam_{};
  std::array<AsppVars<S>, 4> aspp_{};
  Var<S> head_w_, head_b_;
  std::vector<DilationClamp> clamp_log_;
};

// ---------------------------------------------------------------------------
// Grad-CAM
// ---------------------------------------------------------------------------

/// Nearest-neighbor upsampling of a heatmap to (out_h, out_w).
template <class S>
MatX<S> upsample_nearest(const MatX<S>& src, Index out_h, Index out_w) {
  MatX<S> dst(out_h, out_w);
  for (Index y = 0; y < out_h; ++y) {
    const Index sy = y * src.rows() / out_h;
    for (Index x = 0; x < out_w; ++x) dst(y, x) = src(sy, x * src.cols() / out_w);
  }
  return dst;
}

/// Gradient-weighted class activation map for one image (shape (1,3,H,W)).
/// `level` selects the target activation, 2..5. The map is ReLU(sum_c
/// alpha_c A_c) scaled into [0,1] (an all-zero map stays all-zero), then
/// upsampled to the input extent.
template <class S>
MatX<S> grad_cam(EamClassifier<S>& model, const Tensor4<S>& image, int class_index, int level) {
  if (image.shape().n != 1) throw ShapeError("batch", "grad_cam expects a single image");
  if (class_index < 0 || class_index >= model.config().classes)
    throw ValueError("grad_cam: class index " + std::to_string(class_index) + " outside [0," +
                     std::to_string(model.config().classes) + ")");
  if (level < 2 || level > 5)
    throw ValueError("grad_cam: level " + std::to_string(level) + " outside 2..5");

  ForwardTrace<S> tr = model.forward(image);
  backward(pick(tr.logits, 0, class_index));

  const Var<S>& target = tr.level_feats[static_cast<size_t>(level - 2)];
  const Shape4& s = target->value.shape();
  MatX<S> map = MatX<S>::Zero(s.h, s.w);
  const Index hw = s.h * s.w;
  for (Index ch = 0; ch < s.c; ++ch) {
    Eigen::Map<const ArrX<S>> g(target->grad.plane(0, ch), hw);
    const S alpha = g.sum() / static_cast<S>(hw);
    Eigen::Map<const MatX<S>> act(target->value.plane(0, ch), s.w, s.h);
    map += alpha * act.transpose();  // plane data is row-major
  }
  map = map.cwiseMax(S(0));
  const S peak = map.maxCoeff();
  if (peak > S(0)) map /= peak;
  return upsample_nearest(map, image.shape().h, image.shape().w);
}

}  // namespace eam
