#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eam/gradcheck.hpp"
#include "eam/multiscale.hpp"

namespace eam {

/// The 64-bit finite-difference certification suite: every differentiable
/// tensor op, the attention compositions, ASPP, the backbone, and the full
/// classifier. Scenario seeds are fixed so failures reproduce.
namespace gradcheck_suite {

using D = double;
using LossBuilder = std::function<Var<D>()>;

struct Scenario {
  std::string name;
  // Returns the loss builder and fills the parameter list to be checked.
  std::function<LossBuilder(std::vector<Var<D>>&)> make;
  std::uint64_t seed = 0;
};

namespace detail_suite {

/// Fixed random projection; summing out ⊙ W exposes every output coordinate.
inline Tensor4<D> proj_tensor(Shape4 s, std::mt19937_64& rng) {
  Tensor4<D> w(s);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::bernoulli_distribution sign(0.5);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = sign(rng) ? u(rng) : -u(rng);
  return w;
}

/// Turns a rebuildable op into a rebuildable scalar loss with weights drawn
/// once (a probe run provides the output shape).
template <class OpFn>
LossBuilder projected(OpFn op, std::mt19937_64& rng) {
  Tensor4<D> w = proj_tensor(op()->value.shape(), rng);
  return [op, w]() { return sum(eltwise_mul(op(), constant(w))); };
}

inline Var<D> fresh_param(Shape4 s, std::mt19937_64& rng, std::vector<Var<D>>& ps,
                          double lo = 0.05, double hi = 1.0) {
  Var<D> v = parameter(detail::nudged_random<D>(s, rng, lo, hi),
                       "p" + std::to_string(ps.size()));
  ps.push_back(v);
  return v;
}

}  // namespace detail_suite

inline std::vector<Scenario> scenarios() {
  using detail_suite::fresh_param;
  using detail_suite::projected;

  std::vector<Scenario> list;
  auto add = [&](const std::string& name, std::uint64_t seed, auto make) {
    list.push_back({name, make, seed});
  };

  auto conv_case = [](Shape4 xs, Shape4 ws, ConvGeom g) {
    return [xs, ws, g](std::vector<Var<D>>& ps) {
      std::mt19937_64 rng(xs.c * 131 + ws.n);
      auto x = fresh_param(xs, rng, ps);
      auto w = fresh_param(ws, rng, ps);
      auto b = fresh_param({ws.n, 1, 1, 1}, rng, ps);
      return projected([=]() { return conv2d(x, w, b, g); }, rng);
    };
  };
  add("conv2d_k1", 11, conv_case({2, 4, 6, 6}, {5, 4, 1, 1}, ConvGeom{1, 0, 1}));
  add("conv2d_k3_dilated", 12, conv_case({2, 3, 8, 8}, {4, 3, 3, 3}, ConvGeom{1, 2, 2}));
  add("conv2d_k3_strided", 13, conv_case({2, 3, 9, 9}, {4, 3, 3, 3}, ConvGeom{2, 1, 1}));
  add("conv2d_k7", 14, conv_case({1, 2, 9, 9}, {1, 2, 7, 7}, ConvGeom{1, 3, 1}));

  auto unary_case = [](Shape4 xs, std::uint64_t seed, auto op) {
    return [xs, seed, op](std::vector<Var<D>>& ps) {
      std::mt19937_64 rng(seed);
      auto x = fresh_param(xs, rng, ps);
      return projected([=]() { return op(x); }, rng);
    };
  };
  add("sigmoid", 15, unary_case({2, 3, 4, 4}, 15, [](const Var<D>& x) { return sigmoid(x); }));
  add("relu", 16, unary_case({2, 3, 4, 4}, 16, [](const Var<D>& x) { return relu(x); }));
  add("channel_pool_avg", 17,
      unary_case({2, 4, 5, 5}, 17, [](const Var<D>& x) { return channel_pool_avg(x); }));
  add("channel_pool_max", 18,
      unary_case({2, 4, 5, 5}, 18, [](const Var<D>& x) { return channel_pool_max(x); }));
  add("spatial_pool", 19,
      unary_case({2, 5, 4, 4}, 19, [](const Var<D>& x) { return spatial_pool(x); }));
  add("global_avg_pool", 20,
      unary_case({2, 6, 4, 4}, 20, [](const Var<D>& x) { return global_avg_pool(x); }));
  add("max_pool2", 21,
      unary_case({2, 3, 6, 6}, 21, [](const Var<D>& x) { return max_pool2(x); }));

  add("mlp_shared", 22, [](std::vector<Var<D>>& ps) {
    std::mt19937_64 rng(22);
    auto v = fresh_param({3, 8, 1, 1}, rng, ps);
    auto w1 = fresh_param({4, 8, 1, 1}, rng, ps);
    auto b1 = fresh_param({4, 1, 1, 1}, rng, ps);
    auto w2 = fresh_param({8, 4, 1, 1}, rng, ps);
    auto b2 = fresh_param({8, 1, 1, 1}, rng, ps);
    return projected([=]() { return linear(relu(linear(v, w1, b1)), w2, b2); }, rng);
  });

  auto binary_case = [](Shape4 as, Shape4 bs, std::uint64_t seed, auto op) {
    return [as, bs, seed, op](std::vector<Var<D>>& ps) {
      std::mt19937_64 rng(seed);
      auto a = fresh_param(as, rng, ps);
      auto b = fresh_param(bs, rng, ps);
      return projected([=]() { return op(a, b); }, rng);
    };
  };
  auto mul_op = [](const Var<D>& a, const Var<D>& b) { return eltwise_mul(a, b); };
  auto add_op = [](const Var<D>& a, const Var<D>& b) { return eltwise_add(a, b); };
  add("eltwise_mul", 23, binary_case({2, 3, 4, 4}, {2, 3, 4, 4}, 23, mul_op));
  add("eltwise_mul_channel_bcast", 24, binary_case({2, 3, 4, 4}, {2, 3, 1, 1}, 24, mul_op));
  add("eltwise_mul_spatial_bcast", 25, binary_case({2, 3, 4, 4}, {2, 1, 4, 4}, 25, mul_op));
  add("eltwise_add_bcast", 26, binary_case({2, 3, 4, 4}, {2, 3, 1, 1}, 26, add_op));
  add("concat_channels", 27, binary_case({2, 2, 3, 3}, {2, 3, 3, 3}, 27,
                                         [](const Var<D>& a, const Var<D>& b) {
                                           return concat_channels<D>({a, b});
                                         }));

  add("cross_entropy", 28, [](std::vector<Var<D>>& ps) {
    std::mt19937_64 rng(28);
    auto logits = fresh_param({4, 5, 1, 1}, rng, ps);
    const std::vector<int> labels = {0, 3, 2, 4};
    return LossBuilder([=]() { return cross_entropy(logits, labels); });
  });

  auto attention_case = [](std::uint64_t seed, auto op) {
    return [seed, op](std::vector<Var<D>>& ps) {
      std::mt19937_64 rng(seed);
      auto store = std::make_shared<ParamStore<D>>();
      EamConfig cfg;
      cfg.c_prime = 8;
      cfg.mlp_reduction = 2;
      auto eamp = std::make_shared<EamParamVars<D>>(make_eam_params(*store, "eam", 8, cfg, rng));
      for (auto& p : eamp->all()) {
        p->value = detail::nudged_random<D>(p->value.shape(), rng, 0.05, 0.5);
        ps.push_back(p);
      }
      auto x = fresh_param({2, 8, 6, 6}, rng, ps);
      return projected([=]() { return op(x, *eamp, cfg); }, rng);
    };
  };
  add("channel_attention", 31,
      attention_case(31, [](const Var<D>& x, const EamParamVars<D>& p, const EamConfig&) {
        return channel_attention(x, p);
      }));
  add("spatial_attention", 32,
      attention_case(32, [](const Var<D>& x, const EamParamVars<D>& p, const EamConfig&) {
        return spatial_attention(x, p);
      }));
  add("cbam_forward", 33,
      attention_case(33, [](const Var<D>& x, const EamParamVars<D>& p, const EamConfig&) {
        return cbam_forward(x, p);
      }));
  add("icbam_forward", 34,
      attention_case(34, [](const Var<D>& x, const EamParamVars<D>& p, const EamConfig&) {
        return icbam_forward(x, p);
      }));
  add("eam_forward", 35,
      attention_case(35, [](const Var<D>& x, const EamParamVars<D>& p, const EamConfig& cfg) {
        return eam_forward(x, p, cfg);
      }));

  add("aspp_forward", 41, [](std::vector<Var<D>>& ps) {
    std::mt19937_64 rng(41);
    auto store = std::make_shared<ParamStore<D>>();
    AsppConfig cfg;
    cfg.branch_width = 4;
    cfg.out_channels = 6;
    auto aspp = std::make_shared<AsppVars<D>>(make_aspp_params(*store, "aspp", 5, cfg, rng));
    for (auto& p : aspp->all()) {
      p->value = detail::nudged_random<D>(p->value.shape(), rng, 0.05, 0.4);
      ps.push_back(p);
    }
    auto x = fresh_param({2, 5, 8, 8}, rng, ps);
    return projected([=]() { return aspp_forward(x, *aspp); }, rng);
  });

  add("backbone_forward", 42, [](std::vector<Var<D>>& ps) {
    std::mt19937_64 rng(42);
    auto store = std::make_shared<ParamStore<D>>();
    auto bb = std::make_shared<BackboneVars<D>>(
        make_backbone_params<D>(*store, BackboneConfig{{4, 8, 16, 32}}, rng));
    for (auto& p : bb->all()) {
      p->value = detail::nudged_random<D>(p->value.shape(), rng, 0.05, 0.4);
      ps.push_back(p);
    }
    Var<D> x = constant(detail::nudged_random<D>({1, 3, 32, 32}, rng));
    std::array<Tensor4<D>, 4> proj;
    {
      auto taps = backbone_forward(x, *bb);
      for (int i = 0; i < 4; ++i)
        proj[static_cast<size_t>(i)] =
            detail_suite::proj_tensor(taps[static_cast<size_t>(i)]->value.shape(), rng);
    }
    return LossBuilder([=]() {
      auto taps = backbone_forward(x, *bb);
      Var<D> acc = sum(eltwise_mul(taps[0], constant(proj[0])));
      for (size_t i = 1; i < 4; ++i)
        acc = eltwise_add(acc, sum(eltwise_mul(taps[i], constant(proj[i]))));
      return acc;
    });
  });

  add("full_model", 43, [](std::vector<Var<D>>& ps) {
    ModelConfig cfg;
    cfg.c_prime = 4;
    cfg.mlp_reduction = 1;
    cfg.stage_channels = {4, 8, 16, 32};
    cfg.classes = 3;
    cfg.input_extent = 32;
    auto model = std::make_shared<EamClassifier<D>>(cfg, 43);
    std::mt19937_64 rng(43);
    for (auto& e : model->params().entries()) {
      // The head is zero-initialized by construction; randomize everything so
      // gradients actually flow to every parameter group during the check.
      e.var->value = detail::nudged_random<D>(e.var->value.shape(), rng, 0.05, 0.4);
      ps.push_back(e.var);
    }
    Tensor4<D> images = detail::nudged_random<D>({2, 3, 32, 32}, rng, 0.1, 0.9);
    images.array() = images.array().abs();
    const std::vector<int> labels = {0, 2};
    return LossBuilder(
        [=]() { return cross_entropy(model->forward(images).logits, labels); });
  });

  return list;
}

inline std::vector<GradCheckReport> run(double h, double tol_rel, double tol_abs,
                                        const std::string& only_op = {}) {
  std::vector<GradCheckReport> reports;
  bool matched = false;
  for (const auto& sc : scenarios()) {
    if (!only_op.empty() && sc.name != only_op) continue;
    matched = true;
    std::vector<Var<D>> params;
    LossBuilder loss = sc.make(params);
    reports.push_back(
        finite_diff_check<D>(sc.name, loss, params, h, tol_rel, tol_abs, sc.seed ^ 0x5EED));
  }
  if (!only_op.empty() && !matched) throw ValueError("unknown op '" + only_op + "'");
  return reports;
}

}  // namespace gradcheck_suite
}  // namespace eam
