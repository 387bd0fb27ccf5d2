#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "eam/autodiff.hpp"

namespace eam {

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  double tol_rel = 0.0;
  double tol_abs = 0.0;
  int coords_checked = 0;
  bool pass = false;
};

/// Certifies analytic gradients against central finite differences.
///
/// `build_loss` must deterministically rebuild the scalar loss graph from the
/// current parameter values. For each parameter, at least `coords_per_param`
/// coordinates (all of them, if the tensor is smaller) are perturbed by +-h.
/// The report passes when max_rel <= tol_rel or max_abs <= tol_abs.
template <class S>
GradCheckReport finite_diff_check(const std::string& op_name,
                                  const std::function<Var<S>()>& build_loss,
                                  const std::vector<Var<S>>& params, double h, double tol_rel,
                                  double tol_abs, std::uint64_t seed,
                                  int coords_per_param = 32) {
  if (h <= 0) throw ValueError("finite_diff_check: h must be positive");
  GradCheckReport rep;
  rep.op_name = op_name;
  rep.tol_rel = tol_rel;
  rep.tol_abs = tol_abs;

  Var<S> loss = build_loss();
  backward(loss);
  std::vector<Tensor4<S>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad);

  std::mt19937_64 rng(seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor4<S>& theta = params[pi]->value;
    const Index count = theta.size();
    std::vector<Index> coords(count);
    std::iota(coords.begin(), coords.end(), Index(0));
    if (count > coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coords_per_param);
    }
    for (Index idx : coords) {
      const S saved = theta.data()[idx];
      theta.data()[idx] = saved + static_cast<S>(h);
      const double f_plus = static_cast<double>(build_loss()->value.data()[0]);
      theta.data()[idx] = saved - static_cast<S>(h);
      const double f_minus = static_cast<double>(build_loss()->value.data()[0]);
      theta.data()[idx] = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double exact = static_cast<double>(analytic[pi].data()[idx]);
      const double abs_err = std::abs(exact - numeric);
      const double denom = std::max(std::abs(exact), std::abs(numeric));
      const double rel_err = denom < 1e-12 ? 0.0 : abs_err / denom;
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err);
      ++rep.coords_checked;
    }
  }
  rep.pass = rep.max_rel_err <= tol_rel || rep.max_abs_err <= tol_abs;
  return rep;
}

namespace detail {

/// Random tensor with distinct coefficients kept away from zero, so ReLU and
/// max-style ops are checked off their tie/kink points.
template <class S>
Tensor4<S> nudged_random(Shape4 shape, std::mt19937_64& rng, S lo = S(0.05), S hi = S(1.0)) {
  Tensor4<S> t(shape);
  std::uniform_real_distribution<double> mag(static_cast<double>(lo), static_cast<double>(hi));
  std::bernoulli_distribution sign(0.5);
  for (Index i = 0; i < t.size(); ++i) {
    const double m = mag(rng) + 1e-4 * static_cast<double>(i % 97);
    t.data()[i] = static_cast<S>(sign(rng) ? m : -m);
  }
  return t;
}

/// Fixed random projection weights; summing out ⊙ W exposes every output
/// coordinate to the scalar loss.
template <class S>
Var<S> weighted_sum(const Var<S>& out, std::mt19937_64& rng) {
  Tensor4<S> w(out->value.shape());
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::bernoulli_distribution sign(0.5);
  for (Index i = 0; i < w.size(); ++i)
    w.data()[i] = static_cast<S>(sign(rng) ? u(rng) : -u(rng));
  return sum(eltwise_mul(out, constant(std::move(w))));
}

}  // namespace detail

}  // namespace eam
