#include <doctest.h>

#include <random>

#include "eam/gradcheck.hpp"
#include "eam/gradcheck_suite.hpp"
#include "oracles.hpp"

using eam::backward;
using eam::constant;
using eam::Index;
using eam::parameter;
using eam::Tensor4;
using eam::Var;

TEST_CASE("backward of sum gives all-ones gradient") {
  std::mt19937_64 rng(1);
  Var<double> x = parameter(oracle::random_tensor<double>({2, 3, 4, 4}, rng), "x");
  backward(eam::sum(x));
  CHECK((x->grad.array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Tensor4<double> v({1, 1, 1, 3});
  v.data()[0] = 1;
  v.data()[1] = 2;
  v.data()[2] = 3;
  Var<double> x = parameter(v, "x");
  backward(eam::sum(eam::eltwise_mul(x, x)));
  CHECK(x->grad.data()[0] == doctest::Approx(2.0));
  CHECK(x->grad.data()[1] == doctest::Approx(4.0));
  CHECK(x->grad.data()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  std::mt19937_64 rng(2);
  Var<double> x = parameter(oracle::random_tensor<double>({1, 2, 2, 2}, rng), "x");
  CHECK_THROWS_AS(backward(eam::relu(x)), eam::ValueError);
}

TEST_CASE("using a node twice accumulates: x+x matches 2x") {
  std::mt19937_64 rng(3);
  Tensor4<double> v = oracle::random_tensor<double>({2, 2, 3, 3}, rng);
  Var<double> x1 = parameter(v, "x1");
  backward(eam::sum(eam::eltwise_add(x1, x1)));
  Var<double> x2 = parameter(v, "x2");
  backward(eam::sum(eam::scale(x2, 2.0)));
  CHECK(oracle::max_abs_diff(x1->grad, x2->grad) == 0.0);
}

TEST_CASE("backward is deterministic: repeated runs are bit-identical") {
  std::mt19937_64 rng(4);
  Var<double> x = parameter(oracle::random_tensor<double>({2, 4, 6, 6}, rng), "x");
  Var<double> w = parameter(oracle::random_tensor<double>({3, 4, 3, 3}, rng), "w");
  Var<double> b = parameter(oracle::random_tensor<double>({3, 1, 1, 1}, rng), "b");
  Var<double> loss = eam::sum(eam::sigmoid(eam::conv2d(x, w, b, eam::ConvGeom{1, 1, 1})));
  backward(loss);
  Tensor4<double> gx = x->grad, gw = w->grad;
  backward(loss);
  CHECK(oracle::max_abs_diff(gx, x->grad) == 0.0);
  CHECK(oracle::max_abs_diff(gw, w->grad) == 0.0);
}

TEST_CASE("max pool backward routes ties to first element in scan order") {
  Tensor4<double> v({1, 1, 2, 2}, 1.0);  // all tied
  Var<double> x = parameter(v, "x");
  backward(eam::sum(eam::max_pool2(x)));
  CHECK(x->grad.data()[0] == 1.0);
  CHECK(x->grad.data()[1] == 0.0);
  CHECK(x->grad.data()[2] == 0.0);
  CHECK(x->grad.data()[3] == 0.0);
}

TEST_CASE("cross_entropy forward matches scalar oracle and closed forms") {
  std::mt19937_64 rng(5);
  Tensor4<double> logits = oracle::random_tensor<double>({3, 4, 1, 1}, rng, -2, 2);
  const std::vector<int> labels = {2, 0, 3};
  Var<double> lg = parameter(logits, "logits");
  Var<double> loss = eam::cross_entropy(lg, labels);

  eam::MatX<double> as_matrix(3, 4);
  for (Index i = 0; i < 3; ++i)
    for (Index c = 0; c < 4; ++c) as_matrix(i, c) = logits(i, c, 0, 0);
  CHECK(loss->value.data()[0] == doctest::Approx(oracle::cross_entropy(as_matrix, labels)));

  // uniform logits -> ln K
  Var<double> uni = parameter(Tensor4<double>({2, 5, 1, 1}, 0.7), "u");
  CHECK(eam::cross_entropy(uni, {1, 4})->value.data()[0] == doctest::Approx(std::log(5.0)));

  // saturated correct logit -> ~0 loss
  Tensor4<double> sat({1, 3, 1, 1});
  sat(0, 1, 0, 0) = 50.0;
  CHECK(eam::cross_entropy(parameter(sat, "s"), {1})->value.data()[0] < 1e-10);

  CHECK_THROWS_AS(eam::cross_entropy(lg, {0, 1, 9}), eam::ValueError);
}

TEST_CASE("finite_diff_check: central difference on x^2 at 3 and zero function") {
  Var<double> x = parameter(Tensor4<double>({1, 1, 1, 1}, 3.0), "x");
  auto rep = eam::finite_diff_check<double>(
      "square", [&]() { return eam::eltwise_mul(x, x); }, {x}, 1e-3, 1e-6, 1e-9, 7);
  CHECK(rep.pass);
  CHECK(rep.max_abs_err < 1e-6);  // numeric derivative 6.000000 within 1e-6

  Var<double> z = parameter(Tensor4<double>({1, 2, 2, 1}, 1.0), "z");
  auto zero_rep = eam::finite_diff_check<double>(
      "zero", [&]() { return eam::scale(eam::sum(z), 0.0); }, {z}, 1e-4, 1e-6, 1e-12, 8);
  CHECK(zero_rep.pass);
  CHECK(zero_rep.max_abs_err == doctest::Approx(0.0));
}

TEST_CASE("conv2d + sigmoid composite passes gradient check at 1e-5") {
  std::mt19937_64 rng(6);
  Var<double> x = parameter(eam::detail::nudged_random<double>({1, 2, 5, 5}, rng), "x");
  Var<double> w = parameter(eam::detail::nudged_random<double>({2, 2, 3, 3}, rng), "w");
  Var<double> b = parameter(eam::detail::nudged_random<double>({2, 1, 1, 1}, rng), "b");
  Tensor4<double> proj = eam::gradcheck_suite::detail_suite::proj_tensor({1, 2, 5, 5}, rng);
  auto build = [&]() {
    return eam::sum(eam::eltwise_mul(eam::sigmoid(eam::conv2d(x, w, b, eam::ConvGeom{1, 1, 1})),
                                     constant(proj)));
  };
  auto rep = eam::finite_diff_check<double>("conv_sigmoid", build, {x, w, b}, 1e-4, 1e-5, 1e-8, 9);
  CHECK(rep.pass);
}

TEST_CASE("gradcheck suite: per-op spot checks pass at the pinned tolerances") {
  // The full suite runs in the acceptance binary; keep a few representative
  // ops here so unit runs stay fast.
  for (const char* op : {"conv2d_k3_dilated", "max_pool2", "spatial_pool", "icbam_forward"}) {
    auto reports = eam::gradcheck_suite::run(1e-4, 1e-4, 1e-6, op);
    REQUIRE(reports.size() == 1);
    INFO(op, " max_rel=", reports[0].max_rel_err, " max_abs=", reports[0].max_abs_err);
    CHECK(reports[0].pass);
  }
}

TEST_CASE("unknown op name in suite is rejected") {
  CHECK_THROWS_AS(eam::gradcheck_suite::run(1e-4, 1e-4, 1e-6, "nope"), eam::ValueError);
}
