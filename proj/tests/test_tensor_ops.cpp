#include <doctest.h>

#include <random>

#include "eam/ops.hpp"
#include "oracles.hpp"

using eam::Conv2dParams;
using eam::Index;
using eam::MatX;
using eam::MlpParams;
using eam::Shape4;
using eam::Tensor4;
using eam::VecX;

namespace {

Conv2dParams<double> make_conv(Index oc, Index ic, Index k, int stride, int pad, int dil,
                               std::mt19937_64& rng) {
  Conv2dParams<double> p;
  p.weights = oracle::random_tensor<double>({oc, ic, k, k}, rng);
  p.bias = VecX<double>::Zero(oc);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Index i = 0; i < oc; ++i) p.bias[i] = u(rng);
  p.stride = stride;
  p.padding = pad;
  p.dilation = dil;
  return p;
}

}  // namespace

TEST_CASE("conv2d zero input gives bias planes") {
  std::mt19937_64 rng(1);
  Tensor4<double> x({1, 2, 5, 5});
  auto p = make_conv(3, 2, 3, 1, 1, 1, rng);
  Tensor4<double> out = eam::conv2d(x, p);
  for (Index o = 0; o < 3; ++o)
    for (Index y = 0; y < 5; ++y)
      for (Index xx = 0; xx < 5; ++xx) CHECK(out(0, o, y, xx) == doctest::Approx(p.bias[o]));
}

TEST_CASE("conv2d 1x1 identity kernel passes input through") {
  std::mt19937_64 rng(2);
  Tensor4<double> x = oracle::random_tensor<double>({2, 3, 4, 4}, rng);
  Conv2dParams<double> p;
  p.weights = Tensor4<double>({3, 3, 1, 1});
  for (Index o = 0; o < 3; ++o) p.weights(o, o, 0, 0) = 1.0;
  p.bias = VecX<double>::Zero(3);
  Tensor4<double> out = eam::conv2d(x, p);
  CHECK(oracle::max_abs_diff(out, x) == 0.0);
}

TEST_CASE("conv2d all-ones 3x3 kernel on the 1..9 square") {
  // input [[1,2,3],[4,5,6],[7,8,9]], pad 1: center sums everything.
  Tensor4<double> x({1, 1, 3, 3});
  for (Index i = 0; i < 9; ++i) x.data()[i] = static_cast<double>(i + 1);
  Conv2dParams<double> p;
  p.weights = Tensor4<double>({1, 1, 3, 3}, 1.0);
  p.bias = VecX<double>::Zero(1);
  p.padding = 1;
  Tensor4<double> out = eam::conv2d(x, p);
  CHECK(out(0, 0, 1, 1) == doctest::Approx(45.0));
  CHECK(out(0, 0, 0, 0) == doctest::Approx(12.0));
  Tensor4<double> ref = oracle::conv2d(x, p);
  CHECK(oracle::max_abs_diff(out, ref) == doctest::Approx(0.0));
}

TEST_CASE("conv2d matches the nested-loop oracle across geometry grid") {
  std::mt19937_64 rng(3);
  for (const Index k : {1, 3, 7}) {
    for (const int dil : {1, 6, 12, 18}) {
      const Index eff = dil * (k - 1) + 1;
      const int pad = static_cast<int>(eff / 2);  // extent-preserving at stride 1
      Tensor4<double> x = oracle::random_tensor<double>({2, 3, 16, 16}, rng);
      auto p = make_conv(4, 3, k, 1, pad, dil, rng);
      Tensor4<double> lib = eam::conv2d(x, p);
      Tensor4<double> ref = oracle::conv2d(x, p);
      CHECK(lib.shape() == ref.shape());
      CHECK(oracle::max_rel_diff(lib, ref) < 1e-9);
    }
  }
}

TEST_CASE("conv2d rejects bad geometry with the offending axis") {
  std::mt19937_64 rng(4);
  Tensor4<double> x({1, 2, 4, 4});
  auto p = make_conv(1, 3, 3, 1, 1, 1, rng);  // wrong input channels
  CHECK_THROWS_WITH_AS(eam::conv2d(x, p), doctest::Contains("channel"), eam::ShapeError);
  auto q = make_conv(1, 2, 7, 1, 0, 1, rng);  // kernel exceeds unpadded extent
  try {
    eam::conv2d(x, q);
    FAIL("expected ShapeError");
  } catch (const eam::ShapeError& e) {
    CHECK(e.axis() == "height");
  }
}

TEST_CASE("sigmoid fixed points and range") {
  Tensor4<double> x({1, 1, 1, 3});
  x.data()[0] = 0.0;
  x.data()[1] = 50.0;
  x.data()[2] = 1.0;
  Tensor4<double> s = eam::sigmoid(x);
  CHECK(s.data()[0] == doctest::Approx(0.5));
  CHECK(s.data()[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.data()[2] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  std::mt19937_64 rng(5);
  Tensor4<double> r = oracle::random_tensor<double>({2, 3, 5, 5}, rng, -30, 30);
  Tensor4<double> sr = eam::sigmoid(r);
  for (Index i = 0; i < sr.size(); ++i) {
    CHECK(sr.data()[i] > 0.0);
    CHECK(sr.data()[i] < 1.0);
  }
}

TEST_CASE("relu basics and idempotence") {
  Tensor4<double> x({1, 1, 1, 3});
  x.data()[0] = -1.0;
  x.data()[1] = 0.0;
  x.data()[2] = 2.0;
  Tensor4<double> r = eam::relu(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 0.0);
  CHECK(r.data()[2] == 2.0);

  Tensor4<double> neg({2, 2, 3, 3}, -4.0);
  CHECK(eam::relu(neg).array().abs().maxCoeff() == 0.0);

  std::mt19937_64 rng(6);
  Tensor4<double> rand = oracle::random_tensor<double>({2, 3, 4, 4}, rng);
  CHECK(oracle::max_abs_diff(eam::relu(eam::relu(rand)), eam::relu(rand)) == 0.0);
}

TEST_CASE("channel pools: constants, closed form, oracle") {
  Tensor4<double> c({2, 3, 4, 4}, 3.7);
  CHECK(oracle::max_abs_diff(eam::channel_pool_avg(c), Tensor4<double>({2, 3, 1, 1}, 3.7)) <
        1e-15);
  CHECK(oracle::max_abs_diff(eam::channel_pool_max(c), Tensor4<double>({2, 3, 1, 1}, 3.7)) ==
        0.0);

  Tensor4<double> plane({1, 1, 2, 2});
  plane.data()[0] = 1;
  plane.data()[1] = 2;
  plane.data()[2] = 3;
  plane.data()[3] = 4;
  CHECK(eam::channel_pool_avg(plane)(0, 0, 0, 0) == doctest::Approx(2.5));
  CHECK(eam::channel_pool_max(plane)(0, 0, 0, 0) == 4.0);

  std::mt19937_64 rng(7);
  Tensor4<double> r = oracle::random_tensor<double>({2, 5, 4, 4}, rng);
  CHECK(oracle::max_abs_diff(eam::channel_pool_avg(r), oracle::channel_pool_avg(r)) < 1e-14);
  CHECK(oracle::max_abs_diff(eam::channel_pool_max(r), oracle::channel_pool_max(r)) == 0.0);
}

TEST_CASE("spatial_pool single and dual channel cases plus oracle") {
  std::mt19937_64 rng(8);
  Tensor4<double> single = oracle::random_tensor<double>({1, 1, 3, 3}, rng);
  Tensor4<double> sp = eam::spatial_pool(single);
  CHECK(sp.shape() == Shape4{1, 2, 3, 3});
  for (Index y = 0; y < 3; ++y)
    for (Index x = 0; x < 3; ++x) {
      CHECK(sp(0, 0, y, x) == doctest::Approx(single(0, 0, y, x)));
      CHECK(sp(0, 1, y, x) == single(0, 0, y, x));
    }

  Tensor4<double> two = oracle::random_tensor<double>({1, 2, 3, 3}, rng);
  Tensor4<double> sp2 = eam::spatial_pool(two);
  for (Index y = 0; y < 3; ++y)
    for (Index x = 0; x < 3; ++x) {
      CHECK(sp2(0, 0, y, x) == doctest::Approx((two(0, 0, y, x) + two(0, 1, y, x)) / 2.0));
      CHECK(sp2(0, 1, y, x) == std::max(two(0, 0, y, x), two(0, 1, y, x)));
    }

  Tensor4<double> r = oracle::random_tensor<double>({1, 8, 5, 5}, rng);
  CHECK(oracle::max_abs_diff(eam::spatial_pool(r), oracle::spatial_pool(r)) < 1e-14);
}

TEST_CASE("mlp_shared identity and zero cases, matmul oracle") {
  MlpParams<double> zero;
  zero.w1 = MatX<double>::Zero(2, 4);
  zero.b1 = VecX<double>::Zero(2);
  zero.w2 = MatX<double>::Zero(4, 2);
  zero.b2 = VecX<double>::Zero(4);
  std::mt19937_64 rng(9);
  Tensor4<double> v = oracle::random_tensor<double>({2, 4, 1, 1}, rng);
  CHECK(eam::mlp_shared(v, zero).array().abs().maxCoeff() == 0.0);

  MlpParams<double> ident;
  ident.w1 = MatX<double>::Identity(4, 4);
  ident.b1 = VecX<double>::Zero(4);
  ident.w2 = MatX<double>::Identity(4, 4);
  ident.b2 = VecX<double>::Zero(4);
  Tensor4<double> vnn = v;
  vnn.array() = vnn.array().abs();  // nonnegative input passes ReLU untouched
  CHECK(oracle::max_abs_diff(eam::mlp_shared(vnn, ident), vnn) == 0.0);

  MlpParams<double> p;
  p.w1 = MatX<double>::NullaryExpr(2, 4, [&]() { return std::uniform_real_distribution<double>(-1, 1)(rng); });
  p.b1 = VecX<double>::NullaryExpr(2, [&]() { return std::uniform_real_distribution<double>(-1, 1)(rng); });
  p.w2 = MatX<double>::NullaryExpr(4, 2, [&]() { return std::uniform_real_distribution<double>(-1, 1)(rng); });
  p.b2 = VecX<double>::NullaryExpr(4, [&]() { return std::uniform_real_distribution<double>(-1, 1)(rng); });
  CHECK(oracle::max_abs_diff(eam::mlp_shared(v, p), oracle::mlp_shared(v, p)) < 1e-12);
}

TEST_CASE("eltwise ops: identities and broadcast against materialized oracle") {
  std::mt19937_64 rng(10);
  Tensor4<double> x = oracle::random_tensor<double>({1, 3, 2, 2}, rng);
  Tensor4<double> ones({1, 3, 2, 2}, 1.0);
  CHECK(oracle::max_abs_diff(eam::eltwise_mul(x, ones), x) == 0.0);

  Tensor4<double> neg = x;
  neg.array() = -neg.array();
  CHECK(eam::eltwise_add(x, neg).array().abs().maxCoeff() == 0.0);

  Tensor4<double> cmap = oracle::random_tensor<double>({1, 3, 1, 1}, rng);
  Tensor4<double> got = eam::eltwise_mul(cmap, x);  // broadcast operand first
  Tensor4<double> want = eam::eltwise_mul(x, oracle::materialize(cmap, x.shape()));
  CHECK(oracle::max_abs_diff(got, want) == 0.0);

  Tensor4<double> smap = oracle::random_tensor<double>({1, 1, 2, 2}, rng);
  CHECK(oracle::max_abs_diff(eam::eltwise_add(x, smap),
                             eam::eltwise_add(x, oracle::materialize(smap, x.shape()))) == 0.0);

  Tensor4<double> bad({1, 2, 2, 2});
  CHECK_THROWS_AS(eam::eltwise_mul(x, bad), eam::ShapeError);
}

TEST_CASE("concat_channels shape arithmetic, identity, slice-back") {
  std::mt19937_64 rng(11);
  Tensor4<double> a = oracle::random_tensor<double>({1, 2, 4, 4}, rng);
  Tensor4<double> b = oracle::random_tensor<double>({1, 3, 4, 4}, rng);
  Tensor4<double> cat = eam::concat_channels<double>({a, b});
  CHECK(cat.shape() == Shape4{1, 5, 4, 4});

  Tensor4<double> solo = eam::concat_channels<double>({a});
  CHECK(oracle::max_abs_diff(solo, a) == 0.0);

  CHECK(oracle::max_abs_diff(eam::slice_channels(cat, 0, 2), a) == 0.0);
  CHECK(oracle::max_abs_diff(eam::slice_channels(cat, 2, 5), b) == 0.0);

  Tensor4<double> mismatched({1, 1, 3, 4});
  CHECK_THROWS_AS(eam::concat_channels<double>({a, mismatched}), eam::ShapeError);
}

TEST_CASE("global_avg_pool constants and oracle") {
  Tensor4<double> c({2, 3, 4, 4}, 2.0);
  MatX<double> g = eam::global_avg_pool(c);
  CHECK(g.rows() == 2);
  CHECK(g.cols() == 3);
  CHECK((g.array() - 2.0).abs().maxCoeff() < 1e-15);

  Tensor4<double> plane({1, 1, 2, 2});
  plane.data()[1] = 4.0;
  CHECK(eam::global_avg_pool(plane)(0, 0) == doctest::Approx(1.0));

  std::mt19937_64 rng(12);
  Tensor4<double> r = oracle::random_tensor<double>({3, 4, 5, 5}, rng);
  CHECK((eam::global_avg_pool(r) - oracle::global_avg_pool(r)).array().abs().maxCoeff() < 1e-14);
}

TEST_CASE("max_pool2 cases and odd-extent error") {
  Tensor4<double> x({1, 1, 2, 2});
  x.data()[0] = 1;
  x.data()[1] = 2;
  x.data()[2] = 3;
  x.data()[3] = 4;
  CHECK(eam::max_pool2(x)(0, 0, 0, 0) == 4.0);

  Tensor4<double> c({2, 3, 4, 4}, 1.25);
  Tensor4<double> pooled = eam::max_pool2(c);
  CHECK(pooled.shape() == Shape4{2, 3, 2, 2});
  CHECK(pooled.array().minCoeff() == 1.25);

  std::mt19937_64 rng(13);
  Tensor4<double> r = oracle::random_tensor<double>({2, 3, 6, 6}, rng);
  CHECK(oracle::max_abs_diff(eam::max_pool2(r), oracle::max_pool2(r)) == 0.0);

  Tensor4<double> odd({1, 1, 3, 4});
  CHECK_THROWS_WITH_AS(eam::max_pool2(odd), doctest::Contains("odd"), eam::ShapeError);
}

TEST_CASE("softmax_rows closed forms and shift invariance") {
  MatX<double> uniform = MatX<double>::Constant(2, 4, 1.3);
  MatX<double> s = eam::softmax_rows(uniform);
  CHECK((s.array() - 0.25).abs().maxCoeff() < 1e-15);

  MatX<double> two(1, 2);
  two << 0.0, std::log(3.0);
  MatX<double> st = eam::softmax_rows(two);
  CHECK(st(0, 0) == doctest::Approx(0.25));
  CHECK(st(0, 1) == doctest::Approx(0.75));

  std::mt19937_64 rng(14);
  MatX<double> logits = MatX<double>::NullaryExpr(
      3, 5, [&]() { return std::uniform_real_distribution<double>(-3, 3)(rng); });
  MatX<double> shifted = logits;
  shifted.array() += 17.5;
  CHECK((eam::softmax_rows(logits) - eam::softmax_rows(shifted)).array().abs().maxCoeff() <
        1e-12);
  for (Index r = 0; r < 3; ++r)
    CHECK(eam::softmax_rows(logits).row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("finite inputs stay finite through a composed pipeline") {
  std::mt19937_64 rng(15);
  Tensor4<double> x = oracle::random_tensor<double>({2, 4, 8, 8}, rng, -100, 100);
  auto p = make_conv(4, 4, 3, 1, 1, 1, rng);
  Tensor4<double> y = eam::sigmoid(eam::conv2d(eam::relu(x), p));
  CHECK(y.all_finite());
  CHECK(eam::spatial_pool(y).all_finite());
  CHECK(eam::channel_pool_avg(y).all_finite());
  CHECK(eam::max_pool2(y).all_finite());
}
