#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aresgaze/ops.hpp"
#include "testutil.hpp"

using namespace ag;

namespace {

// Naive direct convolution used as an independent oracle.
TensorPtr conv2d_naive(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                       int padding) {
  const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  const int F = w->shape[0], K = w->shape[2];
  const int Ho = conv_out_extent(H, K, stride, padding);
  const int Wo = conv_out_extent(W, K, stride, padding);
  auto out = Tensor::zeros(Shape{N, F, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = b ? b->v[static_cast<size_t>(f)] : 0.0;
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = oy * stride - padding + ky;
                const int ix = ox * stride - padding + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x->v[static_cast<size_t>(((n * C + c) * H + iy) * W + ix)] *
                       w->v[static_cast<size_t>(((f * C + c) * K + ky) * K + kx)];
              }
          out->v[static_cast<size_t>(((n * F + f) * Ho + oy) * Wo + ox)] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches a naive direct convolution") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const int N = tu::rand_int(rng, 1, 2), C = tu::rand_int(rng, 1, 3);
    const int H = tu::rand_int(rng, 3, 7), W = tu::rand_int(rng, 3, 7);
    const int F = tu::rand_int(rng, 1, 4), K = tu::rand_int(rng, 1, 3);
    const int stride = tu::rand_int(rng, 1, 2), pad = tu::rand_int(rng, 0, 2);
    if (conv_out_extent(H, K, stride, pad) < 1 || conv_out_extent(W, K, stride, pad) < 1) continue;
    auto x = Tensor::randn(Shape{N, C, H, W}, rng, 1.0);
    auto w = Tensor::randn(Shape{F, C, K, K}, rng, 1.0);
    auto b = Tensor::randn(Shape{F}, rng, 1.0);
    auto got = conv2d(nullptr, x, w, b, stride, pad);
    auto want = conv2d_naive(x, w, b, stride, pad);
    REQUIRE(got->shape == want->shape);
    for (size_t i = 0; i < got->v.size(); ++i)
      CHECK(got->v[i] == doctest::Approx(want->v[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d output shape follows the extent formula over random configs") {
  std::mt19937_64 rng(12);
  int done = 0;
  while (done < 100) {
    const int H = tu::rand_int(rng, 1, 16), W = tu::rand_int(rng, 1, 16);
    const int K = tu::rand_int(rng, 1, 5), stride = tu::rand_int(rng, 1, 3);
    const int pad = tu::rand_int(rng, 0, 3);
    const int Ho = conv_out_extent(H, K, stride, pad), Wo = conv_out_extent(W, K, stride, pad);
    if (Ho < 1 || Wo < 1 || K > H + 2 * pad || K > W + 2 * pad) continue;
    auto x = Tensor::randn(Shape{1, 1, H, W}, rng, 1.0);
    auto w = Tensor::randn(Shape{2, 1, K, K}, rng, 1.0);
    auto out = conv2d(nullptr, x, w, nullptr, stride, pad);
    CHECK(out->shape == Shape{1, 2, Ho, Wo});
    ++done;
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = Tensor::randn(Shape{2, 2, 5, 4}, rng, 1.0);
    auto w = Tensor::randn(Shape{3, 2, 3, 3}, rng, 0.5);
    auto b = Tensor::randn(Shape{3}, rng, 0.5);
    auto loss_fn = [&]() { return sum(nullptr, conv2d(nullptr, x, w, b, 2, 1))->v[0]; };
    Tape tape;
    tape.backward(sum(&tape, conv2d(&tape, x, w, b, 2, 1)));
    CHECK(tu::fd_check_tensor(x, loss_fn, 1e-3, 6).max_rel_err < 1e-4);
    CHECK(tu::fd_check_tensor(w, loss_fn, 1e-3, 6).max_rel_err < 1e-4);
    CHECK(tu::fd_check_tensor(b, loss_fn, 1e-3, 3).max_rel_err < 1e-4);
  }
}

TEST_CASE("linear forward and gradients") {
  std::mt19937_64 rng(3);
  auto x = Tensor::randn(Shape{3, 4}, rng, 1.0);
  auto w = Tensor::randn(Shape{2, 4}, rng, 1.0);
  auto b = Tensor::randn(Shape{2}, rng, 1.0);
  auto y = linear(nullptr, x, w, b);
  REQUIRE(y->shape == Shape{3, 2});
  for (int n = 0; n < 3; ++n)
    for (int f = 0; f < 2; ++f) {
      double acc = b->v[static_cast<size_t>(f)];
      for (int k = 0; k < 4; ++k)
        acc += x->v[static_cast<size_t>(n * 4 + k)] * w->v[static_cast<size_t>(f * 4 + k)];
      CHECK(y->v[static_cast<size_t>(n * 2 + f)] == doctest::Approx(acc).epsilon(1e-12));
    }
  auto loss_fn = [&]() { return sum(nullptr, relu(nullptr, linear(nullptr, x, w, b)))->v[0]; };
  Tape tape;
  tape.backward(sum(&tape, relu(&tape, linear(&tape, x, w, b))));
  CHECK(tu::fd_check_tensor(x, loss_fn, 1e-3, 6).max_rel_err < 1e-4);
  CHECK(tu::fd_check_tensor(w, loss_fn, 1e-3, 6).max_rel_err < 1e-4);
  CHECK(tu::fd_check_tensor(b, loss_fn, 1e-3, 2).max_rel_err < 1e-4);
}

TEST_CASE("relu clamps negatives and uses zero subgradient at zero") {
  Tape tape;
  auto x = Tensor::from(Shape{4}, {-1.0, 0.0, 2.0, -0.5});
  auto y = relu(&tape, x);
  CHECK(y->v == std::vector<double>{0.0, 0.0, 2.0, 0.0});
  tape.backward(sum(&tape, y));
  CHECK(x->g == std::vector<double>{0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  std::mt19937_64 rng(4);
  auto x = Tensor::randn(Shape{3, 5, 7}, rng, 3.0);
  for (int axis = 0; axis < 3; ++axis) {
    auto y = softmax(nullptr, x, axis);
    // sum over the softmax axis must be 1 for every slice
    const int d0 = x->shape[0], d1 = x->shape[1], d2 = x->shape[2];
    for (int i = 0; i < d0; ++i)
      for (int j = 0; j < d1; ++j)
        for (int k = 0; k < d2; ++k) {
          if ((axis == 0 && i) || (axis == 1 && j) || (axis == 2 && k)) continue;
          double acc = 0.0;
          const int n = x->shape[axis];
          for (int t = 0; t < n; ++t) {
            const int ii = axis == 0 ? t : i, jj = axis == 1 ? t : j, kk = axis == 2 ? t : k;
            acc += y->v[static_cast<size_t>((ii * d1 + jj) * d2 + kk)];
          }
          CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
        }
  }
  // large magnitudes must not overflow
  auto big = Tensor::from(Shape{1, 3}, {1000.0, 1001.0, 999.0});
  auto sy = softmax(nullptr, big, 1);
  CHECK(std::isfinite(sy->v[0]));
  CHECK(sy->v[0] + sy->v[1] + sy->v[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = Tensor::randn(Shape{2, 4, 3}, rng, 1.0);
    auto w = Tensor::randn(Shape{2, 4, 3}, rng, 1.0);  // weights make the loss non-symmetric
    // loss = sum(softmax(x) .* w); the dot products keep the loss asymmetric
    auto weighted = [&](Tape* t) {
      auto s = softmax(t, x, 2);
      return sum(t, bmm(t, reshape(t, s, Shape{8, 1, 3}), reshape(t, w, Shape{8, 3, 1})));
    };
    auto loss_fn = [&]() { return weighted(nullptr)->v[0]; };
    Tape tape;
    tape.backward(weighted(&tape));
    CHECK(tu::fd_check_tensor(x, loss_fn, 1e-3, 8).max_rel_err < 1e-4);
  }
}

TEST_CASE("batch norm train mode normalizes and tracks running statistics") {
  std::mt19937_64 rng(5);
  auto x = Tensor::randn(Shape{4, 3, 5, 5}, rng, 2.0);
  BatchNorm2d bn(3);
  auto y = batch_norm2d(nullptr, x, bn, /*train=*/true);
  const int m = 4 * 5 * 5;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0, ymean = 0.0, yvar = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 25; ++p) {
        mean += x->v[static_cast<size_t>((n * 3 + c) * 25 + p)];
        ymean += y->v[static_cast<size_t>((n * 3 + c) * 25 + p)];
      }
    mean /= m;
    ymean /= m;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 25; ++p) {
        var += std::pow(x->v[static_cast<size_t>((n * 3 + c) * 25 + p)] - mean, 2);
        yvar += std::pow(y->v[static_cast<size_t>((n * 3 + c) * 25 + p)] - ymean, 2);
      }
    var /= m;  // biased, as used for normalization
    yvar /= m;
    CHECK(ymean == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(yvar == doctest::Approx(1.0).epsilon(1e-3));
    // running stats: (1-momentum)*old + momentum*batch, unbiased variance
    CHECK(bn.running_mean->v[static_cast<size_t>(c)] ==
          doctest::Approx(0.1 * mean).epsilon(1e-10));
    CHECK(bn.running_var->v[static_cast<size_t>(c)] ==
          doctest::Approx(0.9 + 0.1 * var * m / (m - 1)).epsilon(1e-10));
  }
}

TEST_CASE("batch norm eval mode uses the running buffers") {
  auto x = Tensor::from(Shape{1, 1, 1, 2}, {3.0, 5.0});
  BatchNorm2d bn(1);
  bn.running_mean->v[0] = 1.0;
  bn.running_var->v[0] = 4.0;
  bn.gamma->v[0] = 2.0;
  bn.beta->v[0] = -1.0;
  auto y = batch_norm2d(nullptr, x, bn, /*train=*/false);
  CHECK(y->v[0] == doctest::Approx(2.0 * (3.0 - 1.0) / std::sqrt(4.0 + 1e-5) - 1.0).epsilon(1e-9));
  CHECK(y->v[1] == doctest::Approx(2.0 * (5.0 - 1.0) / std::sqrt(4.0 + 1e-5) - 1.0).epsilon(1e-9));
}

TEST_CASE("batch norm rejects single-element statistics in train mode") {
  auto x = Tensor::from(Shape{1, 2, 1, 1}, {1.0, 2.0});
  BatchNorm2d bn(2);
  CHECK_THROWS_AS(batch_norm2d(nullptr, x, bn, true), ValueError);
}

TEST_CASE("batch norm gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = Tensor::randn(Shape{2, 2, 3, 3}, rng, 1.5);
    BatchNorm2d bn(2);
    bn.gamma->v = {1.3, 0.7};
    bn.beta->v = {0.1, -0.2};
    auto w = Tensor::randn(Shape{2, 2, 3, 3}, rng, 1.0);
    auto run = [&](Tape* t) {
      auto y = batch_norm2d(t, x, bn, true);
      return sum(t, bmm(t, reshape(t, y, Shape{1, 1, 36}), reshape(t, w, Shape{1, 36, 1})));
    };
    auto loss_fn = [&]() { return run(nullptr)->v[0]; };
    Tape tape;
    tape.backward(run(&tape));
    CHECK(tu::fd_check_tensor(x, loss_fn, 1e-3, 8).max_rel_err < 1e-4);
    CHECK(tu::fd_check_tensor(bn.gamma, loss_fn, 1e-3, 2).max_rel_err < 1e-4);
    CHECK(tu::fd_check_tensor(bn.beta, loss_fn, 1e-3, 2).max_rel_err < 1e-4);
  }
}

TEST_CASE("max pool forward, tie rule and gradients") {
  auto x = Tensor::from(Shape{1, 1, 2, 2}, {5.0, 5.0, 1.0, 2.0});
  Tape tape;
  auto y = max_pool2d(&tape, x, 2, 2, 0);
  REQUIRE(y->shape == Shape{1, 1, 1, 1});
  CHECK(y->v[0] == 5.0);
  tape.backward(sum(&tape, y));
  CHECK(x->g == std::vector<double>{1.0, 0.0, 0.0, 0.0});  // first maximal element wins

  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto z = Tensor::randn(Shape{2, 2, 6, 6}, rng, 1.0);
    auto loss_fn = [&]() { return sum(nullptr, max_pool2d(nullptr, z, 3, 2, 1))->v[0]; };
    Tape t2;
    t2.backward(sum(&t2, max_pool2d(&t2, z, 3, 2, 1)));
    CHECK(tu::fd_check_tensor(z, loss_fn, 1e-4, 8).max_rel_err < 1e-4);
  }
}

TEST_CASE("avg pool strict mode requires divisibility, ceil mode pads") {
  auto x = Tensor::from(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK_THROWS_AS(avg_pool2d(nullptr, x, 2, 2, false), ShapeError);
  auto y = avg_pool2d(nullptr, x, 2, 2, true);
  REQUIRE(y->shape == Shape{1, 1, 2, 2});
  CHECK(y->v[0] == doctest::Approx((1 + 2 + 4 + 5) / 4.0));
  CHECK(y->v[1] == doctest::Approx((3 + 6) / 2.0));  // partial window, valid count only
  CHECK(y->v[2] == doctest::Approx((7 + 8) / 2.0));
  CHECK(y->v[3] == doctest::Approx(9.0));

  std::mt19937_64 rng(6);
  auto z = Tensor::randn(Shape{1, 2, 5, 5}, rng, 1.0);
  auto loss_fn = [&]() { return sum(nullptr, avg_pool2d(nullptr, z, 2, 2, true))->v[0]; };
  Tape tape;
  tape.backward(sum(&tape, avg_pool2d(&tape, z, 2, 2, true)));
  CHECK(tu::fd_check_tensor(z, loss_fn, 1e-3, 8).max_rel_err < 1e-4);
}

TEST_CASE("global average pool") {
  auto x = Tensor::from(Shape{1, 2, 1, 2}, {1.0, 3.0, 10.0, 20.0});
  Tape tape;
  auto y = global_avg_pool(&tape, x);
  REQUIRE(y->shape == Shape{1, 2});
  CHECK(y->v[0] == 2.0);
  CHECK(y->v[1] == 15.0);
  tape.backward(sum(&tape, y));
  for (double g : x->g) CHECK(g == doctest::Approx(0.5));
}

TEST_CASE("concat and slice are inverse on channels") {
  std::mt19937_64 rng(7);
  auto a = Tensor::randn(Shape{2, 3, 2, 2}, rng, 1.0);
  auto b = Tensor::randn(Shape{2, 2, 2, 2}, rng, 1.0);
  auto cat = concat_channels(nullptr, a, b);
  REQUIRE(cat->shape == Shape{2, 5, 2, 2});
  auto a2 = slice_channels(nullptr, cat, 0, 3);
  auto b2 = slice_channels(nullptr, cat, 3, 5);
  CHECK(a2->v == a->v);
  CHECK(b2->v == b->v);

  auto loss_fn = [&]() {
    return sum(nullptr, slice_channels(nullptr, concat_channels(nullptr, a, b), 1, 4))->v[0];
  };
  Tape tape;
  tape.backward(sum(&tape, slice_channels(&tape, concat_channels(&tape, a, b), 1, 4)));
  CHECK(tu::fd_check_tensor(a, loss_fn, 1e-3, 6).max_rel_err < 1e-4);
  CHECK(tu::fd_check_tensor(b, loss_fn, 1e-3, 6).max_rel_err < 1e-4);
}

TEST_CASE("reshape and permute move data correctly") {
  auto x = Tensor::from(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  auto r = reshape(nullptr, x, Shape{3, 2});
  CHECK(r->v == x->v);
  CHECK_THROWS_AS(reshape(nullptr, x, Shape{4, 2}), ShapeError);

  auto p = permute(nullptr, x, {1, 0});  // transpose
  REQUIRE(p->shape == Shape{3, 2});
  CHECK(p->v == std::vector<double>{1, 4, 2, 5, 3, 6});

  std::mt19937_64 rng(8);
  auto z = Tensor::randn(Shape{2, 3, 4}, rng, 1.0);
  auto w = Tensor::randn(Shape{4, 3, 2}, rng, 1.0);
  auto run = [&](Tape* t) {
    auto pz = permute(t, z, {2, 1, 0});
    return sum(t, bmm(t, reshape(t, pz, Shape{1, 1, 24}), reshape(t, w, Shape{1, 24, 1})));
  };
  auto loss_fn = [&]() { return run(nullptr)->v[0]; };
  Tape tape;
  tape.backward(run(&tape));
  CHECK(tu::fd_check_tensor(z, loss_fn, 1e-3, 8).max_rel_err < 1e-4);
}

TEST_CASE("bmm matches a manual loop and its gradients check out") {
  std::mt19937_64 rng(9);
  auto a = Tensor::randn(Shape{2, 3, 4}, rng, 1.0);
  auto b = Tensor::randn(Shape{2, 4, 2}, rng, 1.0);
  auto y = bmm(nullptr, a, b);
  REQUIRE(y->shape == Shape{2, 3, 2});
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += a->v[static_cast<size_t>((n * 3 + i) * 4 + k)] *
                 b->v[static_cast<size_t>((n * 4 + k) * 2 + j)];
        CHECK(y->v[static_cast<size_t>((n * 3 + i) * 2 + j)] == doctest::Approx(acc).epsilon(1e-12));
      }

  auto loss_fn = [&]() { return sum(nullptr, bmm(nullptr, a, b))->v[0]; };
  Tape tape;
  tape.backward(sum(&tape, bmm(&tape, a, b)));
  CHECK(tu::fd_check_tensor(a, loss_fn, 1e-3, 8).max_rel_err < 1e-4);
  CHECK(tu::fd_check_tensor(b, loss_fn, 1e-3, 8).max_rel_err < 1e-4);
}

TEST_CASE("add, scale and sum gradients") {
  std::mt19937_64 rng(10);
  auto a = Tensor::randn(Shape{5}, rng, 1.0);
  auto b = Tensor::randn(Shape{5}, rng, 1.0);
  auto loss_fn = [&]() { return sum(nullptr, scale(nullptr, add(nullptr, a, b), -2.5))->v[0]; };
  Tape tape;
  tape.backward(sum(&tape, scale(&tape, add(&tape, a, b), -2.5)));
  for (double g : a->g) CHECK(g == doctest::Approx(-2.5).epsilon(1e-12));
  for (double g : b->g) CHECK(g == doctest::Approx(-2.5).epsilon(1e-12));
  CHECK(tu::fd_check_tensor(a, loss_fn, 1e-3, 5).max_rel_err < 1e-4);
}

TEST_CASE("shape mismatches raise typed errors") {
  auto a = Tensor::zeros(Shape{2, 3});
  auto b = Tensor::zeros(Shape{3, 2});
  CHECK_THROWS_AS(add(nullptr, a, b), ShapeError);
  auto x = Tensor::zeros(Shape{1, 2, 4, 4});
  auto w = Tensor::zeros(Shape{3, 5, 3, 3});  // channel mismatch
  CHECK_THROWS_AS(conv2d(nullptr, x, w, nullptr, 1, 1), ShapeError);
  auto m1 = Tensor::zeros(Shape{2, 3, 4});
  auto m2 = Tensor::zeros(Shape{2, 5, 2});
  CHECK_THROWS_AS(bmm(nullptr, m1, m2), ShapeError);
}
