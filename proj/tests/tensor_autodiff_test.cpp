#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aresgaze/ops.hpp"
#include "testutil.hpp"

using namespace ag;

TEST_CASE("shape rejects non-positive extents") {
  CHECK_THROWS_AS(Shape({3, 0, 2}), ShapeError);
  CHECK_THROWS_AS(Shape({-1}), ShapeError);
  CHECK(Shape({2, 3, 4}).numel() == 24);
  CHECK(Shape({5}).rank() == 1);
}

TEST_CASE("tensor factories") {
  auto z = Tensor::zeros(Shape{2, 3});
  CHECK(z->numel() == 6);
  for (double x : z->v) CHECK(x == 0.0);
  auto f = Tensor::full(Shape{4}, 2.5);
  for (double x : f->v) CHECK(x == 2.5);
  CHECK_THROWS_AS(Tensor::from(Shape{3}, {1.0, 2.0}), ShapeError);
  auto s = Tensor::scalar(7.0);
  CHECK(s->numel() == 1);
  CHECK(s->v[0] == 7.0);
}

TEST_CASE("backward requires a scalar") {
  Tape tape;
  auto x = Tensor::from(Shape{2}, {1.0, 2.0});
  auto y = scale(&tape, x, 3.0);
  CHECK_THROWS_AS(tape.backward(y), ValueError);
}

TEST_CASE("fan-out gradients accumulate additively") {
  // loss = sum(x + x) => dloss/dx = 2 everywhere
  Tape tape;
  auto x = Tensor::from(Shape{3}, {1.0, -2.0, 0.5});
  auto loss = sum(&tape, add(&tape, x, x));
  tape.backward(loss);
  for (double g : x->g) CHECK(g == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("untouched branches end with zero gradient") {
  Tape tape;
  auto x = Tensor::from(Shape{2}, {1.0, 2.0});
  auto y = Tensor::from(Shape{2}, {3.0, 4.0});
  auto unused = scale(&tape, y, 2.0);  // on tape but not feeding the loss
  auto loss = sum(&tape, x);
  tape.backward(loss);
  CHECK(unused->g[0] == 0.0);
  for (double g : y->g) CHECK(g == 0.0);
  for (double g : x->g) CHECK(g == 1.0);
}

TEST_CASE("backward replays in reverse order through a chain") {
  // loss = sum(3 * (x + x)) => grad = 6
  Tape tape;
  auto x = Tensor::from(Shape{2}, {0.5, -1.0});
  auto loss = sum(&tape, scale(&tape, add(&tape, x, x), 3.0));
  tape.backward(loss);
  for (double g : x->g) CHECK(g == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("repeated backward resets touched gradients") {
  Tape tape;
  auto x = Tensor::from(Shape{2}, {1.0, 1.0});
  auto loss = sum(&tape, x);
  tape.backward(loss);
  tape.backward(loss);
  for (double g : x->g) CHECK(g == 1.0);  // not doubled
}

TEST_CASE("all_finite flags inf and nan") {
  auto t = Tensor::from(Shape{2}, {1.0, 2.0});
  CHECK(t->all_finite());
  t->v[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t->all_finite());
  t->v[1] = std::nan("");
  CHECK_FALSE(t->all_finite());
}
