#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "aresgaze/errors.hpp"

namespace ag {

/// Ordered list of positive extents. Image tensors follow the
/// (batch, channels, height, width) layout convention.
struct Shape {
  std::vector<int> dims;

  Shape() = default;
  Shape(std::initializer_list<int> d) : dims(d) { validate(); }
  explicit Shape(std::vector<int> d) : dims(std::move(d)) { validate(); }

  int numel() const {
    int n = 1;
    for (int d : dims) n *= d;
    return n;
  }
  int rank() const { return static_cast<int>(dims.size()); }
  int operator[](int i) const { return dims[static_cast<size_t>(i)]; }
  bool operator==(const Shape& o) const { return dims == o.dims; }
  bool operator!=(const Shape& o) const { return dims != o.dims; }

  std::string str() const;

private:
  void validate() const {
    for (int d : dims)
      if (d < 1) throw ShapeError("extent must be >= 1, got " + std::to_string(d));
  }
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense double-precision array with an optional gradient buffer of the
/// same length. Tensors are the nodes of the reverse-mode tape.
class Tensor {
public:
  Shape shape;
  std::vector<double> v;  // values, row-major
  std::vector<double> g;  // gradient; empty until ensure_grad()

  explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape.numel()), 0.0) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
    if (static_cast<int>(v.size()) != shape.numel())
      throw ShapeError("value count " + std::to_string(v.size()) + " != shape product " +
                       std::to_string(shape.numel()));
  }

  int numel() const { return shape.numel(); }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
  void zero_grad() { g.assign(v.size(), 0.0); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  static TensorPtr zeros(Shape s) { return std::make_shared<Tensor>(std::move(s)); }
  static TensorPtr full(Shape s, double c) {
    auto t = std::make_shared<Tensor>(std::move(s));
    std::fill(t->v.begin(), t->v.end(), c);
    return t;
  }
  static TensorPtr from(Shape s, std::vector<double> values) {
    return std::make_shared<Tensor>(std::move(s), std::move(values));
  }
  static TensorPtr scalar(double c) { return full(Shape{1}, c); }
  static TensorPtr randn(const Shape& s, std::mt19937_64& rng, double stddev) {
    auto t = std::make_shared<Tensor>(s);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : t->v) x = dist(rng);
    return t;
  }
  static TensorPtr uniform(const Shape& s, std::mt19937_64& rng, double lo, double hi) {
    auto t = std::make_shared<Tensor>(s);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& x : t->v) x = dist(rng);
    return t;
  }
};

/// Ordered record of executed operations. Operations append themselves in
/// execution order; backward() replays the gradient rules in exact reverse
/// order, accumulating additively at fan-out.
class Tape {
public:
  void touch(const TensorPtr& t) { touched_.push_back(t); }
  void record(std::function<void()> backward_rule) { rules_.push_back(std::move(backward_rule)); }

  /// Propagates d(loss)/d(t) into the grad buffer of every tensor touched
  /// by ops on this tape. Grads of touched tensors are reset first, so a
  /// tensor that did not contribute to the loss ends with zero grad.
  void backward(const TensorPtr& loss) {
    if (loss->numel() != 1) throw ValueError("backward requires a scalar loss, got shape " + loss->shape.str());
    for (auto& t : touched_) {
      t->ensure_grad();
      t->zero_grad();
    }
    loss->ensure_grad();
    loss->g[0] = 1.0;
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  }

  size_t size() const { return rules_.size(); }

private:
  std::vector<std::function<void()>> rules_;
  std::vector<TensorPtr> touched_;
};

}  // namespace ag
