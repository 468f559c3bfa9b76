#pragma once

#include "aresgaze/tensor.hpp"

namespace ag {

/// Per-channel batch normalization state. gamma/beta are trainable;
/// running_mean/running_var are buffers updated in train mode.
struct BatchNorm2d {
  TensorPtr gamma;
  TensorPtr beta;
  TensorPtr running_mean;
  TensorPtr running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  explicit BatchNorm2d(int channels)
      : gamma(Tensor::full(Shape{channels}, 1.0)),
        beta(Tensor::zeros(Shape{channels})),
        running_mean(Tensor::zeros(Shape{channels})),
        running_var(Tensor::full(Shape{channels}, 1.0)) {}
};

// All ops are pure with respect to their inputs except tape recording and
// batch-norm running statistics. Passing tape == nullptr runs inference
// only (no gradient bookkeeping).

/// Zero-padded cross-correlation plus bias. bias may be null.
TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride, int padding);

/// Affine map x . w^T + b for x[N,Fin], w[Fout,Fin], b[Fout].
TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

/// Elementwise max(0, x); subgradient at 0 is 0.
TensorPtr relu(Tape* tape, const TensorPtr& x);

/// Numerically stable softmax along `axis`; each slice sums to 1.
TensorPtr softmax(Tape* tape, const TensorPtr& x, int axis);

/// Batch normalization over N*H*W per channel. Train mode uses batch
/// statistics and updates the running buffers; eval mode uses the buffers.
TensorPtr batch_norm2d(Tape* tape, const TensorPtr& x, BatchNorm2d& bn, bool train);

/// Per-window maximum; ties routed to the first element in scan order.
TensorPtr max_pool2d(Tape* tape, const TensorPtr& x, int window, int stride, int padding);

/// Per-window arithmetic mean. With ceil_mode, partial edge windows are
/// averaged over their valid elements; otherwise extents must divide.
TensorPtr avg_pool2d(Tape* tape, const TensorPtr& x, int window, int stride,
                     bool ceil_mode = false);

/// Mean over all H*W positions per channel: [N,C,H,W] -> [N,C].
TensorPtr global_avg_pool(Tape* tape, const TensorPtr& x);

/// Channel concatenation of two [N,*,H,W] tensors.
TensorPtr concat_channels(Tape* tape, const TensorPtr& a, const TensorPtr& b);

/// Elementwise sum of two same-shape tensors.
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);

/// Multiplication by a constant.
TensorPtr scale(Tape* tape, const TensorPtr& x, double c);

/// Same data, new shape (element count preserved).
TensorPtr reshape(Tape* tape, const TensorPtr& x, Shape s);

/// Axis permutation; perm[i] names the source axis of output axis i.
TensorPtr permute(Tape* tape, const TensorPtr& x, const std::vector<int>& perm);

/// Batched matrix product: [B,M,K] x [B,K,N] -> [B,M,N].
TensorPtr bmm(Tape* tape, const TensorPtr& a, const TensorPtr& b);

/// Channel slice [c0, c1) of a [N,C,H,W] tensor.
TensorPtr slice_channels(Tape* tape, const TensorPtr& x, int c0, int c1);

/// Sum of all elements -> scalar.
TensorPtr sum(Tape* tape, const TensorPtr& x);

/// Output extent of a padded strided window op.
inline int conv_out_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

}  // namespace ag
