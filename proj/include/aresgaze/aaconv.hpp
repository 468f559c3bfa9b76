#pragma once

#include <tuple>

#include "aresgaze/ops.hpp"

namespace ag {

/// Hyperparameters of one attention-augmented convolution.
///
/// k_ratio fixes the fraction of output channels produced by the attention
/// path (dv); v_ratio fixes the query/key depth fraction (dk). Both default
/// to 0.25 with nh = 8 heads.
struct AAConvConfig {
  int f_in = 0;
  int f_out = 0;
  int kernel = 3;
  int stride = 1;
  double k_ratio = 0.25;
  double v_ratio = 0.25;
  int nh = 8;

  int dv() const { return static_cast<int>(std::lround(k_ratio * f_out)); }
  int dk() const { return static_cast<int>(std::lround(v_ratio * f_out)); }
  int conv_channels() const { return f_out - dv(); }
  int head_key_depth() const { return dk() / nh; }
  int head_value_depth() const { return dv() / nh; }

  void validate() const;
};

/// One attention-augmented convolution bound to a fixed operating spatial
/// extent (rel tables are sized for it; other extents are rejected).
struct AAConvLayer {
  AAConvConfig cfg;
  int in_h = 0;  // spatial extent at attention time
  int in_w = 0;

  TensorPtr conv_w;  // [f_out - dv, f_in, k, k]
  TensorPtr conv_b;  // [f_out - dv]
  TensorPtr qkv_w;   // [2*dk + dv, f_in, 1, 1], no bias
  TensorPtr mix_w;   // [dv, dv, 1, 1], no bias
  TensorPtr rel_w;   // [2*in_w - 1, dk/nh], shared across heads
  TensorPtr rel_h;   // [2*in_h - 1, dk/nh]

  /// Attention weights of the most recent forward with capture_maps on:
  /// [N*nh, H*W, H*W], each row a distribution over key positions.
  TensorPtr last_attention;

  AAConvLayer(AAConvConfig config, int h, int w, std::mt19937_64& rng);

  int out_h() const { return (in_h + cfg.stride - 1) / cfg.stride; }
  int out_w() const { return (in_w + cfg.stride - 1) / cfg.stride; }
};

/// Projects the input to per-head query/key/value tensors:
/// Q [N*nh, HW, dk/nh] (scaled by (dk/nh)^-1/2), K [N*nh, dk/nh, HW],
/// V [N*nh, HW, dv/nh].
std::tuple<TensorPtr, TensorPtr, TensorPtr> qkv_projection(Tape* tape, const TensorPtr& x,
                                                           const AAConvLayer& layer);

/// Relative-position logit contribution [N*nh, HW, HW]: query (i,j) and key
/// (l,m) receive q . rel_w[m-j+W-1] + q . rel_h[l-i+H-1].
TensorPtr relative_logits(Tape* tape, const TensorPtr& q, const TensorPtr& rel_w,
                          const TensorPtr& rel_h, int H, int W);

/// Softmax attention over keys, heads concatenated and mixed by the 1x1
/// mixing weight. Returns (attended [N, dv, H, W], maps [N*nh, HW, HW]).
std::pair<TensorPtr, TensorPtr> multi_head_attention(Tape* tape, const TensorPtr& q,
                                                     const TensorPtr& k, const TensorPtr& v,
                                                     const TensorPtr& rel, const AAConvLayer& layer);

/// Full layer: regular convolution (f_out - dv channels) concatenated with
/// the attention path (dv channels). Under stride the attention path is
/// computed at input resolution then average-pooled to match.
TensorPtr aaconv_forward(Tape* tape, const TensorPtr& x, AAConvLayer& layer,
                         bool capture_maps = false);

}  // namespace ag
