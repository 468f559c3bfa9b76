#pragma once

// Independent reference implementations used by several suites.

#include <algorithm>
#include <cmath>
#include <vector>

#include "aresgaze/aaconv.hpp"

namespace tu {

/// Fully naive recomputation of aaconv_forward from the layer weights.
inline ag::TensorPtr aaconv_brute_force(const ag::TensorPtr& x, const ag::AAConvLayer& layer) {
  using ag::Shape;
  using ag::Tensor;
  const ag::AAConvConfig& c = layer.cfg;
  const int N = x->shape[0], C = c.f_in, H = layer.in_h, W = layer.in_w, HW = H * W;
  const int dk = c.dk(), dv = c.dv(), nh = c.nh;
  const int dkh = c.head_key_depth(), dvh = c.head_value_depth();
  const int stride = c.stride, K = c.kernel, pad = (K - 1) / 2;
  const int Ho = (H + stride - 1) / stride, Wo = (W + stride - 1) / stride;
  const int fc = c.conv_channels();

  auto out = Tensor::zeros(Shape{N, c.f_out, Ho, Wo});
  for (int n = 0; n < N; ++n) {
    // regular convolution path
    for (int f = 0; f < fc; ++f)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = layer.conv_b->v[static_cast<size_t>(f)];
          for (int ch = 0; ch < C; ++ch)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x->v[static_cast<size_t>(((n * C + ch) * H + iy) * W + ix)] *
                       layer.conv_w->v[static_cast<size_t>(((f * C + ch) * K + ky) * K + kx)];
              }
          out->v[static_cast<size_t>(((n * c.f_out + f) * Ho + oy) * Wo + ox)] = acc;
        }

    // 1x1 qkv projection at input resolution
    std::vector<double> qkv(static_cast<size_t>((2 * dk + dv) * HW), 0.0);
    for (int o = 0; o < 2 * dk + dv; ++o)
      for (int p = 0; p < HW; ++p) {
        double acc = 0.0;
        for (int ch = 0; ch < C; ++ch)
          acc += layer.qkv_w->v[static_cast<size_t>(o * C + ch)] *
                 x->v[static_cast<size_t>((n * C + ch) * HW + p)];
        qkv[static_cast<size_t>(o * HW + p)] = acc;
      }
    const double qscale = 1.0 / std::sqrt(static_cast<double>(dkh));

    // attention per head at input resolution
    std::vector<double> merged(static_cast<size_t>(dv * HW), 0.0);
    for (int h = 0; h < nh; ++h)
      for (int qi = 0; qi < HW; ++qi) {
        const int i = qi / W, j = qi % W;
        std::vector<double> logits(static_cast<size_t>(HW));
        for (int ki = 0; ki < HW; ++ki) {
          const int l = ki / W, m = ki % W;
          double dot = 0.0, relw = 0.0, relh = 0.0;
          for (int d = 0; d < dkh; ++d) {
            const double qd = qscale * qkv[static_cast<size_t>((h * dkh + d) * HW + qi)];
            dot += qd * qkv[static_cast<size_t>((dk + h * dkh + d) * HW + ki)];
            relw += qd * layer.rel_w->v[static_cast<size_t>((m - j + W - 1) * dkh + d)];
            relh += qd * layer.rel_h->v[static_cast<size_t>((l - i + H - 1) * dkh + d)];
          }
          logits[static_cast<size_t>(ki)] = dot + relw + relh;
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& lg : logits) {
          lg = std::exp(lg - mx);
          z += lg;
        }
        for (int d = 0; d < dvh; ++d) {
          double acc = 0.0;
          for (int ki = 0; ki < HW; ++ki)
            acc += logits[static_cast<size_t>(ki)] / z *
                   qkv[static_cast<size_t>((2 * dk + h * dvh + d) * HW + ki)];
          merged[static_cast<size_t>((h * dvh + d) * HW + qi)] = acc;
        }
      }

    // 1x1 mixing, then ceil-mode average pool under stride
    for (int f = 0; f < dv; ++f) {
      std::vector<double> mixed(static_cast<size_t>(HW), 0.0);
      for (int p = 0; p < HW; ++p) {
        double acc = 0.0;
        for (int ch = 0; ch < dv; ++ch)
          acc += layer.mix_w->v[static_cast<size_t>(f * dv + ch)] *
                 merged[static_cast<size_t>(ch * HW + p)];
        mixed[static_cast<size_t>(p)] = acc;
      }
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          int cnt = 0;
          for (int dy = 0; dy < stride; ++dy)
            for (int dx = 0; dx < stride; ++dx) {
              const int iy = oy * stride + dy, ix = ox * stride + dx;
              if (iy >= H || ix >= W) continue;
              acc += mixed[static_cast<size_t>(iy * W + ix)];
              ++cnt;
            }
          out->v[static_cast<size_t>(((n * c.f_out + fc + f) * Ho + oy) * Wo + ox)] = acc / cnt;
        }
    }
  }
  return out;
}

}  // namespace tu
