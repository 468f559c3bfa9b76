#include "aresgaze/aaconv.hpp"

#include <cmath>

namespace ag {

void AAConvConfig::validate() const {
  if (f_in < 1 || f_out < 1) throw ConfigError("aaconv channels must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("aaconv kernel must be odd");
  if (stride < 1) throw ConfigError("aaconv stride must be positive");
  if (!(k_ratio > 0.0 && k_ratio < 1.0) || !(v_ratio > 0.0 && v_ratio < 1.0))
    throw ConfigError("aaconv ratios must lie in (0,1)");
  if (nh < 1) throw ConfigError("aaconv needs at least one attention head");
  const int dv_ = dv(), dk_ = dk();
  if (dv_ < nh || dv_ % nh != 0)
    throw ConfigError("attention channels dv=" + std::to_string(dv_) +
                      " must be >= nh and divisible by nh=" + std::to_string(nh));
  if (dk_ < nh || dk_ % nh != 0)
    throw ConfigError("key depth dk=" + std::to_string(dk_) +
                      " must be >= nh and divisible by nh=" + std::to_string(nh));
  if (conv_channels() < 1)
    throw ConfigError("aaconv needs at least one regular conv channel (f_out=" +
                      std::to_string(f_out) + ", dv=" + std::to_string(dv_) + ")");
}

AAConvLayer::AAConvLayer(AAConvConfig config, int h, int w, std::mt19937_64& rng)
    : cfg(config), in_h(h), in_w(w) {
  cfg.validate();
  if (h < 1 || w < 1) throw ConfigError("aaconv operating extent must be positive");
  const int dv_ = cfg.dv(), dk_ = cfg.dk(), k = cfg.kernel;
  const int dkh = cfg.head_key_depth();
  conv_w = Tensor::randn(Shape{cfg.conv_channels(), cfg.f_in, k, k}, rng,
                         std::sqrt(2.0 / (cfg.f_in * k * k)));
  conv_b = Tensor::zeros(Shape{cfg.conv_channels()});
  qkv_w = Tensor::randn(Shape{2 * dk_ + dv_, cfg.f_in, 1, 1}, rng, std::sqrt(2.0 / cfg.f_in));
  mix_w = Tensor::randn(Shape{dv_, dv_, 1, 1}, rng, std::sqrt(2.0 / dv_));
  rel_w = Tensor::randn(Shape{2 * w - 1, dkh}, rng, 1.0 / std::sqrt(static_cast<double>(dkh)));
  rel_h = Tensor::randn(Shape{2 * h - 1, dkh}, rng, 1.0 / std::sqrt(static_cast<double>(dkh)));
}

std::tuple<TensorPtr, TensorPtr, TensorPtr> qkv_projection(Tape* tape, const TensorPtr& x,
                                                           const AAConvLayer& layer) {
  const AAConvConfig& c = layer.cfg;
  c.validate();
  const int N = x->shape[0], H = x->shape[2], W = x->shape[3];
  const int dk = c.dk(), dv = c.dv(), nh = c.nh;
  const int dkh = c.head_key_depth(), dvh = c.head_value_depth();
  const int HW = H * W;

  auto qkv = conv2d(tape, x, layer.qkv_w, nullptr, 1, 0);  // [N, 2dk+dv, H, W]
  auto q = slice_channels(tape, qkv, 0, dk);
  auto k = slice_channels(tape, qkv, dk, 2 * dk);
  auto v = slice_channels(tape, qkv, 2 * dk, 2 * dk + dv);
  q = scale(tape, q, 1.0 / std::sqrt(static_cast<double>(dkh)));

  // [N, nh*d, H, W] -> per-head batched matrices.
  auto qh = reshape(tape, permute(tape, reshape(tape, q, Shape{N, nh, dkh, HW}), {0, 1, 3, 2}),
                    Shape{N * nh, HW, dkh});
  auto kh = reshape(tape, k, Shape{N * nh, dkh, HW});
  auto vh = reshape(tape, permute(tape, reshape(tape, v, Shape{N, nh, dvh, HW}), {0, 1, 3, 2}),
                    Shape{N * nh, HW, dvh});
  return {qh, kh, vh};
}

TensorPtr relative_logits(Tape* tape, const TensorPtr& q, const TensorPtr& rel_w,
                          const TensorPtr& rel_h, int H, int W) {
  const int B = q->shape[0], HW = q->shape[1], D = q->shape[2];
  if (HW != H * W) throw ShapeError("relative_logits query grid mismatch");
  if (rel_w->shape[0] != 2 * W - 1 || rel_w->shape[1] != D)
    throw ConfigError("rel_w table must be [2W-1, dk/nh], got " + rel_w->shape.str());
  if (rel_h->shape[0] != 2 * H - 1 || rel_h->shape[1] != D)
    throw ConfigError("rel_h table must be [2H-1, dk/nh], got " + rel_h->shape.str());

  auto out = Tensor::zeros(Shape{B, HW, HW});
  // Per query: dot against every offset embedding, then broadcast by offset.
  for (int b = 0; b < B; ++b)
    for (int qi = 0; qi < HW; ++qi) {
      const int i = qi / W, j = qi % W;
      const double* qv = q->v.data() + (static_cast<size_t>(b) * HW + qi) * D;
      std::vector<double> qw(static_cast<size_t>(2 * W - 1)), qh(static_cast<size_t>(2 * H - 1));
      for (int dx = 0; dx < 2 * W - 1; ++dx) {
        const double* rw = rel_w->v.data() + static_cast<size_t>(dx) * D;
        double acc = 0.0;
        for (int d = 0; d < D; ++d) acc += qv[d] * rw[d];
        qw[dx] = acc;
      }
      for (int dy = 0; dy < 2 * H - 1; ++dy) {
        const double* rh = rel_h->v.data() + static_cast<size_t>(dy) * D;
        double acc = 0.0;
        for (int d = 0; d < D; ++d) acc += qv[d] * rh[d];
        qh[dy] = acc;
      }
      double* orow = out->v.data() + (static_cast<size_t>(b) * HW + qi) * HW;
      for (int l = 0; l < H; ++l) {
        const double hterm = qh[l - i + H - 1];
        for (int m = 0; m < W; ++m) orow[static_cast<size_t>(l) * W + m] = qw[m - j + W - 1] + hterm;
      }
    }

  if (tape) {
    tape->touch(q);
    tape->touch(rel_w);
    tape->touch(rel_h);
    tape->touch(out);
    TensorPtr qp = q, rwp = rel_w, rhp = rel_h, op = out;
    tape->record([=]() {
      for (int b = 0; b < B; ++b)
        for (int qi = 0; qi < HW; ++qi) {
          const int i = qi / W, j = qi % W;
          const double* go = op->g.data() + (static_cast<size_t>(b) * HW + qi) * HW;
          const double* qv = qp->v.data() + (static_cast<size_t>(b) * HW + qi) * D;
          double* dq = qp->g.data() + (static_cast<size_t>(b) * HW + qi) * D;
          // Collapse the grad over keys sharing a width/height offset.
          std::vector<double> gw(static_cast<size_t>(2 * W - 1), 0.0);
          std::vector<double> gh(static_cast<size_t>(2 * H - 1), 0.0);
          for (int l = 0; l < H; ++l)
            for (int m = 0; m < W; ++m) {
              const double g = go[static_cast<size_t>(l) * W + m];
              gw[m - j + W - 1] += g;
              gh[l - i + H - 1] += g;
            }
          for (int dx = 0; dx < 2 * W - 1; ++dx) {
            if (gw[dx] == 0.0) continue;
            const double* rw = rwp->v.data() + static_cast<size_t>(dx) * D;
            double* drw = rwp->g.data() + static_cast<size_t>(dx) * D;
            for (int d = 0; d < D; ++d) {
              dq[d] += gw[dx] * rw[d];
              drw[d] += gw[dx] * qv[d];
            }
          }
          for (int dy = 0; dy < 2 * H - 1; ++dy) {
            if (gh[dy] == 0.0) continue;
            const double* rh = rhp->v.data() + static_cast<size_t>(dy) * D;
            double* drh = rhp->g.data() + static_cast<size_t>(dy) * D;
            for (int d = 0; d < D; ++d) {
              dq[d] += gh[dy] * rh[d];
              drh[d] += gh[dy] * qv[d];
            }
          }
        }
    });
  }
  return out;
}

std::pair<TensorPtr, TensorPtr> multi_head_attention(Tape* tape, const TensorPtr& q,
                                                     const TensorPtr& k, const TensorPtr& v,
                                                     const TensorPtr& rel,
                                                     const AAConvLayer& layer) {
  const AAConvConfig& c = layer.cfg;
  const int H = layer.in_h, W = layer.in_w, HW = H * W;
  const int nh = c.nh, dv = c.dv(), dvh = c.head_value_depth();
  const int N = q->shape[0] / nh;

  auto logits = bmm(tape, q, k);                  // [N*nh, HW, HW]
  logits = add(tape, logits, rel);
  auto maps = softmax(tape, logits, 2);           // rows sum to 1
  auto attended = bmm(tape, maps, v);             // [N*nh, HW, dvh]
  auto merged = reshape(
      tape, permute(tape, reshape(tape, attended, Shape{N, nh, HW, dvh}), {0, 1, 3, 2}),
      Shape{N, dv, H, W});
  auto mixed = conv2d(tape, merged, layer.mix_w, nullptr, 1, 0);
  return {mixed, maps};
}

TensorPtr aaconv_forward(Tape* tape, const TensorPtr& x, AAConvLayer& layer, bool capture_maps) {
  const AAConvConfig& c = layer.cfg;
  if (x->shape.rank() != 4 || x->shape[1] != c.f_in)
    throw ShapeError("aaconv input must be [N," + std::to_string(c.f_in) + ",H,W], got " +
                     x->shape.str());
  if (x->shape[2] != layer.in_h || x->shape[3] != layer.in_w)
    throw ShapeError("aaconv built for extent " + std::to_string(layer.in_h) + "x" +
                     std::to_string(layer.in_w) + ", got " + x->shape.str());

  auto conv_out = conv2d(tape, x, layer.conv_w, layer.conv_b, c.stride, (c.kernel - 1) / 2);

  auto [q, k, v] = qkv_projection(tape, x, layer);
  auto rel = relative_logits(tape, q, layer.rel_w, layer.rel_h, layer.in_h, layer.in_w);
  auto [attn, maps] = multi_head_attention(tape, q, k, v, rel, layer);
  if (capture_maps) layer.last_attention = maps;
  if (c.stride > 1) attn = avg_pool2d(tape, attn, c.stride, c.stride, /*ceil_mode=*/true);

  if (conv_out->shape[2] != attn->shape[2] || conv_out->shape[3] != attn->shape[3])
    throw Error("internal contract: aaconv path extents diverged (" + conv_out->shape.str() +
                " vs " + attn->shape.str() + ")");
  return concat_channels(tape, conv_out, attn);
}

}  // namespace ag
