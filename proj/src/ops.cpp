#include "aresgaze/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ag {

std::string Shape::str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << "]";
  return os.str();
}

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Gathers conv patches as rows: cols[col][r] with col = (n,oy,ox) and
// r = (ci,ky,kx). Row-major rows keep the inner dot products contiguous.
std::shared_ptr<std::vector<double>> im2col(const Tensor& x, int kH, int kW, int stride,
                                            int pad, int Ho, int Wo) {
  const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int K = C * kH * kW;
  auto cols = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * Ho * Wo * K, 0.0);
  double* out = cols->data();
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double* row = out + (static_cast<size_t>(n) * Ho * Wo + static_cast<size_t>(oy) * Wo + ox) * K;
        const int y0 = oy * stride - pad, x0 = ox * stride - pad;
        for (int ci = 0; ci < C; ++ci) {
          const double* src = x.v.data() + (static_cast<size_t>(n) * C + ci) * H * W;
          for (int ky = 0; ky < kH; ++ky) {
            const int y = y0 + ky;
            double* dst = row + (ci * kH + ky) * kW;
            if (y < 0 || y >= H) continue;  // zero padding, row pre-zeroed
            for (int kx = 0; kx < kW; ++kx) {
              const int xx = x0 + kx;
              if (xx >= 0 && xx < W) dst[kx] = src[static_cast<size_t>(y) * W + xx];
            }
          }
        }
      }
  return cols;
}

void col2im_acc(const std::vector<double>& cols, Tensor& dx, int kH, int kW, int stride,
                int pad, int Ho, int Wo) {
  const int N = dx.shape[0], C = dx.shape[1], H = dx.shape[2], W = dx.shape[3];
  const int K = C * kH * kW;
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        const double* row =
            cols.data() + (static_cast<size_t>(n) * Ho * Wo + static_cast<size_t>(oy) * Wo + ox) * K;
        const int y0 = oy * stride - pad, x0 = ox * stride - pad;
        for (int ci = 0; ci < C; ++ci) {
          double* dst = dx.g.data() + (static_cast<size_t>(n) * C + ci) * H * W;
          for (int ky = 0; ky < kH; ++ky) {
            const int y = y0 + ky;
            if (y < 0 || y >= H) continue;
            const double* srow = row + (ci * kH + ky) * kW;
            for (int kx = 0; kx < kW; ++kx) {
              const int xx = x0 + kx;
              if (xx >= 0 && xx < W) dst[static_cast<size_t>(y) * W + xx] += srow[kx];
            }
          }
        }
      }
}

}  // namespace

TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride, int padding) {
  require(x->shape.rank() == 4, "conv2d input must be [N,Cin,H,W], got " + x->shape.str());
  require(w->shape.rank() == 4, "conv2d weight must be [Cout,Cin,kH,kW], got " + w->shape.str());
  const int N = x->shape[0], Cin = x->shape[1], H = x->shape[2], W = x->shape[3];
  const int Cout = w->shape[0], kH = w->shape[2], kW = w->shape[3];
  require(w->shape[1] == Cin, "conv2d channel mismatch: input Cin=" + std::to_string(Cin) +
                                  " vs weight Cin=" + std::to_string(w->shape[1]));
  require(stride >= 1 && padding >= 0, "conv2d needs stride >= 1 and padding >= 0");
  require(H + 2 * padding >= kH && W + 2 * padding >= kW,
          "conv2d kernel larger than padded input");
  if (b) require(b->shape.rank() == 1 && b->shape[0] == Cout, "conv2d bias must be [Cout]");

  const int Ho = conv_out_extent(H, kH, stride, padding);
  const int Wo = conv_out_extent(W, kW, stride, padding);
  const int K = Cin * kH * kW;
  auto cols = im2col(*x, kH, kW, stride, padding, Ho, Wo);

  auto out = Tensor::zeros(Shape{N, Cout, Ho, Wo});
  const int HWo = Ho * Wo;
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < HWo; ++p) {
      const double* row = cols->data() + (static_cast<size_t>(n) * HWo + p) * K;
      for (int co = 0; co < Cout; ++co) {
        const double* wr = w->v.data() + static_cast<size_t>(co) * K;
        double acc = b ? b->v[co] : 0.0;
        for (int r = 0; r < K; ++r) acc += wr[r] * row[r];
        out->v[(static_cast<size_t>(n) * Cout + co) * HWo + p] = acc;
      }
    }

  if (tape) {
    tape->touch(x);
    tape->touch(w);
    if (b) tape->touch(b);
    tape->touch(out);
    TensorPtr xp = x, wp = w, bp = b, op = out;
    tape->record([=]() {
      const int K2 = K, HWo2 = HWo;
      // dW and dcols from dout; then scatter dcols back to dx.
      std::vector<double> dcols(cols->size(), 0.0);
      for (int n = 0; n < N; ++n)
        for (int p = 0; p < HWo2; ++p) {
          const double* row = cols->data() + (static_cast<size_t>(n) * HWo2 + p) * K2;
          double* drow = dcols.data() + (static_cast<size_t>(n) * HWo2 + p) * K2;
          for (int co = 0; co < Cout; ++co) {
            const double go = op->g[(static_cast<size_t>(n) * Cout + co) * HWo2 + p];
            if (go == 0.0) continue;
            const double* wr = wp->v.data() + static_cast<size_t>(co) * K2;
            double* dwr = wp->g.data() + static_cast<size_t>(co) * K2;
            for (int r = 0; r < K2; ++r) {
              dwr[r] += go * row[r];
              drow[r] += go * wr[r];
            }
            if (bp) bp->g[co] += go;
          }
        }
      col2im_acc(dcols, *xp, kH, kW, stride, padding, Ho, Wo);
    });
  }
  return out;
}

TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  require(x->shape.rank() == 2, "linear input must be [N,Fin], got " + x->shape.str());
  require(w->shape.rank() == 2, "linear weight must be [Fout,Fin], got " + w->shape.str());
  const int N = x->shape[0], Fin = x->shape[1], Fout = w->shape[0];
  require(w->shape[1] == Fin, "linear dimension mismatch: input Fin=" + std::to_string(Fin) +
                                  " vs weight Fin=" + std::to_string(w->shape[1]));
  if (b) require(b->shape.rank() == 1 && b->shape[0] == Fout, "linear bias must be [Fout]");

  auto out = Tensor::zeros(Shape{N, Fout});
  for (int n = 0; n < N; ++n) {
    const double* xr = x->v.data() + static_cast<size_t>(n) * Fin;
    for (int f = 0; f < Fout; ++f) {
      const double* wr = w->v.data() + static_cast<size_t>(f) * Fin;
      double acc = b ? b->v[f] : 0.0;
      for (int k = 0; k < Fin; ++k) acc += xr[k] * wr[k];
      out->v[static_cast<size_t>(n) * Fout + f] = acc;
    }
  }
  if (tape) {
    tape->touch(x);
    tape->touch(w);
    if (b) tape->touch(b);
    tape->touch(out);
    TensorPtr xp = x, wp = w, bp = b, op = out;
    tape->record([=]() {
      for (int n = 0; n < N; ++n) {
        const double* xr = xp->v.data() + static_cast<size_t>(n) * Fin;
        double* dxr = xp->g.data() + static_cast<size_t>(n) * Fin;
        for (int f = 0; f < Fout; ++f) {
          const double go = op->g[static_cast<size_t>(n) * Fout + f];
          if (go == 0.0) continue;
          const double* wr = wp->v.data() + static_cast<size_t>(f) * Fin;
          double* dwr = wp->g.data() + static_cast<size_t>(f) * Fin;
          for (int k = 0; k < Fin; ++k) {
            dxr[k] += go * wr[k];
            dwr[k] += go * xr[k];
          }
          if (bp) bp->g[f] += go;
        }
      }
    });
  }
  return out;
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
  auto out = Tensor::zeros(x->shape);
  for (size_t i = 0; i < x->v.size(); ++i) out->v[i] = x->v[i] > 0.0 ? x->v[i] : 0.0;
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (size_t i = 0; i < xp->v.size(); ++i)
        if (xp->v[i] > 0.0) xp->g[i] += op->g[i];
    });
  }
  return out;
}

TensorPtr softmax(Tape* tape, const TensorPtr& x, int axis) {
  const int rank = x->shape.rank();
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "softmax axis out of range for " + x->shape.str());
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x->shape[i];
  const int L = x->shape[axis];
  for (int i = axis + 1; i < rank; ++i) inner *= x->shape[i];

  auto out = Tensor::zeros(x->shape);
  for (int o = 0; o < outer; ++o)
    for (int in = 0; in < inner; ++in) {
      const size_t base = static_cast<size_t>(o) * L * inner + in;
      double mx = -1e300;
      for (int l = 0; l < L; ++l) mx = std::max(mx, x->v[base + static_cast<size_t>(l) * inner]);
      double z = 0.0;
      for (int l = 0; l < L; ++l) {
        const double e = std::exp(x->v[base + static_cast<size_t>(l) * inner] - mx);
        out->v[base + static_cast<size_t>(l) * inner] = e;
        z += e;
      }
      for (int l = 0; l < L; ++l) out->v[base + static_cast<size_t>(l) * inner] /= z;
    }
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (int o = 0; o < outer; ++o)
        for (int in = 0; in < inner; ++in) {
          const size_t base = static_cast<size_t>(o) * L * inner + in;
          double dot = 0.0;
          for (int l = 0; l < L; ++l) {
            const size_t i = base + static_cast<size_t>(l) * inner;
            dot += op->g[i] * op->v[i];
          }
          for (int l = 0; l < L; ++l) {
            const size_t i = base + static_cast<size_t>(l) * inner;
            xp->g[i] += op->v[i] * (op->g[i] - dot);
          }
        }
    });
  }
  return out;
}

TensorPtr batch_norm2d(Tape* tape, const TensorPtr& x, BatchNorm2d& bn, bool train) {
  require(x->shape.rank() == 4, "batch_norm2d input must be [N,C,H,W], got " + x->shape.str());
  const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  require(bn.gamma->shape[0] == C, "batch_norm2d channel mismatch");
  const int m = N * H * W;
  if (train && m < 2) throw ValueError("batch_norm2d train mode needs N*H*W >= 2 (degenerate variance)");

  auto out = Tensor::zeros(x->shape);
  auto mean = std::make_shared<std::vector<double>>(C, 0.0);
  auto var = std::make_shared<std::vector<double>>(C, 0.0);
  auto xhat = std::make_shared<std::vector<double>>(x->v.size(), 0.0);

  const int HW = H * W;
  for (int c = 0; c < C; ++c) {
    double mu, vv;
    if (train) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x->v.data() + (static_cast<size_t>(n) * C + c) * HW;
        for (int i = 0; i < HW; ++i) s += p[i];
      }
      mu = s / m;
      double sq = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x->v.data() + (static_cast<size_t>(n) * C + c) * HW;
        for (int i = 0; i < HW; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      vv = sq / m;  // biased, used for normalization
      bn.running_mean->v[c] = (1.0 - bn.momentum) * bn.running_mean->v[c] + bn.momentum * mu;
      bn.running_var->v[c] =
          (1.0 - bn.momentum) * bn.running_var->v[c] + bn.momentum * sq / (m - 1);
    } else {
      mu = bn.running_mean->v[c];
      vv = bn.running_var->v[c];
    }
    (*mean)[c] = mu;
    (*var)[c] = vv;
    const double inv = 1.0 / std::sqrt(vv + bn.eps);
    const double ga = bn.gamma->v[c], be = bn.beta->v[c];
    for (int n = 0; n < N; ++n) {
      const size_t off = (static_cast<size_t>(n) * C + c) * HW;
      for (int i = 0; i < HW; ++i) {
        const double xh = (x->v[off + i] - mu) * inv;
        (*xhat)[off + i] = xh;
        out->v[off + i] = ga * xh + be;
      }
    }
  }

  if (tape) {
    tape->touch(x);
    tape->touch(bn.gamma);
    tape->touch(bn.beta);
    tape->touch(out);
    TensorPtr xp = x, gp = bn.gamma, bp = bn.beta, op = out;
    const double eps = bn.eps;
    tape->record([=]() {
      for (int c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt((*var)[c] + eps);
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int n = 0; n < N; ++n) {
          const size_t off = (static_cast<size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) {
            sum_dy += op->g[off + i];
            sum_dy_xh += op->g[off + i] * (*xhat)[off + i];
          }
        }
        gp->g[c] += sum_dy_xh;
        bp->g[c] += sum_dy;
        const double ga = gp->v[c];
        if (train) {
          const double mean_dy = sum_dy / m, mean_dy_xh = sum_dy_xh / m;
          for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i)
              xp->g[off + i] +=
                  ga * inv * (op->g[off + i] - mean_dy - (*xhat)[off + i] * mean_dy_xh);
          }
        } else {
          for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) xp->g[off + i] += ga * inv * op->g[off + i];
          }
        }
      }
    });
  }
  return out;
}

TensorPtr max_pool2d(Tape* tape, const TensorPtr& x, int window, int stride, int padding) {
  require(x->shape.rank() == 4, "max_pool2d input must be [N,C,H,W]");
  require(window >= 1, "max_pool2d window must be >= 1");
  const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  require(H + 2 * padding >= window && W + 2 * padding >= window,
          "max_pool2d window larger than padded input");
  const int Ho = conv_out_extent(H, window, stride, padding);
  const int Wo = conv_out_extent(W, window, stride, padding);

  auto out = Tensor::zeros(Shape{N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int>>(out->v.size(), -1);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src = x->v.data() + (static_cast<size_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double best = -1e300;
          int besti = -1;
          for (int ky = 0; ky < window; ++ky) {
            const int y = oy * stride - padding + ky;
            if (y < 0 || y >= H) continue;
            for (int kx = 0; kx < window; ++kx) {
              const int xx = ox * stride - padding + kx;
              if (xx < 0 || xx >= W) continue;
              const double val = src[static_cast<size_t>(y) * W + xx];
              if (val > best) {  // strict: first maximal element wins
                best = val;
                besti = y * W + xx;
              }
            }
          }
          const size_t oi = ((static_cast<size_t>(n) * C + c) * Ho + oy) * Wo + ox;
          out->v[oi] = besti >= 0 ? best : 0.0;
          (*argmax)[oi] = besti;
        }
    }
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      const int HWo = Ho * Wo, HWi = H * W;
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* dx = xp->g.data() + (static_cast<size_t>(n) * C + c) * HWi;
          const size_t off = (static_cast<size_t>(n) * C + c) * HWo;
          for (int p = 0; p < HWo; ++p)
            if ((*argmax)[off + p] >= 0) dx[(*argmax)[off + p]] += op->g[off + p];
        }
    });
  }
  return out;
}

TensorPtr avg_pool2d(Tape* tape, const TensorPtr& x, int window, int stride, bool ceil_mode) {
  require(x->shape.rank() == 4, "avg_pool2d input must be [N,C,H,W]");
  require(window >= 1 && stride >= 1, "avg_pool2d needs window, stride >= 1");
  const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  int Ho, Wo;
  if (ceil_mode) {
    Ho = (H + stride - 1) / stride;
    Wo = (W + stride - 1) / stride;
  } else {
    require(H >= window && (H - window) % stride == 0 && W >= window && (W - window) % stride == 0,
            "avg_pool2d extents " + x->shape.str() + " not divisible by window " +
                std::to_string(window) + "/stride " + std::to_string(stride));
    Ho = (H - window) / stride + 1;
    Wo = (W - window) / stride + 1;
  }
  auto out = Tensor::zeros(Shape{N, C, Ho, Wo});
  auto counts = std::make_shared<std::vector<int>>(static_cast<size_t>(Ho) * Wo, 0);
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox) {
      const int y1 = std::min(oy * stride + window, H), x1 = std::min(ox * stride + window, W);
      (*counts)[static_cast<size_t>(oy) * Wo + ox] = (y1 - oy * stride) * (x1 - ox * stride);
    }
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src = x->v.data() + (static_cast<size_t>(n) * C + c) * H * W;
      double* dst = out->v.data() + (static_cast<size_t>(n) * C + c) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double s = 0.0;
          const int y1 = std::min(oy * stride + window, H), x1 = std::min(ox * stride + window, W);
          for (int y = oy * stride; y < y1; ++y)
            for (int xx = ox * stride; xx < x1; ++xx) s += src[static_cast<size_t>(y) * W + xx];
          dst[static_cast<size_t>(oy) * Wo + ox] = s / (*counts)[static_cast<size_t>(oy) * Wo + ox];
        }
    }
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* dx = xp->g.data() + (static_cast<size_t>(n) * C + c) * H * W;
          const double* go = op->g.data() + (static_cast<size_t>(n) * C + c) * Ho * Wo;
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              const double gshare = go[static_cast<size_t>(oy) * Wo + ox] /
                                    (*counts)[static_cast<size_t>(oy) * Wo + ox];
              const int y1 = std::min(oy * stride + window, H),
                        x1 = std::min(ox * stride + window, W);
              for (int y = oy * stride; y < y1; ++y)
                for (int xx = ox * stride; xx < x1; ++xx)
                  dx[static_cast<size_t>(y) * W + xx] += gshare;
            }
        }
    });
  }
  return out;
}

TensorPtr global_avg_pool(Tape* tape, const TensorPtr& x) {
  require(x->shape.rank() == 4, "global_avg_pool input must be [N,C,H,W]");
  const int N = x->shape[0], C = x->shape[1], HW = x->shape[2] * x->shape[3];
  auto out = Tensor::zeros(Shape{N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src = x->v.data() + (static_cast<size_t>(n) * C + c) * HW;
      double s = 0.0;
      for (int i = 0; i < HW; ++i) s += src[i];
      out->v[static_cast<size_t>(n) * C + c] = s / HW;
    }
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const double gshare = op->g[static_cast<size_t>(n) * C + c] / HW;
          double* dx = xp->g.data() + (static_cast<size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) dx[i] += gshare;
        }
    });
  }
  return out;
}

TensorPtr concat_channels(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  require(a->shape.rank() == 4 && b->shape.rank() == 4, "concat_channels inputs must be [N,C,H,W]");
  require(a->shape[0] == b->shape[0] && a->shape[2] == b->shape[2] && a->shape[3] == b->shape[3],
          "concat_channels batch/spatial mismatch: " + a->shape.str() + " vs " + b->shape.str());
  const int N = a->shape[0], Ca = a->shape[1], Cb = b->shape[1], HW = a->shape[2] * a->shape[3];
  auto out = Tensor::zeros(Shape{N, Ca + Cb, a->shape[2], a->shape[3]});
  for (int n = 0; n < N; ++n) {
    std::copy_n(a->v.data() + static_cast<size_t>(n) * Ca * HW, static_cast<size_t>(Ca) * HW,
                out->v.data() + static_cast<size_t>(n) * (Ca + Cb) * HW);
    std::copy_n(b->v.data() + static_cast<size_t>(n) * Cb * HW, static_cast<size_t>(Cb) * HW,
                out->v.data() + static_cast<size_t>(n) * (Ca + Cb) * HW + static_cast<size_t>(Ca) * HW);
  }
  if (tape) {
    tape->touch(a);
    tape->touch(b);
    tape->touch(out);
    TensorPtr ap = a, bp = b, op = out;
    tape->record([=]() {
      for (int n = 0; n < N; ++n) {
        const double* go = op->g.data() + static_cast<size_t>(n) * (Ca + Cb) * HW;
        double* da = ap->g.data() + static_cast<size_t>(n) * Ca * HW;
        double* db = bp->g.data() + static_cast<size_t>(n) * Cb * HW;
        for (size_t i = 0; i < static_cast<size_t>(Ca) * HW; ++i) da[i] += go[i];
        for (size_t i = 0; i < static_cast<size_t>(Cb) * HW; ++i)
          db[i] += go[static_cast<size_t>(Ca) * HW + i];
      }
    });
  }
  return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  require(a->shape == b->shape,
          "add shape mismatch: " + a->shape.str() + " vs " + b->shape.str());
  auto out = Tensor::zeros(a->shape);
  for (size_t i = 0; i < a->v.size(); ++i) out->v[i] = a->v[i] + b->v[i];
  if (tape) {
    tape->touch(a);
    tape->touch(b);
    tape->touch(out);
    TensorPtr ap = a, bp = b, op = out;
    tape->record([=]() {
      for (size_t i = 0; i < op->g.size(); ++i) {
        ap->g[i] += op->g[i];
        bp->g[i] += op->g[i];
      }
    });
  }
  return out;
}

TensorPtr scale(Tape* tape, const TensorPtr& x, double c) {
  auto out = Tensor::zeros(x->shape);
  for (size_t i = 0; i < x->v.size(); ++i) out->v[i] = c * x->v[i];
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (size_t i = 0; i < op->g.size(); ++i) xp->g[i] += c * op->g[i];
    });
  }
  return out;
}

TensorPtr reshape(Tape* tape, const TensorPtr& x, Shape s) {
  require(s.numel() == x->numel(), "reshape must preserve element count: " + x->shape.str() +
                                       " -> " + s.str());
  auto out = Tensor::from(std::move(s), x->v);
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (size_t i = 0; i < op->g.size(); ++i) xp->g[i] += op->g[i];
    });
  }
  return out;
}

TensorPtr permute(Tape* tape, const TensorPtr& x, const std::vector<int>& perm) {
  const int r = x->shape.rank();
  require(static_cast<int>(perm.size()) == r, "permute rank mismatch");
  std::vector<int> odims(r);
  for (int i = 0; i < r; ++i) odims[i] = x->shape[perm[i]];
  std::vector<size_t> istr(r, 1), ostr(r, 1);
  for (int i = r - 2; i >= 0; --i) istr[i] = istr[i + 1] * x->shape[i + 1];
  for (int i = r - 2; i >= 0; --i) ostr[i] = ostr[i + 1] * odims[i + 1];
  // Map each output linear index to its source linear index.
  auto srcidx = std::make_shared<std::vector<size_t>>(x->v.size());
  std::vector<int> idx(r, 0);
  for (size_t o = 0; o < x->v.size(); ++o) {
    size_t rem = o, si = 0;
    for (int i = 0; i < r; ++i) {
      const size_t q = rem / ostr[i];
      rem %= ostr[i];
      si += q * istr[perm[i]];
    }
    (*srcidx)[o] = si;
  }
  auto out = Tensor::zeros(Shape{odims});
  for (size_t o = 0; o < out->v.size(); ++o) out->v[o] = x->v[(*srcidx)[o]];
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (size_t o = 0; o < op->g.size(); ++o) xp->g[(*srcidx)[o]] += op->g[o];
    });
  }
  return out;
}

TensorPtr bmm(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  require(a->shape.rank() == 3 && b->shape.rank() == 3, "bmm inputs must be rank-3");
  const int B = a->shape[0], M = a->shape[1], K = a->shape[2], Nn = b->shape[2];
  require(b->shape[0] == B && b->shape[1] == K,
          "bmm shape mismatch: " + a->shape.str() + " x " + b->shape.str());
  auto out = Tensor::zeros(Shape{B, M, Nn});
  for (int bb = 0; bb < B; ++bb) {
    const double* A = a->v.data() + static_cast<size_t>(bb) * M * K;
    const double* Bm = b->v.data() + static_cast<size_t>(bb) * K * Nn;
    double* C = out->v.data() + static_cast<size_t>(bb) * M * Nn;
    for (int i = 0; i < M; ++i)
      for (int k = 0; k < K; ++k) {
        const double av = A[static_cast<size_t>(i) * K + k];
        if (av == 0.0) continue;
        const double* br = Bm + static_cast<size_t>(k) * Nn;
        double* cr = C + static_cast<size_t>(i) * Nn;
        for (int j = 0; j < Nn; ++j) cr[j] += av * br[j];
      }
  }
  if (tape) {
    tape->touch(a);
    tape->touch(b);
    tape->touch(out);
    TensorPtr ap = a, bp = b, op = out;
    tape->record([=]() {
      for (int bb = 0; bb < B; ++bb) {
        const double* A = ap->v.data() + static_cast<size_t>(bb) * M * K;
        const double* Bm = bp->v.data() + static_cast<size_t>(bb) * K * Nn;
        const double* G = op->g.data() + static_cast<size_t>(bb) * M * Nn;
        double* dA = ap->g.data() + static_cast<size_t>(bb) * M * K;
        double* dB = bp->g.data() + static_cast<size_t>(bb) * K * Nn;
        // dA = G * B^T ; dB = A^T * G
        for (int i = 0; i < M; ++i)
          for (int k = 0; k < K; ++k) {
            const double* br = Bm + static_cast<size_t>(k) * Nn;
            const double* gr = G + static_cast<size_t>(i) * Nn;
            double acc = 0.0;
            for (int j = 0; j < Nn; ++j) acc += gr[j] * br[j];
            dA[static_cast<size_t>(i) * K + k] += acc;
          }
        for (int k = 0; k < K; ++k)
          for (int i = 0; i < M; ++i) {
            const double av = A[static_cast<size_t>(i) * K + k];
            if (av == 0.0) continue;
            const double* gr = G + static_cast<size_t>(i) * Nn;
            double* dbr = dB + static_cast<size_t>(k) * Nn;
            for (int j = 0; j < Nn; ++j) dbr[j] += av * gr[j];
          }
      }
    });
  }
  return out;
}

TensorPtr slice_channels(Tape* tape, const TensorPtr& x, int c0, int c1) {
  require(x->shape.rank() == 4, "slice_channels input must be [N,C,H,W]");
  const int N = x->shape[0], C = x->shape[1], HW = x->shape[2] * x->shape[3];
  require(0 <= c0 && c0 < c1 && c1 <= C, "slice_channels range [" + std::to_string(c0) + "," +
                                             std::to_string(c1) + ") invalid for C=" +
                                             std::to_string(C));
  const int Cs = c1 - c0;
  auto out = Tensor::zeros(Shape{N, Cs, x->shape[2], x->shape[3]});
  for (int n = 0; n < N; ++n)
    std::copy_n(x->v.data() + (static_cast<size_t>(n) * C + c0) * HW, static_cast<size_t>(Cs) * HW,
                out->v.data() + static_cast<size_t>(n) * Cs * HW);
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (int n = 0; n < N; ++n) {
        double* dx = xp->g.data() + (static_cast<size_t>(n) * C + c0) * HW;
        const double* go = op->g.data() + static_cast<size_t>(n) * Cs * HW;
        for (size_t i = 0; i < static_cast<size_t>(Cs) * HW; ++i) dx[i] += go[i];
      }
    });
  }
  return out;
}

TensorPtr sum(Tape* tape, const TensorPtr& x) {
  double s = 0.0;
  for (double e : x->v) s += e;
  auto out = Tensor::scalar(s);
  if (tape) {
    tape->touch(x);
    tape->touch(out);
    TensorPtr xp = x, op = out;
    tape->record([=]() {
      for (size_t i = 0; i < xp->v.size(); ++i) xp->g[i] += op->g[0];
    });
  }
  return out;
}

}  // namespace ag
