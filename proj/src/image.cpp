#include "aresgaze/image.hpp"

#include <algorithm>
#include <cmath>

namespace ag {

double luma(const ImageBuffer& img, int x, int y) {
  if (img.channels == 1) return img.at(x, y, 0);
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

ImageBuffer to_grayscale(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  ImageBuffer out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y, 0) = static_cast<uint8_t>(std::lround(std::clamp(luma(img, x, y), 0.0, 255.0)));
  return out;
}

double mean_intensity(const ImageBuffer& img) {
  double s = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) s += luma(img, x, y);
  return s / (static_cast<double>(img.width) * img.height);
}

namespace {

double sample_bilinear(const ImageBuffer& src, double x, double y, int c) {
  // Out-of-bounds samples are black.
  if (x < -1.0 || y < -1.0 || x > src.width || y > src.height) return 0.0;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int xx, int yy) -> double {
    if (xx < 0 || yy < 0 || xx >= src.width || yy >= src.height) return 0.0;
    return src.at(xx, yy, c);
  };
  return (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) +
         (1 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1);
}

}  // namespace

ImageBuffer warp_affine(const ImageBuffer& src, const AffineNormalization& n) {
  if (src.px.empty()) throw ValueError("warp_affine: empty source image");
  const double det = n.a * n.a + n.b * n.b;  // det of [[a,b],[-b,a]] = S^2
  if (det <= 0.0) throw ValueError("warp_affine: degenerate transform (zero scale)");
  const double ia = n.a / det, ib = n.b / det;
  const int Z = n.out_size;
  ImageBuffer out(Z, Z, src.channels);
  for (int y = 0; y < Z; ++y)
    for (int x = 0; x < Z; ++x) {
      const double dx = x - n.m[0][2], dy = y - n.m[1][2];
      // inverse of [[a,b],[-b,a]] is [[a,-b],[b,a]] / S^2
      const double sx = ia * dx - ib * dy;
      const double sy = ib * dx + ia * dy;
      for (int c = 0; c < src.channels; ++c)
        out.at(x, y, c) = static_cast<uint8_t>(
            std::lround(std::clamp(sample_bilinear(src, sx, sy, c), 0.0, 255.0)));
    }
  return out;
}

ImageBuffer histogram_equalize(const ImageBuffer& gray) {
  if (gray.channels != 1) throw ValueError("histogram_equalize expects a grayscale image");
  size_t hist[256] = {0};
  for (uint8_t p : gray.px) ++hist[p];
  const size_t npix = gray.px.size();

  size_t cdf[256];
  size_t acc = 0;
  for (int i = 0; i < 256; ++i) {
    acc += hist[i];
    cdf[i] = acc;
  }
  size_t cdf_min = 0;
  for (int i = 0; i < 256; ++i)
    if (hist[i] > 0) {
      cdf_min = cdf[i];
      break;
    }
  if (cdf_min == npix) return gray;  // constant image passes through

  ImageBuffer out = gray;
  uint8_t map[256];
  for (int i = 0; i < 256; ++i) {
    const double v = 255.0 * (static_cast<double>(cdf[i]) - cdf_min) /
                     (static_cast<double>(npix) - cdf_min);
    map[i] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  for (uint8_t& p : out.px) p = map[p];
  return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& src, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) throw ValueError("resize target must be positive");
  if (new_w == src.width && new_h == src.height) return src;
  ImageBuffer out(new_w, new_h, src.channels);
  const double sx = static_cast<double>(src.width) / new_w;
  const double sy = static_cast<double>(src.height) / new_h;
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x) {
      const double u = (x + 0.5) * sx - 0.5;
      const double v = (y + 0.5) * sy - 0.5;
      for (int c = 0; c < src.channels; ++c)
        out.at(x, y, c) = static_cast<uint8_t>(
            std::lround(std::clamp(sample_bilinear(src, u, v, c), 0.0, 255.0)));
    }
  return out;
}

namespace {

// Crops an integer box (black fill outside) from a grayscale image.
ImageBuffer crop(const ImageBuffer& g, int x0, int y0, int w, int h, bool& clipped) {
  ImageBuffer out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sx = x0 + x, sy = y0 + y;
      if (sx < 0 || sy < 0 || sx >= g.width || sy >= g.height) {
        clipped = true;
        continue;
      }
      out.at(x, y, 0) = g.at(sx, sy, 0);
    }
  return out;
}

}  // namespace

StackedEyes extract_stacked_eyes(const ImageBuffer& face) {
  if (face.width != face.height) throw ValueError("extract_stacked_eyes expects a square face");
  const int Z = face.width;
  if (Z < 64) throw ValueError("extract_stacked_eyes needs Z >= 64");

  const ImageBuffer gray = to_grayscale(face);
  const int bw = static_cast<int>(std::lround(0.36 * Z));
  const int bh = static_cast<int>(std::lround(0.18 * Z));

  StackedEyes result;
  result.image = ImageBuffer(60, 60, 1);
  const double centers_x[2] = {0.7 * Z, 0.3 * Z};  // left eye first (top patch)
  for (int e = 0; e < 2; ++e) {
    const int x0 = static_cast<int>(std::lround(centers_x[e] - bw / 2.0));
    const int y0 = static_cast<int>(std::lround(0.35 * Z - bh / 2.0));
    ImageBuffer patch = crop(gray, x0, y0, bw, bh, result.clipped);
    patch = histogram_equalize(patch);
    patch = resize_bilinear(patch, 60, 30);
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 60; ++x) result.image.at(x, e * 30 + y, 0) = patch.at(x, y, 0);
  }
  return result;
}

}  // namespace ag
