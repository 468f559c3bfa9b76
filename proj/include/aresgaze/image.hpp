#pragma once

#include <cstdint>
#include <vector>

#include "aresgaze/geometry.hpp"

namespace ag {

/// 8-bit row-major image, 1 (gray) or 3 (RGB) channels.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> px;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c) : width(w), height(h), channels(c) {
    if (w < 1 || h < 1 || (c != 1 && c != 3)) throw ValueError("invalid image dimensions");
    px.assign(static_cast<size_t>(w) * h * c, 0);
  }

  uint8_t& at(int x, int y, int c) {
    return px[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int x, int y, int c) const {
    return px[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

/// Rec.601 luma of one pixel.
double luma(const ImageBuffer& img, int x, int y);

/// RGB -> grayscale via luma; a grayscale input is copied unchanged.
ImageBuffer to_grayscale(const ImageBuffer& img);

/// Mean luma over all pixels, in [0, 255].
double mean_intensity(const ImageBuffer& img);

/// Warps src through M into a Z x Z image; bilinear sampling of src at
/// inverse-mapped coordinates, out of bounds black.
ImageBuffer warp_affine(const ImageBuffer& src, const AffineNormalization& n);

/// 256-bin CDF remap of a grayscale image; constant images pass through.
ImageBuffer histogram_equalize(const ImageBuffer& gray);

/// Bilinear resize (center-aligned sampling).
ImageBuffer resize_bilinear(const ImageBuffer& src, int new_w, int new_h);

struct StackedEyes {
  ImageBuffer image;   // 60x60 gray: left-eye patch on top, right below
  bool clipped = false;  // a crop box exceeded the face bounds (black-filled)
};

/// Crops 2:1 boxes of width 0.36*Z around the canonical eye centers of a
/// normalized Z x Z face, grayscales, equalizes, resizes each to 60x30 and
/// stacks the left eye on top.
StackedEyes extract_stacked_eyes(const ImageBuffer& face);

}  // namespace ag
