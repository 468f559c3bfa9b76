#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aresgaze/image.hpp"
#include "testutil.hpp"

using namespace ag;

namespace {

ImageBuffer random_image(std::mt19937_64& rng, int w, int h, int c) {
  ImageBuffer img(w, h, c);
  for (auto& p : img.px) p = static_cast<uint8_t>(rng() % 256);
  return img;
}

}  // namespace

TEST_CASE("luma and grayscale conversion") {
  ImageBuffer rgb(2, 1, 3);
  rgb.at(0, 0, 0) = 255;  // pure red
  rgb.at(1, 0, 0) = 10;
  rgb.at(1, 0, 1) = 20;
  rgb.at(1, 0, 2) = 30;
  CHECK(luma(rgb, 0, 0) == doctest::Approx(0.299 * 255));
  CHECK(luma(rgb, 1, 0) == doctest::Approx(0.299 * 10 + 0.587 * 20 + 0.114 * 30));
  const ImageBuffer g = to_grayscale(rgb);
  CHECK(g.channels == 1);
  CHECK(g.at(0, 0, 0) == 76);  // round(76.245)

  ImageBuffer gray(3, 1, 1);
  gray.px = {1, 2, 3};
  CHECK(to_grayscale(gray).px == gray.px);
}

TEST_CASE("mean intensity averages luma over all pixels") {
  ImageBuffer g(2, 2, 1);
  g.px = {0, 100, 200, 100};
  CHECK(mean_intensity(g) == doctest::Approx(100.0));
  std::mt19937_64 rng(71);
  const ImageBuffer img = random_image(rng, 7, 5, 3);
  double acc = 0.0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) acc += luma(img, x, y);
  CHECK(mean_intensity(img) == doctest::Approx(acc / 35.0).epsilon(1e-12));
}

TEST_CASE("identity warp is pixel-exact") {
  std::mt19937_64 rng(72);
  const int Z = 40;
  const ImageBuffer src = random_image(rng, Z, Z, 3);
  AffineNormalization n;
  n.out_size = Z;
  n.a = 1.0;
  n.b = 0.0;
  n.m = {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}};
  const ImageBuffer out = warp_affine(src, n);
  CHECK(out.px == src.px);
}

TEST_CASE("pure translation warp shifts content and fills black outside") {
  ImageBuffer src(4, 4, 1);
  src.at(1, 1, 0) = 200;
  AffineNormalization n;
  n.out_size = 4;
  n.a = 1.0;
  n.b = 0.0;
  n.m = {{{1.0, 0.0, 2.0}, {0.0, 1.0, 1.0}}};  // move (1,1) to (3,2)
  const ImageBuffer out = warp_affine(src, n);
  CHECK(out.at(3, 2, 0) == 200);
  CHECK(out.at(1, 1, 0) == 0);
  CHECK(out.at(0, 0, 0) == 0);
}

TEST_CASE("warp rejects a zero-scale transform") {
  ImageBuffer src(4, 4, 1);
  AffineNormalization n;
  n.out_size = 4;
  n.a = 0.0;
  n.b = 0.0;
  CHECK_THROWS_AS(warp_affine(src, n), ValueError);
}

TEST_CASE("histogram equalization matches the direct CDF remap") {
  std::mt19937_64 rng(73);
  const ImageBuffer g = random_image(rng, 16, 16, 1);
  const ImageBuffer eq = histogram_equalize(g);

  // independent recomputation
  size_t hist[256] = {0};
  for (uint8_t p : g.px) ++hist[p];
  size_t cdf = 0, cdf_min = 0;
  size_t cdfs[256];
  for (int i = 0; i < 256; ++i) {
    cdf += hist[i];
    cdfs[i] = cdf;
  }
  for (int i = 0; i < 256; ++i)
    if (hist[i]) {
      cdf_min = cdfs[i];
      break;
    }
  for (size_t i = 0; i < g.px.size(); ++i) {
    const double want =
        255.0 * (static_cast<double>(cdfs[g.px[i]]) - cdf_min) / (g.px.size() - cdf_min);
    CHECK(eq.px[i] == static_cast<uint8_t>(std::lround(want)));
  }
}

TEST_CASE("equalization maps extremes to the full range and keeps constants") {
  ImageBuffer g(4, 1, 1);
  g.px = {10, 10, 200, 200};
  const ImageBuffer eq = histogram_equalize(g);
  CHECK(eq.px[0] == 0);    // lowest occupied level maps to 0
  CHECK(eq.px[2] == 255);  // highest maps to 255

  ImageBuffer flat(5, 5, 1);
  for (auto& p : flat.px) p = 77;
  CHECK(histogram_equalize(flat).px == flat.px);
  ImageBuffer rgb(2, 2, 3);
  CHECK_THROWS_AS(histogram_equalize(rgb), ValueError);
}

TEST_CASE("resize: identity is exact, constant images stay constant") {
  std::mt19937_64 rng(74);
  const ImageBuffer img = random_image(rng, 9, 7, 3);
  CHECK(resize_bilinear(img, 9, 7).px == img.px);

  ImageBuffer flat(10, 10, 1);
  for (auto& p : flat.px) p = 123;
  const ImageBuffer small = resize_bilinear(flat, 4, 6);
  CHECK(small.width == 4);
  CHECK(small.height == 6);
  for (uint8_t p : small.px) CHECK(p == 123);
  CHECK_THROWS_AS(resize_bilinear(img, 0, 5), ValueError);
}

TEST_CASE("resize downscale of a 2x upsampled constant gradient stays monotone") {
  ImageBuffer ramp(8, 1, 1);
  for (int x = 0; x < 8; ++x) ramp.at(x, 0, 0) = static_cast<uint8_t>(x * 30);
  const ImageBuffer half = resize_bilinear(ramp, 4, 1);
  for (int x = 1; x < 4; ++x) CHECK(half.at(x, 0, 0) > half.at(x - 1, 0, 0));
}

TEST_CASE("stacked eye extraction: 60x60 output, left eye on top") {
  const int Z = 100;
  ImageBuffer face(Z, Z, 1);
  // bright disk at the canonical left-eye center (0.7Z), dark at right (0.3Z)
  for (int y = 0; y < Z; ++y)
    for (int x = 0; x < Z; ++x) {
      if (std::hypot(x - 70, y - 35) < 8) face.at(x, y, 0) = 250;
      else if (std::hypot(x - 30, y - 35) < 8) face.at(x, y, 0) = 60;
      else face.at(x, y, 0) = 128;
    }
  const StackedEyes eyes = extract_stacked_eyes(face);
  CHECK(eyes.image.width == 60);
  CHECK(eyes.image.height == 60);
  CHECK_FALSE(eyes.clipped);

  // equalization stretches both patches, but the disk interiors keep their
  // relative ordering against the local background
  CHECK(eyes.image.at(30, 15, 0) > 200);  // top patch center: bright disk
  CHECK(eyes.image.at(30, 45, 0) < 100);  // bottom patch center: dark disk
}

TEST_CASE("eye boxes leaving the face set the clipped flag") {
  ImageBuffer face(64, 64, 1);
  for (auto& p : face.px) p = 100;
  StackedEyes ok = extract_stacked_eyes(face);
  CHECK_FALSE(ok.clipped);
  CHECK_THROWS_AS(extract_stacked_eyes(ImageBuffer(32, 32, 1)), ValueError);
  ImageBuffer rect(80, 60, 1);
  CHECK_THROWS_AS(extract_stacked_eyes(rect), ValueError);
}
