#include <algorithm>
#include <cmath>

#include "cat/harness.hpp"

namespace cat {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0;
}

std::vector<ResizeTap> resize_taps(int in, int out) {
  if (in < 1 || out < 1) throw DimensionError("resize extents must be positive");
  const double scale = static_cast<double>(out) / in;
  // Shrinking stretches the kernel so it also low-passes.
  const double stretch = scale < 1 ? scale : 1.0;
  const double support = 2.0 / stretch;
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(center - support));
    const int right = static_cast<int>(std::ceil(center + support));
    ResizeTap& tap = taps[static_cast<std::size_t>(i)];
    double total = 0;
    for (int j = left; j <= right; ++j) {
      const double w = stretch * cubic_kernel(stretch * (center - j));
      if (w == 0) continue;
      tap.index.push_back(std::clamp(j, 0, in - 1));
      tap.weights.push_back(w);
      total += w;
    }
    for (double& w : tap.weights) w /= total;
  }
  return taps;
}

ImageF bicubic_resize(const ImageF& img, int out_h, int out_w) {
  const auto rows = resize_taps(img.height, out_h);
  const auto cols = resize_taps(img.width, out_w);
  const int C = img.channels;
  ImageF tmp(img.height, out_w, C);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < out_w; ++x) {
      const ResizeTap& t = cols[static_cast<std::size_t>(x)];
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weights[k] * img.at(y, t.index[k], c);
        tmp.at(y, x, c) = acc;
      }
    }
  ImageF out(out_h, out_w, C);
  for (int y = 0; y < out_h; ++y) {
    const ResizeTap& t = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weights[k] * tmp.at(t.index[k], x, c);
        out.at(y, x, c) = acc;
      }
  }
  return out;
}

namespace {

void check_scale(int scale) {
  if (scale < 2 || scale > 4) throw ContractError("bicubic scale must be 2, 3 or 4, got " + std::to_string(scale));
}

}  // namespace

ImageF bicubic_downscale(const ImageF& img, int scale) {
  check_scale(scale);
  if (img.height % scale || img.width % scale) {
    throw DimensionError("bicubic_downscale: " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + " is not a multiple of " + std::to_string(scale));
  }
  return bicubic_resize(img, img.height / scale, img.width / scale);
}

ImageF bicubic_upscale(const ImageF& img, int scale) {
  check_scale(scale);
  return bicubic_resize(img, img.height * scale, img.width * scale);
}

}  // namespace cat
