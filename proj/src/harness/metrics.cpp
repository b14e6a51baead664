#include <algorithm>
#include <cmath>

#include "cat/harness.hpp"

namespace cat {
namespace {

void require_same(const ImageF& a, const ImageF& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw DimensionError(std::string(what) + ": images differ in shape (" + std::to_string(a.height) +
                         "x" + std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                         std::to_string(b.channels) + ")");
  }
}

constexpr int kWin = 11;

std::vector<double> gaussian_window() {
  std::vector<double> g(kWin * kWin);
  double total = 0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dy = y - kWin / 2, dx = x - kWin / 2;
      total += g[static_cast<std::size_t>(y * kWin + x)] = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
    }
  for (double& v : g) v /= total;
  return g;
}

}  // namespace

double psnr(const ImageF& a, const ImageF& b) {
  require_same(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

// Gaussian-weighted SSIM over every position where the 11x11 window fits,
// averaged over positions and then channels. Terms are formed so that
// swapping a and b, or passing a == b, is exact in floating point.
double ssim(const ImageF& a, const ImageF& b) {
  require_same(a, b, "ssim");
  if (a.height < kWin || a.width < kWin) {
    throw DimensionError("ssim needs at least 11x11 pixels, got " + std::to_string(a.height) + "x" +
                         std::to_string(a.width));
  }
  static const std::vector<double> g = gaussian_window();
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const int oh = a.height - kWin + 1, ow = a.width - kWin + 1;
  double channel_sum = 0;
  for (int c = 0; c < a.channels; ++c) {
    double map_sum = 0;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            const double w = g[static_cast<std::size_t>(i * kWin + j)];
            const double va = a.at(y + i, x + j, c), vb = b.at(y + i, x + j, c);
            ma += w * va;
            mb += w * vb;
            saa += w * (va * va);
            sbb += w * (vb * vb);
            sab += w * (va * vb);
          }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        const double num = (2 * (ma * mb) + c1) * (2 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        map_sum += num / den;
      }
    channel_sum += map_sum / (static_cast<double>(oh) * ow);
  }
  return channel_sum / a.channels;
}

ImageF prepare_for_metrics(const ImageU8& img, ChannelMode mode, int crop) {
  const ImageF full = mode == ChannelMode::Y && img.channels == 3 ? rgb_to_y(img) : to_real(img);
  if (crop < 0 || 2 * crop >= full.height || 2 * crop >= full.width) {
    throw DimensionError("crop " + std::to_string(crop) + " leaves nothing of a " +
                         std::to_string(full.height) + "x" + std::to_string(full.width) + " image");
  }
  if (crop == 0) return full;
  ImageF out(full.height - 2 * crop, full.width - 2 * crop, full.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = full.at(y + crop, x + crop, c);
  return out;
}

double psnr(const ImageU8& a, const ImageU8& b, ChannelMode mode, int crop) {
  return psnr(prepare_for_metrics(a, mode, crop), prepare_for_metrics(b, mode, crop));
}

double ssim(const ImageU8& a, const ImageU8& b, ChannelMode mode, int crop) {
  return ssim(prepare_for_metrics(a, mode, crop), prepare_for_metrics(b, mode, crop));
}

}  // namespace cat
