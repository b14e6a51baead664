#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "cat/model.hpp"
#include "cat/optim.hpp"

namespace cat {

// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int h, int w, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x, int c) { return data[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return data[index(y, x, c)]; }
  friend bool operator==(const ImageU8&, const ImageU8&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
};

// Real-valued image in the same layout, 0..255 scale unless stated.
struct ImageF {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImageF() = default;
  ImageF(int h, int w, int c, double fill = 0);

  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
};

/// PNG (8-bit, non-interlaced) or binary PPM/PGM, detected from the
/// file contents.
ImageU8 load_image(const std::filesystem::path& path);
/// Format chosen by extension: .png, .ppm (3 channels) or .pgm (1 channel).
void save_image(const ImageU8& img, const std::filesystem::path& path);

ImageF to_real(const ImageU8& img);
/// Rounds and clamps to [0, 255].
ImageU8 quantize(const ImageF& img);

/// BT.601 limited-range luma, 16..235.
ImageF rgb_to_y(const ImageU8& img);

// Model I/O: [1,H,W,C] in [0,1].
Tensor<float> image_to_tensor(const ImageU8& img);
ImageF tensor_to_image(const Tensor<float>& t);

// ---------------------------------------------------------------- resize

/// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

// Contribution of input samples to one output sample.
struct ResizeTap {
  std::vector<int> index;
  std::vector<double> weights;
};

/// Per-output-sample taps along one axis for an in -> out resize. When
/// shrinking, the kernel is widened by in/out. Edge samples are clamped.
std::vector<ResizeTap> resize_taps(int in, int out);

ImageF bicubic_resize(const ImageF& img, int out_h, int out_w);
ImageF bicubic_downscale(const ImageF& img, int scale);
ImageF bicubic_upscale(const ImageF& img, int scale);

// ---------------------------------------------------------------- metrics

enum class ChannelMode { RGB, Y };

constexpr double kPsnrCap = 100.0;

double psnr(const ImageF& a, const ImageF& b);
double ssim(const ImageF& a, const ImageF& b);

/// Y mode converts 3-channel inputs to luma first; crop trims that many
/// pixels from every border.
double psnr(const ImageU8& a, const ImageU8& b, ChannelMode mode, int crop);
double ssim(const ImageU8& a, const ImageU8& b, ChannelMode mode, int crop);

ImageF prepare_for_metrics(const ImageU8& img, ChannelMode mode, int crop);

// ---------------------------------------------------------------- ensemble

/// t in 0..7: optional horizontal flip (t >= 4) followed by t % 4
/// counter-clockwise quarter turns. Works on [N,H,W,C].
template <typename T>
Tensor<T> dihedral(const Tensor<T>& x, int t);
template <typename T>
Tensor<T> dihedral_inverse(const Tensor<T>& x, int t);

ImageU8 dihedral(const ImageU8& img, int t);

using Restorer = std::function<Tensor<float>(const Tensor<float>&)>;

ImageU8 infer_image(const Restorer& model, const ImageU8& img);
/// Runs all 8 dihedral variants, undoes each, averages in double.
ImageU8 self_ensemble_infer(const Restorer& model, const ImageU8& img);

// ---------------------------------------------------------------- overfit

ModelConfig overfit_config();

struct OverfitOptions {
  int steps = 500;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double target_reduction = 0.9;
};

struct OverfitResult {
  std::vector<double> losses;  // before each step, then the final loss
  double reduction = 0;
  bool passed = false;
};

/// Trains the tiny SR x2 model on one synthetic 16x16 patch with L1 loss.
OverfitResult run_overfit(const OverfitOptions& options,
                          const std::function<void(int step, double loss)>& on_step = {});

/// Deterministic smooth-plus-edges test picture on the 0..255 scale.
ImageF synthetic_image(int h, int w, int channels, std::uint64_t seed);

}  // namespace cat
