#include <gtest/gtest.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include "cat/harness.hpp"

namespace cat {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("cat_harness_" + name); }

ImageU8 random_u8(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageU8 img(h, w, c);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

ImageF constant(int h, int w, int c, double v) { return ImageF(h, w, c, v); }

// Writes a PNG with the given bit depth and interlace method through libpng.
void write_raw_png(const fs::path& path, int w, int h, int depth, int interlace) {
  FILE* f = std::fopen(path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, depth, PNG_COLOR_TYPE_RGB, interlace, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int passes = interlace == PNG_INTERLACE_ADAM7 ? png_set_interlace_handling(png) : 1;
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3 * (depth / 8), 0x7f);
  for (int p = 0; p < passes; ++p)
    for (int y = 0; y < h; ++y) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

std::string load_error(const fs::path& p) {
  try {
    load_image(p);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(ImageIo, RoundTripsAreBitExact) {
  const auto rgb = random_u8(7, 5, 3, 1), gray = random_u8(4, 9, 1, 2);
  for (const auto& [img, ext] : {std::pair{rgb, ".png"}, {gray, ".png"}, {rgb, ".ppm"}, {gray, ".pgm"}}) {
    const auto p = temp_file(std::string("rt") + ext);
    save_image(img, p);
    EXPECT_EQ(load_image(p), img) << ext;
    fs::remove(p);
  }
}

TEST(ImageIo, HandBuiltPpm) {
  const auto p = temp_file("hand.ppm");
  {
    std::ofstream f(p, std::ios::binary);
    f << "P6\n# two by two\n2 2\n255\n";
    const unsigned char px[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30};
    f.write(reinterpret_cast<const char*>(px), sizeof px);
  }
  const auto img = load_image(p);
  ASSERT_EQ(std::tie(img.height, img.width, img.channels), std::make_tuple(2, 2, 3));
  EXPECT_EQ(img.at(0, 0, 0), 255);
  EXPECT_EQ(img.at(0, 1, 1), 255);
  EXPECT_EQ(img.at(1, 0, 2), 255);
  EXPECT_EQ(img.at(1, 1, 0), 10);
  EXPECT_EQ(img.at(1, 1, 2), 30);
  fs::remove(p);
}

TEST(ImageIo, RejectsUnsupportedFiles) {
  const auto deep = temp_file("deep.png");
  write_raw_png(deep, 2, 1, 16, PNG_INTERLACE_NONE);
  EXPECT_NE(load_error(deep).find("16"), std::string::npos);

  const auto laced = temp_file("laced.png");
  write_raw_png(laced, 4, 4, 8, PNG_INTERLACE_ADAM7);
  EXPECT_NE(load_error(laced).find("interlace"), std::string::npos);

  const auto plain = temp_file("plain.png");
  write_raw_png(plain, 4, 4, 8, PNG_INTERLACE_NONE);
  EXPECT_EQ(load_image(plain).at(3, 3, 2), 0x7f);

  const auto maxval = temp_file("maxval.pgm");
  std::ofstream(maxval, std::ios::binary) << "P5\n1 1\n65535\n\x01\x02";
  EXPECT_NE(load_error(maxval).find("8-bit"), std::string::npos);

  const auto cut = temp_file("cut.ppm");
  std::ofstream(cut, std::ios::binary) << "P6\n2 2\n255\nabc";
  EXPECT_NE(load_error(cut).find("truncated"), std::string::npos);

  const auto text = temp_file("text.png");
  std::ofstream(text) << "not an image";
  EXPECT_NE(load_error(text), "");
  EXPECT_NE(load_error(temp_file("missing.png")), "");
  EXPECT_THROW(save_image(random_u8(2, 2, 3, 3), temp_file("x.bmp")), FormatError);
  for (const auto& p : {deep, laced, plain, maxval, cut, text}) fs::remove(p);
}

TEST(Luma, Examples) {
  ImageU8 img(1, 3, 3);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 255;
    img.at(0, 2, c) = 128;
  }
  const auto y = rgb_to_y(img);
  EXPECT_NEAR(y.at(0, 0, 0), 235.0, 1e-3);
  EXPECT_DOUBLE_EQ(y.at(0, 1, 0), 16.0);
  EXPECT_NEAR(y.at(0, 2, 0), 16 + 219.0 * 128 / 255, 1e-3);
  EXPECT_THROW(rgb_to_y(ImageU8(2, 2, 1)), DimensionError);
}

TEST(Luma, StaysInLimitedRange) {
  const auto y = rgb_to_y(random_u8(64, 64, 3, 4));
  for (double v : y.data) {
    EXPECT_GE(v, 16.0);
    EXPECT_LE(v, 235.0 + 1e-9);
  }
}

TEST(Bicubic, KernelValues) {
  EXPECT_DOUBLE_EQ(cubic_kernel(0), 1);
  EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_kernel(1.5), -0.0625);
  EXPECT_DOUBLE_EQ(cubic_kernel(-1.5), -0.0625);
  EXPECT_DOUBLE_EQ(cubic_kernel(1), 0);
  EXPECT_DOUBLE_EQ(cubic_kernel(2.5), 0);
}

TEST(Bicubic, TapsSumToOne) {
  for (auto [in, out] : {std::pair{10, 20}, {12, 4}, {7, 21}, {16, 8}, {1, 3}, {5, 5}})
    for (const auto& tap : resize_taps(in, out)) {
      double total = 0;
      for (std::size_t k = 0; k < tap.weights.size(); ++k) {
        total += tap.weights[k];
        EXPECT_GE(tap.index[k], 0);
        EXPECT_LT(tap.index[k], in);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
}

TEST(Bicubic, ConstantStaysConstantAndShapesScale) {
  for (int s : {2, 3, 4}) {
    const auto up = bicubic_upscale(constant(5, 7, 3, 93.25), s);
    EXPECT_EQ(std::tie(up.height, up.width, up.channels), std::make_tuple(5 * s, 7 * s, 3));
    for (double v : up.data) EXPECT_NEAR(v, 93.25, 1e-9);
    const auto down = bicubic_downscale(constant(12, 24, 1, 40), s);
    EXPECT_EQ(std::tie(down.height, down.width), std::make_tuple(12 / s, 24 / s));
    for (double v : down.data) EXPECT_NEAR(v, 40, 1e-9);
  }
  EXPECT_THROW(bicubic_upscale(constant(4, 4, 1, 0), 5), ContractError);
  EXPECT_THROW(bicubic_downscale(constant(5, 4, 1, 0), 2), DimensionError);
}

TEST(Bicubic, ImpulseUpscaleTracesTheKernel) {
  // Output sample i of a x2 upscale sits at input coordinate i/2 - 1/4, so an
  // impulse at 6 is read at distances 0.25, 0.75, 1.25, 1.75 from it.
  ImageF impulse(1, 13, 1, 0.0);
  impulse.at(0, 6, 0) = 1;
  const auto up = bicubic_upscale(impulse, 2);
  for (int i = 0; i < 26; ++i) EXPECT_NEAR(up.at(0, i, 0), cubic_kernel(i / 2.0 - 0.25 - 6), 1e-12) << i;
  EXPECT_NEAR(up.at(0, 11, 0), cubic_kernel(0.75), 1e-12);
  EXPECT_NEAR(up.at(0, 15, 0), cubic_kernel(1.25), 1e-12);
}

TEST(Metrics, PsnrExamples) {
  const auto a = constant(16, 16, 3, 100);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(psnr(a, constant(16, 16, 3, 101)), 20 * std::log10(255.0), 1e-9);
  EXPECT_NEAR(20 * std::log10(255.0), 48.1308, 1e-4);
  EXPECT_THROW(psnr(a, constant(16, 15, 3, 100)), DimensionError);
}

TEST(Metrics, SsimExamplesAndSymmetry) {
  const auto a = random_u8(24, 20, 3, 5), b = random_u8(24, 20, 3, 6);
  EXPECT_EQ(ssim(a, a, ChannelMode::RGB, 0), 1.0);
  EXPECT_EQ(ssim(a, b, ChannelMode::RGB, 0), ssim(b, a, ChannelMode::RGB, 0));
  EXPECT_EQ(psnr(a, b, ChannelMode::Y, 2), psnr(b, a, ChannelMode::Y, 2));
  const double s = ssim(a, b, ChannelMode::Y, 0);
  EXPECT_GE(s, -1);
  EXPECT_LT(s, 0.2);  // unrelated noise
  EXPECT_THROW(ssim(random_u8(10, 20, 1, 7), random_u8(10, 20, 1, 8), ChannelMode::RGB, 0), DimensionError);
  EXPECT_THROW(psnr(a, a, ChannelMode::RGB, 10), DimensionError);
}

TEST(Metrics, CropAndLumaPreparation) {
  const auto a = random_u8(20, 30, 3, 9);
  const auto y = prepare_for_metrics(a, ChannelMode::Y, 4);
  EXPECT_EQ(std::tie(y.height, y.width, y.channels), std::make_tuple(12, 22, 1));
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0), rgb_to_y(a).at(4, 4, 0));
  const auto gray = prepare_for_metrics(random_u8(20, 30, 1, 10), ChannelMode::Y, 0);
  EXPECT_EQ(gray.channels, 1);
}

TEST(Metrics, InvariantUnderSharedDihedralTransforms) {
  const auto a = random_u8(24, 18, 3, 11);
  auto b = a;
  std::mt19937_64 rng(12);
  for (auto& v : b.data) v = static_cast<std::uint8_t>(std::clamp(int(v) + int(rng() % 21) - 10, 0, 255));
  const double p0 = psnr(a, b, ChannelMode::RGB, 0), s0 = ssim(a, b, ChannelMode::RGB, 0);
  for (int t = 0; t < 8; ++t) {
    const auto ta = dihedral(a, t), tb = dihedral(b, t);
    EXPECT_DOUBLE_EQ(psnr(ta, tb, ChannelMode::RGB, 0), p0) << t;
    EXPECT_NEAR(ssim(ta, tb, ChannelMode::RGB, 0), s0, 1e-6) << t;
  }
}

TEST(Ensemble, DihedralInverseIsIdentity) {
  std::mt19937_64 rng(13);
  Tensor<float> x({2, 5, 7, 3});
  for (auto& v : x.data()) v = static_cast<float>(rng() % 1000);
  std::set<std::vector<float>> distinct;
  for (int t = 0; t < 8; ++t) {
    const auto y = dihedral(x, t);
    EXPECT_EQ(y.dim(1), t % 2 ? 7 : 5);
    EXPECT_EQ(dihedral_inverse(y, t), x) << t;
    distinct.insert(y.vec());
  }
  EXPECT_EQ(distinct.size(), 8u);
  EXPECT_THROW(dihedral(x, 8), ContractError);
}

TEST(Ensemble, DihedralExamples) {
  ImageU8 img(2, 2, 1);
  img.data = {1, 2, 3, 4};
  EXPECT_EQ(dihedral(img, 0).data, (std::vector<std::uint8_t>{1, 2, 3, 4}));
  EXPECT_EQ(dihedral(img, 1).data, (std::vector<std::uint8_t>{2, 4, 1, 3}));  // counter-clockwise
  EXPECT_EQ(dihedral(img, 2).data, (std::vector<std::uint8_t>{4, 3, 2, 1}));
  EXPECT_EQ(dihedral(img, 4).data, (std::vector<std::uint8_t>{2, 1, 4, 3}));
}

TEST(Ensemble, EquivariantModelsGainNothing) {
  const Restorer identity = [](const Tensor<float>& x) { return x; };
  const auto img = random_u8(9, 6, 3, 14);
  EXPECT_EQ(self_ensemble_infer(identity, img), infer_image(identity, img));
  EXPECT_EQ(infer_image(identity, img), img);

  const Restorer twice = [](const Tensor<float>& x) {
    Tensor<float> out({1, x.dim(1) * 2, x.dim(2) * 2, x.dim(3)});
    for (std::int64_t y = 0; y < out.dim(1); ++y)
      for (std::int64_t xx = 0; xx < out.dim(2); ++xx)
        for (std::int64_t c = 0; c < out.dim(3); ++c)
          out[(y * out.dim(2) + xx) * out.dim(3) + c] = x[((y / 2) * x.dim(2) + xx / 2) * x.dim(3) + c];
    return out;
  };
  const auto flat = ImageU8(4, 5, 3, 77);
  EXPECT_EQ(self_ensemble_infer(twice, flat), ImageU8(8, 10, 3, 77));
  EXPECT_EQ(self_ensemble_infer(twice, img), infer_image(twice, img));
}

TEST(Ensemble, AveragesDifferingOutputs) {
  // Brightens by 8 only when the input is in its original orientation.
  const auto img = random_u8(6, 6, 1, 15);
  const auto reference = image_to_tensor(img);
  const Restorer picky = [&](const Tensor<float>& x) {
    Tensor<float> out = x;
    if (x == reference)
      for (auto& v : out.data()) v += 8.0f / 255;
    return out;
  };
  const auto out = self_ensemble_infer(picky, img);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(out.data[i], std::min(255, img.data[i] + 1));
}

TEST(Conversion, TensorRoundTrip) {
  const auto img = random_u8(5, 4, 3, 16);
  const auto t = image_to_tensor(img);
  EXPECT_EQ(t.shape(), (Shape{1, 5, 4, 3}));
  EXPECT_EQ(quantize(tensor_to_image(t)), img);
  ImageF wild(1, 3, 1);
  wild.data = {-20, 127.5, 400};
  EXPECT_EQ(quantize(wild).data, (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(Overfit, SyntheticImageIsDeterministic) {
  const auto a = synthetic_image(16, 16, 3, 4), b = synthetic_image(16, 16, 3, 4);
  EXPECT_EQ(a.data, b.data);
  for (double v : a.data) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 255);
  }
  EXPECT_NE(synthetic_image(16, 16, 3, 5).data, a.data);
}

TEST(Overfit, ShortRunLowersTheLoss) {
  OverfitOptions opt;
  opt.steps = 30;
  int calls = 0;
  const auto r = run_overfit(opt, [&](int, double) { ++calls; });
  EXPECT_EQ(r.losses.size(), 31u);
  EXPECT_GE(calls, 30);
  EXPECT_LT(r.losses.back(), r.losses.front());
  EXPECT_EQ(run_overfit(opt).losses, r.losses);
  opt.steps = 0;
  EXPECT_THROW(run_overfit(opt), ContractError);
}

}  // namespace
}  // namespace cat
