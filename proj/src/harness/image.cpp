#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "cat/harness.hpp"

namespace cat {

ImageU8::ImageU8(int h, int w, int c, std::uint8_t fill) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || (c != 1 && c != 3)) {
    throw DimensionError("image must be at least 1x1 with 1 or 3 channels");
  }
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

ImageF::ImageF(int h, int w, int c, double fill) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || c < 1) throw DimensionError("image extents must be positive");
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

namespace {

// ---------------------------------------------------------------- PNM

void skip_space_and_comments(std::istream& in) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string junk;
      std::getline(in, junk);
    } else if (ch != EOF && std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

int read_header_int(std::istream& in, const std::string& path) {
  skip_space_and_comments(in);
  int v = -1;
  if (!(in >> v) || v < 1) throw FormatError(path + ": malformed PNM header");
  return v;
}

ImageU8 load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[2] = {};
  in.read(magic, 2);
  const int channels = magic[1] == '6' ? 3 : 1;
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (maxval != 255) {
    throw FormatError(path + ": only 8-bit PNM (maxval 255) is supported, got " + std::to_string(maxval));
  }
  if (!std::isspace(in.get())) throw FormatError(path + ": malformed PNM header");
  ImageU8 img(h, w, channels);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw FormatError(path + ": truncated PNM data");
  }
  return img;
}

void save_pnm(const ImageU8& img, const std::string& path, int channels) {
  if (img.channels != channels) {
    throw FormatError(path + ": " + (channels == 3 ? "PPM needs 3" : "PGM needs 1") +
                      " channels, image has " + std::to_string(img.channels));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << (channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw FormatError("write failed for " + path);
}

// ---------------------------------------------------------------- PNG

struct PngError {
  char message[256] = {};
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof err->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

// libpng reports errors through longjmp; this function keeps only trivially
// destructible state between setjmp and the calls that may jump.
ImageU8 load_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw FormatError("cannot open " + path);
  PngError err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng initialisation failed");
  }
  ImageU8 img;
  std::vector<png_bytep> rows;
  std::string reject;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": " + err.message);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    reject = "interlaced PNG is not supported";
  } else if (depth != 8 && color != PNG_COLOR_TYPE_PALETTE) {
    reject = std::to_string(depth) + "-bit PNG is not supported (8-bit only)";
  }
  if (reject.empty()) {
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    img = ImageU8(h, w, channels);
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = &img.data[static_cast<std::size_t>(y) * w * channels];
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!reject.empty()) throw FormatError(path + ": " + reject);
  return img;
}

void save_png(const ImageU8& img, const std::string& path) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&desc, path.c_str(), 0, img.data.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw FormatError("cannot write " + path + ": " + msg);
  }
}

std::string lower_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

ImageU8 load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw FormatError("cannot open image " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  const auto got = probe.gcount();
  probe.close();
  if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(path.string());
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return load_pnm(path.string());
  throw FormatError(path.string() + ": not a PNG or binary PPM/PGM file");
}

void save_image(const ImageU8& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) throw FormatError("images must have 1 or 3 channels");
  const std::string ext = lower_extension(path);
  if (ext == ".png") return save_png(img, path.string());
  if (ext == ".ppm") return save_pnm(img, path.string(), 3);
  if (ext == ".pgm") return save_pnm(img, path.string(), 1);
  throw FormatError(path.string() + ": unknown image extension '" + ext + "'");
}

ImageF to_real(const ImageU8& img) {
  ImageF out(img.height, img.width, img.channels);
  std::copy(img.data.begin(), img.data.end(), out.data.begin());
  return out;
}

ImageU8 quantize(const ImageF& img) {
  ImageU8 out(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(img.data[i]), 0L, 255L));
  }
  return out;
}

ImageF rgb_to_y(const ImageU8& img) {
  if (img.channels != 3) {
    throw DimensionError("rgb_to_y needs 3 channels, got " + std::to_string(img.channels));
  }
  ImageF y(img.height, img.width, 1);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      y.at(r, c, 0) = 16.0 + (65.481 * img.at(r, c, 0) + 128.553 * img.at(r, c, 1) +
                              24.966 * img.at(r, c, 2)) / 255.0;
    }
  return y;
}

Tensor<float> image_to_tensor(const ImageU8& img) {
  Tensor<float> t({1, img.height, img.width, img.channels});
  auto d = t.data();
  for (std::size_t i = 0; i < img.data.size(); ++i) d[i] = img.data[i] / 255.0f;
  return t;
}

ImageF tensor_to_image(const Tensor<float>& t) {
  if (t.rank() != 4 || t.dim(0) != 1) {
    throw DimensionError("tensor_to_image expects [1,H,W,C], got " + shape_str(t.shape()));
  }
  ImageF img(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)), static_cast<int>(t.dim(3)));
  const auto d = t.data();
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(d[i]) * 255.0;
  return img;
}

}  // namespace cat
