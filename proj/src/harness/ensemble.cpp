#include "cat/harness.hpp"

namespace cat {
namespace {

template <typename T>
Tensor<T> flip_w(const Tensor<T>& x) {
  const auto N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor<T> out(x.shape());
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t w = 0; w < W; ++w)
        for (std::int64_t c = 0; c < C; ++c)
          out[((n * H + y) * W + w) * C + c] = x[((n * H + y) * W + (W - 1 - w)) * C + c];
  return out;
}

// Counter-clockwise quarter turn: out(y, x) = in(x, W-1-y).
template <typename T>
Tensor<T> rot90(const Tensor<T>& x) {
  const auto N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor<T> out({N, W, H, C});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t y = 0; y < W; ++y)
      for (std::int64_t w = 0; w < H; ++w)
        for (std::int64_t c = 0; c < C; ++c)
          out[((n * W + y) * H + w) * C + c] = x[((n * H + w) * W + (W - 1 - y)) * C + c];
  return out;
}

void check(const Shape& s, int t) {
  if (s.size() != 4) throw DimensionError("dihedral expects [N,H,W,C], got " + shape_str(s));
  if (t < 0 || t > 7) throw ContractError("dihedral index must be in 0..7, got " + std::to_string(t));
}

}  // namespace

template <typename T>
Tensor<T> dihedral(const Tensor<T>& x, int t) {
  check(x.shape(), t);
  Tensor<T> out = t >= 4 ? flip_w(x) : x;
  for (int k = 0; k < t % 4; ++k) out = rot90(out);
  return out;
}

template <typename T>
Tensor<T> dihedral_inverse(const Tensor<T>& x, int t) {
  check(x.shape(), t);
  Tensor<T> out = x;
  for (int k = 0; k < (4 - t % 4) % 4; ++k) out = rot90(out);
  return t >= 4 ? flip_w(out) : out;
}

template Tensor<float> dihedral(const Tensor<float>&, int);
template Tensor<double> dihedral(const Tensor<double>&, int);
template Tensor<float> dihedral_inverse(const Tensor<float>&, int);
template Tensor<double> dihedral_inverse(const Tensor<double>&, int);

ImageU8 dihedral(const ImageU8& img, int t) {
  Tensor<float> x({1, img.height, img.width, img.channels});
  for (std::size_t i = 0; i < img.data.size(); ++i) x[static_cast<std::int64_t>(i)] = img.data[i];
  const Tensor<float> y = dihedral(x, t);
  ImageU8 out(static_cast<int>(y.dim(1)), static_cast<int>(y.dim(2)), img.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<std::uint8_t>(y[static_cast<std::int64_t>(i)]);
  }
  return out;
}

ImageU8 infer_image(const Restorer& model, const ImageU8& img) {
  return quantize(tensor_to_image(model(image_to_tensor(img))));
}

ImageU8 self_ensemble_infer(const Restorer& model, const ImageU8& img) {
  const Tensor<float> x = image_to_tensor(img);
  std::vector<double> acc;
  Shape shape;
  for (int t = 0; t < 8; ++t) {
    const Tensor<float> y = dihedral_inverse(model(dihedral(x, t)), t);
    if (t == 0) {
      shape = y.shape();
      acc.assign(static_cast<std::size_t>(y.size()), 0.0);
    } else if (y.shape() != shape) {
      throw DimensionError("self-ensemble: transformed output " + shape_str(y.shape()) +
                           " disagrees with " + shape_str(shape));
    }
    const auto d = y.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
  }
  ImageF out(static_cast<int>(shape[1]), static_cast<int>(shape[2]), static_cast<int>(shape[3]));
  for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = acc[i] / 8.0 * 255.0;
  return quantize(out);
}

}  // namespace cat
