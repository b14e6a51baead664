#include "oracle.hpp"

#include <algorithm>
#include <cmath>

namespace cat::oracle {
namespace {

template <typename T>
std::vector<double> to_double(const Var<T>& v) {
  const auto d = v.value().data();
  return {d.begin(), d.end()};
}

std::vector<double> softmax(std::vector<double> s) {
  const double mx = *std::max_element(s.begin(), s.end());
  double total = 0;
  for (double& v : s) total += v = std::exp(v - mx);
  for (double& v : s) v /= total;
  return s;
}

}  // namespace

template <typename T>
DenseAttention densify(const AttentionParams<T>& p) {
  DenseAttention d;
  d.C = static_cast<int>(p.qkv_w.value().dim(0));
  d.M = p.heads;
  d.P = static_cast<int>(p.pos.w1.value().dim(1));
  d.qkv_w = to_double(p.qkv_w);
  d.qkv_b = to_double(p.qkv_b);
  d.proj_w = to_double(p.proj_w);
  d.proj_b = to_double(p.proj_b);
  d.lcm_w = to_double(p.lcm_w);
  d.lcm_b = to_double(p.lcm_b);
  d.w1 = to_double(p.pos.w1);
  d.b1 = to_double(p.pos.b1);
  d.w2 = to_double(p.pos.w2);
  d.b2 = to_double(p.pos.b2);
  d.w3 = to_double(p.pos.w3);
  d.b3 = to_double(p.pos.b3);
  return d;
}

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
AttentionParams<T> random_attention(int C, int M, int hidden, std::mt19937_64& rng, double scale) {
  auto r = [&](Shape s) { return Var<T>(random_tensor<T>(s, rng, scale)); };
  const std::int64_t c = C, P = hidden;
  AttentionParams<T> p;
  p.qkv_w = r({c, 3 * c});
  p.qkv_b = r({3 * c});
  p.proj_w = r({c, c});
  p.proj_b = r({c});
  p.lcm_w = r({3, 3, c, 1});
  p.lcm_b = r({c});
  p.pos = {r({2, P}), r({P}), r({P, P}), r({P}), r({P, M}), r({M})};
  p.heads = M;
  return p;
}

std::pair<int, int> window_shape(const WindowSpec& spec, int group, int H, int W) {
  if (spec.kind == WindowKind::Regular) {
    const int a = std::min(spec.sh, spec.sw), b = std::max(spec.sh, spec.sw);
    return group == 0 ? std::pair{a, b} : std::pair{b, a};
  }
  return group == 0 ? std::pair{spec.sl, W} : std::pair{H, spec.sl};
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

std::vector<double> project_qkv(const std::vector<double>& x, int N, int H, int W,
                                const DenseAttention& p) {
  const int C = p.C;
  std::vector<double> out(static_cast<std::size_t>(N) * H * W * 3 * C);
  for (int px = 0; px < N * H * W; ++px)
    for (int o = 0; o < 3 * C; ++o) {
      double acc = p.qkv_b[o];
      for (int i = 0; i < C; ++i) acc += x[static_cast<std::size_t>(px) * C + i] * p.qkv_w[i * 3 * C + o];
      out[static_cast<std::size_t>(px) * 3 * C + o] = acc;
    }
  return out;
}

double position_bias(const DenseAttention& p, int m, int oy, int ox, int sh, int sw) {
  const double fy = static_cast<double>(oy) / std::max(sh - 1, 1);
  const double fx = static_cast<double>(ox) / std::max(sw - 1, 1);
  std::vector<double> h1(p.P), h2(p.P);
  for (int j = 0; j < p.P; ++j) h1[j] = std::max(0.0, fy * p.w1[j] + fx * p.w1[p.P + j] + p.b1[j]);
  for (int k = 0; k < p.P; ++k) {
    double acc = p.b2[k];
    for (int j = 0; j < p.P; ++j) acc += h1[j] * p.w2[j * p.P + k];
    h2[k] = std::max(0.0, acc);
  }
  double out = p.b3[m];
  for (int k = 0; k < p.P; ++k) out += h2[k] * p.w3[k * p.M + m];
  return out;
}

std::vector<double> masked_full_attention(const std::vector<double>& x, int N, int H, int W,
                                          const DenseAttention& p, const WindowSpec& spec, bool lcm) {
  const int C = p.C, M = p.M, d = C / M;
  const auto qkv = project_qkv(x, N, H, W, p);
  auto at = [&](int n, int y, int xx, int ch) {
    return qkv[((static_cast<std::size_t>(n) * H + y) * W + xx) * 3 * C + ch];
  };
  std::vector<double> heads(static_cast<std::size_t>(N) * H * W * C, 0.0);
  for (int group = 0; group < 2; ++group) {
    const auto [sh, sw] = window_shape(spec, group, H, W);
    const int Hp = (H + sh - 1) / sh * sh, Wp = (W + sw - 1) / sw * sw;
    for (int n = 0; n < N; ++n)
      for (int m = group * M / 2; m < (group + 1) * M / 2; ++m)
        for (int y = 0; y < H; ++y)
          for (int xq = 0; xq < W; ++xq) {
            std::vector<double> s;
            s.reserve(static_cast<std::size_t>(Hp) * Wp);
            for (int yy = 0; yy < Hp; ++yy)
              for (int xx = 0; xx < Wp; ++xx) {
                double dot = 0;
                for (int k = 0; k < d; ++k) {
                  dot += at(n, y, xq, m * d + k) * at(n, reflect(yy, H), reflect(xx, W), C + m * d + k);
                }
                dot /= std::sqrt(static_cast<double>(d));
                const bool same = y / sh == yy / sh && xq / sw == xx / sw;
                dot += same ? position_bias(p, m, y % sh - yy % sh, xq % sw - xx % sw, sh, sw) : -1e9;
                s.push_back(dot);
              }
            const auto w = softmax(std::move(s));
            for (int k = 0; k < d; ++k) {
              double acc = 0;
              for (int yy = 0; yy < Hp; ++yy)
                for (int xx = 0; xx < Wp; ++xx) {
                  acc += w[static_cast<std::size_t>(yy) * Wp + xx] *
                         at(n, reflect(yy, H), reflect(xx, W), 2 * C + m * d + k);
                }
              heads[((static_cast<std::size_t>(n) * H + y) * W + xq) * C + m * d + k] = acc;
            }
          }
  }
  if (lcm) {
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int xq = 0; xq < W; ++xq)
          for (int c = 0; c < C; ++c) {
            double acc = p.lcm_b[c];
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int yy = y + ky - 1, xx = xq + kx - 1;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += p.lcm_w[(ky * 3 + kx) * C + c] * at(n, yy, xx, 2 * C + c);
              }
            heads[((static_cast<std::size_t>(n) * H + y) * W + xq) * C + c] += acc;
          }
  }
  std::vector<double> out(heads.size());
  for (std::size_t px = 0; px < heads.size() / C; ++px)
    for (int o = 0; o < C; ++o) {
      double acc = p.proj_b[o];
      for (int i = 0; i < C; ++i) acc += heads[px * C + i] * p.proj_w[i * C + o];
      out[px * C + o] = acc;
    }
  return out;
}

std::vector<double> window_attention(const std::vector<double>& qkv, int n, int H, int W,
                                     const DenseAttention& p, int m,
                                     const std::vector<std::pair<int, int>>& pixels, int sh, int sw) {
  const int C = p.C, d = C / p.M;
  const int L = static_cast<int>(pixels.size());
  auto at = [&](std::pair<int, int> px, int ch) {
    const int y = reflect(px.first, H), x = reflect(px.second, W);
    return qkv[((static_cast<std::size_t>(n) * H + y) * W + x) * 3 * C + ch];
  };
  std::vector<double> out(static_cast<std::size_t>(L) * d);
  for (int i = 0; i < L; ++i) {
    std::vector<double> s(static_cast<std::size_t>(L));
    for (int j = 0; j < L; ++j) {
      double dot = 0;
      for (int k = 0; k < d; ++k) dot += at(pixels[i], m * d + k) * at(pixels[j], C + m * d + k);
      s[j] = dot / std::sqrt(static_cast<double>(d)) +
             position_bias(p, m, i / sw - j / sw, i % sw - j % sw, sh, sw);
    }
    const auto w = softmax(std::move(s));
    for (int k = 0; k < d; ++k) {
      double acc = 0;
      for (int j = 0; j < L; ++j) acc += w[j] * at(pixels[j], 2 * C + m * d + k);
      out[static_cast<std::size_t>(i) * d + k] = acc;
    }
  }
  return out;
}

template DenseAttention densify(const AttentionParams<float>&);
template DenseAttention densify(const AttentionParams<double>&);
template AttentionParams<float> random_attention(int, int, int, std::mt19937_64&, double);
template AttentionParams<double> random_attention(int, int, int, std::mt19937_64&, double);
template Tensor<float> random_tensor(const Shape&, std::mt19937_64&, double);
template Tensor<double> random_tensor(const Shape&, std::mt19937_64&, double);

}  // namespace cat::oracle
