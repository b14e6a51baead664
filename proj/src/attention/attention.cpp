#include "cat/attention.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include "cat/ops.hpp"

namespace cat {
namespace {

using i64 = std::int64_t;

i64 reflect_index(i64 i, i64 n) {
  if (n == 1) return 0;
  const i64 period = 2 * (n - 1);
  const i64 m = i % period;
  return m < n ? m : period - m;
}

i64 wrap(i64 i, i64 n) { return ((i % n) + n) % n; }

// Single-writer, multi-reader memo keyed by string.
template <typename V>
class Memo {
 public:
  template <typename Make>
  std::shared_ptr<const V> get(const std::string& key, Make&& make) {
    {
      std::shared_lock lock(mutex_);
      if (auto it = items_.find(key); it != items_.end()) return it->second;
    }
    auto value = std::make_shared<const V>(make());
    std::unique_lock lock(mutex_);
    return items_.try_emplace(key, std::move(value)).first->second;
  }

 private:
  std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const V>> items_;
};

Memo<IndexMap>& map_memo() {
  static Memo<IndexMap> memo;
  return memo;
}

// qkv [N,H,W,3C] -> [N*nw*h, L, d] for heads [0, h) starting at channel
// `base`, including padding, the roll and the window partition.
IndexMapPtr window_gather_map(const WindowGeometry& g, i64 N, i64 C3, i64 base, i64 h, i64 d) {
  const std::string key = "in:" + g.key() + ':' + std::to_string(N) + ':' + std::to_string(C3) +
                          ':' + std::to_string(base) + ':' + std::to_string(h) + ':' +
                          std::to_string(d);
  return map_memo().get(key, [&] {
    const i64 H = g.H, W = g.W, Hp = g.padded_h(), Wp = g.padded_w();
    const i64 L = g.window_area(), nw = g.window_count(), wx_n = Wp / g.sw;
    IndexMap map;
    map.in_shape = {N, H, W, C3};
    map.out_shape = {N * nw * h, L, d};
    map.src.reserve(static_cast<std::size_t>(N * nw * h * L * d));
    for (i64 n = 0; n < N; ++n)
      for (i64 w = 0; w < nw; ++w)
        for (i64 head = 0; head < h; ++head)
          for (i64 p = 0; p < L; ++p) {
            const i64 ys = (w / wx_n) * g.sh + p / g.sw;
            const i64 xs = (w % wx_n) * g.sw + p % g.sw;
            const i64 y = reflect_index(wrap(ys - g.dy, Hp), H);
            const i64 x = reflect_index(wrap(xs + g.dx, Wp), W);
            const i64 pix = ((n * H + y) * W + x) * C3 + base + head * d;
            for (i64 k = 0; k < d; ++k) map.src.push_back(pix + k);
          }
    return map;
  });
}

// Inverse direction: [N*nw*h, L, d] -> [N,H,W,h*d] on the original grid.
IndexMapPtr window_scatter_map(const WindowGeometry& g, i64 N, i64 h, i64 d) {
  const std::string key = "out:" + g.key() + ':' + std::to_string(N) + ':' + std::to_string(h) +
                          ':' + std::to_string(d);
  return map_memo().get(key, [&] {
    const i64 H = g.H, W = g.W, Hp = g.padded_h(), Wp = g.padded_w();
    const i64 L = g.window_area(), nw = g.window_count(), wx_n = Wp / g.sw;
    IndexMap map;
    map.in_shape = {N * nw * h, L, d};
    map.out_shape = {N, H, W, h * d};
    map.src.reserve(static_cast<std::size_t>(N * H * W * h * d));
    for (i64 n = 0; n < N; ++n)
      for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x) {
          const i64 ys = wrap(y + g.dy, Hp), xs = wrap(x - g.dx, Wp);
          const i64 w = (ys / g.sh) * wx_n + xs / g.sw;
          const i64 p = (ys % g.sh) * g.sw + xs % g.sw;
          for (i64 head = 0; head < h; ++head)
            for (i64 k = 0; k < d; ++k) map.src.push_back((((n * nw + w) * h + head) * L + p) * d + k);
        }
    return map;
  });
}

IndexMapPtr channel_slice_map(const Shape& in, i64 begin, i64 count) {
  const std::string key = "slice:" + shape_str(in) + ':' + std::to_string(begin) + ':' +
                          std::to_string(count);
  return map_memo().get(key, [&] {
    const i64 C = in.back(), rows = shape_numel(in) / C;
    IndexMap map;
    map.in_shape = in;
    map.out_shape = in;
    map.out_shape.back() = count;
    map.src.reserve(static_cast<std::size_t>(rows * count));
    for (i64 r = 0; r < rows; ++r)
      for (i64 c = 0; c < count; ++c) map.src.push_back(r * C + begin + c);
    return map;
  });
}

// table [P, M] -> [count, L, L] for heads [begin, begin + count).
IndexMapPtr bias_gather_map(int sh, int sw, i64 M, i64 begin, i64 count) {
  const std::string key = "bias:" + std::to_string(sh) + ',' + std::to_string(sw) + ':' +
                          std::to_string(M) + ':' + std::to_string(begin) + ':' +
                          std::to_string(count);
  return map_memo().get(key, [&] {
    const auto& offsets = relative_offsets(sh, sw);
    const i64 L = static_cast<i64>(sh) * sw;
    IndexMap map;
    map.in_shape = {offsets.count, M};
    map.out_shape = {count, L, L};
    map.src.reserve(static_cast<std::size_t>(count * L * L));
    for (i64 m = begin; m < begin + count; ++m)
      for (i64 ij = 0; ij < L * L; ++ij) map.src.push_back(offsets.index[static_cast<std::size_t>(ij)] * M + m);
    return map;
  });
}

template <typename T>
Var<T> bias_table(const WindowGeometry& g, const PositionBiasNet<T>& net) {
  const auto& offsets = relative_offsets(g.sh, g.sw);
  std::vector<T> coords(offsets.coords.begin(), offsets.coords.end());
  Var<T> in(Tensor<T>({offsets.count, 2}, std::move(coords)));
  Var<T> hidden = relu(linear(in, net.w1, net.b1));
  hidden = relu(linear(hidden, net.w2, net.b2));
  return linear(hidden, net.w3, net.b3);
}

}  // namespace

template <typename T>
void AttentionParams<T>::validate() const {
  const i64 C = qkv_w.value().rank() == 2 ? qkv_w.value().dim(0) : -1;
  if (heads < 2 || heads % 2 != 0) {
    throw ConfigError("attention head count must be even and >= 2, got " + std::to_string(heads));
  }
  if (C < 1 || C % heads != 0) {
    throw ConfigError("channels " + std::to_string(C) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (qkv_w.shape() != Shape{C, 3 * C} || qkv_b.shape() != Shape{3 * C}) {
    throw DimensionError("qkv projection must be [C,3C] + [3C], got " + shape_str(qkv_w.shape()) +
                         " + " + shape_str(qkv_b.shape()));
  }
  if (proj_w.shape() != Shape{C, C} || proj_b.shape() != Shape{C}) {
    throw DimensionError("output projection must be [C,C] + [C], got " +
                         shape_str(proj_w.shape()) + " + " + shape_str(proj_b.shape()));
  }
  if (pos.heads() != heads) {
    throw ConfigError("position-bias net emits " + std::to_string(pos.heads()) +
                      " biases for " + std::to_string(heads) + " heads");
  }
}

const RelativeOffsets& relative_offsets(int sh, int sw) {
  // Entries are never evicted, so references stay valid.
  static Memo<RelativeOffsets> memo;
  const std::string key = std::to_string(sh) + ',' + std::to_string(sw);
  return *memo.get(key, [&] {
    RelativeOffsets r;
    const i64 span_x = 2 * sw - 1;
    r.count = static_cast<i64>(2 * sh - 1) * span_x;
    const double ny = sh > 1 ? sh - 1 : 1, nx = sw > 1 ? sw - 1 : 1;
    r.coords.reserve(static_cast<std::size_t>(r.count * 2));
    for (i64 oy = -(sh - 1); oy <= sh - 1; ++oy)
      for (i64 ox = -(sw - 1); ox <= sw - 1; ++ox) {
        r.coords.push_back(static_cast<double>(oy) / ny);
        r.coords.push_back(static_cast<double>(ox) / nx);
      }
    const i64 L = static_cast<i64>(sh) * sw;
    r.index.reserve(static_cast<std::size_t>(L * L));
    for (i64 i = 0; i < L; ++i)
      for (i64 j = 0; j < L; ++j) {
        const i64 oy = i / sw - j / sw, ox = i % sw - j % sw;
        r.index.push_back((oy + sh - 1) * span_x + (ox + sw - 1));
      }
    return r;
  });
}

template <typename T>
Var<T> relative_position_bias(const WindowGeometry& g, const PositionBiasNet<T>& net) {
  const i64 M = net.heads();
  return gather(bias_table(g, net), bias_gather_map(g.sh, g.sw, M, 0, M));
}

template <typename T>
Var<T> locality_complement(const Var<T>& v, const AttentionParams<T>& p) {
  if (v.shape().size() != 4 || p.lcm_w.shape() != Shape{3, 3, v.shape()[3], 1}) {
    throw DimensionError("locality_complement: kernel " + shape_str(p.lcm_w.shape()) +
                         " does not match value map " + shape_str(v.shape()));
  }
  return conv2d_3x3(v, p.lcm_w, p.lcm_b, /*depthwise=*/true);
}

template <typename T>
Var<T> rwin_self_attention(const Var<T>& x, const AttentionParams<T>& p, const WindowSpec& spec,
                           bool shifted, bool lcm, AttentionTrace<T>* trace) {
  p.validate();
  const Shape& s = x.shape();
  const i64 C = p.channels();
  if (s.size() != 4 || s[3] != C) {
    throw ConfigError("rwin_self_attention: input " + shape_str(s) + " does not carry " +
                      std::to_string(C) + " channels");
  }
  const i64 N = s[0];
  const int H = static_cast<int>(s[1]), W = static_cast<int>(s[2]);
  const i64 M = p.heads, d = C / M, h = M / 2;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  const Var<T> qkv = linear(x, p.qkv_w, p.qkv_b);

  Var<T> halves[2];
  for (int group = 0; group < 2; ++group) {
    const auto orientation = group == 0 ? Orientation::Horizontal : Orientation::Vertical;
    const WindowGeometry g = resolve_geometry(spec, orientation, H, W, shifted);
    const i64 head_begin = group * h;
    const i64 ch = head_begin * d;

    const Var<T> q = gather(qkv, window_gather_map(g, N, 3 * C, ch, h, d));
    const Var<T> k = gather(qkv, window_gather_map(g, N, 3 * C, C + ch, h, d));
    const Var<T> v = gather(qkv, window_gather_map(g, N, 3 * C, 2 * C + ch, h, d));

    Var<T> scores = scale(bmm(q, k, /*transpose_b=*/true), inv_sqrt_d);
    const Var<T> bias =
        gather(bias_table(g, p.pos), bias_gather_map(g.sh, g.sw, M, head_begin, h));
    scores = add_broadcast(scores, bias, N * g.window_count(), 1);
    if (g.shifted()) {
      const Var<T> mask(build_shift_mask<T>(g));
      scores = add_broadcast(scores, mask, N, h);
    }
    const Var<T> weights = softmax_lastdim(scores);
    const Var<T> out = bmm(weights, v);
    halves[group] = gather(out, window_scatter_map(g, N, h, d));

    if (trace) {
      trace->groups.push_back({g, static_cast<int>(head_begin), static_cast<int>(h),
                               weights.value(), halves[group].value()});
    }
  }

  Var<T> y = concat_lastdim(halves[0], halves[1]);
  if (lcm) {
    const Var<T> v_full = gather(qkv, channel_slice_map(qkv.shape(), 2 * C, C));
    y = add(y, locality_complement(v_full, p));
  }
  return linear(y, p.proj_w, p.proj_b);
}

#define CAT_INSTANTIATE_ATTENTION(T)                                                          \
  template void AttentionParams<T>::validate() const;                                         \
  template Var<T> relative_position_bias(const WindowGeometry&, const PositionBiasNet<T>&);   \
  template Var<T> locality_complement(const Var<T>&, const AttentionParams<T>&);              \
  template Var<T> rwin_self_attention(const Var<T>&, const AttentionParams<T>&,               \
                                      const WindowSpec&, bool, bool, AttentionTrace<T>*);

CAT_INSTANTIATE_ATTENTION(float)
CAT_INSTANTIATE_ATTENTION(double)

}  // namespace cat
