#include "cat/windowing.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>

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

void require_nhwc(const Shape& in, const char* op) {
  if (in.size() != 4) throw DimensionError(std::string(op) + ": expected [N,H,W,C], got " + shape_str(in));
}

}  // namespace

WindowSpec WindowSpec::regular(int sh, int sw) {
  WindowSpec s;
  s.kind = WindowKind::Regular;
  s.sh = sh;
  s.sw = sw;
  s.validate();
  return s;
}

WindowSpec WindowSpec::axial(int sl) {
  WindowSpec s;
  s.kind = WindowKind::Axial;
  s.sl = sl;
  s.validate();
  return s;
}

void WindowSpec::validate() const {
  if (kind == WindowKind::Regular && (sh < 1 || sw < 1)) {
    throw ConfigError("regular window extents must be >= 1, got " + describe());
  }
  if (kind == WindowKind::Axial && sl < 1) {
    throw ConfigError("axial window side must be >= 1, got " + describe());
  }
}

std::string WindowSpec::describe() const {
  if (kind == WindowKind::Regular) {
    return "regular(" + std::to_string(sh) + "x" + std::to_string(sw) + ")";
  }
  return "axial(sl=" + std::to_string(sl) + ")";
}

std::string WindowGeometry::key() const {
  return std::to_string(orientation == Orientation::Horizontal ? 0 : 1) + ':' +
         std::to_string(sh) + ',' + std::to_string(sw) + ':' + std::to_string(dy) + ',' +
         std::to_string(dx) + ':' + std::to_string(ph) + ',' + std::to_string(pw) + ':' +
         std::to_string(H) + ',' + std::to_string(W);
}

WindowGeometry resolve_geometry(const WindowSpec& spec, Orientation orientation, int H, int W,
                                bool shifted) {
  spec.validate();
  if (H < 1 || W < 1) throw DimensionError("resolve_geometry: resolution must be positive");
  WindowGeometry g;
  g.orientation = orientation;
  g.H = H;
  g.W = W;
  const bool horizontal = orientation == Orientation::Horizontal;
  bool full_rows = false, full_cols = false;
  if (spec.kind == WindowKind::Regular) {
    const int lo = std::min(spec.sh, spec.sw), hi = std::max(spec.sh, spec.sw);
    g.sh = horizontal ? lo : hi;
    g.sw = horizontal ? hi : lo;
  } else if (horizontal) {
    g.sh = spec.sl;
    g.sw = W;
    full_cols = true;
  } else {
    g.sh = H;
    g.sw = spec.sl;
    full_rows = true;
  }
  g.ph = (g.sh - H % g.sh) % g.sh;
  g.pw = (g.sw - W % g.sw) % g.sw;
  // A single window along an axis sees the same partition however it is
  // rolled, so a shift there would only add a masked seam.
  full_rows = full_rows || g.padded_h() == g.sh;
  full_cols = full_cols || g.padded_w() == g.sw;
  if (shifted) {
    g.dy = full_rows ? 0 : g.sh / 2;
    g.dx = full_cols ? 0 : g.sw / 2;
  }
  return g;
}

IndexMapPtr reflect_pad_map(const Shape& in, int ph, int pw) {
  require_nhwc(in, "reflect_pad");
  const i64 N = in[0], H = in[1], W = in[2], C = in[3];
  const i64 Hp = H + ph, Wp = W + pw;
  auto map = std::make_shared<IndexMap>();
  map->in_shape = in;
  map->out_shape = {N, Hp, Wp, C};
  map->src.reserve(static_cast<std::size_t>(N * Hp * Wp * C));
  for (i64 n = 0; n < N; ++n)
    for (i64 y = 0; y < Hp; ++y)
      for (i64 x = 0; x < Wp; ++x) {
        const i64 base = ((n * H + reflect_index(y, H)) * W + reflect_index(x, W)) * C;
        for (i64 c = 0; c < C; ++c) map->src.push_back(base + c);
      }
  return map;
}

IndexMapPtr crop_map(const Shape& in, int H, int W) {
  require_nhwc(in, "crop");
  const i64 N = in[0], Hp = in[1], Wp = in[2], C = in[3];
  if (H > Hp || W > Wp) throw DimensionError("crop: target larger than " + shape_str(in));
  auto map = std::make_shared<IndexMap>();
  map->in_shape = in;
  map->out_shape = {N, H, W, C};
  map->src.reserve(static_cast<std::size_t>(N * H * W * C));
  for (i64 n = 0; n < N; ++n)
    for (i64 y = 0; y < H; ++y)
      for (i64 x = 0; x < W; ++x)
        for (i64 c = 0; c < C; ++c) map->src.push_back(((n * Hp + y) * Wp + x) * C + c);
  return map;
}

IndexMapPtr cyclic_shift_map(const Shape& in, int dy, int dx) {
  require_nhwc(in, "cyclic_shift");
  const i64 N = in[0], H = in[1], W = in[2], C = in[3];
  auto map = std::make_shared<IndexMap>();
  map->in_shape = in;
  map->out_shape = in;
  map->src.reserve(static_cast<std::size_t>(shape_numel(in)));
  for (i64 n = 0; n < N; ++n)
    for (i64 y = 0; y < H; ++y)
      for (i64 x = 0; x < W; ++x) {
        const i64 base = ((n * H + wrap(y - dy, H)) * W + wrap(x + dx, W)) * C;
        for (i64 c = 0; c < C; ++c) map->src.push_back(base + c);
      }
  return map;
}

IndexMapPtr partition_map(const Shape& in, int sh, int sw) {
  require_nhwc(in, "partition");
  const i64 N = in[0], H = in[1], W = in[2], C = in[3];
  if (sh < 1 || sw < 1 || H % sh != 0 || W % sw != 0) {
    throw ContractError("partition: " + std::to_string(H) + "x" + std::to_string(W) +
                        " is not divisible into " + std::to_string(sh) + "x" +
                        std::to_string(sw) + " windows");
  }
  const i64 wy_n = H / sh, wx_n = W / sw;
  auto map = std::make_shared<IndexMap>();
  map->in_shape = in;
  map->out_shape = {N * wy_n * wx_n, static_cast<i64>(sh) * sw, C};
  map->src.reserve(static_cast<std::size_t>(shape_numel(in)));
  for (i64 n = 0; n < N; ++n)
    for (i64 wy = 0; wy < wy_n; ++wy)
      for (i64 wx = 0; wx < wx_n; ++wx)
        for (i64 iy = 0; iy < sh; ++iy)
          for (i64 ix = 0; ix < sw; ++ix) {
            const i64 base = ((n * H + wy * sh + iy) * W + wx * sw + ix) * C;
            for (i64 c = 0; c < C; ++c) map->src.push_back(base + c);
          }
  return map;
}

template <typename T>
Var<T> partition(const Var<T>& x, const WindowGeometry& g) {
  return gather(x, partition_map(x.shape(), g.sh, g.sw));
}

template <typename T>
Var<T> merge(const Var<T>& windows, const WindowGeometry& g, i64 N, i64 H, i64 W) {
  const Shape& s = windows.shape();
  if (s.size() != 3 || H % g.sh != 0 || W % g.sw != 0 ||
      s[0] != N * (H / g.sh) * (W / g.sw) || s[1] != static_cast<i64>(g.sh) * g.sw) {
    throw ContractError("merge: windows " + shape_str(s) + " inconsistent with " +
                        std::to_string(N) + "x" + std::to_string(H) + "x" + std::to_string(W) +
                        " and window " + std::to_string(g.sh) + "x" + std::to_string(g.sw));
  }
  const auto forward = partition_map({N, H, W, s[2]}, g.sh, g.sw);
  return gather(windows, invert_permutation(*forward));
}

template <typename T>
Var<T> cyclic_shift(const Var<T>& x, int dy, int dx) {
  return gather(x, cyclic_shift_map(x.shape(), dy, dx));
}

std::vector<int> shift_region_ids(const WindowGeometry& g) {
  const int Hp = g.padded_h(), Wp = g.padded_w();
  std::vector<int> ids(static_cast<std::size_t>(Hp) * Wp);
  for (int y = 0; y < Hp; ++y)
    for (int x = 0; x < Wp; ++x) {
      // Rolling down moves the last dy rows to the top; rolling left moves
      // the first dx columns to the right end.
      const int row_band = y < g.dy ? 1 : 0;
      const int col_band = x >= Wp - g.dx ? 1 : 0;
      ids[static_cast<std::size_t>(y) * Wp + x] = row_band * 2 + col_band;
    }
  return ids;
}

namespace {

template <typename T>
Tensor<T> compute_shift_mask(const WindowGeometry& g) {
  const int Wp = g.padded_w();
  const i64 L = g.window_area();
  const i64 nw = g.window_count();
  Tensor<T> mask({nw, L, L});
  if (!g.shifted()) return mask;
  const auto ids = shift_region_ids(g);
  const int wx_n = Wp / g.sw;
  std::vector<int> local(static_cast<std::size_t>(L));
  for (i64 w = 0; w < nw; ++w) {
    const int wy = static_cast<int>(w / wx_n), wx = static_cast<int>(w % wx_n);
    for (int iy = 0; iy < g.sh; ++iy)
      for (int ix = 0; ix < g.sw; ++ix) {
        const int y = wy * g.sh + iy, x = wx * g.sw + ix;
        local[static_cast<std::size_t>(iy * g.sw + ix)] = ids[static_cast<std::size_t>(y) * Wp + x];
      }
    T* m = mask.data().data() + w * L * L;
    for (i64 i = 0; i < L; ++i)
      for (i64 j = 0; j < L; ++j) {
        m[i * L + j] = local[static_cast<std::size_t>(i)] == local[static_cast<std::size_t>(j)]
                           ? T{0}
                           : static_cast<T>(kMaskValue);
      }
  }
  return mask;
}

}  // namespace

template <typename T>
const Tensor<T>& build_shift_mask(const WindowGeometry& g) {
  static std::shared_mutex mutex;
  static std::map<std::string, std::unique_ptr<const Tensor<T>>> cache;
  const std::string key = g.key();
  {
    std::shared_lock lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return *it->second;
  }
  auto mask = std::make_unique<const Tensor<T>>(compute_shift_mask<T>(g));
  std::unique_lock lock(mutex);
  auto [it, inserted] = cache.try_emplace(key, std::move(mask));
  return *it->second;
}

#define CAT_INSTANTIATE_WINDOWING(T)                                              \
  template Var<T> partition(const Var<T>&, const WindowGeometry&);                \
  template Var<T> merge(const Var<T>&, const WindowGeometry&, i64, i64, i64);     \
  template Var<T> cyclic_shift(const Var<T>&, int, int);                          \
  template const Tensor<T>& build_shift_mask(const WindowGeometry&);

CAT_INSTANTIATE_WINDOWING(float)
CAT_INSTANTIATE_WINDOWING(double)

}  // namespace cat
