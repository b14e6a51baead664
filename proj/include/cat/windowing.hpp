#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cat/ops.hpp"
#include "cat/tensor.hpp"

namespace cat {

enum class WindowKind { Regular, Axial };
enum class Orientation { Horizontal, Vertical };

// Regular windows are sh x sw rectangles; axial windows span the whole
// image along one axis and are `sl` wide along the other.
struct WindowSpec {
  WindowKind kind = WindowKind::Regular;
  int sh = 1;
  int sw = 1;
  int sl = 1;

  static WindowSpec regular(int sh, int sw);
  static WindowSpec axial(int sl);
  void validate() const;
  std::string describe() const;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

// Window layout for one attention invocation over an H x W map. The map is
// reflect-padded on the right/bottom to (H + ph) x (W + pw), then rolled
// down by dy and left by dx before partitioning.
struct WindowGeometry {
  Orientation orientation = Orientation::Horizontal;
  int sh = 1;
  int sw = 1;
  int dy = 0;
  int dx = 0;
  int ph = 0;
  int pw = 0;
  int H = 1;
  int W = 1;

  int padded_h() const { return H + ph; }
  int padded_w() const { return W + pw; }
  int window_area() const { return sh * sw; }
  int window_count() const { return (padded_h() / sh) * (padded_w() / sw); }
  bool shifted() const { return dy != 0 || dx != 0; }
  std::string key() const;
  friend bool operator==(const WindowGeometry&, const WindowGeometry&) = default;
};

WindowGeometry resolve_geometry(const WindowSpec& spec, Orientation orientation, int H, int W,
                                bool shifted);

// ---- index maps (all rearrangements are gathers) ----

/// Reflect padding on the right/bottom of [N,H,W,C].
IndexMapPtr reflect_pad_map(const Shape& in, int ph, int pw);
/// Keeps the top-left H x W block of [N,Hp,Wp,C].
IndexMapPtr crop_map(const Shape& in, int H, int W);
/// Rolls rows down by dy and columns left by dx (both taken modulo extent).
IndexMapPtr cyclic_shift_map(const Shape& in, int dy, int dx);
/// [N,H,W,C] -> [N*nw, sh*sw, C], windows and pixels enumerated row-major.
IndexMapPtr partition_map(const Shape& in, int sh, int sw);

// ---- tensor-level operations ----

template <typename T>
Var<T> partition(const Var<T>& x, const WindowGeometry& g);
template <typename T>
Var<T> merge(const Var<T>& windows, const WindowGeometry& g, std::int64_t N, std::int64_t H,
             std::int64_t W);
template <typename T>
Var<T> cyclic_shift(const Var<T>& x, int dy, int dx);

constexpr double kMaskValue = -1e9;

/// Region id per pixel of the padded, shifted map (row-major over
/// padded_h x padded_w): pixels that wrapped around during the roll get a
/// different id from pixels that did not, per axis.
std::vector<int> shift_region_ids(const WindowGeometry& g);

/// [nw, L, L] additive mask with 0 for same-region pairs and kMaskValue
/// otherwise. All zero for unshifted geometries. Cached per geometry.
template <typename T>
const Tensor<T>& build_shift_mask(const WindowGeometry& g);

}  // namespace cat
