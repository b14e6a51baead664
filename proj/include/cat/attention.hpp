#pragma once

#include <cstdint>
#include <vector>

#include "cat/autograd.hpp"
#include "cat/windowing.hpp"

namespace cat {

// Maps a normalized relative offset (dy, dx) in [-1, 1]^2 to one bias per
// head: linear(2 -> hidden) -> relu -> linear(hidden -> hidden) -> relu ->
// linear(hidden -> M).
template <typename T>
struct PositionBiasNet {
  Var<T> w1, b1;  // [2, hidden], [hidden]
  Var<T> w2, b2;  // [hidden, hidden], [hidden]
  Var<T> w3, b3;  // [hidden, M], [M]

  std::int64_t heads() const { return w3.value().dim(1); }
};

template <typename T>
struct AttentionParams {
  Var<T> qkv_w, qkv_b;    // [C, 3C], [3C]; Q | K | V along the output axis
  Var<T> proj_w, proj_b;  // [C, C], [C]
  Var<T> lcm_w, lcm_b;    // [3, 3, C, 1], [C]; unused when the LCM is off
  PositionBiasNet<T> pos;
  int heads = 2;

  std::int64_t channels() const { return qkv_w.value().dim(0); }
  void validate() const;
};

// Distinct relative offsets of an sh x sw window. coords is [P, 2] with
// P = (2sh-1)(2sw-1); index[i*L + j] names the row of coords holding
// pos(i) - pos(j).
struct RelativeOffsets {
  std::int64_t count = 0;
  std::vector<double> coords;
  std::vector<std::int64_t> index;
};

/// Cached per (sh, sw).
const RelativeOffsets& relative_offsets(int sh, int sw);

/// [M, L, L] with entry (m, i, j) = net_m(offset(i, j)).
template <typename T>
Var<T> relative_position_bias(const WindowGeometry& g, const PositionBiasNet<T>& net);

// Optional inspection hook: per head group, the resolved geometry, the
// softmax weights [N*nw*h, L, L] (batch index (n*nw + w)*h + head) and the
// merged group output [N, H, W, C/2] before concatenation.
template <typename T>
struct AttentionTrace {
  struct Group {
    WindowGeometry geometry;
    int head_begin = 0;
    int head_count = 0;
    Tensor<T> weights;
    Tensor<T> output;
  };
  std::vector<Group> groups;
};

/// Rectangle-window self-attention over [N,H,W,C]. The first half of the
/// heads attends in horizontal windows, the second half in vertical ones.
template <typename T>
Var<T> rwin_self_attention(const Var<T>& x, const AttentionParams<T>& p, const WindowSpec& spec,
                           bool shifted, bool lcm, AttentionTrace<T>* trace = nullptr);

/// Depthwise 3x3 convolution of the full-resolution value map.
template <typename T>
Var<T> locality_complement(const Var<T>& v, const AttentionParams<T>& p);

}  // namespace cat
