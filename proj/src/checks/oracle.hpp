#pragma once

// Slow reference computations written straight from the definitions, with
// their own indexing and padding. They share no index maps with the library.

#include <cstdint>
#include <random>
#include <vector>

#include "cat/attention.hpp"

namespace cat::oracle {

// Attention parameters copied out to plain double arrays.
struct DenseAttention {
  int C = 0, M = 0, P = 0;
  std::vector<double> qkv_w, qkv_b, proj_w, proj_b, lcm_w, lcm_b;
  std::vector<double> w1, b1, w2, b2, w3, b3;
};

template <typename T>
DenseAttention densify(const AttentionParams<T>& p);

/// Uniform(-scale, scale) entries; the position-bias hidden width is `hidden`.
template <typename T>
AttentionParams<T> random_attention(int C, int M, int hidden, std::mt19937_64& rng, double scale);

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0);

/// Window shape (rows, cols) a head group uses, straight from the rules.
std::pair<int, int> window_shape(const WindowSpec& spec, int group, int H, int W);

int reflect(int i, int n);

/// [N,H,W,3C] per-pixel projection.
std::vector<double> project_qkv(const std::vector<double>& x, int N, int H, int W,
                                const DenseAttention& p);

/// Bias for head m at offset (query - key) inside an sh x sw window.
double position_bias(const DenseAttention& p, int m, int oy, int ox, int sh, int sw);

/// Full attention over the padded map where pairs in different windows get
/// -1e9, plus optional locality term and output projection. Unshifted only.
std::vector<double> masked_full_attention(const std::vector<double>& x, int N, int H, int W,
                                          const DenseAttention& p, const WindowSpec& spec, bool lcm);

/// Unmasked attention of head m among `pixels` (padded-frame coordinates,
/// row-major within an sh x sw window). Returns [pixels, d].
std::vector<double> window_attention(const std::vector<double>& qkv, int n, int H, int W,
                                     const DenseAttention& p, int m,
                                     const std::vector<std::pair<int, int>>& pixels, int sh, int sw);

}  // namespace cat::oracle
