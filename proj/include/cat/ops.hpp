#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cat/autograd.hpp"
#include "cat/tensor.hpp"

namespace cat {

// out[i] = in[src[i]]. Every rearrangement in the model (window partition,
// cyclic shift, padding, cropping, head split, pixel shuffle) is one of these;
// the backward pass scatter-adds, which also covers non-injective maps such
// as reflect padding.
struct IndexMap {
  Shape in_shape;
  Shape out_shape;
  std::vector<std::int64_t> src;
};
using IndexMapPtr = std::shared_ptr<const IndexMap>;

// result[i] = inner.src[outer.src[i]]: apply `inner` first, then `outer`.
IndexMapPtr compose(const IndexMap& inner, const IndexMap& outer);
// Inverse of a bijective map; throws ContractError if `map` is not one.
IndexMapPtr invert_permutation(const IndexMap& map);
IndexMapPtr pixel_shuffle_map(const Shape& in_shape, int r);

template <typename T>
Var<T> gather(const Var<T>& x, const IndexMapPtr& map);

/// [m,k] x [k,n] -> [m,n].
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// Batched product over the leading extent: [B,m,k] x [B,k,n] -> [B,m,n], or
/// [B,m,k] x [B,n,k]^T when transpose_b is set.
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

/// Max-subtracted softmax over the last dimension.
template <typename T>
Var<T> softmax_lastdim(const Var<T>& x);

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);

/// Exact erf form: 0.5 x (1 + erf(x / sqrt 2)).
template <typename T>
Var<T> gelu(const Var<T>& x);

template <typename T>
Var<T> relu(const Var<T>& x);

/// Affine map over the last dimension with weight [Cin, Cout].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w);
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// 3x3 cross-correlation on [N,H,W,C] with one pixel of zero padding.
/// Dense kernels are [3,3,Cin,Cout]; depthwise kernels are [3,3,C,1].
template <typename T>
Var<T> conv2d_3x3(const Var<T>& x, const Var<T>& k, const Var<T>& b, bool depthwise = false);

/// [N,H,W,C*r*r] -> [N,rH,rW,C]; channel c*r*r + dy*r + dx lands at (h*r+dy, w*r+dx).
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

// x viewed as [outer, G, repeat, inner] plus y viewed as [G, inner], where
// G is y's leading extent.
template <typename T>
Var<T> add_broadcast(const Var<T>& x, const Var<T>& y, std::int64_t outer, std::int64_t repeat);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, double s);

template <typename T>
Var<T> concat_lastdim(const Var<T>& a, const Var<T>& b);

/// Sum of all elements as a rank-0 tensor.
template <typename T>
Var<T> sum(const Var<T>& x);

/// Mean absolute error against a constant target.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target);

}  // namespace cat
