#include "cat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace cat {
namespace {

using i64 = std::int64_t;

// C (+)= op(A) * op(B) with op(A) [m,k] and op(B) [k,n]. A transposed is
// stored [k,m]; B transposed is stored [n,k].
template <typename T>
void gemm(bool ta, bool tb, i64 m, i64 n, i64 k, const T* A, const T* B, T* C) {
  if (!ta && !tb) {
    for (i64 i = 0; i < m; ++i) {
      T* c = C + i * n;
      for (i64 p = 0; p < k; ++p) {
        const T a = A[i * k + p];
        if (a == T{0}) continue;
        const T* b = B + p * n;
        for (i64 j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else if (!ta && tb) {
    for (i64 i = 0; i < m; ++i) {
      const T* a = A + i * k;
      for (i64 j = 0; j < n; ++j) {
        const T* b = B + j * k;
        T acc{0};
        for (i64 p = 0; p < k; ++p) acc += a[p] * b[p];
        C[i * n + j] += acc;
      }
    }
  } else if (ta && !tb) {
    for (i64 p = 0; p < k; ++p) {
      const T* b = B + p * n;
      for (i64 i = 0; i < m; ++i) {
        const T a = A[p * m + i];
        if (a == T{0}) continue;
        T* c = C + i * n;
        for (i64 j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else {
    for (i64 i = 0; i < m; ++i)
      for (i64 j = 0; j < n; ++j) {
        T acc{0};
        for (i64 p = 0; p < k; ++p) acc += A[p * m + i] * B[j * k + p];
        C[i * n + j] += acc;
      }
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

template <typename T>
void accumulate(Tensor<T>* dst, std::span<const T> src) {
  if (!dst) return;
  auto d = dst->data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

}  // namespace

IndexMapPtr compose(const IndexMap& inner, const IndexMap& outer) {
  if (shape_numel(outer.in_shape) != shape_numel(inner.out_shape)) {
    throw DimensionError("compose: " + shape_str(inner.out_shape) + " does not feed " +
                         shape_str(outer.in_shape));
  }
  auto out = std::make_shared<IndexMap>();
  out->in_shape = inner.in_shape;
  out->out_shape = outer.out_shape;
  out->src.resize(outer.src.size());
  for (std::size_t i = 0; i < outer.src.size(); ++i) {
    out->src[i] = inner.src[static_cast<std::size_t>(outer.src[i])];
  }
  return out;
}

IndexMapPtr invert_permutation(const IndexMap& map) {
  const i64 n = shape_numel(map.in_shape);
  if (static_cast<i64>(map.src.size()) != n) {
    throw ContractError("invert_permutation: map is not size preserving");
  }
  auto out = std::make_shared<IndexMap>();
  out->in_shape = map.out_shape;
  out->out_shape = map.in_shape;
  out->src.assign(static_cast<std::size_t>(n), -1);
  for (i64 i = 0; i < n; ++i) {
    auto& slot = out->src[static_cast<std::size_t>(map.src[static_cast<std::size_t>(i)])];
    if (slot != -1) throw ContractError("invert_permutation: map is not a bijection");
    slot = i;
  }
  return out;
}

IndexMapPtr pixel_shuffle_map(const Shape& in_shape, int r) {
  if (in_shape.size() != 4) throw DimensionError("pixel_shuffle expects [N,H,W,C]");
  if (r < 1) throw DimensionError("pixel_shuffle factor must be positive");
  const i64 N = in_shape[0], H = in_shape[1], W = in_shape[2], Cr = in_shape[3];
  const i64 rr = static_cast<i64>(r) * r;
  if (Cr % rr != 0) {
    throw DimensionError("pixel_shuffle: channels " + std::to_string(Cr) +
                         " not divisible by r^2 = " + std::to_string(rr));
  }
  const i64 C = Cr / rr;
  auto map = std::make_shared<IndexMap>();
  map->in_shape = in_shape;
  map->out_shape = {N, H * r, W * r, C};
  map->src.resize(static_cast<std::size_t>(shape_numel(in_shape)));
  i64 o = 0;
  for (i64 n = 0; n < N; ++n)
    for (i64 y = 0; y < H * r; ++y)
      for (i64 x = 0; x < W * r; ++x)
        for (i64 c = 0; c < C; ++c) {
          const i64 h = y / r, dy = y % r, w = x / r, dx = x % r;
          map->src[static_cast<std::size_t>(o++)] =
              ((n * H + h) * W + w) * Cr + c * rr + dy * r + dx;
        }
  return map;
}

template <typename T>
Var<T> gather(const Var<T>& x, const IndexMapPtr& map) {
  if (shape_numel(map->in_shape) != x.value().size()) {
    throw DimensionError("gather: map expects input " + shape_str(map->in_shape) + ", got " +
                         shape_str(x.shape()));
  }
  Tensor<T> out(map->out_shape);
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < map->src.size(); ++i) o[i] = in[static_cast<std::size_t>(map->src[i])];
  return make_result<T>(std::move(out), {&x}, [map](const Tensor<T>& g, auto grads) {
    if (!grads[0]) return;
    auto gx = grads[0]->data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < map->src.size(); ++i) gx[static_cast<std::size_t>(map->src[i])] += gd[i];
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " +
                         shape_str(B.shape()));
  }
  const i64 m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor<T> out({m, n});
  gemm(false, false, m, n, k, A.data().data(), B.data().data(), out.data().data());
  auto pa = a.shared(), pb = b.shared();
  return make_result<T>(std::move(out), {&a, &b}, [pa, pb, m, n, k](const Tensor<T>& g, auto grads) {
    if (grads[0]) gemm(false, true, m, k, n, g.data().data(), pb->data().data(), grads[0]->data().data());
    if (grads[1]) gemm(true, false, k, n, m, pa->data().data(), g.data().data(), grads[1]->data().data());
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) ||
      A.dim(2) != (transpose_b ? B.dim(2) : B.dim(1))) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(A.shape()) + " and " +
                         shape_str(B.shape()) + (transpose_b ? " (B transposed)" : ""));
  }
  const i64 batch = A.dim(0), m = A.dim(1), k = A.dim(2);
  const i64 n = transpose_b ? B.dim(1) : B.dim(2);
  Tensor<T> out({batch, m, n});
  for (i64 t = 0; t < batch; ++t) {
    gemm(false, transpose_b, m, n, k, A.data().data() + t * m * k, B.data().data() + t * k * n,
         out.data().data() + t * m * n);
  }
  auto pa = a.shared(), pb = b.shared();
  return make_result<T>(std::move(out), {&a, &b},
                        [pa, pb, batch, m, n, k, transpose_b](const Tensor<T>& g, auto grads) {
    const T* G = g.data().data();
    const T* Ad = pa->data().data();
    const T* Bd = pb->data().data();
    for (i64 t = 0; t < batch; ++t) {
      const T* Gt = G + t * m * n;
      const T* At = Ad + t * m * k;
      const T* Bt = Bd + t * k * n;
      if (grads[0]) {
        T* dA = grads[0]->data().data() + t * m * k;
        gemm(false, !transpose_b, m, k, n, Gt, Bt, dA);
      }
      if (grads[1]) {
        T* dB = grads[1]->data().data() + t * k * n;
        if (transpose_b) {
          gemm(true, false, n, k, m, Gt, At, dB);
        } else {
          gemm(true, false, k, n, m, At, Gt, dB);
        }
      }
    }
  });
}

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
  const auto& X = x.value();
  const i64 L = X.rank() == 0 ? 1 : X.dim(-1);
  const i64 rows = X.size() / L;
  Tensor<T> out(X.shape());
  const T* in = X.data().data();
  T* o = out.data().data();
  for (i64 r = 0; r < rows; ++r) {
    const T* row = in + r * L;
    T* orow = o + r * L;
    const T mx = *std::max_element(row, row + L);
    T total{0};
    for (i64 j = 0; j < L; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    const T inv = T{1} / total;
    for (i64 j = 0; j < L; ++j) orow[j] *= inv;
  }
  auto y = std::make_shared<const Tensor<T>>(out);
  return make_result<T>(std::move(out), {&x}, [y, rows, L](const Tensor<T>& g, auto grads) {
    if (!grads[0]) return;
    const T* Y = y->data().data();
    const T* G = g.data().data();
    T* D = grads[0]->data().data();
    for (i64 r = 0; r < rows; ++r) {
      T dot{0};
      for (i64 j = 0; j < L; ++j) dot += G[r * L + j] * Y[r * L + j];
      for (i64 j = 0; j < L; ++j) D[r * L + j] += Y[r * L + j] * (G[r * L + j] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const auto& X = x.value();
  const i64 C = X.rank() == 0 ? 1 : X.dim(-1);
  if (gamma.value().size() != C || beta.value().size() != C) {
    throw DimensionError("layer_norm: affine extents " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match channels of " +
                         shape_str(X.shape()));
  }
  const i64 rows = X.size() / C;
  Tensor<T> out(X.shape());
  auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(X.size()));
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  const T* in = X.data().data();
  const T* G = gamma.value().data().data();
  const T* B = beta.value().data().data();
  T* o = out.data().data();
  for (i64 r = 0; r < rows; ++r) {
    const T* row = in + r * C;
    T mean{0};
    for (i64 c = 0; c < C; ++c) mean += row[c];
    mean /= static_cast<T>(C);
    T var{0};
    for (i64 c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<T>(C);
    const T rs = T{1} / std::sqrt(var + static_cast<T>(eps));
    (*rstd)[static_cast<std::size_t>(r)] = rs;
    for (i64 c = 0; c < C; ++c) {
      const T xh = (row[c] - mean) * rs;
      (*xhat)[static_cast<std::size_t>(r * C + c)] = xh;
      o[r * C + c] = xh * G[c] + B[c];
    }
  }
  auto pg = gamma.shared();
  return make_result<T>(std::move(out), {&x, &gamma, &beta},
                        [xhat, rstd, pg, rows, C](const Tensor<T>& g, auto grads) {
    const T* Gd = g.data().data();
    const T* gam = pg->data().data();
    const T* xh = xhat->data();
    for (i64 r = 0; r < rows; ++r) {
      const T* gr = Gd + r * C;
      const T* xr = xh + r * C;
      if (grads[1]) {
        T* dg = grads[1]->data().data();
        for (i64 c = 0; c < C; ++c) dg[c] += gr[c] * xr[c];
      }
      if (grads[2]) {
        T* db = grads[2]->data().data();
        for (i64 c = 0; c < C; ++c) db[c] += gr[c];
      }
      if (grads[0]) {
        T m1{0}, m2{0};
        for (i64 c = 0; c < C; ++c) {
          const T dxh = gr[c] * gam[c];
          m1 += dxh;
          m2 += dxh * xr[c];
        }
        m1 /= static_cast<T>(C);
        m2 /= static_cast<T>(C);
        const T rs = (*rstd)[static_cast<std::size_t>(r)];
        T* dx = grads[0]->data().data() + r * C;
        for (i64 c = 0; c < C; ++c) dx[c] += rs * (gr[c] * gam[c] - m1 - xr[c] * m2);
      }
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const auto& X = x.value();
  Tensor<T> out(X.shape());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (i64 i = 0; i < X.size(); ++i) {
    const T v = X[i];
    out[i] = T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2));
  }
  auto px = x.shared();
  return make_result<T>(std::move(out), {&x}, [px, inv_sqrt2](const Tensor<T>& g, auto grads) {
    if (!grads[0]) return;
    const T inv_sqrt2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    auto d = grads[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T v = (*px)[static_cast<i64>(i)];
      const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T{-0.5} * v * v);
      d[i] += g[static_cast<i64>(i)] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  const auto& X = x.value();
  Tensor<T> out(X.shape());
  for (i64 i = 0; i < X.size(); ++i) out[i] = X[i] > T{0} ? X[i] : T{0};
  auto px = x.shared();
  return make_result<T>(std::move(out), {&x}, [px](const Tensor<T>& g, auto grads) {
    if (!grads[0]) return;
    auto d = grads[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if ((*px)[static_cast<i64>(i)] > T{0}) d[i] += g[static_cast<i64>(i)];
    }
  });
}

namespace {

template <typename T>
Var<T> linear_impl(const Var<T>& x, const Var<T>& w, const Var<T>* b) {
  const auto& X = x.value();
  const auto& Wt = w.value();
  if (Wt.rank() != 2 || X.rank() < 1 || X.dim(-1) != Wt.dim(0)) {
    throw DimensionError("linear: input " + shape_str(X.shape()) + " incompatible with weight " +
                         shape_str(Wt.shape()));
  }
  const i64 cin = Wt.dim(0), cout = Wt.dim(1);
  if (b && b->value().size() != cout) {
    throw DimensionError("linear: bias " + shape_str(b->shape()) + " does not match weight " +
                         shape_str(Wt.shape()));
  }
  const i64 rows = X.size() / cin;
  Shape oshape = X.shape();
  oshape.back() = cout;
  Tensor<T> out(oshape);
  T* o = out.data().data();
  if (b) {
    const T* bd = b->value().data().data();
    for (i64 r = 0; r < rows; ++r) std::copy(bd, bd + cout, o + r * cout);
  }
  gemm(false, false, rows, cout, cin, X.data().data(), Wt.data().data(), o);
  auto px = x.shared(), pw = w.shared();
  const bool has_bias = b != nullptr;
  const Var<T> none;
  return make_result<T>(std::move(out), {&x, &w, b ? b : &none},
                        [px, pw, rows, cin, cout, has_bias](const Tensor<T>& g, auto grads) {
    const T* G = g.data().data();
    if (grads[0]) gemm(false, true, rows, cin, cout, G, pw->data().data(), grads[0]->data().data());
    if (grads[1]) gemm(true, false, cin, cout, rows, px->data().data(), G, grads[1]->data().data());
    if (has_bias && grads[2]) {
      T* db = grads[2]->data().data();
      for (i64 r = 0; r < rows; ++r)
        for (i64 c = 0; c < cout; ++c) db[c] += G[r * cout + c];
    }
  });
}

}  // namespace

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w) {
  return linear_impl<T>(x, w, nullptr);
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return linear_impl<T>(x, w, &b);
}

template <typename T>
Var<T> conv2d_3x3(const Var<T>& x, const Var<T>& k, const Var<T>& b, bool depthwise) {
  const auto& X = x.value();
  const auto& K = k.value();
  if (X.rank() != 4) throw DimensionError("conv2d_3x3: input must be [N,H,W,C], got " + shape_str(X.shape()));
  if (K.rank() != 4 || K.dim(0) != 3 || K.dim(1) != 3) {
    throw DimensionError("conv2d_3x3: kernel must be [3,3,Cin,Cout], got " + shape_str(K.shape()));
  }
  const i64 N = X.dim(0), H = X.dim(1), W = X.dim(2), cin = X.dim(3);
  if (K.dim(2) != cin) {
    throw DimensionError("conv2d_3x3: kernel " + shape_str(K.shape()) + " does not match input " +
                         shape_str(X.shape()));
  }
  if (depthwise && K.dim(3) != 1) {
    throw DimensionError("conv2d_3x3: depthwise kernel must be [3,3,C,1], got " + shape_str(K.shape()));
  }
  const i64 cout = depthwise ? cin : K.dim(3);
  if (b.value().size() != cout) {
    throw DimensionError("conv2d_3x3: bias " + shape_str(b.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
  Tensor<T> out({N, H, W, cout});
  const T* xd = X.data().data();
  const T* kd = K.data().data();
  const T* bd = b.value().data().data();
  T* od = out.data().data();
  for (i64 n = 0; n < N; ++n)
    for (i64 y = 0; y < H; ++y)
      for (i64 xx = 0; xx < W; ++xx) {
        T* o = od + ((n * H + y) * W + xx) * cout;
        std::copy(bd, bd + cout, o);
        for (i64 ky = 0; ky < 3; ++ky) {
          const i64 sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (i64 kx = 0; kx < 3; ++kx) {
            const i64 sx = xx + kx - 1;
            if (sx < 0 || sx >= W) continue;
            const T* in = xd + ((n * H + sy) * W + sx) * cin;
            const T* kk = kd + (ky * 3 + kx) * cin * (depthwise ? 1 : cout);
            if (depthwise) {
              for (i64 c = 0; c < cin; ++c) o[c] += in[c] * kk[c];
            } else {
              gemm(false, false, 1, cout, cin, in, kk, o);
            }
          }
        }
      }
  auto px = x.shared(), pk = k.shared();
  return make_result<T>(std::move(out), {&x, &k, &b},
                        [px, pk, N, H, W, cin, cout, depthwise](const Tensor<T>& g, auto grads) {
    const T* xd = px->data().data();
    const T* kd = pk->data().data();
    const T* gd = g.data().data();
    T* dx = grads[0] ? grads[0]->data().data() : nullptr;
    T* dk = grads[1] ? grads[1]->data().data() : nullptr;
    T* db = grads[2] ? grads[2]->data().data() : nullptr;
    const i64 kcout = depthwise ? 1 : cout;
    for (i64 n = 0; n < N; ++n)
      for (i64 y = 0; y < H; ++y)
        for (i64 xx = 0; xx < W; ++xx) {
          const T* go = gd + ((n * H + y) * W + xx) * cout;
          if (db)
            for (i64 c = 0; c < cout; ++c) db[c] += go[c];
          for (i64 ky = 0; ky < 3; ++ky) {
            const i64 sy = y + ky - 1;
            if (sy < 0 || sy >= H) continue;
            for (i64 kx = 0; kx < 3; ++kx) {
              const i64 sx = xx + kx - 1;
              if (sx < 0 || sx >= W) continue;
              const i64 in_off = ((n * H + sy) * W + sx) * cin;
              const i64 k_off = (ky * 3 + kx) * cin * kcout;
              if (depthwise) {
                for (i64 c = 0; c < cin; ++c) {
                  if (dx) dx[in_off + c] += go[c] * kd[k_off + c];
                  if (dk) dk[k_off + c] += go[c] * xd[in_off + c];
                }
              } else {
                // dx[cin] += K[cin,cout] . go[cout]; dK[cin,cout] += x[cin] (x) go[cout]
                if (dx) gemm(false, true, 1, cin, cout, go, kd + k_off, dx + in_off);
                if (dk) gemm(true, false, cin, cout, 1, xd + in_off, go, dk + k_off);
              }
            }
          }
        }
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  return gather(x, pixel_shuffle_map(x.shape(), r));
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.value());
  auto o = out.data();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return make_result<T>(std::move(out), {&a, &b}, [](const Tensor<T>& g, auto grads) {
    accumulate(grads[0], g.data());
    accumulate(grads[1], g.data());
  });
}

template <typename T>
Var<T> add_broadcast(const Var<T>& x, const Var<T>& y, i64 outer, i64 repeat) {
  const auto& Y = y.value();
  if (Y.rank() < 1) throw DimensionError("add_broadcast: y must have a leading extent");
  const i64 groups = Y.dim(0);
  const i64 inner = Y.size() / groups;
  if (outer * groups * repeat * inner != x.value().size()) {
    throw DimensionError("add_broadcast: " + shape_str(x.shape()) + " is not [" +
                         std::to_string(outer) + ", " + std::to_string(groups) + ", " +
                         std::to_string(repeat) + ", " + std::to_string(inner) + "]");
  }
  Tensor<T> out(x.value());
  T* o = out.data().data();
  const T* yd = Y.data().data();
  for (i64 a = 0; a < outer; ++a)
    for (i64 gidx = 0; gidx < groups; ++gidx)
      for (i64 r = 0; r < repeat; ++r) {
        T* row = o + ((a * groups + gidx) * repeat + r) * inner;
        const T* yr = yd + gidx * inner;
        for (i64 i = 0; i < inner; ++i) row[i] += yr[i];
      }
  return make_result<T>(std::move(out), {&x, &y},
                        [outer, groups, repeat, inner](const Tensor<T>& g, auto grads) {
    accumulate(grads[0], g.data());
    if (!grads[1]) return;
    const T* gd = g.data().data();
    T* dy = grads[1]->data().data();
    for (i64 a = 0; a < outer; ++a)
      for (i64 gidx = 0; gidx < groups; ++gidx)
        for (i64 r = 0; r < repeat; ++r) {
          const T* row = gd + ((a * groups + gidx) * repeat + r) * inner;
          T* yr = dy + gidx * inner;
          for (i64 i = 0; i < inner; ++i) yr[i] += row[i];
        }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.value());
  auto o = out.data();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  auto pa = a.shared(), pb = b.shared();
  return make_result<T>(std::move(out), {&a, &b}, [pa, pb](const Tensor<T>& g, auto grads) {
    for (int s = 0; s < 2; ++s) {
      if (!grads[s]) continue;
      const auto& other = s == 0 ? *pb : *pa;
      auto d = grads[s]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data()[i] * other.data()[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, double s) {
  Tensor<T> out(x.value());
  const T f = static_cast<T>(s);
  for (auto& v : out.data()) v *= f;
  return make_result<T>(std::move(out), {&x}, [f](const Tensor<T>& g, auto grads) {
    if (!grads[0]) return;
    auto d = grads[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += f * g.data()[i];
  });
}

template <typename T>
Var<T> concat_lastdim(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  Shape sa = A.shape(), sb = B.shape();
  if (sa.empty() || sa.size() != sb.size() ||
      !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw DimensionError("concat_lastdim: incompatible shapes " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  const i64 ca = sa.back(), cb = sb.back(), rows = A.size() / ca;
  Shape so = sa;
  so.back() = ca + cb;
  Tensor<T> out(so);
  T* o = out.data().data();
  for (i64 r = 0; r < rows; ++r) {
    std::copy_n(A.data().data() + r * ca, ca, o + r * (ca + cb));
    std::copy_n(B.data().data() + r * cb, cb, o + r * (ca + cb) + ca);
  }
  return make_result<T>(std::move(out), {&a, &b}, [rows, ca, cb](const Tensor<T>& g, auto grads) {
    const T* gd = g.data().data();
    for (i64 r = 0; r < rows; ++r) {
      if (grads[0]) {
        T* d = grads[0]->data().data() + r * ca;
        for (i64 c = 0; c < ca; ++c) d[c] += gd[r * (ca + cb) + c];
      }
      if (grads[1]) {
        T* d = grads[1]->data().data() + r * cb;
        for (i64 c = 0; c < cb; ++c) d[c] += gd[r * (ca + cb) + ca + c];
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total{0};
  for (T v : x.value().data()) total += v;
  return make_result<T>(Tensor<T>::scalar(total), {&x}, [](const Tensor<T>& g, auto grads) {
    if (!grads[0]) return;
    const T gv = g.item();
    for (auto& d : grads[0]->data()) d += gv;
  });
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "l1_loss");
  const auto p = pred.value().data();
  const auto t = target.data();
  T total{0};
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - t[i]);
  const T inv_n = T{1} / static_cast<T>(p.size());
  auto pp = pred.shared();
  auto pt = std::make_shared<const Tensor<T>>(target);
  return make_result<T>(Tensor<T>::scalar(total * inv_n), {&pred},
                        [pp, pt, inv_n](const Tensor<T>& g, auto grads) {
    if (!grads[0]) return;
    const T gv = g.item() * inv_n;
    auto d = grads[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T diff = pp->data()[i] - pt->data()[i];
      d[i] += diff > T{0} ? gv : (diff < T{0} ? -gv : T{0});
    }
  });
}

#define CAT_INSTANTIATE_OPS(T)                                                          \
  template Var<T> gather(const Var<T>&, const IndexMapPtr&);                            \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                 \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                              \
  template Var<T> softmax_lastdim(const Var<T>&);                                       \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);      \
  template Var<T> gelu(const Var<T>&);                                                  \
  template Var<T> relu(const Var<T>&);                                                  \
  template Var<T> linear(const Var<T>&, const Var<T>&);                                 \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                  \
  template Var<T> conv2d_3x3(const Var<T>&, const Var<T>&, const Var<T>&, bool);        \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                                    \
  template Var<T> add_broadcast(const Var<T>&, const Var<T>&, i64, i64);                \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                    \
  template Var<T> scale(const Var<T>&, double);                                         \
  template Var<T> concat_lastdim(const Var<T>&, const Var<T>&);                         \
  template Var<T> sum(const Var<T>&);                                                   \
  template Var<T> l1_loss(const Var<T>&, const Tensor<T>&);

CAT_INSTANTIATE_OPS(float)
CAT_INSTANTIATE_OPS(double)

}  // namespace cat
