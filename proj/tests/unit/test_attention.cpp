#include <gtest/gtest.h>

#include <random>

#include "cat/attention.hpp"
#include "gradcheck.hpp"
#include "oracle.hpp"

namespace cat {
namespace {

template <typename T>
Var<T> zeros(Shape s) {
  return Var<T>(Tensor<T>(std::move(s)));
}

template <typename T>
AttentionParams<T> zero_attention(std::int64_t C, int M, std::int64_t P = 8) {
  AttentionParams<T> p;
  p.qkv_w = zeros<T>({C, 3 * C});
  p.qkv_b = zeros<T>({3 * C});
  p.proj_w = zeros<T>({C, C});
  p.proj_b = zeros<T>({C});
  p.lcm_w = zeros<T>({3, 3, C, 1});
  p.lcm_b = zeros<T>({C});
  p.pos = {zeros<T>({2, P}), zeros<T>({P}), zeros<T>({P, P}), zeros<T>({P}), zeros<T>({P, M}), zeros<T>({M})};
  p.heads = M;
  return p;
}

Var<double> identity(std::int64_t C) {
  Tensor<double> t({C, C});
  for (std::int64_t i = 0; i < C; ++i) t[i * C + i] = 1;
  return Var<double>(t);
}

TEST(Attention, ZeroWeightsGiveTheOutputBias) {
  auto p = zero_attention<float>(4, 2);
  p.proj_b = Var<float>(Tensor<float>({4}, {1, -2, 3, 0.5f}));
  std::mt19937_64 rng(20);
  const auto out = rwin_self_attention(Var<float>(oracle::random_tensor<float>({2, 5, 7, 4}, rng)), p,
                                       WindowSpec::regular(2, 4), true, false)
                       .value();
  for (std::int64_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], p.proj_b.value()[i % 4]);
}

TEST(Attention, UniformWeightsAverageEachWindow) {
  auto p = zero_attention<double>(2, 2);
  Tensor<double> qkv({2, 6});
  qkv[0 * 6 + 4] = qkv[1 * 6 + 5] = 1;  // V = identity
  p.qkv_w = Var<double>(qkv);
  p.proj_w = identity(2);
  Tensor<double> x({1, 4, 4, 2});
  std::mt19937_64 rng(21);
  x = oracle::random_tensor<double>({1, 4, 4, 2}, rng);
  const auto out = rwin_self_attention(Var<double>(x), p, WindowSpec::regular(2, 2), false, false).value();
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx)
      for (int c = 0; c < 2; ++c) {
        double mean = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) mean += x[((y / 2 * 2 + dy) * 4 + xx / 2 * 2 + dx) * 2 + c] / 4;
        EXPECT_NEAR(out[(y * 4 + xx) * 2 + c], mean, 1e-12);
      }
}

TEST(Attention, MatchesMaskedFullAttention) {
  std::mt19937_64 rng(22);
  const std::vector<WindowSpec> specs = {WindowSpec::regular(1, 2), WindowSpec::regular(2, 4), WindowSpec::axial(1),
                                         WindowSpec::axial(2)};
  for (const auto& spec : specs)
    for (int M : {2, 4})
      for (bool lcm : {false, true}) {
        const auto p = oracle::random_attention<float>(8, M, 16, rng, 0.5);
        const auto x = oracle::random_tensor<float>({1, 8, 12, 8}, rng);
        const auto got = rwin_self_attention(Var<float>(x), p, spec, false, lcm).value();
        const auto want = oracle::masked_full_attention({x.vec().begin(), x.vec().end()}, 1, 8, 12,
                                                        oracle::densify(p), spec, lcm);
        double worst = 0;
        for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
        EXPECT_LE(worst, 1e-5) << spec.describe() << " M=" << M << " lcm=" << lcm;
      }
}

TEST(Attention, HeadGroupsUseTransposedWindows) {
  std::mt19937_64 rng(23);
  const auto p = oracle::random_attention<float>(8, 2, 8, rng, 0.5);
  AttentionTrace<float> trace;
  rwin_self_attention(Var<float>(oracle::random_tensor<float>({1, 8, 8, 8}, rng)), p, WindowSpec::regular(4, 2),
                      false, false, &trace);
  ASSERT_EQ(trace.groups.size(), 2u);
  EXPECT_EQ(std::make_pair(trace.groups[0].geometry.sh, trace.groups[0].geometry.sw), std::make_pair(2, 4));
  EXPECT_EQ(std::make_pair(trace.groups[1].geometry.sh, trace.groups[1].geometry.sw), std::make_pair(4, 2));
  EXPECT_EQ(trace.groups[0].head_begin, 0);
  EXPECT_EQ(trace.groups[1].head_begin, 1);
}

TEST(Attention, RowsAreConvexAndZeroOnMaskedPairs) {
  std::mt19937_64 rng(24);
  for (const auto& spec : {WindowSpec::regular(2, 4), WindowSpec::axial(2)}) {
    const auto p = oracle::random_attention<float>(8, 4, 8, rng, 1.0);
    AttentionTrace<float> trace;
    rwin_self_attention(Var<float>(oracle::random_tensor<float>({2, 7, 10, 8}, rng)), p, spec, true, true, &trace);
    for (const auto& group : trace.groups) {
      const auto& mask = build_shift_mask<float>(group.geometry);
      const std::int64_t L = group.geometry.window_area(), nw = group.geometry.window_count();
      ASSERT_TRUE(group.geometry.shifted());
      for (std::int64_t b = 0; b < group.weights.dim(0); ++b) {
        const std::int64_t w = (b / group.head_count) % nw;
        for (std::int64_t i = 0; i < L; ++i) {
          double total = 0;
          for (std::int64_t j = 0; j < L; ++j) {
            const float a = group.weights[(b * L + i) * L + j];
            EXPECT_GE(a, 0.0f);
            total += a;
            if (mask[(w * L + i) * L + j] != 0) EXPECT_LT(a, 1e-9);
          }
          EXPECT_NEAR(total, 1.0, 1e-6);
        }
      }
    }
  }
}

TEST(Attention, PermutingWindowsPermutesOutput) {
  std::mt19937_64 rng(25);
  auto p = oracle::random_attention<double>(4, 2, 8, rng, 0.5);
  p.pos.w3 = zeros<double>({8, 2});
  p.pos.b3 = zeros<double>({2});  // B = 0
  const auto x = oracle::random_tensor<double>({1, 8, 8, 4}, rng);
  // Swap the 4x4 quadrants diagonally; both 2x4 and 4x2 grids are preserved.
  auto swap = [](const Tensor<double>& t) {
    Tensor<double> out(t.shape());
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 4; ++c) out[((y + 4) % 8 * 8 + (x + 4) % 8) * 4 + c] = t[(y * 8 + x) * 4 + c];
    return out;
  };
  const auto spec = WindowSpec::regular(2, 4);
  const auto a = rwin_self_attention(Var<double>(swap(x)), p, spec, false, false).value();
  const auto b = swap(rwin_self_attention(Var<double>(x), p, spec, false, false).value());
  for (std::int64_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Attention, RejectsBadHeadSplits) {
  std::mt19937_64 rng(26);
  auto p = oracle::random_attention<float>(6, 4, 8, rng, 0.5);
  EXPECT_THROW(rwin_self_attention(Var<float>(Tensor<float>({1, 4, 4, 6})), p, WindowSpec::regular(2, 2), false, false),
               ConfigError);
  p = oracle::random_attention<float>(6, 3, 8, rng, 0.5);
  EXPECT_THROW(p.validate(), ConfigError);
  p = oracle::random_attention<float>(8, 2, 8, rng, 0.5);
  EXPECT_THROW(rwin_self_attention(Var<float>(Tensor<float>({1, 4, 4, 6})), p, WindowSpec::regular(2, 2), false, false),
               ConfigError);
}

TEST(PositionBias, Examples) {
  const auto zero = zero_attention<float>(4, 2);
  const auto g = resolve_geometry(WindowSpec::regular(2, 3), Orientation::Horizontal, 4, 6, false);
  const auto zero_bias = relative_position_bias(g, zero.pos);
  for (float v : zero_bias.value().vec()) EXPECT_EQ(v, 0.0f);

  std::mt19937_64 rng(27);
  const auto p = oracle::random_attention<double>(4, 2, 8, rng, 1.0);
  const auto bias = relative_position_bias(g, p.pos).value();
  const std::int64_t L = 6;
  for (int m = 0; m < 2; ++m)
    for (std::int64_t i = 0; i < L; ++i) EXPECT_EQ(bias[(m * L + i) * L + i], bias[m * L * L]);

  const auto dense = oracle::densify(p);
  const auto pair = resolve_geometry(WindowSpec::regular(1, 2), Orientation::Horizontal, 1, 2, false);
  const auto b2 = relative_position_bias(pair, p.pos).value();
  for (int m = 0; m < 2; ++m) {
    EXPECT_NEAR(b2[m * 4 + 1], oracle::position_bias(dense, m, 0, -1, 1, 2), 1e-12);
    EXPECT_NEAR(b2[m * 4 + 2], oracle::position_bias(dense, m, 0, 1, 1, 2), 1e-12);
  }
}

TEST(PositionBias, DependsOnlyOnOffset) {
  std::mt19937_64 rng(28);
  const auto p = oracle::random_attention<double>(4, 2, 8, rng, 1.0);
  const auto g = resolve_geometry(WindowSpec::regular(3, 4), Orientation::Horizontal, 3, 4, false);
  const auto bias = relative_position_bias(g, p.pos).value();
  const int L = 12;
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      for (int k = 0; k < L; ++k)
        for (int l = 0; l < L; ++l)
          if (i / 4 - j / 4 == k / 4 - l / 4 && i % 4 - j % 4 == k % 4 - l % 4) {
            EXPECT_EQ(bias[i * L + j], bias[k * L + l]);
          }
  EXPECT_EQ(relative_offsets(3, 4).count, 5 * 7);
}

TEST(Locality, ZeroKernelChangesNothing) {
  std::mt19937_64 rng(29);
  auto p = oracle::random_attention<float>(4, 2, 8, rng, 0.5);
  p.lcm_w = zeros<float>({3, 3, 4, 1});
  p.lcm_b = zeros<float>({4});
  const Var<float> x(oracle::random_tensor<float>({1, 6, 6, 4}, rng));
  EXPECT_EQ(rwin_self_attention(x, p, WindowSpec::regular(2, 3), true, true).value(),
            rwin_self_attention(x, p, WindowSpec::regular(2, 3), true, false).value());
}

TEST(Locality, IdentityKernelAddsValues) {
  std::mt19937_64 rng(30);
  auto p = oracle::random_attention<double>(4, 2, 8, rng, 0.5);
  p.proj_w = identity(4);
  p.proj_b = zeros<double>({4});
  Tensor<double> k({3, 3, 4, 1});
  for (int c = 0; c < 4; ++c) k[(1 * 3 + 1) * 4 + c] = 1;
  p.lcm_w = Var<double>(k);
  p.lcm_b = zeros<double>({4});
  const auto x = oracle::random_tensor<double>({1, 5, 6, 4}, rng);
  const auto on = rwin_self_attention(Var<double>(x), p, WindowSpec::regular(2, 2), false, true).value();
  const auto off = rwin_self_attention(Var<double>(x), p, WindowSpec::regular(2, 2), false, false).value();
  const auto qkv = oracle::project_qkv({x.vec().begin(), x.vec().end()}, 1, 5, 6, oracle::densify(p));
  for (int px = 0; px < 30; ++px)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(on[px * 4 + c] - off[px * 4 + c], qkv[px * 12 + 8 + c], 1e-12);
  EXPECT_THROW(locality_complement(Var<double>(Tensor<double>({1, 5, 6, 3})), p), DimensionError);
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  const auto base = oracle::random_attention<double>(4, 2, 6, rng, 0.5);
  for (bool shifted : {false, true}) {
    const auto f = [&](const std::vector<Var<double>>& v) {
      auto p = base;
      p.qkv_w = v[1];
      p.lcm_w = v[2];
      p.pos.w1 = v[3];
      p.proj_w = v[4];
      return rwin_self_attention(v[0], p, WindowSpec::regular(2, 3), shifted, true);
    };
    EXPECT_LE(testing::gradient_error(f, {testing::uniform({1, 5, 7, 4}, rng), base.qkv_w.value(),
                                          base.lcm_w.value(), base.pos.w1.value(), base.proj_w.value()}),
              1e-5)
        << "shifted=" << shifted;
  }
}

}  // namespace
}  // namespace cat
