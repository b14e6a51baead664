#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "cat/complexity.hpp"

namespace cat {
namespace {

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

ModelConfig small(WindowKind kind) {
  ModelConfig c = ModelConfig::cat_r(2);
  c.groups = 2;
  c.blocks = 2;
  c.channels = 24;
  c.heads = 4;
  c.head_width = 16;
  if (kind == WindowKind::Axial) {
    c.window = WindowKind::Axial;
    c.axial_sl = {2, 4};
  }
  return c;
}

TEST(AttentionFlops, Examples) {
  EXPECT_EQ(attention_flops(WindowSpec::regular(4, 16), 180, 128, 128), 2'500'853'760);
  EXPECT_EQ(attention_flops(WindowSpec::axial(4), 32, 64, 64), 83'886'080);
  EXPECT_EQ(attention_flops(WindowSpec::regular(1, 1), 1, 1, 1), 6);
}

TEST(AttentionFlops, LargerWindowAreaCostsMore) {
  for (int sl : {1, 2, 4, 8})
    for (auto [sh, sw] : {std::pair{1, 2}, {4, 16}, {8, 8}, {2, 32}})
      for (std::int64_t H : {16, 48, 128}) {
        const std::int64_t W = H + 16;
        if (sl * (H + W) > 2 * sh * sw) {
          EXPECT_GE(attention_flops(WindowSpec::axial(sl), 32, H, W),
                    attention_flops(WindowSpec::regular(sh, sw), 32, H, W));
        }
      }
}

TEST(Format, GigaAndMega) {
  EXPECT_EQ(format_giga(2'500'853'760), "2.50G");
  EXPECT_EQ(format_giga(0), "0.00G");
  EXPECT_EQ(format_mega(16'683'555), "16.68M");
}

TEST(Report, TotalsAreRowSums) {
  for (const auto& c : {ModelConfig::cat_r(4), ModelConfig::cat_a(3), ModelConfig::cat_car(), small(WindowKind::Axial)}) {
    const auto r = model_flops(c, 48, 40);
    std::int64_t p = 0, f = 0;
    for (const auto& row : r.rows) {
      EXPECT_GE(row.params, 0);
      EXPECT_GE(row.flops, 0);
      p += row.params;
      f += row.flops;
    }
    EXPECT_EQ(r.total_params(), p);
    EXPECT_EQ(r.total_flops(), f);
    EXPECT_EQ(r.total_params(), count_params(c));
    EXPECT_EQ(r.height, 48);
    EXPECT_EQ(r.width, 40);
  }
}

TEST(Report, RenderedTotalsMatch) {
  const auto r = model_flops(small(WindowKind::Regular), 16, 16);
  const auto text = report_render(r);
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  EXPECT_TRUE(starts_with(last, "total"));
  EXPECT_NE(last.find(std::to_string(r.total_params())), std::string::npos);
  EXPECT_NE(last.find(std::to_string(r.total_flops())), std::string::npos);
  EXPECT_NE(last.find(format_giga(r.total_flops())), std::string::npos);
  EXPECT_NE(text.find("16x16"), std::string::npos);
  for (const auto& row : r.rows) EXPECT_NE(text.find(row.name), std::string::npos);
}

TEST(Report, ZeroGroupsLeavesShallowAndHead) {
  auto c = small(WindowKind::Regular);
  c.groups = 0;
  const auto r = model_flops(c, 16, 16);
  ASSERT_FALSE(r.rows.empty());
  for (const auto& row : r.rows) EXPECT_TRUE(starts_with(row.name, "shallow") || starts_with(row.name, "head")) << row.name;
}

TEST(Report, AttentionRowsFollowClosedForm) {
  const auto c = small(WindowKind::Regular);
  c.validate();
  const auto r = model_flops(c, 32, 64);  // divisible by 4x16 and 16x4
  const auto spec = c.window_for_group(0);
  for (int g = 0; g < c.groups; ++g)
    for (int b = 0; b < c.blocks; ++b) {
      const std::string prefix = "group." + std::to_string(g) + ".block." + std::to_string(b);
      std::int64_t sum = 0;
      for (const auto& row : r.rows)
        if (row.name == prefix + ".qkv+proj" || row.name == prefix + ".attn") sum += row.flops;
      EXPECT_EQ(sum, attention_flops(spec, c.channels, 32, 64)) << prefix;
    }
}

TEST(Report, BodyScalesWithArea) {
  for (auto kind : {WindowKind::Regular, WindowKind::Axial}) {
    const auto c = small(kind);
    const auto a = model_flops(c, 32, 64), b = model_flops(c, 64, 128);
    std::int64_t fa = 0, fb = 0;
    auto body = [&](const CostRow& row) {
      if (!starts_with(row.name, "group.") && !starts_with(row.name, "body.")) return false;
      if (row.kind == CostKind::PositionBias) return false;
      return !(kind == WindowKind::Axial && row.kind == CostKind::Attention);
    };
    for (const auto& row : a.rows)
      if (body(row)) fa += row.flops;
    for (const auto& row : b.rows)
      if (body(row)) fb += row.flops;
    EXPECT_GT(fa, 0);
    EXPECT_EQ(fb, 4 * fa);
  }
}

TEST(Report, LocalityOnlyAddsItsOwnRows) {
  auto on = ModelConfig::cat_r(2), off = on;
  off.lcm = false;
  const auto a = model_flops(on, 128, 128), b = model_flops(off, 128, 128);
  EXPECT_EQ(a.flops_excluding({CostKind::Locality}), b.total_flops());
  EXPECT_GT(a.total_flops(), b.total_flops());
}

TEST(Report, CategoryNamesAreDistinct) {
  std::set<std::string> names;
  for (auto k : {CostKind::Conv, CostKind::Projection, CostKind::Attention, CostKind::Locality, CostKind::PositionBias,
                 CostKind::Mlp, CostKind::Norm, CostKind::Head})
    names.insert(cost_kind_name(k));
  EXPECT_EQ(names.size(), 8u);
}

}  // namespace
}  // namespace cat
