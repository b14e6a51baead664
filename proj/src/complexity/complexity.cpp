#include "cat/complexity.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

namespace cat {

const char* cost_kind_name(CostKind kind) {
  switch (kind) {
    case CostKind::Conv: return "conv";
    case CostKind::Projection: return "proj";
    case CostKind::Attention: return "attn";
    case CostKind::Locality: return "lcm";
    case CostKind::PositionBias: return "posbias";
    case CostKind::Mlp: return "mlp";
    case CostKind::Norm: return "norm";
    case CostKind::Head: return "head";
  }
  return "?";
}

std::int64_t CostReport::total_params() const {
  std::int64_t n = 0;
  for (const auto& r : rows) n += r.params;
  return n;
}

std::int64_t CostReport::total_flops() const {
  std::int64_t n = 0;
  for (const auto& r : rows) n += r.flops;
  return n;
}

std::int64_t CostReport::flops_excluding(std::initializer_list<CostKind> excluded) const {
  std::int64_t n = 0;
  for (const auto& r : rows) {
    if (std::find(excluded.begin(), excluded.end(), r.kind) == excluded.end()) n += r.flops;
  }
  return n;
}

std::int64_t attention_flops(const WindowSpec& spec, std::int64_t C, std::int64_t H, std::int64_t W) {
  spec.validate();
  if (C < 1 || H < 1 || W < 1) throw DimensionError("attention_flops: extents must be positive");
  if (spec.kind == WindowKind::Regular) {
    return H * W * C * (4 * C + 2 * static_cast<std::int64_t>(spec.sh) * spec.sw);
  }
  return H * W * C * (4 * C + spec.sl * H + spec.sl * W);
}

CostReport model_flops(const ModelConfig& config, std::int64_t H, std::int64_t W) {
  {
    ModelConfig probe = config;
    if (probe.groups == 0) {
      probe.groups = 1;
      if (probe.window == WindowKind::Axial && probe.axial_sl.empty()) probe.axial_sl = {1};
    }
    probe.validate();
  }
  if (H < 1 || W < 1) throw DimensionError("model_flops: resolution must be positive");

  CostReport rep;
  rep.height = H;
  rep.width = W;
  const std::int64_t HW = H * W;
  const std::int64_t C = config.channels, F = config.mlp_hidden(), P = config.position_hidden();
  const std::int64_t M = config.heads, half = C / 2;
  auto add = [&rep](std::string name, CostKind kind, std::int64_t params, std::int64_t flops) {
    rep.rows.push_back({std::move(name), kind, params, flops});
  };

  add("shallow", CostKind::Conv, 9 * config.in_channels * C + C, 9 * HW * config.in_channels * C);

  for (int g = 0; g < config.groups; ++g) {
    const WindowSpec spec = config.window_for_group(g);
    const std::string gp = "group." + std::to_string(g);
    for (int b = 0; b < config.blocks; ++b) {
      const std::string bp = gp + ".block." + std::to_string(b);
      const bool shifted = b % 2 == 1;
      add(bp + ".norm", CostKind::Norm, 4 * C, 0);
      add(bp + ".qkv+proj", CostKind::Projection, 4 * C * C + 4 * C, 4 * HW * C * C);

      std::int64_t core = 0, bias = 0;
      std::set<std::string> seen;
      for (auto o : {Orientation::Horizontal, Orientation::Vertical}) {
        const auto geo = resolve_geometry(spec, o, static_cast<int>(H), static_cast<int>(W), shifted);
        const std::int64_t L = geo.window_area();
        core += static_cast<std::int64_t>(geo.padded_h()) * geo.padded_w() * half * L * 2;
        // The bias net runs once per distinct window shape.
        if (seen.insert(std::to_string(geo.sh) + "x" + std::to_string(geo.sw)).second) {
          const std::int64_t offsets = static_cast<std::int64_t>(2 * geo.sh - 1) * (2 * geo.sw - 1);
          bias += offsets * (2 * P + P * P + P * M);
        }
      }
      add(bp + ".attn", CostKind::Attention, 0, core);
      if (config.lcm) add(bp + ".lcm", CostKind::Locality, 10 * C, 9 * HW * C);
      add(bp + ".posbias", CostKind::PositionBias, 3 * P + P * P + P + P * M + M, bias);
      add(bp + ".mlp", CostKind::Mlp, 2 * C * F + F + C, 2 * HW * C * F);
    }
    add(gp + ".conv", CostKind::Conv, 9 * C * C + C, 9 * HW * C * C);
  }
  if (config.groups > 0) add("body.conv", CostKind::Conv, 9 * C * C + C, 9 * HW * C * C);

  if (config.task == Task::SR) {
    const std::int64_t hw = config.head_width;
    add("head.conv_before", CostKind::Head, 9 * C * hw + hw, 9 * HW * C * hw);
    std::int64_t area = HW;
    int i = 0;
    for (int r : config.upsample_stages()) {
      const std::int64_t out = hw * r * r;
      add("head.up." + std::to_string(i++), CostKind::Head, 9 * hw * out + out, 9 * area * hw * out);
      area *= r * r;
    }
    add("head.conv_last", CostKind::Head, 9 * hw * config.out_channels + config.out_channels,
        9 * area * hw * config.out_channels);
  } else {
    add("head.conv_last", CostKind::Head, 9 * C * config.out_channels + config.out_channels,
        9 * HW * C * config.out_channels);
  }
  return rep;
}

std::string format_giga(std::int64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fG", static_cast<double>(v) / 1e9);
  return buf;
}

std::string format_mega(std::int64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(v) / 1e6);
  return buf;
}

std::string report_render(const CostReport& r) {
  std::size_t name_w = 5;
  for (const auto& row : r.rows) name_w = std::max(name_w, row.name.size());
  std::ostringstream os;
  auto line = [&](const std::string& name, const std::string& kind, std::int64_t params,
                  std::int64_t flops) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name << "  " << std::setw(8) << kind
       << std::right << std::setw(12) << params << std::setw(10) << format_mega(params)
       << std::setw(16) << flops << std::setw(10) << format_giga(flops) << '\n';
  };
  os << "resolution " << r.height << "x" << r.width << " (" << r.convention << ")\n";
  os << std::left << std::setw(static_cast<int>(name_w)) << "layer" << "  " << std::setw(8) << "kind"
     << std::right << std::setw(12) << "params" << std::setw(10) << "" << std::setw(16) << "flops"
     << std::setw(10) << "" << '\n';
  for (const auto& row : r.rows) line(row.name, cost_kind_name(row.kind), row.params, row.flops);
  line("total", "", r.total_params(), r.total_flops());
  return os.str();
}

}  // namespace cat
