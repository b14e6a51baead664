#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cat/model.hpp"

namespace cat {

enum class CostKind {
  Conv,          // 3x3 convolutions outside the blocks
  Projection,    // QKV and output projections
  Attention,     // QK^T and AV products
  Locality,      // depthwise conv on V
  PositionBias,  // bias MLP over the distinct offsets
  Mlp,
  Norm,
  Head,          // reconstruction head
};

const char* cost_kind_name(CostKind kind);

struct CostRow {
  std::string name;
  CostKind kind;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::string convention = "1 MAC = 1 FLOP; bias adds, norms and softmax not counted";

  std::int64_t total_params() const;
  std::int64_t total_flops() const;
  /// Sum over rows whose kind is not excluded.
  std::int64_t flops_excluding(std::initializer_list<CostKind> excluded) const;
};

/// Per-block attention cost: H*W*C*(4C + 2*sh*sw) for regular windows,
/// H*W*C*(4C + sl*H + sl*W) for axial ones.
std::int64_t attention_flops(const WindowSpec& spec, std::int64_t C, std::int64_t H, std::int64_t W);

/// Full model at low-quality input resolution H x W. The attention rows
/// count the padded extents actually processed. A config with zero groups
/// is accepted and yields only the shallow and head rows.
CostReport model_flops(const ModelConfig& config, std::int64_t H, std::int64_t W);

/// "2.50G" / "16.68M" style, two decimals.
std::string format_giga(std::int64_t v);
std::string format_mega(std::int64_t v);

std::string report_render(const CostReport& report);

}  // namespace cat
