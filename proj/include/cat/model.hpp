#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cat/attention.hpp"
#include "cat/autograd.hpp"
#include "cat/windowing.hpp"

namespace cat {

enum class Task { SR, CAR };

struct ModelConfig {
  int groups = 6;        // residual groups (N1)
  int blocks = 6;        // CATBs per group (N2)
  int channels = 180;    // C
  int in_channels = 3;   // C_in
  int out_channels = 3;  // C_out
  int heads = 6;         // M
  double mlp_ratio = 4.0;
  WindowKind window = WindowKind::Regular;
  int sh = 4;
  int sw = 16;
  std::vector<int> axial_sl;  // one side length per group
  Task task = Task::SR;
  int scale = 4;
  int head_width = 64;
  bool lcm = true;
  int bias_hidden = 0;  // 0 selects max(C/4, 8)

  void validate() const;

  WindowSpec window_for_group(int group) const;
  int mlp_hidden() const;
  int position_hidden() const;
  /// Pixel-shuffle factors of the SR head, e.g. {2, 2} for x4.
  std::vector<int> upsample_stages() const;
  std::int64_t output_height(std::int64_t h) const { return task == Task::SR ? h * scale : h; }
  std::int64_t output_width(std::int64_t w) const { return task == Task::SR ? w * scale : w; }

  /// CAT-R: regular 4x16 windows.
  static ModelConfig cat_r(int scale);
  /// CAT-A: axial windows with sl = [2,2,2,4,4,4].
  static ModelConfig cat_a(int scale);
  /// CAT-A for compression-artifact reduction on the Y channel.
  static ModelConfig cat_car();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Ordered (lexicographic) name -> tensor store with a trainability flag.
template <typename T>
class BasicParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    bool trainable = true;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  using Map = std::map<std::string, Entry, std::less<>>;

  /// Throws ContractError on a duplicate name.
  void add(std::string name, Tensor<T> value, bool trainable = true);
  const Tensor<T>& at(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
  std::size_t size() const { return entries_.size(); }
  std::int64_t element_count() const;

  typename Map::const_iterator begin() const { return entries_.begin(); }
  typename Map::const_iterator end() const { return entries_.end(); }
  Map& entries() { return entries_; }

  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.trainable);
    return out;
  }

  friend bool operator==(const BasicParamStore&, const BasicParamStore&) = default;

 private:
  Map entries_;
};

using ParamStore = BasicParamStore<float>;

// Parameters as graph variables. With a tape, every trainable entry becomes
// a watched leaf.
template <typename T>
class ParamBinding {
 public:
  ParamBinding(const BasicParamStore<T>& store, Tape<T>* tape);

  const Var<T>& operator[](std::string_view name) const;
  bool contains(std::string_view name) const { return vars_.find(name) != vars_.end(); }
  const std::map<std::string, Var<T>, std::less<>>& vars() const { return vars_; }

 private:
  std::map<std::string, Var<T>, std::less<>> vars_;
};

// Prefix-scoped view, e.g. view.scope("group.0").scope("block.1")["norm1.gamma"].
template <typename T>
class ParamView {
 public:
  explicit ParamView(const ParamBinding<T>& binding, std::string prefix = {})
      : binding_(&binding), prefix_(std::move(prefix)) {}

  const Var<T>& operator[](std::string_view name) const { return (*binding_)[qualify(name)]; }
  bool contains(std::string_view name) const { return binding_->contains(qualify(name)); }
  ParamView scope(std::string_view name) const { return ParamView(*binding_, qualify(name)); }

 private:
  std::string qualify(std::string_view name) const {
    return prefix_.empty() ? std::string(name) : prefix_ + "." + std::string(name);
  }
  const ParamBinding<T>* binding_;
  std::string prefix_;
};

template <typename T>
AttentionParams<T> attention_params(const ParamView<T>& attn, int heads, bool lcm);

/// X' = RwinSA(LN(X)) + X; out = MLP(LN(X')) + X'.
template <typename T>
Var<T> catb_forward(const Var<T>& x, const ParamView<T>& block, const ModelConfig& config,
                    const WindowSpec& spec, bool shifted, AttentionTrace<T>* trace = nullptr);

/// N2 blocks (odd-indexed ones shifted), a 3x3 conv, and the group residual.
template <typename T>
Var<T> residual_group_forward(const Var<T>& x, const ParamView<T>& group,
                              const ModelConfig& config, const WindowSpec& spec);

template <typename T>
Var<T> cat_forward(const Var<T>& img, const ParamBinding<T>& params, const ModelConfig& config);

/// Untracked inference convenience.
template <typename T>
Tensor<T> run_model(const Tensor<T>& img, const BasicParamStore<T>& store,
                    const ModelConfig& config);

/// Truncated-normal weights (sigma 0.02, cut at 2 sigma) seeded per tensor
/// from (seed, name); zero biases; unit LayerNorm gain.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

/// Name and shape of every parameter, in store order.
std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& config);

/// Closed-form parameter count.
std::int64_t count_params(const ModelConfig& config);

}  // namespace cat
