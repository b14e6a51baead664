#include "cat/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cat/ops.hpp"

namespace cat {

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (groups < 1) fail("groups must be >= 1");
  if (blocks < 1) fail("blocks must be >= 1");
  if (channels < 1 || in_channels < 1 || out_channels < 1) fail("channel counts must be >= 1");
  if (heads < 2 || heads % 2 != 0) fail("heads must be even and >= 2, got " + std::to_string(heads));
  if (channels % heads != 0) {
    fail("channels " + std::to_string(channels) + " not divisible by heads " + std::to_string(heads));
  }
  if (!(mlp_ratio > 0)) fail("mlp_ratio must be positive");
  if (bias_hidden < 0) fail("bias_hidden must be >= 0");
  if (window == WindowKind::Regular) {
    WindowSpec::regular(sh, sw);
  } else {
    if (static_cast<int>(axial_sl.size()) != groups) {
      fail("axial_sl lists " + std::to_string(axial_sl.size()) + " sides for " +
           std::to_string(groups) + " groups");
    }
    for (int sl : axial_sl) WindowSpec::axial(sl);
  }
  if (task == Task::SR) {
    if (scale < 2 || scale > 4) fail("SR scale must be 2, 3 or 4, got " + std::to_string(scale));
    if (head_width < 1) fail("head_width must be >= 1");
  } else if (in_channels != out_channels) {
    fail("CAR needs in_channels == out_channels for the global residual");
  }
}

WindowSpec ModelConfig::window_for_group(int group) const {
  if (window == WindowKind::Regular) return WindowSpec::regular(sh, sw);
  return WindowSpec::axial(axial_sl.at(static_cast<std::size_t>(group)));
}

int ModelConfig::mlp_hidden() const {
  return std::max(1, static_cast<int>(std::lround(mlp_ratio * channels)));
}

int ModelConfig::position_hidden() const {
  return bias_hidden > 0 ? bias_hidden : std::max(channels / 4, 8);
}

std::vector<int> ModelConfig::upsample_stages() const {
  if (task != Task::SR) return {};
  switch (scale) {
    case 2: return {2};
    case 3: return {3};
    case 4: return {2, 2};
    default: throw ConfigError("unsupported SR scale " + std::to_string(scale));
  }
}

ModelConfig ModelConfig::cat_r(int scale) {
  ModelConfig c;
  c.scale = scale;
  return c;
}

ModelConfig ModelConfig::cat_a(int scale) {
  ModelConfig c;
  c.scale = scale;
  c.window = WindowKind::Axial;
  c.axial_sl = {2, 2, 2, 4, 4, 4};
  return c;
}

ModelConfig ModelConfig::cat_car() {
  ModelConfig c = cat_a(1);
  c.task = Task::CAR;
  c.scale = 1;
  c.in_channels = 1;
  c.out_channels = 1;
  return c;
}

// ---------------------------------------------------------------- store

template <typename T>
void BasicParamStore<T>::add(std::string name, Tensor<T> value, bool trainable) {
  auto [it, inserted] = entries_.try_emplace(std::move(name), Entry{std::move(value), trainable});
  if (!inserted) throw ContractError("duplicate parameter name '" + it->first + "'");
}

template <typename T>
const Tensor<T>& BasicParamStore<T>::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second.value;
}

template <typename T>
Tensor<T>& BasicParamStore<T>::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second.value;
}

template <typename T>
std::int64_t BasicParamStore<T>::element_count() const {
  std::int64_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

template <typename T>
ParamBinding<T>::ParamBinding(const BasicParamStore<T>& store, Tape<T>* tape) {
  for (const auto& [name, e] : store) {
    vars_.emplace(name, tape && e.trainable ? tape->watch(e.value) : Var<T>(e.value));
  }
}

template <typename T>
const Var<T>& ParamBinding<T>::operator[](std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("missing parameter '" + std::string(name) + "'");
  return it->second;
}

// ---------------------------------------------------------------- layout

std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& config) {
  config.validate();
  const std::int64_t C = config.channels, F = config.mlp_hidden(), P = config.position_hidden();
  const std::int64_t M = config.heads;
  std::vector<std::pair<std::string, Shape>> out;
  auto conv = [&](const std::string& name, std::int64_t cin, std::int64_t cout) {
    out.push_back({name + ".weight", {3, 3, cin, cout}});
    out.push_back({name + ".bias", {cout}});
  };
  auto dense = [&](const std::string& name, std::int64_t cin, std::int64_t cout) {
    out.push_back({name + ".weight", {cin, cout}});
    out.push_back({name + ".bias", {cout}});
  };

  conv("shallow", config.in_channels, C);
  for (int g = 0; g < config.groups; ++g) {
    const std::string gp = "group." + std::to_string(g);
    for (int b = 0; b < config.blocks; ++b) {
      const std::string bp = gp + ".block." + std::to_string(b);
      out.push_back({bp + ".norm1.gamma", {C}});
      out.push_back({bp + ".norm1.beta", {C}});
      dense(bp + ".attn.qkv", C, 3 * C);
      dense(bp + ".attn.proj", C, C);
      if (config.lcm) {
        out.push_back({bp + ".attn.lcm.weight", {3, 3, C, 1}});
        out.push_back({bp + ".attn.lcm.bias", {C}});
      }
      dense(bp + ".attn.pos.fc1", 2, P);
      dense(bp + ".attn.pos.fc2", P, P);
      dense(bp + ".attn.pos.fc3", P, M);
      out.push_back({bp + ".norm2.gamma", {C}});
      out.push_back({bp + ".norm2.beta", {C}});
      dense(bp + ".mlp.fc1", C, F);
      dense(bp + ".mlp.fc2", F, C);
    }
    conv(gp + ".conv", C, C);
  }
  conv("body.conv", C, C);
  if (config.task == Task::SR) {
    const std::int64_t hw = config.head_width;
    conv("head.conv_before", C, hw);
    const auto stages = config.upsample_stages();
    for (std::size_t i = 0; i < stages.size(); ++i) {
      conv("head.up." + std::to_string(i), hw, hw * stages[i] * stages[i]);
    }
    conv("head.conv_last", hw, config.out_channels);
  } else {
    conv("head.conv_last", C, config.out_channels);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::int64_t count_params(const ModelConfig& config) {
  config.validate();
  const std::int64_t C = config.channels, F = config.mlp_hidden(), P = config.position_hidden();
  const std::int64_t M = config.heads;
  const std::int64_t norms = 4 * C;
  const std::int64_t qkv = 3 * C * C + 3 * C;
  const std::int64_t proj = C * C + C;
  const std::int64_t lcm = config.lcm ? 10 * C : 0;
  const std::int64_t pos = 3 * P + P * P + P + P * M + M;
  const std::int64_t mlp = 2 * C * F + F + C;
  const std::int64_t block = norms + qkv + proj + lcm + pos + mlp;
  const std::int64_t conv_cc = 9 * C * C + C;

  std::int64_t total = 9 * config.in_channels * C + C;                 // shallow
  total += config.groups * (config.blocks * block + conv_cc) + conv_cc;  // body
  if (config.task == Task::SR) {
    const std::int64_t hw = config.head_width;
    total += 9 * C * hw + hw;
    for (int r : config.upsample_stages()) total += 9 * hw * hw * r * r + hw * r * r;
    total += 9 * hw * config.out_channels + config.out_channels;
  } else {
    total += 9 * C * config.out_channels + config.out_channels;
  }
  return total;
}

// ---------------------------------------------------------------- init

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Hand-rolled normal sampling over mt19937_64 so the stream is identical on
// every platform (std::normal_distribution is implementation-defined).
Tensor<float> truncated_normal(const Shape& shape, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  Tensor<float> t(shape);
  auto out = t.data();
  std::size_t filled = 0;
  while (filled < out.size()) {
    // Marsaglia polar form: two normals per accepted point, no trig.
    // One 64-bit draw gives both coordinates, 32 bits each, in (-1, 1).
    const std::uint64_t bits = rng();
    const double u = (static_cast<double>(bits >> 32) + 0.5) * 0x1.0p-31 - 1.0;
    const double v = (static_cast<double>(bits & 0xffffffffULL) + 0.5) * 0x1.0p-31 - 1.0;
    const double s = u * u + v * v;
    if (s >= 1.0 || s == 0.0) continue;
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    for (double z : {u * f, v * f}) {
      if (std::abs(z) <= 2.0 && filled < out.size()) out[filled++] = static_cast<float>(z * sigma);
    }
  }
  return t;
}

}  // namespace

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamStore store;
  for (auto& [name, shape] : param_layout(config)) {
    if (ends_with(name, ".weight")) {
      store.add(name, truncated_normal(shape, splitmix64(seed ^ fnv1a(name)), 0.02));
    } else if (ends_with(name, ".gamma")) {
      store.add(name, Tensor<float>(shape, 1.0f));
    } else {
      store.add(name, Tensor<float>(shape, 0.0f));
    }
  }
  return store;
}

// ---------------------------------------------------------------- forward

template <typename T>
AttentionParams<T> attention_params(const ParamView<T>& attn, int heads, bool lcm) {
  AttentionParams<T> p;
  p.qkv_w = attn["qkv.weight"];
  p.qkv_b = attn["qkv.bias"];
  p.proj_w = attn["proj.weight"];
  p.proj_b = attn["proj.bias"];
  if (lcm) {
    p.lcm_w = attn["lcm.weight"];
    p.lcm_b = attn["lcm.bias"];
  }
  p.pos = {attn["pos.fc1.weight"], attn["pos.fc1.bias"], attn["pos.fc2.weight"],
           attn["pos.fc2.bias"],   attn["pos.fc3.weight"], attn["pos.fc3.bias"]};
  p.heads = heads;
  return p;
}

namespace {

template <typename T>
Var<T> conv(const Var<T>& x, const ParamView<T>& view, std::string_view name) {
  const ParamView<T> layer = view.scope(name);
  return conv2d_3x3(x, layer["weight"], layer["bias"]);
}

}  // namespace

template <typename T>
Var<T> catb_forward(const Var<T>& x, const ParamView<T>& block, const ModelConfig& config,
                    const WindowSpec& spec, bool shifted, AttentionTrace<T>* trace) {
  if (x.shape().size() != 4 || x.shape()[3] != config.channels) {
    throw ConfigError("catb_forward: input " + shape_str(x.shape()) + " does not carry " +
                      std::to_string(config.channels) + " channels");
  }
  const auto attn = attention_params(block.scope("attn"), config.heads, config.lcm);
  const Var<T> normed = layer_norm(x, block["norm1.gamma"], block["norm1.beta"]);
  const Var<T> mid = add(x, rwin_self_attention(normed, attn, spec, shifted, config.lcm, trace));
  const Var<T> normed2 = layer_norm(mid, block["norm2.gamma"], block["norm2.beta"]);
  const Var<T> hidden = gelu(linear(normed2, block["mlp.fc1.weight"], block["mlp.fc1.bias"]));
  return add(mid, linear(hidden, block["mlp.fc2.weight"], block["mlp.fc2.bias"]));
}

template <typename T>
Var<T> residual_group_forward(const Var<T>& x, const ParamView<T>& group,
                              const ModelConfig& config, const WindowSpec& spec) {
  Var<T> h = x;
  for (int b = 0; b < config.blocks; ++b) {
    h = catb_forward(h, group.scope("block." + std::to_string(b)), config, spec, b % 2 == 1);
  }
  return add(conv(h, group, "conv"), x);
}

template <typename T>
Var<T> cat_forward(const Var<T>& img, const ParamBinding<T>& params, const ModelConfig& config) {
  config.validate();
  const Shape& s = img.shape();
  if (s.size() != 4 || s[3] != config.in_channels) {
    throw ConfigError("cat_forward: image " + shape_str(s) + " does not have " +
                      std::to_string(config.in_channels) + " channels");
  }
  const ParamView<T> root(params);
  const Var<T> shallow = conv(img, root, "shallow");
  Var<T> feat = shallow;
  for (int g = 0; g < config.groups; ++g) {
    feat = residual_group_forward(feat, root.scope("group." + std::to_string(g)), config,
                                  config.window_for_group(g));
  }
  const Var<T> deep = add(conv(feat, root, "body.conv"), shallow);

  if (config.task == Task::CAR) return add(conv(deep, root, "head.conv_last"), img);

  Var<T> h = conv(deep, root, "head.conv_before");
  const auto stages = config.upsample_stages();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    h = pixel_shuffle(conv(h, root, "head.up." + std::to_string(i)), stages[i]);
  }
  return conv(h, root, "head.conv_last");
}

template <typename T>
Tensor<T> run_model(const Tensor<T>& img, const BasicParamStore<T>& store,
                    const ModelConfig& config) {
  const ParamBinding<T> binding(store, nullptr);
  return cat_forward(Var<T>(img), binding, config).value();
}

#define CAT_INSTANTIATE_MODEL(T)                                                               \
  template class BasicParamStore<T>;                                                           \
  template class ParamBinding<T>;                                                              \
  template AttentionParams<T> attention_params(const ParamView<T>&, int, bool);                \
  template Var<T> catb_forward(const Var<T>&, const ParamView<T>&, const ModelConfig&,         \
                               const WindowSpec&, bool, AttentionTrace<T>*);                   \
  template Var<T> residual_group_forward(const Var<T>&, const ParamView<T>&,                   \
                                         const ModelConfig&, const WindowSpec&);               \
  template Var<T> cat_forward(const Var<T>&, const ParamBinding<T>&, const ModelConfig&);      \
  template Tensor<T> run_model(const Tensor<T>&, const BasicParamStore<T>&, const ModelConfig&);

CAT_INSTANTIATE_MODEL(float)
CAT_INSTANTIATE_MODEL(double)

}  // namespace cat
