#include <cmath>
#include <numbers>
#include <random>

#include "cat/harness.hpp"
#include "cat/ops.hpp"

namespace cat {

ModelConfig overfit_config() {
  ModelConfig c;
  c.groups = 1;
  c.blocks = 1;
  c.channels = 16;
  c.heads = 2;
  c.sh = 2;
  c.sw = 4;
  c.scale = 2;
  c.head_width = 16;
  c.validate();
  return c;
}

ImageF synthetic_image(int h, int w, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageF img(h, w, channels);
  for (int c = 0; c < channels; ++c) {
    const double fy = 1 + 2 * u(rng), fx = 1 + 2 * u(rng), phase = 2 * std::numbers::pi * u(rng);
    const double edge = 0.25 + 0.5 * u(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double ty = static_cast<double>(y) / h, tx = static_cast<double>(x) / w;
        double v = 0.5 + 0.3 * std::sin(2 * std::numbers::pi * (fy * ty + fx * tx) + phase);
        if (tx + 0.5 * ty > edge) v = 0.15 + 0.7 * v;  // one diagonal step edge
        img.at(y, x, c) = 255.0 * v;
      }
  }
  return img;
}

OverfitResult run_overfit(const OverfitOptions& options,
                          const std::function<void(int, double)>& on_step) {
  if (options.steps < 1) throw ContractError("overfit needs at least one step");
  const ModelConfig config = overfit_config();
  const ImageF hr = synthetic_image(32, 32, 3, options.seed);
  const ImageF lr = bicubic_downscale(hr, 2);
  auto to_tensor = [](const ImageF& img) {
    Tensor<float> t({1, img.height, img.width, img.channels});
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      t[static_cast<std::int64_t>(i)] = static_cast<float>(img.data[i] / 255.0);
    }
    return t;
  };
  const Tensor<float> input = to_tensor(lr), target = to_tensor(hr);

  ParamStore store = init_params(config, options.seed);
  std::vector<std::string> names;
  for (const auto& [name, e] : store) names.push_back(name);
  AdamMoments<float> moments;
  OptimizerHyper hyper;
  hyper.lr = options.lr;
  hyper.validate();

  OverfitResult result;
  auto loss_at = [&](Tape<float>* tape, std::unique_ptr<ParamBinding<float>>& binding) {
    binding = std::make_unique<ParamBinding<float>>(store, tape);
    return l1_loss(cat_forward(Var<float>(input), *binding, config), target);
  };
  for (int step = 0; step < options.steps; ++step) {
    Tape<float> tape;
    std::unique_ptr<ParamBinding<float>> binding;
    const Var<float> loss = loss_at(&tape, binding);
    const double value = loss.value().item();
    result.losses.push_back(value);
    if (on_step) on_step(step, value);
    const Gradients<float> grads = tape.backward(loss);
    std::vector<Tensor<float>> params, g;
    params.reserve(names.size());
    g.reserve(names.size());
    for (const auto& name : names) {
      params.push_back(store.at(name));
      g.push_back(grads[(*binding)[name]]);
    }
    adam_step(params, g, moments, hyper);
    for (std::size_t i = 0; i < names.size(); ++i) store.at(names[i]) = std::move(params[i]);
  }
  std::unique_ptr<ParamBinding<float>> binding;
  const double final_loss = loss_at(nullptr, binding).value().item();
  result.losses.push_back(final_loss);
  if (on_step) on_step(options.steps, final_loss);
  result.reduction = 1.0 - final_loss / result.losses.front();
  result.passed = result.reduction >= options.target_reduction;
  return result;
}

}  // namespace cat
