#include "cat/optim.hpp"

#include <cmath>
#include <string>

namespace cat {

void OptimizerHyper::validate() const {
  if (!(lr > 0)) throw ConfigError("adam: learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam: beta2 must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("adam: eps must be positive");
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamMoments<T>& state, OptimizerHyper& hyper) {
  hyper.validate();
  if (params.size() != grads.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape(), T{0});
      state.v.emplace_back(p.shape(), T{0});
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam: moment count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape() ||
        params[i].shape() != state.v[i].shape()) {
      throw DimensionError("adam: shape mismatch at parameter " + std::to_string(i) + ": " +
                           shape_str(params[i].shape()) + " vs grad " + shape_str(grads[i].shape()));
    }
  }

  ++hyper.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(hyper.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(hyper.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * gj;
      const double vj = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = hyper.lr * (mj / c1) / (std::sqrt(vj / c2) + hyper.eps);
      p[j] = static_cast<T>(p[j] - update);
    }
  }
}

template void adam_step(std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&,
                        AdamMoments<float>&, OptimizerHyper&);
template void adam_step(std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&,
                        AdamMoments<double>&, OptimizerHyper&);

}  // namespace cat
