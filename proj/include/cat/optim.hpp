#pragma once

#include <cstdint>
#include <vector>

#include "cat/tensor.hpp"

namespace cat {

struct OptimizerHyper {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  std::int64_t step = 0;

  void validate() const;
};

template <typename T>
struct AdamMoments {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

// Bias-corrected Adam. Moments are created on first use; params, grads and
// moments must agree in count and shape. Advances hyper.step.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamMoments<T>& state, OptimizerHyper& hyper);

}  // namespace cat
