#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cat/ops.hpp"

namespace cat::testing {

inline Tensor<double> uniform(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline Tensor<float> uniform_f(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  return uniform(shape, rng, lo, hi).cast<float>();
}

using GraphFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

// Worst per-tensor relative error ||analytic - numeric|| / max(norms, 1e-8)
// over all inputs, for loss = sum(f(inputs) * probe) with a random probe.
inline double gradient_error(const GraphFn& f, const std::vector<Tensor<double>>& inputs,
                             std::uint64_t seed = 1, double h = 1e-4) {
  std::mt19937_64 rng(seed);
  Tensor<double> probe;
  {
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.emplace_back(t);
    probe = uniform(f(vars).shape(), rng);
  }
  auto loss_of = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<Var<double>> vars;
    for (const auto& t : xs) vars.emplace_back(t);
    return sum(mul(f(vars), Var<double>(probe))).value().item();
  };
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.watch(t));
  const auto grads = tape.backward(sum(mul(f(leaves), Var<double>(probe))));

  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<Tensor<double>> xs = inputs;
    double diff = 0, na = 0, nn = 0;
    for (std::int64_t i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + h;
      const double up = loss_of(xs);
      xs[k][i] = orig - h;
      const double down = loss_of(xs);
      xs[k][i] = orig;
      const double num = (up - down) / (2 * h), ana = grads[leaves[k]][i];
      diff += (num - ana) * (num - ana);
      na += ana * ana;
      nn += num * num;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(std::max(na, nn)), 1e-8));
  }
  return worst;
}

}  // namespace cat::testing
