#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cetx/autograd.hpp"

namespace cetx {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<float>> m, v;
};

/// Zeroed moments shaped like `params`.
AdamState make_adam_state(const std::vector<Parameter<float>>& params);

/// Bias-corrected Adam update p -= lr * m_hat / (sqrt(v_hat) + eps) using
/// each parameter's accumulated grad, then zeroes the grads. Throws
/// NumericError naming the parameter and element on a non-finite gradient;
/// nothing is modified in that case.
void adam_step(std::vector<Parameter<float>>& params, AdamState& state, double learning_rate);

}  // namespace cetx
