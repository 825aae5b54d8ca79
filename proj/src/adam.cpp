#include "cetx/adam.hpp"

#include <cmath>

namespace cetx {

AdamState make_adam_state(const std::vector<Parameter<float>>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

void adam_step(std::vector<Parameter<float>>& params, AdamState& state, double learning_rate) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error("adam_step: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw ShapeError("adam_step: moment or gradient shape differs for " + p.name);
    }
    for (std::size_t j = 0; j < p.grad.size(); ++j) {
      if (!std::isfinite(p.grad[j])) {
        throw NumericError("non-finite gradient in " + p.name + "[" + std::to_string(j) + "] at optimizer step " +
                           std::to_string(state.step + 1));
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = learning_rate * (mj / c1) / (std::sqrt(vj / c2) + state.eps);
      p.value[j] = static_cast<float>(p.value[j] - update);
    }
    p.zero_grad();
  }
}

}  // namespace cetx
