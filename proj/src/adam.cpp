// SPDX-License-Identifier: Apache-2.0
#include "lpf/adam.hpp"

#include <cmath>

#include "lpf/errors.hpp"

namespace lpf {

AdamState AdamState::for_params(std::span<const Param> params) {
  AdamState s;
  for (const auto& p : params) {
    s.names.push_back(p.name);
    s.first_moment.emplace_back(p.value.size(), 0.0);
    s.second_moment.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const Param> params, AdamState& state, double learning_rate,
               double weight_decay) {
  if (params.size() != state.names.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but state has " +
                     std::to_string(state.names.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.name != state.names[i] || p.value.size() != state.first_moment[i].size() ||
        p.grad.size() != p.value.size()) {
      throw ShapeError("adam_step: parameter '" + p.name + "' does not match state slot '" +
                       state.names[i] + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value;
    const auto grad = params[i].grad;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k] + weight_decay * value[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      value[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace lpf
