// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lpf/layers.hpp"

namespace lpf {

/// Moment buffers keyed by parameter name, plus the shared step counter.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  /// Zeroed buffers shaped like `params`.
  static AdamState for_params(std::span<const Param> params);

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One Adam update with bias correction. Weight decay is the coupled L2 form:
/// grad += weight_decay * param before the moments are updated. The gradient
/// buffers are read, not modified.
void adam_step(std::span<const Param> params, AdamState& state, double learning_rate,
               double weight_decay);

}  // namespace lpf
