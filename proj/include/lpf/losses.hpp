// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "lpf/matrix.hpp"

namespace lpf {

struct LossWeights {
  double alpha = 1.0;  // category prediction
  double beta = 1.0;   // quality comparison

  void validate() const;
};

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix grad_logits;  // (p - y) / N
};

/// Mean cross entropy of softmax probabilities against integer labels. The
/// gradient is taken jointly through the softmax, w.r.t. its logits.
CrossEntropyResult cross_entropy_loss(const Matrix& probs, std::span<const int> classes);

struct MseResult {
  double loss = 0.0;
  std::vector<double> grad;  // 2 (pred - target) / len
};

MseResult mse_loss(std::span<const double> pred, std::span<const double> target);

struct HeadToggles {
  bool cpn = true;
  bool qcn = true;
};

/// alpha * l_cp + beta * l_qc + l_sp. A disabled head's term is not added at
/// all, so an SP-only total is l_sp bit for bit.
double total_loss(double l_cp, double l_qc, double l_sp, const LossWeights& w,
                  const HeadToggles& toggles = {});

}  // namespace lpf
