// SPDX-License-Identifier: Apache-2.0
#include "lpf/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "lpf/errors.hpp"

namespace lpf {

void LossWeights::validate() const {
  if (!(std::isfinite(alpha) && alpha >= 0.0 && std::isfinite(beta) && beta >= 0.0)) {
    throw std::invalid_argument("LossWeights: alpha and beta must be finite and >= 0");
  }
}

CrossEntropyResult cross_entropy_loss(const Matrix& probs, std::span<const int> classes) {
  const std::size_t n = probs.rows(), m = probs.cols();
  if (classes.size() != n) {
    throw ShapeError("cross_entropy_loss: " + std::to_string(classes.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  if (n == 0) throw ShapeError("cross_entropy_loss: empty batch");
  CrossEntropyResult out;
  out.grad_logits = probs;
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = classes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= m) {
      throw DataError("cross_entropy_loss: class " + std::to_string(c) + " out of range [0, " +
                      std::to_string(m) + ")");
    }
    // Clamp so an underflowed probability gives a large finite loss.
    const double p = std::max(probs(i, static_cast<std::size_t>(c)),
                              std::numeric_limits<double>::min());
    sum -= std::log(p);
    out.grad_logits(i, static_cast<std::size_t>(c)) -= 1.0;
  }
  for (double& g : out.grad_logits.values()) g *= inv_n;
  out.loss = sum * inv_n;
  return out;
}

MseResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("mse_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()));
  }
  if (pred.empty()) throw ShapeError("mse_loss: empty input");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  MseResult out;
  out.grad.resize(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred[i] - target[i];
    sum += diff * diff;
    out.grad[i] = 2.0 * diff * inv_n;
  }
  out.loss = sum * inv_n;
  return out;
}

double total_loss(double l_cp, double l_qc, double l_sp, const LossWeights& w,
                  const HeadToggles& toggles) {
  double total = 0.0;
  if (toggles.cpn) total += w.alpha * l_cp;
  if (toggles.qcn) total += w.beta * l_qc;
  return total + l_sp;
}

}  // namespace lpf
