// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-only oracles: naive kernels and central finite differences. Nothing
// here calls into the optimized paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "lpf/matrix.hpp"
#include "lpf/random.hpp"

namespace lpf::testing {

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
      c(i, j) = sum;
    }
  return c;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

/// Relative error with an absolute floor so near-zero gradients compare sanely.
/// The default floor sits above central-difference roundoff (about
/// 1e-16 * |loss| / h) for O(1) losses, so a gradient that is exactly zero by
/// symmetry is not reported as a 100% miss.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of `loss` at every entry of `values`, compared with
/// `analytic`. Returns the worst relative error. `values` is restored.
inline double max_fd_error(std::span<double> values, std::span<const double> analytic,
                           const std::function<double()>& loss, double h = 1e-5,
                           double floor = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = loss();
    values[i] = orig - h;
    const double down = loss();
    values[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, relative_error(analytic[i], numeric, floor));
  }
  return worst;
}

/// Same, but only at `count` randomly chosen entries (for large tensors).
inline double sampled_fd_error(std::span<double> values, std::span<const double> analytic,
                               const std::function<double()>& loss, std::size_t count, Rng& rng,
                               double h = 1e-5, double floor = 1e-5) {
  double worst = 0.0;
  for (std::size_t s = 0; s < count && values.size() > 0; ++s) {
    const std::size_t i = static_cast<std::size_t>(rng.below(values.size()));
    const double orig = values[i];
    values[i] = orig + h;
    const double up = loss();
    values[i] = orig - h;
    const double down = loss();
    values[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h), floor));
  }
  return worst;
}

/// sum(w .* m): a generic scalar read-out with nontrivial upstream gradient w.
inline double weighted_sum(const Matrix& m, const Matrix& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.values()[i] * w.values()[i];
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const auto p = std::filesystem::temp_directory_path() /
                 ("lpf-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                  std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace lpf::testing
