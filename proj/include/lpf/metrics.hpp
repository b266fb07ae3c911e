// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lpf {

/// Pearson correlation. Empty when either input is constant (undefined).
std::optional<double> plcc(std::span<const double> x, std::span<const double> y);

/// Fractional ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> v);

/// Spearman correlation: Pearson on average ranks. Empty when either input is
/// constant.
std::optional<double> srocc(std::span<const double> x, std::span<const double> y);

struct ClassificationReport {
  std::size_t num_classes = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;
  std::vector<double> f1;
  /// confusion[true][pred]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Macro-averaged precision / recall / F1. A class with an empty denominator
/// scores 0 for that quantity.
ClassificationReport classification_report(std::span<const int> truth,
                                           std::span<const int> predicted,
                                           std::size_t num_classes);

/// "nan" when undefined, otherwise shortest round-trip decimal.
std::string format_metric(const std::optional<double>& v);

}  // namespace lpf
