// SPDX-License-Identifier: Apache-2.0
#include "lpf/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

void require_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) {
    throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw ShapeError(std::string(what) + ": need at least 2 samples");
}

}  // namespace

std::optional<double> plcc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "plcc");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  const double r = sxy / (std::sqrt(sxx) * std::sqrt(syy));
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    // positions i..j (0-based) share ranks i+1..j+1
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> srocc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "srocc");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return plcc(rx, ry);
}

ClassificationReport classification_report(std::span<const int> truth,
                                           std::span<const int> predicted,
                                           std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw ShapeError("classification_report: length mismatch");
  }
  if (num_classes == 0) throw std::invalid_argument("classification_report: zero classes");
  ClassificationReport r;
  r.num_classes = num_classes;
  r.total = truth.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw DataError("classification_report: class out of range at index " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  std::size_t correct = 0;
  r.precision.assign(num_classes, 0.0);
  r.recall.assign(num_classes, 0.0);
  r.f1.assign(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    correct += r.confusion[c][c];
    std::size_t row = 0, col = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      row += r.confusion[c][k];
      col += r.confusion[k][c];
    }
    const double tp = static_cast<double>(r.confusion[c][c]);
    if (col > 0) r.precision[c] = tp / static_cast<double>(col);
    if (row > 0) r.recall[c] = tp / static_cast<double>(row);
    const double pr = r.precision[c] + r.recall[c];
    if (pr > 0.0) r.f1[c] = 2.0 * r.precision[c] * r.recall[c] / pr;
  }
  const double m = static_cast<double>(num_classes);
  r.accuracy = r.total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.total);
  r.macro_precision = std::accumulate(r.precision.begin(), r.precision.end(), 0.0) / m;
  r.macro_recall = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) / m;
  r.macro_f1 = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / m;
  return r;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, res.ptr);
}

}  // namespace lpf
