// SPDX-License-Identifier: Apache-2.0
#include "lpf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lpf/errors.hpp"
#include "lpf/layers.hpp"
#include "lpf/random.hpp"

namespace lpf {

namespace {

constexpr std::uint64_t kSplitStream = 0x5350'4c49'54ULL;   // "SPLIT"
constexpr std::uint64_t kBatchStream = 0x4241'5443'48ULL;   // "BATCH"
constexpr std::uint64_t kSynthStream = 0x5359'4e54'48ULL;   // "SYNTH"

}  // namespace

std::string_view polarity_name(Polarity p) {
  return p == Polarity::kHigherIsBetter ? "higher_is_better" : "lower_is_better";
}

Polarity parse_polarity(std::string_view text) {
  if (text == "higher_is_better" || text == "mos") return Polarity::kHigherIsBetter;
  if (text == "lower_is_better" || text == "dmos") return Polarity::kLowerIsBetter;
  throw DataError("unknown polarity '" + std::string(text) +
                  "' (expected higher_is_better or lower_is_better)");
}

std::vector<double> normalize_scores(std::span<const double> raw, Polarity polarity,
                                     bool* constant) {
  if (raw.empty()) throw DataError("normalize_scores: empty score vector");
  for (double v : raw) {
    if (!std::isfinite(v)) throw DataError("normalize_scores: non-finite score");
  }
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it, hi = *hi_it;
  if (constant) *constant = lo == hi;
  std::vector<double> out(raw.size());
  if (lo == hi) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = polarity == Polarity::kHigherIsBetter ? (raw[i] - lo) / range
                                                   : (hi - raw[i]) / range;
  }
  return out;
}

QuartileBoundaries quartile_boundaries(std::span<const double> norm_scores) {
  if (norm_scores.size() < 4) {
    throw DataError("quartile_boundaries: need at least 4 scores, got " +
                    std::to_string(norm_scores.size()));
  }
  std::vector<double> sorted(norm_scores.begin(), norm_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto at = [&](double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

int assign_category(double score, const QuartileBoundaries& q) {
  if (score <= q.q1) return 0;
  if (score <= q.q2) return 1;
  if (score <= q.q3) return 2;
  return 3;
}

std::vector<int> assign_categories(std::span<const double> norm_scores,
                                   const QuartileBoundaries& q) {
  std::vector<int> out(norm_scores.size());
  std::transform(norm_scores.begin(), norm_scores.end(), out.begin(),
                 [&](double s) { return assign_category(s, q); });
  return out;
}

FeatureDataset FeatureDataset::from_raw(std::vector<std::string> ids, Matrix features,
                                        std::vector<double> raw_scores, Polarity polarity,
                                        std::vector<std::string>* warnings) {
  if (ids.size() != features.rows() || ids.size() != raw_scores.size()) {
    throw DataError("dataset: " + std::to_string(ids.size()) + " ids, " +
                    std::to_string(features.rows()) + " feature rows, " +
                    std::to_string(raw_scores.size()) + " scores");
  }
  FeatureDataset ds;
  ds.ids = std::move(ids);
  ds.features = std::move(features);
  ds.raw_scores = std::move(raw_scores);
  ds.polarity = polarity;
  bool constant = false;
  ds.norm_scores = normalize_scores(ds.raw_scores, polarity, &constant);
  if (constant && warnings) warnings->push_back("all scores are equal; normalized to 0.5");
  if (ds.size() >= 4) {
    ds.categories = assign_categories(ds.norm_scores, quartile_boundaries(ds.norm_scores));
  } else {
    ds.categories.assign(ds.size(), 0);
    if (warnings) warnings->push_back("fewer than 4 samples; all categories set to 0");
  }
  if (warnings) {
    std::set<std::string_view> seen;
    for (const auto& id : ds.ids) {
      if (!seen.insert(id).second) {
        warnings->push_back("duplicate sample id '" + id + "'");
        break;
      }
    }
  }
  return ds;
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> indices) const {
  FeatureDataset out;
  out.name = name;
  out.polarity = polarity;
  out.features = Matrix(indices.size(), dim());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= size()) throw std::out_of_range("FeatureDataset::subset: index out of range");
    std::copy_n(features.row(src).begin(), dim(), out.features.row(r).begin());
    out.ids.push_back(ids[src]);
    out.raw_scores.push_back(raw_scores[src]);
    out.norm_scores.push_back(norm_scores[src]);
    out.categories.push_back(categories[src]);
  }
  return out;
}

void FeatureDataset::validate() const {
  const std::size_t n = size();
  if (features.rows() != n || raw_scores.size() != n || norm_scores.size() != n ||
      categories.size() != n) {
    throw DataError("dataset '" + name + "': collections have unequal lengths");
  }
  for (double s : norm_scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw DataError("dataset '" + name + "': score outside [0,1]");
  }
  for (int c : categories) {
    if (c < 0 || c >= kNumCategories) {
      throw DataError("dataset '" + name + "': category out of range");
    }
  }
  if (!features.all_finite()) throw DataError("dataset '" + name + "': non-finite feature");
}

std::pair<FeatureDataset, FeatureDataset> split_train_test(const FeatureDataset& ds,
                                                           double train_fraction,
                                                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_train_test: fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.size();
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw DataError("split_train_test: fraction " + std::to_string(train_fraction) + " of " +
                    std::to_string(n) + " samples leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng({seed, kSplitStream});
  rng.shuffle(order);

  const std::span<const std::size_t> all(order);
  FeatureDataset train = ds.subset(all.first(n_train));
  FeatureDataset test = ds.subset(all.subspan(n_train));
  if (train.size() >= 4) {
    const QuartileBoundaries q = quartile_boundaries(train.norm_scores);
    train.categories = assign_categories(train.norm_scores, q);
    test.categories = assign_categories(test.norm_scores, q);
  }
  return {std::move(train), std::move(test)};
}

std::vector<Batch> iterate_batches(const FeatureDataset& ds, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 2) {
    throw std::invalid_argument("iterate_batches: batch size must be at least 2");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng({seed, epoch, kBatchStream});
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    if (len < 2) break;
    Batch b;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + len));
    b.features = Matrix(len, ds.dim());
    for (std::size_t r = 0; r < len; ++r) {
      const std::size_t src = b.indices[r];
      std::copy_n(ds.features.row(src).begin(), ds.dim(), b.features.row(r).begin());
      b.scores.push_back(ds.norm_scores[src]);
      b.categories.push_back(ds.categories[src]);
      b.ids.push_back(ds.ids[src]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::string_view score_rule_name(ScoreRule rule) {
  return rule == ScoreRule::kLinear ? "linear" : "norm";
}

ScoreRule parse_score_rule(std::string_view text) {
  if (text == "linear") return ScoreRule::kLinear;
  if (text == "norm" || text == "norm-based" || text == "norm_based") return ScoreRule::kNormBased;
  throw std::invalid_argument("unknown score rule '" + std::string(text) +
                              "' (expected linear or norm)");
}

FeatureDataset synthesize_dataset(std::size_t n, std::size_t dim, std::uint64_t seed,
                                  ScoreRule rule) {
  if (n < 8) throw std::invalid_argument("synthesize_dataset: need n >= 8");
  if (dim < 1) throw std::invalid_argument("synthesize_dataset: need dim >= 1");
  Rng rng({seed, kSynthStream});

  // Rule parameters are drawn before the features so they depend on the seed only.
  std::vector<double> direction(dim);
  const double d = static_cast<double>(dim);
  if (rule == ScoreRule::kLinear) {
    for (double& w : direction) w = rng.normal() / std::sqrt(d);
  } else {
    for (double& c : direction) c = 0.5 * rng.normal();
  }
  const double tau = d;

  Matrix features(n, dim);
  for (double& v : features.values()) v = rng.normal();

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = features.row(i);
    double acc = 0.0;
    if (rule == ScoreRule::kLinear) {
      for (std::size_t j = 0; j < dim; ++j) acc += direction[j] * x[j];
      scores[i] = sigmoid(acc);
    } else {
      for (std::size_t j = 0; j < dim; ++j) acc += (x[j] - direction[j]) * (x[j] - direction[j]);
      scores[i] = std::exp(-acc / tau);
    }
  }

  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth_%06zu", i);
    ids[i] = buf;
  }
  FeatureDataset ds = FeatureDataset::from_raw(std::move(ids), std::move(features),
                                               std::move(scores), Polarity::kHigherIsBetter);
  ds.name = "synth-" + std::string(score_rule_name(rule));
  return ds;
}

}  // namespace lpf
