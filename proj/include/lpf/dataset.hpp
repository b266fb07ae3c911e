// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lpf/matrix.hpp"

namespace lpf {

inline constexpr int kNumCategories = 4;

enum class Polarity {
  kHigherIsBetter,  // MOS
  kLowerIsBetter,   // DMOS
};

std::string_view polarity_name(Polarity p);
Polarity parse_polarity(std::string_view text);

struct QuartileBoundaries {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
};

/// Aligned features, scores, and quartile category labels.
struct FeatureDataset {
  std::string name;
  std::vector<std::string> ids;
  Matrix features;  // n x L
  std::vector<double> raw_scores;
  std::vector<double> norm_scores;  // in [0, 1], 1 = best
  std::vector<int> categories;      // 0..3
  Polarity polarity = Polarity::kHigherIsBetter;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return features.cols(); }

  /// Normalizes scores and labels categories from this population's quartiles.
  /// Appends any data-quality notices to `warnings` when given.
  static FeatureDataset from_raw(std::vector<std::string> ids, Matrix features,
                                 std::vector<double> raw_scores, Polarity polarity,
                                 std::vector<std::string>* warnings = nullptr);

  /// Copy of the rows at `indices`, in that order.
  FeatureDataset subset(std::span<const std::size_t> indices) const;

  /// Throws DataError when any alignment or range invariant is broken.
  void validate() const;
};

/// Min-max map onto [0, 1] with 1 meaning best quality. A constant input maps
/// to 0.5 everywhere and sets `*constant` when given.
std::vector<double> normalize_scores(std::span<const double> raw, Polarity polarity,
                                     bool* constant = nullptr);

/// Quartiles of the sorted scores by linear interpolation between order
/// statistics (position p * (n - 1)).
QuartileBoundaries quartile_boundaries(std::span<const double> norm_scores);

/// Closed upper bounds: s <= q1 -> 0, s <= q2 -> 1, s <= q3 -> 2, else 3.
int assign_category(double score, const QuartileBoundaries& q);
std::vector<int> assign_categories(std::span<const double> norm_scores,
                                   const QuartileBoundaries& q);

/// Seeded shuffle split. Both sides are relabelled from the training side's
/// quartiles so no test information reaches the labels.
std::pair<FeatureDataset, FeatureDataset> split_train_test(const FeatureDataset& ds,
                                                           double train_fraction,
                                                           std::uint64_t seed);

struct Batch {
  Matrix features;
  std::vector<double> scores;
  std::vector<int> categories;
  std::vector<std::string> ids;
  std::vector<std::size_t> indices;  // rows in the source dataset

  std::size_t size() const { return indices.size(); }
};

/// Per-epoch shuffled batches. A trailing batch is kept when it has at least
/// two samples and dropped otherwise.
std::vector<Batch> iterate_batches(const FeatureDataset& ds, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch);

enum class ScoreRule {
  kLinear,     // s = sigmoid(w . x)
  kNormBased,  // s = exp(-|x - c|^2 / tau)
};

std::string_view score_rule_name(ScoreRule rule);
ScoreRule parse_score_rule(std::string_view text);

FeatureDataset synthesize_dataset(std::size_t n, std::size_t dim, std::uint64_t seed,
                                  ScoreRule rule);

// ------------------------------------------------------------------ file I/O

/// Fixed 28-byte LPFF header; the payload follows as count x dim f32 values.
struct FeatureFileHeader {
  std::uint32_t version = 1;
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
  std::uint8_t dtype = 0;
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 28;

void write_feature_file(const std::filesystem::path& path, const Matrix& features);
Matrix read_feature_file(const std::filesystem::path& path);
FeatureFileHeader read_feature_header(const std::filesystem::path& path);

struct ManifestRow {
  std::string id;
  double score = 0.0;
};

void write_manifest(const std::filesystem::path& path, std::span<const std::string> ids,
                    std::span<const double> scores);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

/// Key-value text naming a feature file and manifest. Relative paths resolve
/// against the descriptor's directory.
struct DatasetDescriptor {
  std::string name;
  std::filesystem::path features;
  std::filesystem::path manifest;
  Polarity polarity = Polarity::kHigherIsBetter;
};

void write_descriptor(const std::filesystem::path& path, const DatasetDescriptor& d);
DatasetDescriptor read_descriptor(const std::filesystem::path& path);

struct LoadedDataset {
  FeatureDataset dataset;
  std::vector<std::string> warnings;
};

LoadedDataset load_dataset(const std::filesystem::path& descriptor_path);

}  // namespace lpf
