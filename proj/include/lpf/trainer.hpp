// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lpf/adam.hpp"
#include "lpf/dataset.hpp"
#include "lpf/losses.hpp"
#include "lpf/metrics.hpp"
#include "lpf/model.hpp"

namespace lpf {

struct TrainConfig {
  double learning_rate = 8e-5;
  double weight_decay = 1e-5;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  bool deterministic = true;
  /// Recorded so a checkpoint can reproduce its own train/test split.
  double train_fraction = 0.8;

  void validate() const;
  friend bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return a.learning_rate == b.learning_rate && a.weight_decay == b.weight_decay &&
           a.batch_size == b.batch_size && a.epochs == b.epochs && a.seed == b.seed &&
           a.loss_weights.alpha == b.loss_weights.alpha &&
           a.loss_weights.beta == b.loss_weights.beta && a.deterministic == b.deterministic &&
           a.train_fraction == b.train_fraction;
  }
};

struct StepLosses {
  double l_cp = 0.0;
  double l_qc = 0.0;
  double l_sp = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  StepLosses losses;  // means over the epoch's batches
  std::optional<double> train_plcc;
  std::optional<double> train_srocc;
  std::optional<double> test_plcc;
  std::optional<double> test_srocc;
  std::optional<double> test_accuracy;
};

struct Evaluation {
  std::optional<double> plcc;
  std::optional<double> srocc;
  std::vector<double> predictions;
  std::vector<double> stream_weights;
  std::vector<int> predicted_categories;
  ClassificationReport report;
};

/// Eval-mode metrics: correlations of predict() against normalized scores,
/// and a category report from the CPN argmax when `with_categories`.
Evaluation evaluate(const LpfModel& model, const FeatureDataset& ds, bool with_categories = true);

/// Owns a model and its optimizer state and runs the joint multi-task loop.
class Trainer {
 public:
  Trainer(const ModelConfig& model_config, const TrainConfig& train_config);
  /// Resume from existing state; `epochs_done` full epochs already ran.
  Trainer(LpfModel model, AdamState optimizer, const TrainConfig& train_config,
          std::size_t epochs_done);

  /// Zero grads, forward every enabled head, one combined backward through
  /// the FEN, one Adam step. Throws NumericalError on a non-finite loss.
  StepLosses train_step(const Batch& batch);

  /// One pass over `train` followed by eval-mode metrics. `test` may be null.
  EpochRecord run_epoch(const FeatureDataset& train, const FeatureDataset* test);

  const LpfModel& model() const { return model_; }
  LpfModel& model() { return model_; }
  const AdamState& optimizer() const { return optimizer_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epochs_done() const { return epochs_done_; }

  /// Invoked after every optimizer step.
  std::function<void(const StepLosses&)> on_step;

 private:
  LpfModel model_;
  AdamState optimizer_;
  TrainConfig config_;
  std::size_t epochs_done_ = 0;
  std::size_t batch_index_ = 0;
};

struct TrainResult {
  LpfModel model;
  AdamState optimizer;
  std::vector<EpochRecord> records;
  LpfModel best_model;  // highest test SROCC seen
  AdamState best_optimizer;
  std::size_t best_epoch = 0;
  std::optional<double> best_srocc;
};

using EpochCallback = std::function<void(const EpochRecord&, const Trainer&)>;

TrainResult train(const FeatureDataset& train_set, const FeatureDataset& test_set,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch = {});

}  // namespace lpf
