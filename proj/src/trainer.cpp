// SPDX-License-Identifier: Apache-2.0
#include "lpf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

void add_into(Matrix& acc, const Matrix& add) {
  auto a = acc.values();
  const auto b = add.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

int argmax_row(const Matrix& m, std::size_t r) {
  const auto row = m.row(r);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: train_fraction must lie in (0, 1)");
  }
  loss_weights.validate();
}

Evaluation evaluate(const LpfModel& model, const FeatureDataset& ds, bool with_categories) {
  if (ds.size() == 0) throw DataError("evaluate: empty dataset '" + ds.name + "'");
  Evaluation ev;
  const DaqrnOutput out = model.explain(ds.features);
  ev.predictions = out.q_pred;
  ev.stream_weights = out.weights;
  if (ds.size() >= 2) {
    ev.plcc = plcc(ev.predictions, ds.norm_scores);
    ev.srocc = srocc(ev.predictions, ds.norm_scores);
  }
  if (with_categories) {
    const Matrix probs = model.category_probabilities(ds.features);
    ev.predicted_categories.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) ev.predicted_categories[i] = argmax_row(probs, i);
    ev.report = classification_report(ds.categories, ev.predicted_categories,
                                      model.config().num_classes);
  }
  return ev;
}

Trainer::Trainer(const ModelConfig& model_config, const TrainConfig& train_config)
    : model_(model_config, train_config.seed), config_(train_config) {
  config_.validate();
  optimizer_ = AdamState::for_params(model_.trainable_params());
}

Trainer::Trainer(LpfModel model, AdamState optimizer, const TrainConfig& train_config,
                 std::size_t epochs_done)
    : model_(std::move(model)),
      optimizer_(std::move(optimizer)),
      config_(train_config),
      epochs_done_(epochs_done) {
  config_.validate();
}

StepLosses Trainer::train_step(const Batch& batch) {
  if (batch.size() < 2) throw DataError("train_step: batch needs at least 2 samples");
  const ModelConfig& mc = model_.config();
  const LossWeights& w = config_.loss_weights;
  const auto fail = [&](const char* component, double value) {
    throw NumericalError("non-finite " + std::string(component) + " (" + std::to_string(value) +
                         ") at epoch " + std::to_string(epochs_done_) + ", batch " +
                         std::to_string(batch_index_));
  };

  model_.set_mode(Mode::kTrain);
  model_.zero_grad();

  StepLosses losses;
  const Matrix latent = model_.fen_forward(batch.features);
  Matrix d_latent(latent.rows(), latent.cols());

  if (mc.cpn_enabled) {
    const Matrix probs = model_.cpn_forward(latent);
    CrossEntropyResult ce = cross_entropy_loss(probs, batch.categories);
    if (!std::isfinite(ce.loss)) fail("L_CP (category prediction loss)", ce.loss);
    losses.l_cp = ce.loss;
    for (double& g : ce.grad_logits.values()) g *= w.alpha;
    add_into(d_latent, model_.cpn_backward_logits(ce.grad_logits));
  }

  if (mc.qcn_enabled) {
    const auto pairs = upper_triangle_pairs(batch.size());
    std::vector<double> gaps(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k)
      gaps[k] = batch.scores[pairs[k].first] - batch.scores[pairs[k].second];
    const auto predicted = model_.qcn_forward_indexed(latent, pairs);
    MseResult mse = mse_loss(predicted, gaps);
    if (!std::isfinite(mse.loss)) fail("L_QC (quality comparison loss)", mse.loss);
    losses.l_qc = mse.loss;
    for (double& g : mse.grad) g *= w.beta;
    add_into(d_latent, model_.qcn_backward_indexed(mse.grad));
  }

  const DaqrnOutput out = model_.daqrn_forward(latent);
  const MseResult sp = mse_loss(out.q_pred, batch.scores);
  if (!std::isfinite(sp.loss)) fail("L_SP (score prediction loss)", sp.loss);
  losses.l_sp = sp.loss;
  add_into(d_latent, model_.daqrn_backward(sp.grad));

  losses.total = total_loss(losses.l_cp, losses.l_qc, losses.l_sp, w,
                            HeadToggles{mc.cpn_enabled, mc.qcn_enabled});
  if (!std::isfinite(losses.total)) fail("total loss", losses.total);

  model_.fen_backward(d_latent);
  adam_step(model_.trainable_params(), optimizer_, config_.learning_rate, config_.weight_decay);
  ++batch_index_;
  if (on_step) on_step(losses);
  return losses;
}

EpochRecord Trainer::run_epoch(const FeatureDataset& train_set, const FeatureDataset* test_set) {
  const auto batches =
      iterate_batches(train_set, config_.batch_size, config_.seed, epochs_done_);
  if (batches.empty()) {
    throw DataError("training set of " + std::to_string(train_set.size()) +
                    " samples yields no batch of size >= 2");
  }
  EpochRecord rec;
  rec.epoch = epochs_done_;
  batch_index_ = 0;
  for (const Batch& b : batches) {
    const StepLosses s = train_step(b);
    rec.losses.l_cp += s.l_cp;
    rec.losses.l_qc += s.l_qc;
    rec.losses.l_sp += s.l_sp;
    rec.losses.total += s.total;
  }
  const double inv = 1.0 / static_cast<double>(batches.size());
  rec.losses.l_cp *= inv;
  rec.losses.l_qc *= inv;
  rec.losses.l_sp *= inv;
  rec.losses.total *= inv;

  model_.set_mode(Mode::kEval);
  const Evaluation tr = evaluate(model_, train_set, false);
  rec.train_plcc = tr.plcc;
  rec.train_srocc = tr.srocc;
  if (test_set != nullptr && test_set->size() > 0) {
    const Evaluation te = evaluate(model_, *test_set, true);
    rec.test_plcc = te.plcc;
    rec.test_srocc = te.srocc;
    rec.test_accuracy = te.report.accuracy;
  }
  ++epochs_done_;
  return rec;
}

TrainResult train(const FeatureDataset& train_set, const FeatureDataset& test_set,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch) {
  if (train_set.dim() != model_config.input_dim) {
    throw ShapeError("train: dataset dim " + std::to_string(train_set.dim()) +
                     " but model input_dim " + std::to_string(model_config.input_dim));
  }
  if (test_set.size() > 0 && test_set.dim() != model_config.input_dim) {
    throw ShapeError("train: test dataset dim " + std::to_string(test_set.dim()) +
                     " but model input_dim " + std::to_string(model_config.input_dim));
  }
  Trainer trainer(model_config, train_config);
  TrainResult result;
  result.best_model = trainer.model();
  result.best_optimizer = trainer.optimizer();
  for (std::size_t e = 0; e < train_config.epochs; ++e) {
    EpochRecord rec = trainer.run_epoch(train_set, &test_set);
    if (rec.test_srocc && (!result.best_srocc || *rec.test_srocc > *result.best_srocc)) {
      result.best_srocc = rec.test_srocc;
      result.best_epoch = rec.epoch;
      result.best_model = trainer.model();
      result.best_optimizer = trainer.optimizer();
    }
    if (on_epoch) on_epoch(rec, trainer);
    result.records.push_back(rec);
  }
  result.model = trainer.model();
  result.optimizer = trainer.optimizer();
  return result;
}

}  // namespace lpf
