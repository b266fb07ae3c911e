// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "lpf/adam.hpp"
#include "lpf/errors.hpp"
#include "lpf/trainer.hpp"
#include "test_support.hpp"

namespace lpf {
namespace {

std::vector<Param> scalar_param(double& w, double& g) {
  return {Param{"w", std::span<double>(&w, 1), std::span<double>(&g, 1)}};
}

ModelConfig small_model(std::size_t dim) {
  ModelConfig c;
  c.input_dim = dim;
  c.fen_dim = 16;
  c.hidden_dim = 8;
  return c;
}

TrainConfig quick_config(std::size_t epochs, std::uint64_t seed = 0) {
  TrainConfig t;
  t.epochs = epochs;
  t.seed = seed;
  t.learning_rate = 1e-3;
  return t;
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  double w = 1.0, g = 2.0;
  auto p = scalar_param(w, g);
  AdamState s = AdamState::for_params(p);
  adam_step(p, s, 0.1, 0.0);
  // m_hat / sqrt(v_hat) = g / |g|, up to epsilon
  EXPECT_NEAR(w, 0.9, 1e-8);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  double w = 1.25, g = 0.0;
  auto p = scalar_param(w, g);
  AdamState s = AdamState::for_params(p);
  for (int i = 0; i < 5; ++i) adam_step(p, s, 0.1, 0.0);
  EXPECT_EQ(w, 1.25);
}

TEST(Adam, CoupledWeightDecayEntersTheGradient) {
  // With g = 0 and wd > 0 the effective gradient is wd * w > 0, so the first
  // step moves w down by lr.
  double w = 2.0, g = 0.0;
  auto p = scalar_param(w, g);
  AdamState s = AdamState::for_params(p);
  adam_step(p, s, 0.1, 0.5);
  EXPECT_NEAR(w, 1.9, 1e-8);
  EXPECT_NEAR(s.first_moment[0][0], 0.1 * 1.0, 1e-15);
}

TEST(Adam, ConvergesOnQuadratic) {
  double w = 0.0, g = 0.0;
  auto p = scalar_param(w, g);
  AdamState s = AdamState::for_params(p);
  for (int i = 0; i < 200; ++i) {
    g = 2.0 * (w - 3.0);
    adam_step(p, s, 0.1, 0.0);
  }
  EXPECT_LT(std::abs(w - 3.0), 1e-2);
}

TEST(Adam, StateMustMatchParameters) {
  double w = 0, g = 0, w2 = 0, g2 = 0;
  auto p = scalar_param(w, g);
  AdamState s = AdamState::for_params(p);
  std::vector<Param> two{p[0], Param{"v", std::span<double>(&w2, 1), std::span<double>(&g2, 1)}};
  EXPECT_THROW(adam_step(two, s, 0.1, 0.0), ShapeError);
  std::vector<Param> renamed{Param{"v", p[0].value, p[0].grad}};
  EXPECT_THROW(adam_step(renamed, s, 0.1, 0.0), ShapeError);
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  TrainConfig t;
  t.learning_rate = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.batch_size = 1;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.epochs = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Evaluate, PurityAndPerfectPredictions) {
  const auto ds = synthesize_dataset(40, 6, 1, ScoreRule::kLinear);
  const LpfModel m(small_model(6), 2);
  const Evaluation a = evaluate(m, ds);
  const Evaluation b = evaluate(m, ds);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.plcc, b.plcc);
  EXPECT_EQ(a.report.confusion, b.report.confusion);
  for (std::size_t c = 0; c < 4; ++c) {
    std::size_t row = 0, count = 0;
    for (std::size_t v : a.report.confusion[c]) row += v;
    for (int k : ds.categories) count += static_cast<std::size_t>(k) == c;
    EXPECT_EQ(row, count);
  }
  const std::vector<double> truth{0.1, 0.9};
  EXPECT_DOUBLE_EQ(*plcc(truth, truth), 1.0);
  EXPECT_DOUBLE_EQ(*srocc(truth, truth), 1.0);
  FeatureDataset empty;
  EXPECT_THROW(evaluate(m, empty), DataError);
}

TEST(Training, SpOnlyTotalEqualsSpEveryStep) {
  const auto ds = synthesize_dataset(64, 6, 3, ScoreRule::kLinear);
  ModelConfig mc = small_model(6);
  mc.cpn_enabled = false;
  mc.qcn_enabled = false;
  Trainer tr(mc, quick_config(3));
  std::size_t steps = 0;
  tr.on_step = [&](const StepLosses& s) {
    ++steps;
    EXPECT_EQ(s.total, s.l_sp);
    EXPECT_EQ(s.l_cp, 0.0);
    EXPECT_EQ(s.l_qc, 0.0);
  };
  for (int e = 0; e < 3; ++e) tr.run_epoch(ds, nullptr);
  EXPECT_EQ(steps, 12u);
}

TEST(Training, DisabledHeadsAreUntouched) {
  const auto ds = synthesize_dataset(48, 5, 4, ScoreRule::kLinear);
  ModelConfig mc = small_model(5);
  mc.cpn_enabled = false;
  mc.qcn_enabled = false;
  mc.ws_enabled = false;
  Trainer tr(mc, quick_config(2));
  const LpfModel before = tr.model();
  tr.run_epoch(ds, nullptr);
  tr.run_epoch(ds, nullptr);
  LpfModel after = tr.model();
  LpfModel ref = before;
  for (auto [a, b] : {std::pair{&after.cpn, &ref.cpn}, {&after.qcn, &ref.qcn}, {&after.ws, &ref.ws}}) {
    auto pa = a->params(), pb = b->params();
    for (std::size_t i = 0; i < pa.size(); ++i)
      EXPECT_TRUE(std::equal(pa[i].value.begin(), pa[i].value.end(), pb[i].value.begin()))
          << pa[i].name;
  }
  auto fa = after.fen.params(), fb = ref.fen.params();
  EXPECT_FALSE(std::equal(fa[0].value.begin(), fa[0].value.end(), fb[0].value.begin()));
}

TEST(Training, OneOptimizerStepPerBatch) {
  const auto ds = synthesize_dataset(50, 4, 5, ScoreRule::kLinear);
  Trainer tr(small_model(4), quick_config(1));
  tr.run_epoch(ds, nullptr);
  EXPECT_EQ(tr.optimizer().step, iterate_batches(ds, 16, 0, 0).size());
}

TEST(Training, LossFallsOnSyntheticLinear) {
  const auto ds = synthesize_dataset(256, 8, 6, ScoreRule::kLinear);
  const auto [train_set, test_set] = split_train_test(ds, 0.8, 6);
  TrainConfig tc = quick_config(30, 6);
  const TrainResult r = train(train_set, test_set, small_model(8), tc);
  ASSERT_EQ(r.records.size(), 30u);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += r.records[i].losses.total;
    last += r.records[20 + i].losses.total;
  }
  EXPECT_LT(last, first);
  EXPECT_GT(*r.records.back().test_plcc, 0.5);
  for (const auto& rec : r.records) {
    EXPECT_TRUE(std::isfinite(rec.losses.total));
    EXPECT_TRUE(rec.test_accuracy.has_value());
  }
  ASSERT_TRUE(r.best_srocc.has_value());
  EXPECT_EQ(*r.best_srocc, *r.records[r.best_epoch].test_srocc);
  EXPECT_EQ(evaluate(r.best_model, test_set).srocc, r.best_srocc);
}

TEST(Training, DeterministicGivenSeed) {
  const auto ds = synthesize_dataset(64, 5, 7, ScoreRule::kLinear);
  const auto [a_tr, a_te] = split_train_test(ds, 0.8, 7);
  const TrainResult a = train(a_tr, a_te, small_model(5), quick_config(3, 7));
  const TrainResult b = train(a_tr, a_te, small_model(5), quick_config(3, 7));
  const TrainResult c = train(a_tr, a_te, small_model(5), quick_config(3, 8));
  EXPECT_EQ(a.optimizer, b.optimizer);
  EXPECT_EQ(a.model.predict(a_te.features), b.model.predict(a_te.features));
  EXPECT_NE(a.model.predict(a_te.features), c.model.predict(a_te.features));
}

TEST(Training, AlphaScalesCategoryContributionExactly) {
  const auto ds = synthesize_dataset(32, 4, 8, ScoreRule::kLinear);
  const auto batches = iterate_batches(ds, 16, 0, 0);
  TrainConfig t1 = quick_config(1), t3 = quick_config(1);
  t3.loss_weights.alpha = 3.0;
  Trainer a(small_model(4), t1), b(small_model(4), t3);
  const StepLosses la = a.train_step(batches[0]);
  const StepLosses lb = b.train_step(batches[0]);
  EXPECT_EQ(la.l_cp, lb.l_cp);
  EXPECT_NEAR(lb.total - la.total, 2.0 * la.l_cp, 1e-12);
}

TEST(Training, NonFiniteLossAbortsNamingComponent) {
  const auto ds = synthesize_dataset(32, 4, 9, ScoreRule::kLinear);
  Trainer tr(small_model(4), quick_config(1));
  auto& tail = std::get<Linear>(tr.model().ss[3]);
  tail.bias[0] = std::numeric_limits<double>::infinity();
  try {
    tr.run_epoch(ds, nullptr);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("L_SP"), std::string::npos) << e.what();
  }
}

TEST(Training, DimensionMismatchRejected) {
  const auto ds = synthesize_dataset(32, 4, 9, ScoreRule::kLinear);
  EXPECT_THROW(train(ds, ds, small_model(5), quick_config(1)), ShapeError);
}

TEST(Training, TinyTrainingSetWithNoBatchFails) {
  const auto ds = synthesize_dataset(8, 2, 1, ScoreRule::kLinear);
  const std::size_t one = 0;
  const auto single = ds.subset(std::span(&one, 1));
  Trainer tr(small_model(2), quick_config(1));
  EXPECT_THROW(tr.run_epoch(single, nullptr), DataError);
}

}  // namespace
}  // namespace lpf
