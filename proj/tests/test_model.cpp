// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "lpf/errors.hpp"
#include "lpf/model.hpp"
#include "model_fd.hpp"
#include "test_support.hpp"

namespace lpf {
namespace {

using testing::FdProblem;
using testing::LossTerms;
using testing::random_matrix;

ModelConfig small_config(double dropout = 0.0) {
  ModelConfig c;
  c.input_dim = 5;
  c.fen_dim = 6;
  c.hidden_dim = 4;
  c.dropout_rate = dropout;
  return c;
}

// Biases start at zero; give every tensor generic values so FD exercises them.
void jitter_all(LpfModel& m, Rng& rng) {
  for (Param& p : m.all_params())
    for (double& v : p.value) v += 0.3 * rng.normal();
}

TEST(ModelConfig, Validation) {
  EXPECT_NO_THROW(ModelConfig{}.validate());
  ModelConfig c;
  c.num_classes = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.fen_dim = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Architecture, LayerOrderAndTerminals) {
  const LpfModel m(ModelConfig{}, 1);
  ASSERT_EQ(m.fen.size(), 4u);
  EXPECT_EQ(layer_kind(m.fen[0]), "linear");
  EXPECT_EQ(layer_kind(m.fen[1]), "relu");
  EXPECT_EQ(layer_kind(m.fen[2]), "layernorm");
  EXPECT_EQ(layer_kind(m.fen[3]), "dropout");
  EXPECT_EQ(layer_kind(m.cpn[m.cpn.size() - 1]), "softmax");
  EXPECT_EQ(layer_kind(m.ws[m.ws.size() - 1]), "sigmoid");
  EXPECT_EQ(layer_kind(m.ss[m.ss.size() - 1]), "identity");
  ASSERT_EQ(m.ws.size(), m.ss.size());
  for (std::size_t i = 0; i + 1 < m.ws.size(); ++i) EXPECT_EQ(layer_kind(m.ws[i]), layer_kind(m.ss[i]));
}

TEST(Architecture, DefaultParameterCountMatchesShapeArithmetic) {
  const std::size_t L = 512, D = 512, H = 256, M = 4;
  const std::size_t fen = L * D + D + 2 * D;
  const std::size_t cpn = D * H + H + H * M + M;
  const std::size_t scalar_head = D * H + H + H * 1 + 1;
  const LpfModel m(ModelConfig{}, 0);
  EXPECT_EQ(m.parameter_count(), fen + cpn + 3 * scalar_head);
  EXPECT_EQ(m.parameter_count(), 790791u);
}

TEST(Fen, ShapeAndEvalPurity) {
  LpfModel m(small_config(0.5), 3);
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 7u}) {
    const Matrix x = random_matrix(n, 5, rng);
    const Matrix a = m.fen_forward(x);
    EXPECT_EQ(a.rows(), n);
    EXPECT_EQ(a.cols(), 6u);
    EXPECT_EQ(a, m.fen_forward(x));
    EXPECT_EQ(a, m.embed(x));
  }
  EXPECT_THROW(m.fen_forward(Matrix(2, 4)), ShapeError);
}

TEST(Fen, DropoutLiveOnlyInTrainMode) {
  LpfModel m(small_config(0.5), 3);
  Rng rng(2);
  const Matrix x = random_matrix(8, 5, rng);
  m.set_mode(Mode::kTrain);
  const Matrix a = m.fen_forward(x);
  const Matrix b = m.fen_forward(x);
  EXPECT_NE(a, b);
  EXPECT_NE(a, m.embed(x));
}

TEST(Cpn, RowsSumToOneAndZeroedTailIsUniform) {
  LpfModel m(small_config(), 4);
  Rng rng(3);
  const Matrix latent = random_matrix(9, 6, rng);
  const Matrix p = m.cpn_forward(latent);
  EXPECT_EQ(p.cols(), 4u);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  auto& tail = std::get<Linear>(m.cpn[3]);
  tail.weight.fill(0.0);
  const Matrix uniform = m.cpn_forward(latent);
  for (double v : uniform.values()) EXPECT_EQ(v, 0.25);
}

TEST(Pairs, UpperTriangleExamples) {
  EXPECT_EQ(upper_triangle_pairs(4),
            (std::vector<IndexPair>{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}));
  EXPECT_EQ(upper_triangle_pairs(16).size(), 120u);
  const PairBatch pb = make_pair_batch(Matrix{{1.0}, {4.0}}, std::vector<double>{0.2, 0.5});
  ASSERT_EQ(pb.size(), 1u);
  EXPECT_NEAR(pb.score_gaps[0], -0.3, 1e-15);
  EXPECT_EQ(pb.feature_gaps(0, 0), -3.0);
  EXPECT_THROW(make_pair_batch(Matrix{{1.0}}, std::vector<double>{0.2}), std::invalid_argument);
}

TEST(Pairs, DoubleLoopOracleUpTo32) {
  Rng rng(5);
  for (std::size_t n = 2; n <= 32; ++n) {
    const Matrix v = random_matrix(n, 3, rng);
    const auto q = testing::random_vector(n, rng);
    const PairBatch pb = make_pair_batch(v, q);
    ASSERT_EQ(pb.size(), n * (n - 1) / 2);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j, ++k) {
        EXPECT_EQ(pb.index_pairs[k], IndexPair(i, j));
        EXPECT_EQ(pb.score_gaps[k], q[i] - q[j]);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(pb.feature_gaps(k, c), v(i, c) - v(j, c));
      }
  }
}

TEST(Pairs, SwappingSamplesNegatesTheirGap) {
  Rng rng(6);
  const Matrix v = random_matrix(5, 2, rng);
  auto q = testing::random_vector(5, rng);
  const double before = make_pair_batch(v, q).score_gaps[0];  // pair (0, 1)
  std::swap(q[0], q[1]);
  Matrix w = v;
  for (std::size_t c = 0; c < 2; ++c) std::swap(w(0, c), w(1, c));
  EXPECT_EQ(make_pair_batch(w, q).score_gaps[0], -before);
}

TEST(Qcn, IdenticalRowsWithZeroBiasPredictZero) {
  LpfModel m(small_config(), 7);
  Rng rng(7);
  Matrix latent = random_matrix(3, 6, rng);
  for (std::size_t c = 0; c < 6; ++c) latent(2, c) = latent(0, c);
  const PairBatch pb = make_pair_batch(latent, std::vector<double>{0, 0, 0});
  const auto pred = m.qcn_forward(pb);
  ASSERT_EQ(pred.size(), 3u);
  EXPECT_EQ(pred[1], 0.0);  // pair (0, 2)
}

TEST(Qcn, IndexedPathMatchesExplicitPath) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LpfModel m(small_config(), seed);
    Rng rng(seed);
    jitter_all(m, rng);
    const Matrix latent = random_matrix(7, 6, rng);
    const auto pairs = upper_triangle_pairs(7);
    const auto a = m.qcn_forward(make_pair_batch(latent, std::vector<double>(7, 0.0)));
    const auto b = m.qcn_forward_indexed(latent, pairs);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(Daqrn, ProductStructure) {
  LpfModel m(small_config(), 8);
  Rng rng(8);
  jitter_all(m, rng);
  const Matrix latent = random_matrix(10, 6, rng, 2.0);
  const DaqrnOutput o = m.daqrn_forward(latent);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_GT(o.weights[i], 0.0);
    EXPECT_LT(o.weights[i], 1.0);
    EXPECT_EQ(o.q_pred[i], o.weights[i] * o.raw_scores[i]);
  }
  m.set_toggles(true, true, false);
  const DaqrnOutput ablated = m.daqrn_forward(latent);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(ablated.weights[i], 1.0);
    EXPECT_EQ(ablated.q_pred[i], ablated.raw_scores[i]);
  }
}

TEST(Predict, EqualsCompositionAndIsDeterministic) {
  LpfModel m(small_config(0.3), 9);
  Rng rng(9);
  jitter_all(m, rng);
  const Matrix x = random_matrix(6, 5, rng);
  const auto p = m.predict(x);
  m.set_mode(Mode::kEval);
  EXPECT_EQ(p, m.daqrn_forward(m.fen_forward(x)).q_pred);
  EXPECT_EQ(p, m.predict(x));
  EXPECT_EQ(p, m.explain(x).q_pred);
}

TEST(Predict, IndependentOfCpnAndQcn) {
  LpfModel m(small_config(), 10);
  Rng rng(10);
  jitter_all(m, rng);
  const Matrix x = random_matrix(6, 5, rng);
  const auto before = m.predict(x);
  for (LayerStack* s : {&m.cpn, &m.qcn})
    for (Param& p : s->params())
      for (double& v : p.value) v = rng.normal() * 100.0;
  EXPECT_EQ(m.predict(x), before);
  for (Param& p : m.cpn.params()) std::fill(p.value.begin(), p.value.end(), 0.0);
  EXPECT_EQ(m.predict(x), before);
}

TEST(Predict, ConcurrentCallsOnSharedModel) {
  LpfModel m(small_config(0.2), 11);
  Rng rng(11);
  const Matrix x = random_matrix(32, 5, rng);
  const auto expect = m.predict(x);
  const LpfModel& frozen = m;
  std::vector<std::vector<double>> got(4);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < got.size(); ++t)
    threads.emplace_back([&, t] { got[t] = frozen.predict(x); });
  for (auto& t : threads) t.join();
  for (const auto& g : got) EXPECT_EQ(g, expect);
}

TEST(Gradients, EndToEndFiniteDifferences) {
  const LossTerms combos[] = {
      {true, true, true, true, 1.0, 1.0},   {true, false, false, true, 1.0, 1.0},
      {false, true, false, true, 1.0, 1.0}, {false, true, false, false, 1.0, 1.0},
      {false, false, true, true, 1.0, 1.0}, {true, true, true, false, 0.4, 0.6},
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LpfModel m(small_config(), seed);
    Rng rng(seed + 1000);
    jitter_all(m, rng);
    m.set_mode(Mode::kTrain);
    const FdProblem p = testing::random_problem(5, 5, rng);
    for (const LossTerms& t : combos) {
      std::string worst;
      const double e = testing::model_fd_error(m, p, t, rng, 1000, &worst);
      EXPECT_LT(e, 1e-4) << "seed " << seed << " worst tensor " << worst;
    }
  }
}

TEST(Gradients, WeightStreamAblationSkipsWs) {
  LpfModel m(small_config(), 12);
  Rng rng(12);
  jitter_all(m, rng);
  m.set_toggles(true, true, false);
  const FdProblem p = testing::random_problem(5, 5, rng);
  LossTerms sp_only{false, false, true, true, 1.0, 1.0};
  EXPECT_LT(testing::model_fd_error(m, p, sp_only, rng, 1000), 1e-4);
  for (Param& prm : m.ws.params())
    for (double g : prm.grad) EXPECT_EQ(g, 0.0);
}

TEST(Gradients, EveryHeadReachesFen) {
  LpfModel m(small_config(), 13);
  Rng rng(13);
  jitter_all(m, rng);
  const FdProblem p = testing::random_problem(6, 5, rng);
  for (const LossTerms& t : {LossTerms{true, false, false}, LossTerms{false, true, false},
                             LossTerms{false, false, true}}) {
    testing::full_backward(m, p, t);
    double norm = 0.0;
    for (Param& prm : m.fen.params())
      for (double g : prm.grad) norm += g * g;
    EXPECT_GT(norm, 0.0);
  }
}

TEST(Params, TrainableSetFollowsToggles) {
  LpfModel m(small_config(), 14);
  const std::size_t all = m.all_params().size();
  EXPECT_EQ(m.trainable_params().size(), all);
  m.set_toggles(false, false, false);
  std::size_t expect = m.fen.params().size() + m.ss.params().size();
  EXPECT_EQ(m.trainable_params().size(), expect);
  for (const Param& p : m.trainable_params()) {
    EXPECT_TRUE(p.name.rfind("fen.", 0) == 0 || p.name.rfind("ss.", 0) == 0) << p.name;
  }
}

TEST(Init, SeedDeterminesWeights) {
  LpfModel a(small_config(), 42), b(small_config(), 42), c(small_config(), 43);
  auto pa = a.all_params(), pb = b.all_params(), pc = c.all_params();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].value.begin(), pa[i].value.end(), pb[i].value.begin()));
    any_diff |= !std::equal(pa[i].value.begin(), pa[i].value.end(), pc[i].value.begin());
  }
  EXPECT_TRUE(any_diff);
}

}  // namespace
}  // namespace lpf
