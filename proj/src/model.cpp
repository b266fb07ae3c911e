// SPDX-License-Identifier: Apache-2.0
#include "lpf/model.hpp"

#include <stdexcept>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954ULL;     // "INIT"
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;  // "DROP"

void require_cols(const Matrix& m, std::size_t cols, const char* what) {
  if (m.cols() != cols) {
    throw ShapeError(std::string(what) + ": input " + m.shape_string() + " but expected " +
                     std::to_string(cols) + " columns");
  }
}

// Linear(in -> hidden), ReLU, Dropout, Linear(hidden -> out), then `tail`.
LayerStack make_head(std::string name, std::size_t in, std::size_t hidden, std::size_t out,
                     double dropout, std::uint64_t dropout_seed, Layer tail) {
  LayerStack s(std::move(name));
  s.add(Linear(in, hidden)).add(Relu{}).add(Dropout(dropout, dropout_seed)).add(Linear(hidden, out));
  s.add(std::move(tail));
  return s;
}

std::vector<double> first_column(const Matrix& m) { return m.column(0); }

}  // namespace

void ModelConfig::validate() const {
  if (input_dim < 1 || fen_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
  }
  if (num_classes != 4) throw std::invalid_argument("ModelConfig: num_classes must be 4");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("ModelConfig: dropout_rate must lie in [0, 1)");
  }
}

std::vector<IndexPair> upper_triangle_pairs(std::size_t n) {
  std::vector<IndexPair> pairs;
  if (n >= 2) pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  return pairs;
}

PairBatch make_pair_batch(const Matrix& latent, std::span<const double> scores) {
  const std::size_t n = latent.rows();
  if (n < 2) throw ShapeError("make_pair_batch: need at least 2 samples, got " + std::to_string(n));
  if (scores.size() != n) {
    throw ShapeError("make_pair_batch: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(n) + " latent rows");
  }
  PairBatch pb;
  pb.index_pairs = upper_triangle_pairs(n);
  pb.feature_gaps = Matrix(pb.index_pairs.size(), latent.cols());
  pb.score_gaps.resize(pb.index_pairs.size());
  for (std::size_t k = 0; k < pb.index_pairs.size(); ++k) {
    const auto [i, j] = pb.index_pairs[k];
    const auto vi = latent.row(i), vj = latent.row(j);
    auto gap = pb.feature_gaps.row(k);
    for (std::size_t c = 0; c < gap.size(); ++c) gap[c] = vi[c] - vj[c];
    pb.score_gaps[k] = scores[i] - scores[j];
  }
  return pb;
}

LpfModel::LpfModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto dseed = [&](std::uint64_t stack) {
    return Rng({seed, stack, kDropoutStream}).next_u64();
  };
  const std::size_t d = config_.fen_dim, h = config_.hidden_dim;
  const double p = config_.dropout_rate;

  fen.add(Linear(config_.input_dim, d)).add(Relu{}).add(LayerNorm(d)).add(Dropout(p, dseed(0)));
  cpn = make_head("cpn", d, h, config_.num_classes, p, dseed(1), Softmax{});
  qcn = make_head("qcn", d, h, 1, p, dseed(2), Identity{});
  ws = make_head("ws", d, h, 1, p, dseed(3), Sigmoid{});
  ss = make_head("ss", d, h, 1, p, dseed(4), Identity{});

  Rng init({seed, kInitStream});
  for (LayerStack* s : stacks())
    for (auto& layer : s->layers())
      if (auto* lin = std::get_if<Linear>(&layer)) lin->init(init);
}

void LpfModel::set_toggles(bool cpn_enabled, bool qcn_enabled, bool ws_enabled) {
  config_.cpn_enabled = cpn_enabled;
  config_.qcn_enabled = qcn_enabled;
  config_.ws_enabled = ws_enabled;
}

void LpfModel::set_mode(Mode mode) {
  mode_ = mode;
  for (LayerStack* s : stacks()) s->set_mode(mode);
}

std::vector<LayerStack*> LpfModel::stacks() { return {&fen, &cpn, &qcn, &ws, &ss}; }

std::vector<const LayerStack*> LpfModel::stacks() const { return {&fen, &cpn, &qcn, &ws, &ss}; }

Matrix LpfModel::fen_forward(const Matrix& features) {
  require_cols(features, config_.input_dim, "fen_forward");
  return fen.forward(features);
}

Matrix LpfModel::fen_backward(const Matrix& d_latent) { return fen.backward(d_latent); }

Matrix LpfModel::cpn_forward(const Matrix& latent) {
  require_cols(latent, config_.fen_dim, "cpn_forward");
  return cpn.forward(latent);
}

Matrix LpfModel::cpn_backward_logits(const Matrix& d_logits) {
  // The terminal softmax is folded into the cross-entropy gradient.
  return cpn.backward_from(cpn.size() - 2, d_logits);
}

std::vector<double> LpfModel::qcn_forward(const PairBatch& pairs) {
  require_cols(pairs.feature_gaps, config_.fen_dim, "qcn_forward");
  return first_column(qcn.forward(pairs.feature_gaps));
}

Matrix LpfModel::qcn_backward(std::span<const double> d_gaps) {
  return qcn.backward(column_matrix(d_gaps));
}

std::vector<double> LpfModel::qcn_forward_indexed(const Matrix& latent,
                                                  std::span<const IndexPair> pairs) {
  require_cols(latent, config_.fen_dim, "qcn_forward_indexed");
  const auto& first = std::get<Linear>(qcn[0]);
  const Matrix projected = matmul_bt(latent, first.weight);  // N x H, no bias
  Matrix z(pairs.size(), first.out_dim());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    if (i >= latent.rows() || j >= latent.rows()) {
      throw ShapeError("qcn_forward_indexed: pair index out of range");
    }
    const auto pi = projected.row(i), pj = projected.row(j);
    auto out = z.row(k);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = pi[c] - pj[c] + first.bias[c];
  }
  qcn_latent_ = latent;
  qcn_pairs_.assign(pairs.begin(), pairs.end());
  return first_column(qcn.forward_from(1, z));
}

Matrix LpfModel::qcn_backward_indexed(std::span<const double> d_gaps) {
  const Matrix dz = qcn.backward_from(qcn.size() - 1, column_matrix(d_gaps), 1);
  auto& first = std::get<Linear>(qcn[0]);
  // Fold the pair gradients back onto the N rows: +dz_k to i, -dz_k to j.
  Matrix per_row(qcn_latent_.rows(), first.out_dim());
  for (std::size_t k = 0; k < qcn_pairs_.size(); ++k) {
    const auto [i, j] = qcn_pairs_[k];
    const auto g = dz.row(k);
    auto ri = per_row.row(i);
    auto rj = per_row.row(j);
    for (std::size_t c = 0; c < g.size(); ++c) {
      ri[c] += g[c];
      rj[c] -= g[c];
      first.grad_bias[c] += g[c];
    }
  }
  const Matrix gw = matmul_at(per_row, qcn_latent_);
  auto acc = first.grad_weight.values();
  const auto add = gw.values();
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
  return matmul(per_row, first.weight);
}

DaqrnOutput LpfModel::daqrn_forward(const Matrix& latent) {
  require_cols(latent, config_.fen_dim, "daqrn_forward");
  DaqrnOutput out;
  out.raw_scores = first_column(ss.forward(latent));
  out.weights = config_.ws_enabled ? first_column(ws.forward(latent))
                                   : std::vector<double>(latent.rows(), 1.0);
  out.q_pred.resize(latent.rows());
  for (std::size_t i = 0; i < out.q_pred.size(); ++i)
    out.q_pred[i] = out.weights[i] * out.raw_scores[i];
  ws_out_ = out.weights;
  ss_out_ = out.raw_scores;
  return out;
}

Matrix LpfModel::daqrn_backward(std::span<const double> d_q_pred) {
  if (d_q_pred.size() != ss_out_.size()) {
    throw ShapeError("daqrn_backward: gradient length does not match cached batch");
  }
  const std::size_t n = d_q_pred.size();
  std::vector<double> d_s(n), d_e(n);
  for (std::size_t i = 0; i < n; ++i) {
    d_s[i] = d_q_pred[i] * ws_out_[i];
    d_e[i] = d_q_pred[i] * ss_out_[i];
  }
  Matrix d_latent = ss.backward(column_matrix(d_s));
  if (config_.ws_enabled) {
    const Matrix from_ws = ws.backward(column_matrix(d_e));
    auto acc = d_latent.values();
    const auto add = from_ws.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
  }
  return d_latent;
}

Matrix LpfModel::embed(const Matrix& features) const {
  require_cols(features, config_.input_dim, "predict");
  return fen.infer(features);
}

DaqrnOutput LpfModel::explain(const Matrix& features) const {
  const Matrix latent = embed(features);
  DaqrnOutput out;
  out.raw_scores = first_column(ss.infer(latent));
  out.weights = config_.ws_enabled ? first_column(ws.infer(latent))
                                   : std::vector<double>(latent.rows(), 1.0);
  out.q_pred.resize(latent.rows());
  for (std::size_t i = 0; i < out.q_pred.size(); ++i)
    out.q_pred[i] = out.weights[i] * out.raw_scores[i];
  return out;
}

std::vector<double> LpfModel::predict(const Matrix& features) const {
  return explain(features).q_pred;
}

Matrix LpfModel::category_probabilities(const Matrix& features) const {
  return cpn.infer(embed(features));
}

void LpfModel::zero_grad() {
  for (LayerStack* s : stacks()) s->zero_grad();
}

std::vector<Param> LpfModel::all_params() {
  std::vector<Param> out;
  for (LayerStack* s : stacks()) {
    auto p = s->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Param> LpfModel::trainable_params() {
  std::vector<Param> out;
  const auto append = [&](LayerStack& s) {
    auto p = s.params();
    out.insert(out.end(), p.begin(), p.end());
  };
  append(fen);
  if (config_.cpn_enabled) append(cpn);
  if (config_.qcn_enabled) append(qcn);
  if (config_.ws_enabled) append(ws);
  append(ss);
  return out;
}

std::size_t LpfModel::parameter_count() const {
  std::size_t n = 0;
  for (const LayerStack* s : stacks()) n += s->parameter_count();
  return n;
}

}  // namespace lpf
