// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lpf/layers.hpp"
#include "lpf/matrix.hpp"

namespace lpf {

struct ModelConfig {
  std::size_t input_dim = 512;   // backbone feature length
  std::size_t fen_dim = 512;     // latent width
  std::size_t hidden_dim = 256;  // hidden width of every head
  std::size_t num_classes = 4;
  double dropout_rate = 0.2;
  bool cpn_enabled = true;
  bool qcn_enabled = true;
  bool ws_enabled = true;

  /// Throws std::invalid_argument on a broken invariant.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

/// All within-batch pairs i < j, row-major over the strict upper triangle.
struct PairBatch {
  std::vector<IndexPair> index_pairs;
  Matrix feature_gaps;              // K x D, row k = latent_i - latent_j
  std::vector<double> score_gaps;   // K, Q_i - Q_j

  std::size_t size() const { return index_pairs.size(); }
};

std::vector<IndexPair> upper_triangle_pairs(std::size_t n);
PairBatch make_pair_batch(const Matrix& latent, std::span<const double> scores);

struct DaqrnOutput {
  std::vector<double> weights;     // WS output, in (0, 1); all ones when WS is ablated
  std::vector<double> raw_scores;  // SS output
  std::vector<double> q_pred;      // weights * raw_scores
};

/// Shared trunk (FEN) with the category head (CPN), the pair-gap head (QCN),
/// and the two-stream regressor (WS x SS).
///
/// Training-path methods (`*_forward`) cache activations for the matching
/// `*_backward`; they honour the current mode, so dropout is live in kTrain.
/// `predict` and the other const methods never touch caches and always run
/// with dropout off, which makes a const model safe to share across threads.
class LpfModel {
 public:
  LpfModel() = default;
  LpfModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  /// Head toggles may be flipped after construction; parameters are kept.
  void set_toggles(bool cpn_enabled, bool qcn_enabled, bool ws_enabled);

  Mode mode() const { return mode_; }
  void set_mode(Mode mode);

  Matrix fen_forward(const Matrix& features);
  Matrix fen_backward(const Matrix& d_latent);

  /// Class probabilities (N x M).
  Matrix cpn_forward(const Matrix& latent);
  /// Takes dL/dlogits (the pre-softmax activations) and returns dL/dlatent.
  Matrix cpn_backward_logits(const Matrix& d_logits);

  /// Predicted gaps from explicit feature gaps (K values).
  std::vector<double> qcn_forward(const PairBatch& pairs);
  /// Returns dL/d(feature_gaps), K x D.
  Matrix qcn_backward(std::span<const double> d_gaps);

  /// Same function as qcn_forward, but the first linear layer is applied to
  /// the N latent rows before differencing: W(v_i - v_j) + b = Wv_i - Wv_j + b.
  /// Cost drops from O(K * D * H) to O(N * D * H + K * H).
  std::vector<double> qcn_forward_indexed(const Matrix& latent, std::span<const IndexPair> pairs);
  /// Returns dL/dlatent (N x D) for the indexed path.
  Matrix qcn_backward_indexed(std::span<const double> d_gaps);

  DaqrnOutput daqrn_forward(const Matrix& latent);
  /// Returns dL/dlatent summed over both streams.
  Matrix daqrn_backward(std::span<const double> d_q_pred);

  /// Inference path: FEN then DaQRN. CPN and QCN are never evaluated.
  std::vector<double> predict(const Matrix& features) const;
  DaqrnOutput explain(const Matrix& features) const;
  /// CPN probabilities in eval mode (used for category reports only).
  Matrix category_probabilities(const Matrix& features) const;
  /// Latent rows in eval mode.
  Matrix embed(const Matrix& features) const;

  void zero_grad();
  /// Every parameter, enabled or not, in a fixed order (fen, cpn, qcn, ws, ss).
  std::vector<Param> all_params();
  /// Parameters of FEN, SS, and whichever of CPN / QCN / WS are enabled.
  std::vector<Param> trainable_params();
  std::size_t parameter_count() const;

  /// Layer stacks in the fixed order fen, cpn, qcn, ws, ss.
  std::vector<LayerStack*> stacks();
  std::vector<const LayerStack*> stacks() const;

  LayerStack fen{"fen"};
  LayerStack cpn{"cpn"};
  LayerStack qcn{"qcn"};
  LayerStack ws{"ws"};
  LayerStack ss{"ss"};

 private:
  ModelConfig config_;
  Mode mode_ = Mode::kEval;

  // indexed QCN path caches
  Matrix qcn_latent_;
  std::vector<IndexPair> qcn_pairs_;

  // DaQRN caches
  std::vector<double> ws_out_;
  std::vector<double> ss_out_;
};

}  // namespace lpf
