// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lpf/matrix.hpp"
#include "lpf/random.hpp"

namespace lpf {

enum class Mode { kTrain, kEval };

/// Mutable view of one trainable tensor and its gradient accumulator.
struct Param {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

// Every layer follows the same contract:
//   forward(x)   training path; caches whatever backward needs
//   infer(x)     const, cache-free, dropout disabled
//   backward(dy) returns dL/dx and accumulates parameter gradients
// Gradients accumulate until zero_grad().

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim);

  /// Uniform in +-1/sqrt(fan_in); bias zero.
  void init(Rng& rng);

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  Matrix forward(const Matrix& x);
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& dy);

  void zero_grad();
  void collect(const std::string& prefix, std::vector<Param>& out);
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  Matrix weight;  // out_dim x in_dim
  std::vector<double> bias;
  Matrix grad_weight;
  std::vector<double> grad_bias;

 private:
  Matrix input_;
};

class Relu {
 public:
  Matrix forward(const Matrix& x);
  Matrix infer(const Matrix& x) const;
  /// Subgradient at exactly zero is zero.
  Matrix backward(const Matrix& dy) const;

 private:
  Matrix input_;
};

class LayerNorm {
 public:
  static constexpr double kDefaultEpsilon = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double epsilon = kDefaultEpsilon);

  std::size_t dim() const { return gain.size(); }

  Matrix forward(const Matrix& x);
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& dy);

  void zero_grad();
  void collect(const std::string& prefix, std::vector<Param>& out);
  std::size_t parameter_count() const { return gain.size() + shift.size(); }

  std::vector<double> gain;
  std::vector<double> shift;
  std::vector<double> grad_gain;
  std::vector<double> grad_shift;
  double epsilon = kDefaultEpsilon;

 private:
  Matrix normalized_;  // pre-affine activations
  std::vector<double> inv_std_;
};

/// Inverted dropout: survivors are scaled by 1 / (1 - rate) at train time so
/// the eval path is the identity.
class Dropout {
 public:
  Dropout() = default;
  Dropout(double rate, std::uint64_t seed);

  double rate() const { return rate_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  Matrix forward(const Matrix& x);
  Matrix infer(const Matrix& x) const { return x; }
  Matrix backward(const Matrix& dy) const;

  const Rng& rng() const { return rng_; }
  void set_rng(Rng rng) { rng_ = std::move(rng); }

 private:
  double rate_ = 0.0;
  Mode mode_ = Mode::kEval;
  Rng rng_;
  Matrix mask_;  // already carries the 1 / (1 - rate) factor
  bool masked_ = false;
};

/// Row-wise softmax with row-max subtraction.
class Softmax {
 public:
  Matrix forward(const Matrix& x);
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& dy) const;

 private:
  Matrix output_;
};

class Sigmoid {
 public:
  Matrix forward(const Matrix& x);
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& dy) const;

 private:
  Matrix output_;
};

class Identity {
 public:
  Matrix forward(const Matrix& x) const { return x; }
  Matrix infer(const Matrix& x) const { return x; }
  Matrix backward(const Matrix& dy) const { return dy; }
};

Matrix relu(const Matrix& x);
Matrix softmax(const Matrix& x);
Matrix sigmoid(const Matrix& x);
double sigmoid(double x);

using Layer = std::variant<Linear, Relu, LayerNorm, Dropout, Softmax, Sigmoid, Identity>;

/// Short type tag, e.g. "linear", "layernorm".
std::string layer_kind(const Layer& layer);

/// Ordered sequence of layers with a shared forward/backward contract.
class LayerStack {
 public:
  LayerStack() = default;
  explicit LayerStack(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  LayerStack& add(Layer layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }

  std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return layers_[i]; }
  const Layer& operator[](std::size_t i) const { return layers_[i]; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Matrix forward(const Matrix& x);
  /// Runs layers [first, size) only.
  Matrix forward_from(std::size_t first, const Matrix& x);
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& dy);
  /// Backpropagates through layers index, index-1, ..., stop (all inclusive).
  /// Used when a loss supplies the gradient w.r.t. an inner activation, e.g.
  /// softmax + cross entropy handing back dL/dlogits.
  Matrix backward_from(std::size_t index, const Matrix& dy, std::size_t stop = 0);

  void set_mode(Mode mode);
  void zero_grad();
  /// Parameters named "<stack>.<layer index>.<tensor>".
  std::vector<Param> params();
  std::size_t parameter_count() const;

 private:
  std::string name_;
  std::vector<Layer> layers_;
};

}  // namespace lpf
