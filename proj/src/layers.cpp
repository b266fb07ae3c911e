// SPDX-License-Identifier: Apache-2.0
#include "lpf/layers.hpp"

#include <algorithm>
#include <cmath>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": gradient shape " + b.shape_string() +
                     " does not match cached activation " + a.shape_string());
  }
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_dim, std::size_t out_dim)
    : weight(out_dim, in_dim),
      bias(out_dim, 0.0),
      grad_weight(out_dim, in_dim),
      grad_bias(out_dim, 0.0) {}

void Linear::init(Rng& rng) {
  // Fan-in scaling keeps the scalar heads' initial outputs small; the wider
  // Glorot range overfit the 400-sample synthetic sets badly.
  const double limit = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  for (double& w : weight.values()) w = rng.uniform(-limit, limit);
  std::fill(bias.begin(), bias.end(), 0.0);
}

Matrix Linear::infer(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw ShapeError("linear: input " + x.shape_string() + " but layer expects " +
                     std::to_string(in_dim()) + " columns");
  }
  Matrix y = matmul_bt(x, weight);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
  return y;
}

Matrix Linear::forward(const Matrix& x) {
  Matrix y = infer(x);
  input_ = x;
  return y;
}

Matrix Linear::backward(const Matrix& dy) {
  if (dy.rows() != input_.rows() || dy.cols() != out_dim()) {
    throw ShapeError("linear backward: gradient " + dy.shape_string() + " for input " +
                     input_.shape_string() + " and out_dim " + std::to_string(out_dim()));
  }
  const Matrix gw = matmul_at(dy, input_);
  auto acc = grad_weight.values();
  const auto add = gw.values();
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) grad_bias[c] += row[c];
  }
  return matmul(dy, weight);
}

void Linear::zero_grad() {
  grad_weight.fill(0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

void Linear::collect(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".weight", weight.values(), grad_weight.values()});
  out.push_back({prefix + ".bias", bias, grad_bias});
}

// ---------------------------------------------------------------- ReLU

Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Matrix Relu::infer(const Matrix& x) const { return relu(x); }

Matrix Relu::forward(const Matrix& x) {
  input_ = x;
  return relu(x);
}

Matrix Relu::backward(const Matrix& dy) const {
  require_same_shape(input_, dy, "relu backward");
  Matrix dx = dy;
  auto g = dx.values();
  const auto in = input_.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(in[i] > 0.0)) g[i] = 0.0;
  return dx;
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::size_t dim, double eps)
    : gain(dim, 1.0), shift(dim, 0.0), grad_gain(dim, 0.0), grad_shift(dim, 0.0), epsilon(eps) {}

namespace {

// Standardizes each row; optionally reports 1/sqrt(var + eps) per row.
Matrix standardize_rows(const Matrix& x, double epsilon, std::vector<double>* inv_std) {
  Matrix out(x.rows(), x.cols());
  if (inv_std) inv_std->assign(x.rows(), 0.0);
  const double d = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + epsilon);
    auto o = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) o[c] = (row[c] - mean) * is;
    if (inv_std) (*inv_std)[r] = is;
  }
  return out;
}

}  // namespace

Matrix LayerNorm::infer(const Matrix& x) const {
  if (x.cols() != dim()) {
    throw ShapeError("layernorm: input " + x.shape_string() + " but layer dim is " +
                     std::to_string(dim()));
  }
  Matrix y = standardize_rows(x, epsilon, nullptr);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = gain[c] * row[c] + shift[c];
  }
  return y;
}

Matrix LayerNorm::forward(const Matrix& x) {
  if (x.cols() != dim()) {
    throw ShapeError("layernorm: input " + x.shape_string() + " but layer dim is " +
                     std::to_string(dim()));
  }
  normalized_ = standardize_rows(x, epsilon, &inv_std_);
  Matrix y = normalized_;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = gain[c] * row[c] + shift[c];
  }
  return y;
}

Matrix LayerNorm::backward(const Matrix& dy) {
  require_same_shape(normalized_, dy, "layernorm backward");
  const std::size_t d = dim();
  const double inv_d = 1.0 / static_cast<double>(d);
  Matrix dx(dy.rows(), d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto g = dy.row(r);
    const auto xh = normalized_.row(r);
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      grad_gain[c] += g[c] * xh[c];
      grad_shift[c] += g[c];
      dxhat[c] = g[c] * gain[c];
      sum_dxhat += dxhat[c];
      sum_dxhat_xhat += dxhat[c] * xh[c];
    }
    const double mean_dxhat = sum_dxhat * inv_d;
    const double mean_dxhat_xhat = sum_dxhat_xhat * inv_d;
    auto out = dx.row(r);
    for (std::size_t c = 0; c < d; ++c)
      out[c] = inv_std_[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
  }
  return dx;
}

void LayerNorm::zero_grad() {
  std::fill(grad_gain.begin(), grad_gain.end(), 0.0);
  std::fill(grad_shift.begin(), grad_shift.end(), 0.0);
}

void LayerNorm::collect(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".gain", gain, grad_gain});
  out.push_back({prefix + ".shift", shift, grad_shift});
}

// ---------------------------------------------------------------- Dropout

Dropout::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

Matrix Dropout::forward(const Matrix& x) {
  if (mode_ == Mode::kEval || rate_ == 0.0) {
    masked_ = false;
    return x;
  }
  const double scale = 1.0 / (1.0 - rate_);
  mask_ = Matrix(x.rows(), x.cols());
  Matrix y = x;
  auto m = mask_.values();
  auto out = y.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    m[i] = rng_.uniform() < rate_ ? 0.0 : scale;
    out[i] *= m[i];
  }
  masked_ = true;
  return y;
}

Matrix Dropout::backward(const Matrix& dy) const {
  if (!masked_) return dy;
  require_same_shape(mask_, dy, "dropout backward");
  Matrix dx = dy;
  auto g = dx.values();
  const auto m = mask_.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= m[i];
  return dx;
}

// ---------------------------------------------------------------- Softmax

Matrix softmax(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (double& v : out) v /= sum;
  }
  return y;
}

Matrix Softmax::infer(const Matrix& x) const { return softmax(x); }

Matrix Softmax::forward(const Matrix& x) {
  output_ = softmax(x);
  return output_;
}

Matrix Softmax::backward(const Matrix& dy) const {
  require_same_shape(output_, dy, "softmax backward");
  Matrix dx(dy.rows(), dy.cols());
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto g = dy.row(r);
    const auto y = output_.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) dot += g[c] * y[c];
    auto out = dx.row(r);
    for (std::size_t c = 0; c < g.size(); ++c) out[c] = y[c] * (g[c] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------- Sigmoid

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = sigmoid(v);
  return y;
}

Matrix Sigmoid::infer(const Matrix& x) const { return sigmoid(x); }

Matrix Sigmoid::forward(const Matrix& x) {
  output_ = sigmoid(x);
  return output_;
}

Matrix Sigmoid::backward(const Matrix& dy) const {
  require_same_shape(output_, dy, "sigmoid backward");
  Matrix dx = dy;
  auto g = dx.values();
  const auto y = output_.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
  return dx;
}

// ---------------------------------------------------------------- LayerStack

std::string layer_kind(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Linear&) { return std::string("linear"); },
                        [](const Relu&) { return std::string("relu"); },
                        [](const LayerNorm&) { return std::string("layernorm"); },
                        [](const Dropout&) { return std::string("dropout"); },
                        [](const Softmax&) { return std::string("softmax"); },
                        [](const Sigmoid&) { return std::string("sigmoid"); },
                        [](const Identity&) { return std::string("identity"); },
                    },
                    layer);
}

Matrix LayerStack::forward(const Matrix& x) { return forward_from(0, x); }

Matrix LayerStack::forward_from(std::size_t first, const Matrix& x) {
  Matrix h = x;
  for (std::size_t i = first; i < layers_.size(); ++i) {
    h = std::visit([&](auto& l) { return l.forward(h); }, layers_[i]);
  }
  return h;
}

Matrix LayerStack::infer(const Matrix& x) const {
  Matrix h = x;
  for (const auto& layer : layers_) {
    h = std::visit([&](const auto& l) { return l.infer(h); }, layer);
  }
  return h;
}

Matrix LayerStack::backward(const Matrix& dy) {
  if (layers_.empty()) return dy;
  return backward_from(layers_.size() - 1, dy);
}

Matrix LayerStack::backward_from(std::size_t index, const Matrix& dy, std::size_t stop) {
  if (index >= layers_.size() || stop > index) {
    throw std::out_of_range("LayerStack::backward_from: range [" + std::to_string(stop) + ", " +
                            std::to_string(index) + "] invalid for stack '" + name_ + "'");
  }
  Matrix g = dy;
  for (std::size_t i = index + 1; i-- > stop;) {
    g = std::visit([&](auto& l) { return l.backward(g); }, layers_[i]);
  }
  return g;
}

void LayerStack::set_mode(Mode mode) {
  for (auto& layer : layers_)
    if (auto* d = std::get_if<Dropout>(&layer)) d->set_mode(mode);
}

void LayerStack::zero_grad() {
  for (auto& layer : layers_) {
    std::visit(Overloaded{
                   [](Linear& l) { l.zero_grad(); },
                   [](LayerNorm& l) { l.zero_grad(); },
                   [](auto&) {},
               },
               layer);
  }
}

std::vector<Param> LayerStack::params() {
  std::vector<Param> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = name_ + "." + std::to_string(i);
    std::visit(Overloaded{
                   [&](Linear& l) { l.collect(prefix, out); },
                   [&](LayerNorm& l) { l.collect(prefix, out); },
                   [](auto&) {},
               },
               layers_[i]);
  }
  return out;
}

std::size_t LayerStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += std::visit(Overloaded{
                        [](const Linear& l) { return l.parameter_count(); },
                        [](const LayerNorm& l) { return l.parameter_count(); },
                        [](const auto&) { return std::size_t{0}; },
                    },
                    layer);
  }
  return n;
}

}  // namespace lpf
