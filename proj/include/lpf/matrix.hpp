// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lpf {

/// Dense row-major matrix of doubles. Activations are batch-major: one row
/// per sample.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  Matrix transposed() const;
  /// Column vector view of column `c`, copied.
  std::vector<double> column(std::size_t c) const;

  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b. Each output entry is accumulated in increasing inner-index order
/// starting from 0.0, matching the textbook triple loop bit for bit.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T without materializing the transpose in the caller.
Matrix matmul_bt(const Matrix& a, const Matrix& b);

/// a^T * b, accumulated over rows in increasing order.
Matrix matmul_at(const Matrix& a, const Matrix& b);

/// Builds a Matrix from a column vector.
Matrix column_matrix(std::span<const double> v);

}  // namespace lpf
