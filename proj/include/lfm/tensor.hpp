#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lfm {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. Most of the library works with rank-2
// tensors laid out as [batch x features]; scalars are [1 x 1].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor full(std::size_t rows, std::size_t cols, double value) {
    return Tensor({rows, cols}, value);
  }
  static Tensor scalar(double value) { return Tensor({1, 1}, value); }
  static Tensor identity(std::size_t n);
  static Tensor row(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors; throw DimensionError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  // Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  Tensor reshaped(Shape shape) const;
  Tensor row_slice(std::size_t begin, std::size_t end) const;
  Tensor col_slice(std::size_t begin, std::size_t end) const;
  Tensor transposed() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain (non-differentiable) kernels. The differentiable graph reuses them so
// that training and inference share identical arithmetic.
namespace kernels {

// c = a * b. Each output element accumulates over k in ascending order, so a
// row's result does not depend on how many other rows are in the batch.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);
// a + s * b
Tensor axpy(const Tensor& a, double s, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

double sum(const Tensor& a);
double squared_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
// Per-row squared Euclidean norms as an [n x 1] tensor.
Tensor row_squared_norms(const Tensor& a);
// Column means as a [1 x d] tensor.
Tensor column_means(const Tensor& a);

}  // namespace lfm
