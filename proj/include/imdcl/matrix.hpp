#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace imdcl {

// Thrown when a caller violates a shape or argument contract.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation produces or encounters non-finite values,
// or when an optimization diverges.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of 64-bit reals. The sole numeric carrier in the
// library: vectors travel as 1xN rows or Nx1 columns.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix zeros(std::size_t rows, std::size_t cols);
  static Matrix ones(std::size_t rows, std::size_t cols);
  static Matrix identity(std::size_t n);
  // 1xN row from a flat vector.
  static Matrix row(const std::vector<double>& values);
  // Nx1 column from a flat vector.
  static Matrix column(const std::vector<double>& values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row_span(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row_span(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B. Throws DimensionError when inner dimensions disagree.
Matrix matmul(const Matrix& a, const Matrix& b);

// Accumulating kernels used by gradient propagation. The accumulator must
// already carry the product's shape; mismatches throw DimensionError.
void gemm_nn_acc(Matrix& c, const Matrix& a, const Matrix& b);   // c += a * b
void gemm_nt_acc(Matrix& c, const Matrix& a, const Matrix& b);   // c += a * b^T
void gemm_tn_acc(Matrix& c, const Matrix& a, const Matrix& b);   // c += a^T * b

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
void add_in_place(Matrix& a, const Matrix& b);        // a += b
void add_scaled_in_place(Matrix& a, const Matrix& b, double c);  // a += c * b

// Numerically stable row-wise softmax (max-subtraction before exponentiation).
Matrix softmax_rows(const Matrix& z);

double sum_all(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace imdcl
