#include "imdcl/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace imdcl {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch (" +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw DimensionError("Matrix: ragged initializer list");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }

Matrix Matrix::ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row(const std::vector<double>& values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

Matrix Matrix::column(const std::vector<double>& values) {
  Matrix m(values.size(), 1);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
  Matrix c(a.rows(), b.cols(), 0.0);
  gemm_nn_acc(c, a, b);
  return c;
}

namespace {

void require_gemm_shapes(const Matrix& c, std::size_t rows, std::size_t inner_a,
                         std::size_t inner_b, std::size_t cols, const char* name) {
  if (inner_a != inner_b || c.rows() != rows || c.cols() != cols) {
    throw DimensionError(std::string(name) + ": accumulator or inner dimensions disagree");
  }
}

}  // namespace

void gemm_nn_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  require_gemm_shapes(c, a.rows(), a.cols(), b.rows(), b.cols(), "gemm_nn_acc");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  // c (m x n) += a (m x k) * b^T where b is n x k.
  require_gemm_shapes(c, a.rows(), a.cols(), b.cols(), b.rows(), "gemm_nt_acc");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] += acc;
    }
  }
}

void gemm_tn_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  // c (k x n) += a^T * b where a is m x k, b is m x n.
  require_gemm_shapes(c, a.cols(), a.rows(), b.rows(), b.cols(), "gemm_tn_acc");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t p = 0; p < m; ++p) {
    const double* arow = pa + p * k;
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double aval = arow[i];
      if (aval == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  add_in_place(c, b);
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix c = a;
  add_scaled_in_place(c, b, -1.0);
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  double* pc = c.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < c.size(); ++i) pc[i] *= pb[i];
  return c;
}

Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  double* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) p[i] *= c;
  return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add_in_place");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

void add_scaled_in_place(Matrix& a, const Matrix& b, double c) {
  require_same_shape(a, b, "add_scaled_in_place");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += c * pb[i];
}

Matrix softmax_rows(const Matrix& z) {
  Matrix s(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto in = z.row_span(i);
    auto out = s.row_span(i);
    double mx = in[0];
    for (double v : in) mx = std::max(mx, v);
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    for (std::size_t j = 0; j < out.size(); ++j) out[j] /= total;
  }
  return s;
}

double sum_all(const Matrix& a) {
  double total = 0.0;
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) total += p[i];
  return total;
}

double max_abs(const Matrix& a) {
  double mx = 0.0;
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(p[i]));
  return mx;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double mx = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(pa[i] - pb[i]));
  return mx;
}

}  // namespace imdcl
