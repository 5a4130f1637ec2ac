#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace svebm {

/// Row-major dense matrix of doubles. Rows are typically batch entries.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  void fill(double v);
  void resize(std::size_t rows, std::size_t cols, double fill = 0.0);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Matrix with one row holding `v`.
Matrix row_matrix(std::span<const double> v);

/// out = x * w^T (+ bias per column). Shapes: x [B x in], w [out x in].
void matmul_nt(const Matrix& x, std::span<const double> w, std::size_t out_dim,
               Matrix& out, bool accumulate = false);

/// Horizontal concatenation [a | b].
Matrix hconcat(const Matrix& a, const Matrix& b);

/// Numerically stable log-sum-exp of one row.
double log_sum_exp(std::span<const double> v);
/// In-place softmax of one row (max-shifted).
void softmax_inplace(std::span<double> v);
/// Row-wise softmax of a matrix.
Matrix softmax_rows(const Matrix& logits);

bool all_finite(std::span<const double> v);

}  // namespace svebm
