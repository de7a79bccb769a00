#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace xattn {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds a matrix from nested rows; all rows must have equal length.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const;
  /// Copy of rows [begin, end) and columns [col_begin, col_end).
  Matrix block(std::size_t begin, std::size_t end, std::size_t col_begin, std::size_t col_end) const;
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax of m / scale with max subtraction.
Matrix softmax_rows(const Matrix& m, double scale);

/// Softmax of a single vector (scale 1).
std::vector<double> softmax(std::span<const double> logits);

inline constexpr double kKlSmoothing = 1e-9;

/// KL(p || q) in nats. Both arguments are smoothed by kKlSmoothing and renormalized.
double kl_divergence(std::span<const double> p, std::span<const double> q);

inline constexpr double kDegenerateVariance = 1e-12;

/// Z-score with population standard deviation; near-constant input maps to zeros.
std::vector<double> mean_var_normalize(std::span<const double> v);

enum class PoolMode { kMax, kAvg };

double pool2d(const Matrix& block, PoolMode mode);

/// Mean over rows (time) of the per-row maximum (frequency).
double pool_2step(const Matrix& block);

/// Nearest-neighbour upsampling: out[t] = v[floor(t * n / target)].
std::vector<double> nn_upsample(std::span<const double> v, std::size_t target);

}  // namespace xattn
