#include "xattn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "xattn/errors.hpp"

namespace xattn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError(fmt::format("matrix data length {} does not match {}x{}", data_.size(), rows_, cols_));
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      throw ShapeError(fmt::format("ragged row {}: expected {} columns, got {}", r, cols, rows[r].size()));
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::block(std::size_t begin, std::size_t end, std::size_t col_begin, std::size_t col_end) const {
  if (begin > end || end > rows_ || col_begin > col_end || col_end > cols_) {
    throw ShapeError(fmt::format("block [{},{})x[{},{}) out of range for {}", begin, end, col_begin, col_end,
                                 shape_string()));
  }
  Matrix b(end - begin, col_end - col_begin);
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t c = col_begin; c < col_end; ++c) b(r - begin, c - col_begin) = (*this)(r, c);
  return b;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const { return fmt::format("({}x{})", rows_, cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul shape mismatch: {} x {}", a.shape_string(), b.shape_string()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

namespace {

void softmax_into(std::span<const double> in, double scale, std::span<double> out) {
  double peak = -INFINITY;
  for (double v : in) {
    if (!std::isfinite(v)) throw NonFiniteError("softmax input contains a non-finite value");
    peak = std::max(peak, v);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    out[k] = std::exp((in[k] - peak) / scale);
    total += out[k];
  }
  for (double& v : out) v /= total;
}

}  // namespace

Matrix softmax_rows(const Matrix& m, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument(fmt::format("softmax scale must be positive, got {}", scale));
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) softmax_into(m.row(r), scale, out.row(r));
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, 1.0, out);
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ShapeError(fmt::format("kl_divergence length mismatch: {} vs {}", p.size(), q.size()));
  }
  const double eps_total = kKlSmoothing * static_cast<double>(p.size());
  const double zp = std::accumulate(p.begin(), p.end(), 0.0) + eps_total;
  const double zq = std::accumulate(q.begin(), q.end(), 0.0) + eps_total;
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double ps = (p[k] + kKlSmoothing) / zp;
    const double qs = (q[k] + kKlSmoothing) / zq;
    total += ps * std::log(ps / qs);
  }
  // Rounding can leave a tiny negative residue for p ~= q.
  return std::max(total, 0.0);
}

std::vector<double> mean_var_normalize(std::span<const double> v) {
  if (v.size() < 2) {
    throw std::invalid_argument(fmt::format("mean_var_normalize needs length >= 2, got {}", v.size()));
  }
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  std::vector<double> out(v.size(), 0.0);
  if (var < kDegenerateVariance) return out;
  const double sd = std::sqrt(var);
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = (v[k] - mean) / sd;
  return out;
}

double pool2d(const Matrix& block, PoolMode mode) {
  if (block.empty()) throw std::invalid_argument("pool2d on an empty block");
  const auto& d = block.data();
  if (mode == PoolMode::kMax) return *std::max_element(d.begin(), d.end());
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

double pool_2step(const Matrix& block) {
  if (block.empty()) throw std::invalid_argument("pool_2step on an empty block");
  double total = 0.0;
  for (std::size_t r = 0; r < block.rows(); ++r) {
    auto row = block.row(r);
    total += *std::max_element(row.begin(), row.end());
  }
  return total / static_cast<double>(block.rows());
}

std::vector<double> nn_upsample(std::span<const double> v, std::size_t target) {
  if (v.empty()) throw std::invalid_argument("nn_upsample source is empty");
  if (target < v.size()) {
    throw std::invalid_argument(fmt::format("nn_upsample target {} shorter than source {}", target, v.size()));
  }
  std::vector<double> out(target);
  for (std::size_t t = 0; t < target; ++t) {
    const std::size_t src = std::min(t * v.size() / target, v.size() - 1);
    out[t] = v[src];
  }
  return out;
}

}  // namespace xattn
