#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xattn/numerics.hpp"

namespace xattn {

/// Cross-attention scores for every decoder layer and head: L x H x I x T'.
/// Row (l, h, i) is the distribution over encoder steps used while producing
/// output token i.
class AttentionTensor {
 public:
  AttentionTensor() = default;
  AttentionTensor(std::size_t layers, std::size_t heads, std::size_t out_len, std::size_t enc_len)
      : layers_(layers), heads_(heads), out_len_(out_len), enc_len_(enc_len),
        values_(layers * heads * out_len * enc_len, 0.0) {}

  std::size_t layers() const { return layers_; }
  std::size_t heads() const { return heads_; }
  std::size_t out_len() const { return out_len_; }
  std::size_t enc_len() const { return enc_len_; }

  double& at(std::size_t l, std::size_t h, std::size_t i, std::size_t t) { return values_[offset(l, h, i) + t]; }
  double at(std::size_t l, std::size_t h, std::size_t i, std::size_t t) const { return values_[offset(l, h, i) + t]; }

  std::span<double> row(std::size_t l, std::size_t h, std::size_t i) { return {values_.data() + offset(l, h, i), enc_len_}; }
  std::span<const double> row(std::size_t l, std::size_t h, std::size_t i) const {
    return {values_.data() + offset(l, h, i), enc_len_};
  }

  /// The I x T' matrix of one head.
  Matrix head_matrix(std::size_t l, std::size_t h) const;
  /// Copy keeping only the listed output rows, in the given order.
  AttentionTensor select_rows(std::span<const std::size_t> rows) const;

  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const AttentionTensor&, const AttentionTensor&) = default;

 private:
  std::size_t offset(std::size_t l, std::size_t h, std::size_t i) const {
    return ((l * heads_ + h) * out_len_ + i) * enc_len_;
  }

  std::size_t layers_ = 0;
  std::size_t heads_ = 0;
  std::size_t out_len_ = 0;
  std::size_t enc_len_ = 0;
  std::vector<double> values_;
};

}  // namespace xattn
