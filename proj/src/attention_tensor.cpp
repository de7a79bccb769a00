#include "xattn/attention_tensor.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "xattn/errors.hpp"

namespace xattn {

Matrix AttentionTensor::head_matrix(std::size_t l, std::size_t h) const {
  if (l >= layers_ || h >= heads_) {
    throw ShapeError(fmt::format("head ({}, {}) outside tensor with {} layers and {} heads", l, h, layers_, heads_));
  }
  Matrix m(out_len_, enc_len_);
  for (std::size_t i = 0; i < out_len_; ++i) {
    auto src = row(l, h, i);
    std::copy(src.begin(), src.end(), m.row(i).begin());
  }
  return m;
}

AttentionTensor AttentionTensor::select_rows(std::span<const std::size_t> rows) const {
  AttentionTensor out(layers_, heads_, rows.size(), enc_len_);
  for (std::size_t l = 0; l < layers_; ++l)
    for (std::size_t h = 0; h < heads_; ++h)
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= out_len_) throw ShapeError(fmt::format("row {} outside tensor with {} rows", rows[k], out_len_));
        auto src = row(l, h, rows[k]);
        std::copy(src.begin(), src.end(), out.row(l, h, k).begin());
      }
  return out;
}

}  // namespace xattn
