#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "xattn/attention_tensor.hpp"
#include "xattn/model.hpp"
#include "xattn/numerics.hpp"

namespace xattn {

/// One (layer, head) pair, zero-based.
struct HeadIndex {
  std::size_t layer = 0;
  std::size_t head = 0;

  friend bool operator==(const HeadIndex&, const HeadIndex&) = default;
};

/// Subset S of (layer, head) pairs whose attention matrices are averaged.
using AggregationSpec = std::vector<HeadIndex>;

AggregationSpec layer_subset(const AttentionTensor& t, std::size_t layer);  // all heads of one layer
AggregationSpec head_subset(const AttentionTensor& t, std::size_t head);    // one head across layers
AggregationSpec all_heads(const AttentionTensor& t);

/// Entrywise mean of the I x T' matrices listed in `subset`.
Matrix aggregate(const AttentionTensor& t, std::span<const HeadIndex> subset);

/// Indices of rows that do not hold bos/eos. Accepts maps with one row per
/// produced token or one row per trace token (bos included).
std::vector<std::size_t> content_rows(std::size_t rows, const DecodeTrace& trace);

/// Drops sentinel rows; survivors are copied bit-exactly.
Matrix strip_sentinels(const Matrix& m, const DecodeTrace& trace);
AttentionTensor strip_sentinels(const AttentionTensor& t, const DecodeTrace& trace);

enum class NormalizationAxis {
  kFramewise,  // each encoder-step column across tokens (default)
  kTokenwise,  // each token row across encoder steps
};

/// Mean-variance normalization of every column (or row) of an I x T' map.
Matrix normalize_framewise(const Matrix& m, NormalizationAxis axis = NormalizationAxis::kFramewise);

// XATT1 text export: "XATT1 L H I T'" then L*H*I rows of T' values in (l, h, i) order.
void write_attention(const AttentionTensor& t, std::ostream& out);
AttentionTensor read_attention(std::istream& in);

}  // namespace xattn
