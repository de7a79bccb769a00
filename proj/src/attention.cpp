#include "xattn/attention.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "xattn/errors.hpp"
#include "xattn/text_io.hpp"

namespace xattn {

AggregationSpec layer_subset(const AttentionTensor& t, std::size_t layer) {
  AggregationSpec s;
  for (std::size_t h = 0; h < t.heads(); ++h) s.push_back({layer, h});
  return s;
}

AggregationSpec head_subset(const AttentionTensor& t, std::size_t head) {
  AggregationSpec s;
  for (std::size_t l = 0; l < t.layers(); ++l) s.push_back({l, head});
  return s;
}

AggregationSpec all_heads(const AttentionTensor& t) {
  AggregationSpec s;
  for (std::size_t l = 0; l < t.layers(); ++l)
    for (std::size_t h = 0; h < t.heads(); ++h) s.push_back({l, h});
  return s;
}

Matrix aggregate(const AttentionTensor& t, std::span<const HeadIndex> subset) {
  if (subset.empty()) throw std::invalid_argument("aggregation subset is empty");
  for (const auto& idx : subset) {
    if (idx.layer >= t.layers() || idx.head >= t.heads()) {
      throw std::invalid_argument(fmt::format("aggregation subset entry (layer {}, head {}) outside {}x{} tensor",
                                              idx.layer, idx.head, t.layers(), t.heads()));
    }
  }
  Matrix out(t.out_len(), t.enc_len());
  for (const auto& idx : subset)
    for (std::size_t i = 0; i < t.out_len(); ++i) {
      auto src = t.row(idx.layer, idx.head, i);
      auto dst = out.row(i);
      for (std::size_t k = 0; k < t.enc_len(); ++k) dst[k] += src[k];
    }
  const double n = static_cast<double>(subset.size());
  for (double& v : out.data()) v /= n;
  return out;
}

std::vector<std::size_t> content_rows(std::size_t rows, const DecodeTrace& trace) {
  std::span<const int> ids;
  if (rows == trace.tokens.size()) {
    ids = trace.tokens;
  } else if (rows == trace.produced()) {
    ids = std::span<const int>(trace.tokens).subspan(1);
  } else {
    throw ShapeError(fmt::format("map has {} rows but the trace has {} tokens ({} produced)", rows,
                                 trace.tokens.size(), trace.produced()));
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != trace.bos_id && ids[i] != trace.eos_id) keep.push_back(i);
  }
  if (keep.empty()) throw std::invalid_argument("no rows left after removing sentinels");
  return keep;
}

Matrix strip_sentinels(const Matrix& m, const DecodeTrace& trace) {
  const auto keep = content_rows(m.rows(), trace);
  Matrix out(keep.size(), m.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    auto src = m.row(keep[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

AttentionTensor strip_sentinels(const AttentionTensor& t, const DecodeTrace& trace) {
  return t.select_rows(content_rows(t.out_len(), trace));
}

Matrix normalize_framewise(const Matrix& m, NormalizationAxis axis) {
  Matrix out(m.rows(), m.cols());
  // A single entry per normalized vector falls under the degenerate-variance rule.
  if ((axis == NormalizationAxis::kFramewise && m.rows() < 2) ||
      (axis == NormalizationAxis::kTokenwise && m.cols() < 2)) {
    return out;
  }
  if (axis == NormalizationAxis::kTokenwise) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto z = mean_var_normalize(m.row(r));
      std::copy(z.begin(), z.end(), out.row(r).begin());
    }
    return out;
  }
  std::vector<double> column(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) column[r] = m(r, c);
    const auto z = mean_var_normalize(column);
    for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) = z[r];
  }
  return out;
}

void write_attention(const AttentionTensor& t, std::ostream& out) {
  out << "XATT1 " << t.layers() << ' ' << t.heads() << ' ' << t.out_len() << ' ' << t.enc_len() << '\n';
  for (std::size_t l = 0; l < t.layers(); ++l)
    for (std::size_t h = 0; h < t.heads(); ++h) text::write_rows(out, t.head_matrix(l, h));
}

AttentionTensor read_attention(std::istream& in) {
  const auto header = text::split_words(text::next_line(in, "attention header"));
  if (header.size() != 5 || header[0] != "XATT1") throw ParseError("not an XATT1 attention file");
  std::size_t dims[4];
  try {
    for (int k = 0; k < 4; ++k) dims[k] = std::stoul(header[static_cast<std::size_t>(k + 1)]);
  } catch (const std::exception&) {
    throw ParseError("XATT1 header has a malformed dimension");
  }
  AttentionTensor t(dims[0], dims[1], dims[2], dims[3]);
  for (std::size_t l = 0; l < t.layers(); ++l)
    for (std::size_t h = 0; h < t.heads(); ++h) {
      const Matrix m = text::read_rows(in, t.out_len(), t.enc_len(), fmt::format("XATT1 layer {} head {}", l, h));
      for (std::size_t i = 0; i < t.out_len(); ++i) {
        auto src = m.row(i);
        std::copy(src.begin(), src.end(), t.row(l, h, i).begin());
      }
    }
  return t;
}

}  // namespace xattn
