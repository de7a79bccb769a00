#include "xattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "xattn/errors.hpp"
#include "xattn/text_io.hpp"

namespace xattn {

namespace {

std::optional<double> try_pearson(const Matrix& a, const Matrix& b) {
  try {
    return pearson(a, b);
  } catch (const DegenerateError&) {
    return std::nullopt;
  }
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out(1);
  for (char ch : line) {
    if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  return out;
}

double parse_cell(const std::string& s, std::string_view context) {
  const auto v = text::parse_doubles(s, context);
  if (v.size() != 1) throw ParseError(fmt::format("{}: expected one number, got '{}'", context, s));
  return v[0];
}

// Greedy re-decode of `enc` scored against `ref`.
double decode_wer(const EncoderStates& enc, const Model& model, std::span<const int> ref, std::size_t max_len) {
  const DecodeTrace trace = decode(enc, model, max_len);
  return wer(trace.content_tokens(), ref);
}

template <class Score>
DeletionCurve run_deletion(std::size_t units, std::span<const std::size_t> order, Score&& score) {
  DeletionCurve curve;
  for (std::size_t j = 0; j <= kDeletionSteps; ++j) {
    const auto k = static_cast<std::size_t>(
        std::llround(static_cast<double>(j) * static_cast<double>(units) / static_cast<double>(kDeletionSteps)));
    curve.fractions.push_back(static_cast<double>(j) / static_cast<double>(kDeletionSteps));
    curve.scores.push_back(score(order.first(std::min(k, units))));
  }
  return curve;
}

}  // namespace

GridPooling parse_grid_pooling(std::string_view name) {
  if (name == "avg2d") return GridPooling::kAvg2d;
  if (name == "2step" || name == "max1d_avg1d") return GridPooling::kMax1dAvg1d;
  if (name == "max2d") return GridPooling::kMax2d;
  throw std::invalid_argument(fmt::format("unknown aggregation '{}' (expected avg2d, 2step or max2d)", name));
}

std::string_view to_string(GridPooling mode) {
  switch (mode) {
    case GridPooling::kAvg2d: return "avg2d";
    case GridPooling::kMax1dAvg1d: return "2step";
    case GridPooling::kMax2d: return "max2d";
  }
  return "?";
}

Matrix aggregate_saliency_to_grid(const InputSaliency& sm, std::size_t enc_len, GridPooling mode, std::size_t window) {
  if (enc_len == 0) throw ShapeError("grid needs at least one encoder step");
  if (enc_len > sm.frames) throw ShapeError(fmt::format("T' = {} exceeds T = {}", enc_len, sm.frames));
  if (window == 0) window = (sm.frames + enc_len - 1) / enc_len;
  if ((enc_len - 1) * window >= sm.frames || enc_len * window < sm.frames) {
    throw ShapeError(fmt::format("{} frames do not split into {} windows of width {}", sm.frames, enc_len, window));
  }
  Matrix grid(sm.tokens, enc_len);
  for (std::size_t i = 0; i < sm.tokens; ++i) {
    const Matrix slice = sm.slice(i);
    for (std::size_t j = 0; j < enc_len; ++j) {
      const Matrix block = slice.block(j * window, std::min((j + 1) * window, sm.frames), 0, sm.bins);
      switch (mode) {
        case GridPooling::kAvg2d: grid(i, j) = pool2d(block, PoolMode::kAvg); break;
        case GridPooling::kMax1dAvg1d: grid(i, j) = pool_2step(block); break;
        case GridPooling::kMax2d: grid(i, j) = pool2d(block, PoolMode::kMax); break;
      }
    }
  }
  return grid;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError(fmt::format("pearson inputs differ in length: {} vs {}", a.size(), b.size()));
  if (a.size() < 2) throw ShapeError("pearson needs at least two values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double da = a[k] - ma;
    const double db = b[k] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DegenerateError("pearson: zero variance input");
  return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

double pearson(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(fmt::format("pearson shapes differ: {} vs {}", a.shape_string(), b.shape_string()));
  }
  return pearson(std::span<const double>(a.data()), std::span<const double>(b.data()));
}

CorrelationReport correlation_report(const AttentionTensor& att, const Matrix& sm_grid, const DecodeTrace& trace,
                                     const CorrelationOptions& options) {
  if (sm_grid.cols() != att.enc_len()) {
    throw ShapeError(fmt::format("saliency grid {} does not match {} encoder steps", sm_grid.shape_string(), att.enc_len()));
  }
  const AttentionTensor ca = strip_sentinels(att, trace);
  const Matrix sm = strip_sentinels(sm_grid, trace);
  if (sm.rows() != ca.out_len()) {
    throw ShapeError(fmt::format("saliency keeps {} rows, attention keeps {}", sm.rows(), ca.out_len()));
  }
  CorrelationReport r(ca.layers(), ca.heads());
  r.samples = 1;
  auto score = [&](const AggregationSpec& s) { return try_pearson(normalize_framewise(aggregate(ca, s), options.axis), sm); };
  for (std::size_t l = 0; l < ca.layers(); ++l) {
    for (std::size_t h = 0; h < ca.heads(); ++h) r.cell(l, h) = score({{l, h}});
    r.cell(l, ca.heads()) = score(layer_subset(ca, l));
  }
  for (std::size_t h = 0; h < ca.heads(); ++h) r.cell(ca.layers(), h) = score(head_subset(ca, h));
  r.cell(ca.layers(), ca.heads()) = score(all_heads(ca));
  return r;
}

CorrelationReport average_reports(std::span<const CorrelationReport> reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to average");
  CorrelationReport out(reports[0].layers, reports[0].heads);
  std::vector<double> sum(out.cells.size(), 0.0);
  std::vector<std::size_t> count(out.cells.size(), 0);
  for (const auto& r : reports) {
    if (r.layers != out.layers || r.heads != out.heads) {
      throw ShapeError(fmt::format("report grid {}x{} differs from {}x{}", r.layers, r.heads, out.layers, out.heads));
    }
    out.samples += r.samples;
    for (std::size_t k = 0; k < r.cells.size(); ++k) {
      if (r.cells[k]) {
        sum[k] += *r.cells[k];
        ++count[k];
      }
    }
  }
  for (std::size_t k = 0; k < sum.size(); ++k) {
    if (count[k] > 0) out.cells[k] = sum[k] / static_cast<double>(count[k]);
  }
  return out;
}

void write_report_csv(const CorrelationReport& r, std::ostream& out) {
  out << "layer/head";
  for (std::size_t h = 0; h < r.heads; ++h) out << ",h=" << h + 1;
  out << ",h-AVG\n";
  for (std::size_t l = 0; l <= r.layers; ++l) {
    out << (l < r.layers ? fmt::format("l={}", l + 1) : std::string("l-AVG"));
    for (std::size_t h = 0; h <= r.heads; ++h) {
      const auto& c = r.cell(l, h);
      out << ',' << (c ? format_double(*c) : std::string("NA"));
    }
    out << '\n';
  }
}

CorrelationReport read_report_csv(std::istream& in) {
  const auto header = split_commas(text::next_line(in, "report header"));
  if (header.size() < 2 || header.front() != "layer/head" || header.back() != "h-AVG") {
    throw ParseError("report CSV header must start with 'layer/head' and end with 'h-AVG'");
  }
  const std::size_t heads = header.size() - 2;
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_commas(line));
  }
  if (rows.empty() || rows.back().front() != "l-AVG") throw ParseError("report CSV lacks the 'l-AVG' row");
  CorrelationReport r(rows.size() - 1, heads);
  r.samples = 0;
  for (std::size_t l = 0; l < rows.size(); ++l) {
    const auto& row = rows[l];
    const std::string expect = l + 1 < rows.size() ? fmt::format("l={}", l + 1) : std::string("l-AVG");
    if (row.size() != heads + 2 || row.front() != expect) {
      throw ParseError(fmt::format("report CSV row {} malformed (expected '{}' with {} cells)", l + 2, expect, heads + 1));
    }
    for (std::size_t h = 0; h <= heads; ++h) {
      const auto& s = row[h + 1];
      if (s != "NA") r.cell(l, h) = parse_cell(s, fmt::format("report row {}", expect));
    }
  }
  return r;
}

double wer(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) throw std::invalid_argument("wer reference is empty");
  std::vector<std::size_t> prev(hyp.size() + 1);
  std::vector<std::size_t> cur(hyp.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t r = 1; r <= ref.size(); ++r) {
    cur[0] = r;
    for (std::size_t h = 1; h <= hyp.size(); ++h) {
      const std::size_t sub = prev[h - 1] + (ref[r - 1] == hyp[h - 1] ? 0 : 1);
      cur[h] = std::min({sub, prev[h] + 1, cur[h - 1] + 1});
    }
    std::swap(prev, cur);
  }
  const double rate = 100.0 * static_cast<double>(prev[hyp.size()]) / static_cast<double>(ref.size());
  return std::min(rate, 100.0);
}

double DeletionCurve::area() const {
  if (fractions.size() != scores.size()) throw ShapeError("deletion curve has mismatched columns");
  double a = 0.0;
  for (std::size_t k = 1; k < fractions.size(); ++k) {
    a += 0.5 * (fractions[k] - fractions[k - 1]) * (scores[k] + scores[k - 1]);
  }
  return a;
}

std::vector<double> sentence_saliency(const Matrix& grid, SentenceReduce reduce) {
  if (grid.rows() == 0) throw std::invalid_argument("saliency grid has no rows");
  std::vector<double> out(grid.cols());
  for (std::size_t c = 0; c < grid.cols(); ++c) {
    double acc = reduce == SentenceReduce::kMax ? grid(0, c) : 0.0;
    for (std::size_t r = 0; r < grid.rows(); ++r) {
      acc = reduce == SentenceReduce::kMax ? std::max(acc, grid(r, c)) : acc + grid(r, c);
    }
    out[c] = reduce == SentenceReduce::kMax ? acc : acc / static_cast<double>(grid.rows());
  }
  return out;
}

std::vector<std::size_t> deletion_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

DeletionCurve deletion_curve_input(const Spectrogram& x, std::span<const double> step_scores, const Model& model,
                                   std::span<const int> ref, std::size_t max_len) {
  const auto frame_scores = nn_upsample(step_scores, x.frames());
  const auto order = deletion_order(frame_scores);
  return run_deletion(x.frames(), order, [&](std::span<const std::size_t> drop) {
    Spectrogram masked = x;
    for (std::size_t t : drop) {
      auto r = masked.values.row(t);
      std::fill(r.begin(), r.end(), 0.0);
    }
    return decode_wer(encode(masked, model), model, ref, max_len);
  });
}

DeletionCurve deletion_curve_encoder(const EncoderStates& enc, std::span<const double> step_scores, const Model& model,
                                     std::span<const int> ref, std::size_t max_len) {
  if (step_scores.size() != enc.steps()) {
    throw ShapeError(fmt::format("{} step scores for {} encoder steps", step_scores.size(), enc.steps()));
  }
  const auto order = deletion_order(step_scores);
  return run_deletion(enc.steps(), order, [&](std::span<const std::size_t> drop) {
    return decode_wer(apply_encoder_mask(enc, drop), model, ref, max_len);
  });
}

void write_curve_csv(const DeletionCurve& c, std::ostream& out) {
  out << "fraction,score\n";
  for (std::size_t k = 0; k < c.fractions.size(); ++k) {
    out << format_double(c.fractions[k]) << ',' << format_double(c.scores[k]) << '\n';
  }
}

DeletionCurve read_curve_csv(std::istream& in) {
  const Matrix m = text::read_csv(in, "deletion curve");
  if (m.cols() != 2) throw ParseError("deletion curve CSV must have two columns");
  DeletionCurve c;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    c.fractions.push_back(m(r, 0));
    c.scores.push_back(m(r, 1));
  }
  return c;
}

std::vector<int> gray_levels(const Matrix& m) {
  if (m.empty()) throw std::invalid_argument("cannot render an empty map");
  if (!m.all_finite()) throw NonFiniteError("cannot render a map with non-finite values");
  const auto [lo_it, hi_it] = std::minmax_element(m.data().begin(), m.data().end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  std::vector<int> out(m.size(), 128);
  if (span > 0.0) {
    for (std::size_t k = 0; k < m.size(); ++k) {
      out[k] = static_cast<int>(std::lround(255.0 * (m.data()[k] - lo) / span));
    }
  }
  return out;
}

void write_pgm(const Matrix& m, std::ostream& out) {
  const auto g = gray_levels(m);
  out << "P2\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << g[r * m.cols() + c];
    out << '\n';
  }
}

void write_svg(const Matrix& m, std::ostream& out, std::string_view row_label, std::string_view col_label) {
  const auto g = gray_levels(m);
  constexpr int kCell = 8;
  constexpr int kMargin = 40;
  const auto width = static_cast<int>(m.cols()) * kCell + kMargin;
  const auto height = static_cast<int>(m.rows()) * kCell + kMargin;
  out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n", width, height);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const int v = g[r * m.cols() + c];
      out << fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},{},{})\"/>\n",
                         kMargin + static_cast<int>(c) * kCell, static_cast<int>(r) * kCell, kCell, kCell, v, v, v);
    }
  }
  const int grid_h = static_cast<int>(m.rows()) * kCell;
  out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">{} ({})</text>\n", kMargin, grid_h + 16, col_label,
                     m.cols());
  out << fmt::format("<text x=\"2\" y=\"{}\" font-size=\"10\">{} ({})</text>\n", grid_h / 2 + 4, row_label, m.rows());
  out << "</svg>\n";
}

}  // namespace xattn
