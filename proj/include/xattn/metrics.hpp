#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xattn/attention.hpp"
#include "xattn/attribution.hpp"
#include "xattn/model.hpp"
#include "xattn/numerics.hpp"

namespace xattn {

/// Reduction of a (window x F) saliency block to one grid value.
enum class GridPooling {
  kAvg2d,
  kMax1dAvg1d,  // max over frequency, then mean over time ("2step")
  kMax2d,
};

/// Parses "avg2d", "2step" (or "max1d_avg1d") and "max2d".
GridPooling parse_grid_pooling(std::string_view name);
std::string_view to_string(GridPooling mode);

/// I x T' grid: block (i, j) covers frames [j*w, min((j+1)*w, T)) of token i.
/// `window` = 0 derives w = ceil(T / T'); pass the model's subsample factor
/// to align windows with encoder steps.
Matrix aggregate_saliency_to_grid(const InputSaliency& sm, std::size_t enc_len, GridPooling mode = GridPooling::kMax2d,
                                  std::size_t window = 0);

/// Pearson correlation of two equally long vectors; DegenerateError on zero variance.
double pearson(std::span<const double> a, std::span<const double> b);
/// Correlation of the flattened matrices.
double pearson(const Matrix& a, const Matrix& b);

/// Grid of correlations: cell (l, h) for a single head, column `heads` for the
/// layer mean over heads, row `layers` for the head mean over layers, and
/// (layers, heads) for the mean over everything. Absent cells were degenerate.
struct CorrelationReport {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t samples = 0;
  std::vector<std::optional<double>> cells;  // (layers + 1) x (heads + 1)

  CorrelationReport() = default;
  CorrelationReport(std::size_t l, std::size_t h) : layers(l), heads(h), cells((l + 1) * (h + 1)) {}

  std::optional<double>& cell(std::size_t l, std::size_t h) { return cells[l * (heads + 1) + h]; }
  const std::optional<double>& cell(std::size_t l, std::size_t h) const { return cells[l * (heads + 1) + h]; }
  const std::optional<double>& layer_average(std::size_t l) const { return cell(l, heads); }
  const std::optional<double>& head_average(std::size_t h) const { return cell(layers, h); }
  const std::optional<double>& global_average() const { return cell(layers, heads); }

  friend bool operator==(const CorrelationReport&, const CorrelationReport&) = default;
};

struct CorrelationOptions {
  NormalizationAxis axis = NormalizationAxis::kFramewise;
};

/// Correlates every subset aggregate of `att` with `sm_grid` after stripping
/// sentinel rows from both and normalizing the attention. Both maps carry one
/// row per produced token (or per trace token).
CorrelationReport correlation_report(const AttentionTensor& att, const Matrix& sm_grid, const DecodeTrace& trace,
                                     const CorrelationOptions& options = {});

/// Cellwise mean over the present values of several reports.
CorrelationReport average_reports(std::span<const CorrelationReport> reports);

// CSV: header "layer/head,h=1,...,h=H,h-AVG", rows "l=1",...,"l-AVG"; absent cells are "NA".
void write_report_csv(const CorrelationReport& r, std::ostream& out);
CorrelationReport read_report_csv(std::istream& in);

/// Token-level edit distance over reference length, in percent, capped at 100.
double wer(std::span<const int> hyp, std::span<const int> ref);

struct DeletionCurve {
  std::vector<double> fractions;  // 0, 0.05, ..., 1
  std::vector<double> scores;     // WER at each fraction

  /// Trapezoid rule over the fraction axis.
  double area() const;

  friend bool operator==(const DeletionCurve&, const DeletionCurve&) = default;
};

inline constexpr std::size_t kDeletionSteps = 20;

enum class SentenceReduce { kMax, kMean };

/// Collapses an I x T' map to one score per column.
std::vector<double> sentence_saliency(const Matrix& grid, SentenceReduce reduce = SentenceReduce::kMax);

/// Indices sorted by descending score; equal scores keep ascending index order.
std::vector<std::size_t> deletion_order(std::span<const double> scores);

/// Zeroes the top round(j * T / 20) frames for j = 0..20, ranked by the
/// nn-upsampled encoder-rate scores, and scores each greedy re-decode against `ref`.
DeletionCurve deletion_curve_input(const Spectrogram& x, std::span<const double> step_scores, const Model& model,
                                   std::span<const int> ref, std::size_t max_len = 0);
/// Same procedure over encoder steps, without upsampling.
DeletionCurve deletion_curve_encoder(const EncoderStates& enc, std::span<const double> step_scores, const Model& model,
                                     std::span<const int> ref, std::size_t max_len = 0);

// "fraction,score" CSV.
void write_curve_csv(const DeletionCurve& c, std::ostream& out);
DeletionCurve read_curve_csv(std::istream& in);

/// 8-bit gray levels after min-max scaling; a constant map becomes 128 everywhere.
std::vector<int> gray_levels(const Matrix& m);
/// Plain PGM (P2), one image row per matrix row.
void write_pgm(const Matrix& m, std::ostream& out);
/// SVG grid of gray cells with row and column axis labels.
void write_svg(const Matrix& m, std::ostream& out, std::string_view row_label = "token",
               std::string_view col_label = "frame");

}  // namespace xattn
