#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xattn/attention.hpp"
#include "xattn/attribution.hpp"
#include "xattn/metrics.hpp"
#include "xattn/model.hpp"

namespace xattn {

/// Everything that controls the per-sample analysis.
struct PipelineOptions {
  PerturbationConfig input{0.5, 2000, 0, PerturbationTarget::kInput};
  PerturbationConfig encoder{0.7, 2000, 0, PerturbationTarget::kEncoder};
  std::vector<double> densities{2.0, 3.0, 4.0};
  std::size_t frames_per_unit = kDefaultFramesPerUnit;
  GridPooling pooling = GridPooling::kMax2d;
  NormalizationAxis axis = NormalizationAxis::kFramewise;
  TokenNormalization token_norm = TokenNormalization::kMinMax;
  SentenceReduce sentence_reduce = SentenceReduce::kMax;
  bool input_saliency = true;  // false skips SM^X (encoder-only runs)
  bool deletion = true;
  std::size_t max_len = 0;

  /// Sets the seed of both perturbation configs (encoder trials get a distinct stream).
  void set_seed(std::uint64_t seed);
  void set_workers(std::size_t workers);
};

/// Result of decode, attribution, correlation and deletion for one input.
/// Grids keep one row per produced token; reports and curves use content rows.
struct SampleAnalysis {
  DecodeTrace trace;
  std::optional<InputSaliency> input_saliency;  // raw, I x T x F
  EncoderSaliency encoder_saliency;             // raw, I x T'
  Matrix input_grid;    // token-normalized SM^X pooled to I x T'
  Matrix encoder_grid;  // token-normalized SM^H
  std::optional<CorrelationReport> input_report;
  CorrelationReport encoder_report;
  std::optional<DeletionCurve> input_deletion;
  std::optional<DeletionCurve> encoder_deletion;
};

SampleAnalysis analyze_sample(const Model& model, const Spectrogram& x, std::span<const int> ref,
                              const PipelineOptions& options);

/// Copy of `m` with every row rotated right by `shift` columns.
Matrix cyclic_shift_columns(const Matrix& m, std::size_t shift);

}  // namespace xattn
