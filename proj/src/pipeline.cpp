#include "xattn/pipeline.hpp"

#include <stdexcept>

namespace xattn {

void PipelineOptions::set_seed(std::uint64_t seed) {
  input.seed = seed;
  encoder.seed = seed ^ 0xa0761d6478bd642fULL;
}

void PipelineOptions::set_workers(std::size_t workers) {
  input.workers = workers;
  encoder.workers = workers;
}

Matrix cyclic_shift_columns(const Matrix& m, std::size_t shift) {
  Matrix out(m.rows(), m.cols());
  if (m.cols() == 0) return out;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, (c + shift) % m.cols()) = m(r, c);
  return out;
}

SampleAnalysis analyze_sample(const Model& model, const Spectrogram& x, std::span<const int> ref,
                              const PipelineOptions& options) {
  SampleAnalysis a;
  const EncoderStates enc = encode(x, model);
  a.trace = decode(enc, model, options.max_len);
  const CorrelationOptions corr{options.axis};
  const std::size_t steps = enc.steps();

  if (options.input_saliency) {
    const ClusterMap cm = build_clusters(x, options.densities, options.input.seed, options.frames_per_unit);
    a.input_saliency = compute_input_saliency(x, a.trace, model, cm, options.input);
    a.input_grid = aggregate_saliency_to_grid(normalize_token_dim(*a.input_saliency, options.token_norm), steps,
                                              options.pooling, model.config.subsample);
    a.input_report = correlation_report(a.trace.attention, a.input_grid, a.trace, corr);
  }
  a.encoder_saliency = compute_encoder_saliency(enc, a.trace, model, options.encoder);
  a.encoder_grid = normalize_token_rows(a.encoder_saliency.values, options.token_norm);
  a.encoder_report = correlation_report(a.trace.attention, a.encoder_grid, a.trace, corr);

  if (options.deletion) {
    if (options.input_saliency) {
      const auto scores = sentence_saliency(strip_sentinels(a.input_grid, a.trace), options.sentence_reduce);
      a.input_deletion = deletion_curve_input(x, scores, model, ref, options.max_len);
    }
    const auto scores = sentence_saliency(strip_sentinels(a.encoder_grid, a.trace), options.sentence_reduce);
    a.encoder_deletion = deletion_curve_encoder(enc, scores, model, ref, options.max_len);
  }
  return a;
}

}  // namespace xattn
