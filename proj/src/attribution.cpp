#include "xattn/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "xattn/errors.hpp"
#include "xattn/parallel.hpp"
#include "xattn/text_io.hpp"

namespace xattn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<double> trial_kl(const Matrix& reference, const Matrix& perturbed) {
  std::vector<double> kl(reference.rows());
  for (std::size_t i = 0; i < reference.rows(); ++i) kl[i] = kl_divergence(reference.row(i), perturbed.row(i));
  return kl;
}

void check_trace(const DecodeTrace& trace) {
  if (trace.produced() == 0) throw std::invalid_argument("trace has no produced tokens");
  if (trace.distributions.rows() != trace.produced()) {
    throw ShapeError(fmt::format("trace has {} distribution rows for {} produced tokens", trace.distributions.rows(),
                                 trace.produced()));
  }
}

// Per-unit relevance from trial records: result[i][u] for `units` units.
// Records are consumed in trial order so the sum is independent of scheduling.
Matrix reduce_records(const std::vector<TrialRecord>& records, std::size_t tokens, std::size_t units,
                      std::span<const std::size_t> trials_per_unit_group, std::span<const std::size_t> unit_group,
                      ScoreAggregation aggregation) {
  Matrix sum(tokens, units);
  std::vector<std::size_t> hits(units, 0);
  for (const auto& rec : records) {
    for (std::size_t u : rec.mask) {
      ++hits[u];
      for (std::size_t i = 0; i < tokens; ++i) sum(i, u) += rec.kl[i];
    }
  }
  for (std::size_t u = 0; u < units; ++u) {
    const std::size_t denom =
        aggregation == ScoreAggregation::kConditionalMean ? hits[u] : trials_per_unit_group[unit_group[u]];
    for (std::size_t i = 0; i < tokens; ++i) sum(i, u) = denom == 0 ? 0.0 : sum(i, u) / static_cast<double>(denom);
  }
  return sum;
}

void normalize_slice(std::span<double> v, TokenNormalization mode) {
  if (v.empty()) throw std::invalid_argument("token slice is empty");
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (mode == TokenNormalization::kMinMax) {
    if (hi - lo <= 0.0) {
      std::fill(v.begin(), v.end(), 0.0);
      return;
    }
    for (double& x : v) x = (x - lo) / (hi - lo);
  } else {
    if (hi <= 0.0) return;
    for (double& x : v) x /= hi;
  }
}

std::vector<std::size_t> parse_header(const std::string& line, std::string_view tag, std::size_t count) {
  const auto words = text::split_words(line);
  if (words.size() != count + 1 || words[0] != tag) throw ParseError(fmt::format("not an {} file", tag));
  std::vector<std::size_t> dims;
  try {
    for (std::size_t k = 1; k < words.size(); ++k) dims.push_back(std::stoul(words[k]));
  } catch (const std::exception&) {
    throw ParseError(fmt::format("{} header has a malformed dimension", tag));
  }
  return dims;
}

}  // namespace

void PerturbationConfig::validate() const {
  if (!(occlusion_prob > 0.0 && occlusion_prob < 1.0)) {
    throw std::invalid_argument(fmt::format("occlusion probability {} outside (0, 1)", occlusion_prob));
  }
  if (trials == 0) throw std::invalid_argument("perturbation needs at least one trial");
}

std::vector<std::size_t> draw_mask(std::size_t units, double p, std::uint64_t seed, std::size_t trial) {
  std::mt19937_64 rng(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(trial)));
  std::vector<std::size_t> mask;
  for (std::size_t u = 0; u < units; ++u) {
    if (unit_uniform(rng) < p) mask.push_back(u);
  }
  return mask;
}

std::size_t trial_scale(const ClusterMap& cm, std::size_t trial) {
  if (cm.scales() == 0) throw std::invalid_argument("cluster map has no scales");
  return trial % cm.scales();
}

Spectrogram apply_input_mask(const Spectrogram& x, const ClusterMap& cm, std::span<const std::size_t> clusters) {
  if (x.frames() != cm.frames || x.bins() != cm.bins) {
    throw ShapeError(fmt::format("spectrogram {} does not match cluster map ({}x{})", x.values.shape_string(),
                                 cm.frames, cm.bins));
  }
  Spectrogram out = x;
  for (std::size_t id : clusters) {
    const std::size_t s = cm.scale_of(id);
    const auto& assign = cm.assignment[s];
    for (std::size_t k = 0; k < assign.size(); ++k) {
      if (assign[k] == id) out.values.data()[k] = 0.0;
    }
  }
  return out;
}

EncoderStates apply_encoder_mask(const EncoderStates& enc, std::span<const std::size_t> steps) {
  EncoderStates out = enc;
  for (std::size_t t : steps) {
    if (t >= enc.steps()) throw std::out_of_range(fmt::format("encoder step {} outside {} steps", t, enc.steps()));
    auto r = out.values.row(t);
    std::fill(r.begin(), r.end(), 0.0);
  }
  return out;
}

std::pair<Spectrogram, std::vector<std::size_t>> occlude_input(const Spectrogram& x, const ClusterMap& cm,
                                                               const PerturbationConfig& cfg, std::size_t trial) {
  if (x.frames() != cm.frames || x.bins() != cm.bins) {
    throw ShapeError(fmt::format("spectrogram {} does not match cluster map ({}x{})", x.values.shape_string(),
                                 cm.frames, cm.bins));
  }
  const std::size_t s = trial_scale(cm, trial);
  auto mask = draw_mask(cm.scale_sizes[s], cfg.occlusion_prob, cfg.seed, trial);
  for (auto& u : mask) u += cm.scale_offsets[s];
  // Every cell of the chosen scale maps to one id, so a single pass suffices.
  Spectrogram out = x;
  std::vector<char> hidden(cm.scale_sizes[s], 0);
  for (std::size_t id : mask) hidden[id - cm.scale_offsets[s]] = 1;
  const auto& assign = cm.assignment[s];
  for (std::size_t k = 0; k < assign.size(); ++k) {
    if (hidden[assign[k] - cm.scale_offsets[s]]) out.values.data()[k] = 0.0;
  }
  return {std::move(out), std::move(mask)};
}

std::pair<EncoderStates, std::vector<std::size_t>> occlude_encoder(const EncoderStates& enc,
                                                                   const PerturbationConfig& cfg, std::size_t trial) {
  auto mask = draw_mask(enc.steps(), cfg.occlusion_prob, cfg.seed, trial);
  return {apply_encoder_mask(enc, mask), std::move(mask)};
}

std::vector<TrialRecord> run_input_trials(const Spectrogram& x, const DecodeTrace& trace, const Model& model,
                                          const ClusterMap& cm, const PerturbationConfig& cfg) {
  cfg.validate();
  check_trace(trace);
  std::vector<TrialRecord> records(cfg.trials);
  parallel_for(cfg.trials, cfg.workers, [&](std::size_t n) {
    auto [perturbed, mask] = occlude_input(x, cm, cfg, n);
    const Matrix dist = forward_given_prefix(encode(perturbed, model), trace.teacher_prefix(), model);
    records[n] = TrialRecord{n, std::move(mask), trial_kl(trace.distributions, dist)};
  });
  return records;
}

std::vector<TrialRecord> run_encoder_trials(const EncoderStates& enc, const DecodeTrace& trace, const Model& model,
                                            const PerturbationConfig& cfg) {
  cfg.validate();
  check_trace(trace);
  std::vector<TrialRecord> records(cfg.trials);
  parallel_for(cfg.trials, cfg.workers, [&](std::size_t n) {
    auto [perturbed, mask] = occlude_encoder(enc, cfg, n);
    const Matrix dist = forward_given_prefix(perturbed, trace.teacher_prefix(), model);
    records[n] = TrialRecord{n, std::move(mask), trial_kl(trace.distributions, dist)};
  });
  return records;
}

InputSaliency compute_input_saliency(const Spectrogram& x, const DecodeTrace& trace, const Model& model,
                                     const ClusterMap& cm, const PerturbationConfig& cfg) {
  const auto records = run_input_trials(x, trace, model, cm, cfg);
  const std::size_t tokens = trace.produced();
  const std::size_t scales = cm.scales();

  std::vector<std::size_t> trials_per_scale(scales, 0);
  for (std::size_t n = 0; n < cfg.trials; ++n) ++trials_per_scale[trial_scale(cm, n)];
  std::vector<std::size_t> group(cm.total_clusters());
  for (std::size_t s = 0; s < scales; ++s)
    for (std::size_t k = 0; k < cm.scale_sizes[s]; ++k) group[cm.scale_offsets[s] + k] = s;

  const Matrix per_cluster = reduce_records(records, tokens, cm.total_clusters(), trials_per_scale, group, cfg.aggregation);

  // Equal-weight mean across scales; scales that received no trial are skipped.
  std::size_t active = 0;
  for (std::size_t s = 0; s < scales; ++s) active += trials_per_scale[s] > 0 ? 1 : 0;
  InputSaliency sm(tokens, cm.frames, cm.bins);
  const std::size_t cells = cm.frames * cm.bins;
  for (std::size_t s = 0; s < scales; ++s) {
    if (trials_per_scale[s] == 0) continue;
    const auto& assign = cm.assignment[s];
    for (std::size_t i = 0; i < tokens; ++i) {
      double* dst = sm.values.data() + i * cells;
      for (std::size_t k = 0; k < cells; ++k) dst[k] += per_cluster(i, assign[k]);
    }
  }
  for (double& v : sm.values) v /= static_cast<double>(active);
  return sm;
}

EncoderSaliency compute_encoder_saliency(const EncoderStates& enc, const DecodeTrace& trace, const Model& model,
                                         const PerturbationConfig& cfg) {
  const auto records = run_encoder_trials(enc, trace, model, cfg);
  const std::size_t trials[] = {cfg.trials};
  const std::vector<std::size_t> group(enc.steps(), 0);
  return {reduce_records(records, trace.produced(), enc.steps(), trials, group, cfg.aggregation)};
}

Matrix InputSaliency::slice(std::size_t i) const {
  if (i >= tokens) throw std::out_of_range(fmt::format("token {} outside {} tokens", i, tokens));
  const auto first = values.begin() + static_cast<std::ptrdiff_t>(i * frames * bins);
  return Matrix(frames, bins, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(frames * bins)));
}

InputSaliency InputSaliency::select_tokens(std::span<const std::size_t> rows) const {
  InputSaliency out(rows.size(), frames, bins);
  const std::size_t cells = frames * bins;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= tokens) throw std::out_of_range(fmt::format("token {} outside {} tokens", rows[k], tokens));
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(rows[k] * cells), cells,
                out.values.begin() + static_cast<std::ptrdiff_t>(k * cells));
  }
  return out;
}

InputSaliency normalize_token_dim(const InputSaliency& sm, TokenNormalization mode) {
  InputSaliency out = sm;
  const std::size_t cells = sm.frames * sm.bins;
  for (std::size_t i = 0; i < sm.tokens; ++i) normalize_slice(std::span(out.values).subspan(i * cells, cells), mode);
  return out;
}

Matrix normalize_token_rows(const Matrix& m, TokenNormalization mode) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) normalize_slice(out.row(i), mode);
  return out;
}

EncoderSaliency normalize_token_dim(const EncoderSaliency& sm, TokenNormalization mode) {
  return {normalize_token_rows(sm.values, mode)};
}

void write_input_saliency(const InputSaliency& sm, std::ostream& out) {
  out << "XSAL1 " << sm.tokens << ' ' << sm.frames << ' ' << sm.bins << '\n';
  text::write_rows(out, Matrix(sm.tokens * sm.frames, sm.bins, sm.values));
}

InputSaliency read_input_saliency(std::istream& in) {
  const auto dims = parse_header(text::next_line(in, "saliency header"), "XSAL1", 3);
  const Matrix m = text::read_rows(in, dims[0] * dims[1], dims[2], "XSAL1 body");
  InputSaliency sm(dims[0], dims[1], dims[2]);
  sm.values = m.data();
  return sm;
}

void write_encoder_saliency(const EncoderSaliency& sm, std::ostream& out) {
  out << "XSALH1 " << sm.values.rows() << ' ' << sm.values.cols() << '\n';
  text::write_rows(out, sm.values);
}

EncoderSaliency read_encoder_saliency(std::istream& in) {
  const auto dims = parse_header(text::next_line(in, "saliency header"), "XSALH1", 2);
  return {text::read_rows(in, dims[0], dims[1], "XSALH1 body")};
}

}  // namespace xattn
