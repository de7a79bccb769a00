#include "xattn/planted.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace xattn {
namespace {

constexpr double kAmplitude = 2.0;       // peak frame energy inside a span
constexpr double kReadoutGain = 8.0;
constexpr double kUnknownThreshold = 0.5;  // fraction of full-strength evidence needed to beat <unk>
constexpr double kEosGain = 30.0;
constexpr double kRandomKeyScale = 1.0;

std::size_t window_center(std::size_t step, std::size_t subsample, std::size_t frames) {
  const std::size_t begin = step * subsample;
  const std::size_t width = std::min(subsample, frames - begin);
  return begin + width / 2;
}

void validate(const PlantedSpec& spec, const ModelConfig& c) {
  auto infeasible = [](const std::string& what) { throw std::invalid_argument("infeasible alignment: " + what); };
  if (spec.frames == 0) infeasible("no frames");
  if (spec.alignment.empty()) infeasible("no spans");
  if (spec.noise_level < 0) infeasible("negative noise level");
  for (std::size_t i = 0; i < spec.alignment.size(); ++i) {
    const auto& span = spec.alignment[i];
    if (span.begin >= span.end || span.end > spec.frames) {
      infeasible(fmt::format("span {} [{}, {}) outside [0, {})", i, span.begin, span.end, spec.frames));
    }
    if (span.length() < c.subsample) {
      infeasible(fmt::format("span {} has {} frames, shorter than the subsampling factor {}", i, span.length(),
                             c.subsample));
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& other = spec.alignment[j];
      if (span.begin < other.end && other.begin < span.end) infeasible(fmt::format("spans {} and {} overlap", j, i));
    }
    if (encoder_image(span, c.subsample, spec.frames).empty()) {
      infeasible(fmt::format("span {} covers no encoder window center", i));
    }
  }
  if (!spec.tokens.empty() && spec.tokens.size() != spec.alignment.size()) {
    infeasible(fmt::format("{} tokens for {} spans", spec.tokens.size(), spec.alignment.size()));
  }
  const std::size_t spans = spec.alignment.size();
  if (c.head_dim < c.bins) throw std::invalid_argument("planted model needs head_dim >= bins");
  if (c.head_dim < spans + 1) {
    throw std::invalid_argument(fmt::format("planted model needs head_dim >= spans + 1 ({})", spans + 1));
  }
  if (c.embed_dim < c.bins + c.head_dim) throw std::invalid_argument("planted model needs embed_dim >= bins + head_dim");
  const int unk = kPlantedUnknownId;
  if (unk == c.bos_id || unk == c.eos_id || static_cast<std::size_t>(unk) >= c.vocab) {
    throw std::invalid_argument("planted model reserves token id 2 for <unk>");
  }
}

std::vector<int> content_ids(const ModelConfig& c) {
  std::vector<int> ids;
  for (int k = 0; k < static_cast<int>(c.vocab); ++k) {
    if (k != c.bos_id && k != c.eos_id && k != kPlantedUnknownId) ids.push_back(k);
  }
  return ids;
}

// Unit-norm two-bin spectral signature per content token, indexed by token id.
std::vector<std::vector<double>> signatures(const ModelConfig& c, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < c.bins; ++a)
    for (std::size_t b = a + 1; b < c.bins; ++b) pairs.emplace_back(a, b);
  const auto ids = content_ids(c);
  if (ids.empty()) throw std::invalid_argument("planted model needs at least one content token");
  if (c.bins == 1) {
    if (ids.size() > 1) throw std::invalid_argument("one frequency bin supports only one planted token");
    pairs.emplace_back(0, 0);
  }
  if (pairs.size() < ids.size()) {
    throw std::invalid_argument(fmt::format("{} bins cannot give {} distinct signatures", c.bins, ids.size()));
  }
  std::mt19937_64 rng(seed ^ 0x5167a7e5ULL);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::vector<std::vector<double>> sig(c.vocab, std::vector<double>(c.bins, 0.0));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    auto& s = sig[static_cast<std::size_t>(ids[k])];
    const auto [a, b] = pairs[k];
    if (a == b) {
      s[a] = 1.0;
    } else {
      s[a] = std::numbers::sqrt2 / 2.0;
      s[b] = std::numbers::sqrt2 / 2.0;
    }
  }
  return sig;
}

// Index of the span owning each encoder step, if any.
std::vector<std::optional<std::size_t>> step_owners(const PlantedSpec& spec, std::size_t subsample) {
  const std::size_t steps = (spec.frames + subsample - 1) / subsample;
  std::vector<std::optional<std::size_t>> owner(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t center = window_center(t, subsample, spec.frames);
    for (std::size_t i = 0; i < spec.alignment.size(); ++i) {
      if (spec.alignment[i].contains(center)) owner[t] = i;
    }
  }
  return owner;
}

Model planted_weights(const PlantedSpec& spec, ModelConfig c) {
  const std::size_t spans = spec.alignment.size();
  const std::size_t F = c.bins;
  const std::size_t pos0 = F;  // positional one-hots live in [F, F + head_dim)
  const std::size_t tok0 = F + c.head_dim;
  c.max_source_positions = c.encoder_steps(spec.frames);
  c.max_target_positions = spans + 1;
  Model model = Model::zeros(c);
  auto& w = model.weights;

  for (std::size_t j = 0; j < c.subsample; ++j)
    for (std::size_t f = 0; f < F; ++f) w.frame_projection(j * F + f, f) = 1.0 / static_cast<double>(c.subsample);

  const auto owner = step_owners(spec, c.subsample);
  for (std::size_t t = 0; t < owner.size(); ++t) {
    if (owner[t]) w.source_positions(t, pos0 + *owner[t]) = 1.0;
  }
  for (std::size_t p = 0; p <= spans; ++p) w.target_positions(p, pos0 + p) = 1.0;

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t v = 0; v < c.vocab; ++v)
    for (std::size_t d = tok0; d < c.embed_dim; ++d) w.token_embedding(v, d) = normal(rng);

  const double root_dk = std::sqrt(static_cast<double>(c.head_dim));
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto& cross = w.decoder_layers[l].cross_attention;
    const bool final_layer = l + 1 == c.layers;
    for (std::size_t h = 0; h < c.heads; ++h) {
      if (final_layer) {
        const double sharpness = 8.0 + 2.0 * static_cast<double>(h % 3);
        for (std::size_t p = 0; p < c.head_dim; ++p) {
          cross.query[h](pos0 + p, p) = sharpness * root_dk;
          cross.key[h](pos0 + p, p) = 1.0;
        }
        for (std::size_t f = 0; f < F; ++f) cross.value[h](f, f) = 1.0;
        for (std::size_t f = 0; f < F; ++f) cross.output(h * c.head_dim + f, f) = 1.0 / static_cast<double>(c.heads);
      } else {
        // Unaligned early-layer attention; its output projection stays zero.
        for (std::size_t p = 0; p < c.head_dim; ++p)
          for (std::size_t d = 0; d < c.head_dim; ++d) {
            cross.query[h](pos0 + p, d) = kRandomKeyScale * normal(rng);
            cross.key[h](pos0 + p, d) = kRandomKeyScale * normal(rng);
          }
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t d = 0; d < c.head_dim; ++d) cross.value[h](f, d) = normal(rng);
      }
    }
  }

  const auto sig = signatures(c, spec.seed);
  for (int k : content_ids(c))
    for (std::size_t f = 0; f < F; ++f) {
      w.readout(f, static_cast<std::size_t>(k)) = kReadoutGain * sig[static_cast<std::size_t>(k)][f];
    }
  w.readout(pos0 + spans, static_cast<std::size_t>(c.eos_id)) = kEosGain;
  w.readout_bias(0, kPlantedUnknownId) = kReadoutGain * kUnknownThreshold;
  return model;
}

Spectrogram planted_input(const PlantedSpec& spec, const ModelConfig& c, const std::vector<int>& tokens,
                          std::uint64_t noise_seed) {
  const auto sig = signatures(c, spec.seed);
  Spectrogram x{Matrix(spec.frames, c.bins)};
  for (std::size_t i = 0; i < spec.alignment.size(); ++i) {
    const auto& span = spec.alignment[i];
    const double n = static_cast<double>(span.length());
    const auto& s = sig[static_cast<std::size_t>(tokens[i])];
    for (std::size_t t = span.begin; t < span.end; ++t) {
      // sin^2 bump: strongest at the span center, mean 1/2 over the span
      const double phase = std::numbers::pi * (static_cast<double>(t - span.begin) + 0.5) / n;
      const double envelope = kAmplitude * std::sin(phase) * std::sin(phase);
      for (std::size_t f = 0; f < c.bins; ++f) x.values(t, f) = envelope * s[f];
    }
  }
  if (spec.noise_level > 0) {
    std::mt19937_64 rng(noise_seed ^ 0xd1b54a32d192ed03ULL);
    std::normal_distribution<double> noise(0.0, spec.noise_level);
    for (double& v : x.values.data()) v += noise(rng);
  }
  return x;
}

}  // namespace

std::vector<std::size_t> encoder_image(const FrameSpan& span, std::size_t subsample, std::size_t frames) {
  std::vector<std::size_t> steps;
  const std::size_t count = (frames + subsample - 1) / subsample;
  for (std::size_t t = 0; t < count; ++t) {
    if (span.contains(window_center(t, subsample, frames))) steps.push_back(t);
  }
  return steps;
}

PlantedModel sample_planted_input(const PlantedSpec& spec, const ModelConfig& config, std::uint64_t sample_seed) {
  config.validate();
  validate(spec, config);
  std::vector<int> tokens = spec.tokens;
  const auto ids = content_ids(config);
  if (tokens.empty()) {
    std::mt19937_64 rng(sample_seed);
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    for (std::size_t i = 0; i < spec.alignment.size(); ++i) tokens.push_back(ids[pick(rng)]);
  }
  for (int t : tokens) {
    if (std::find(ids.begin(), ids.end(), t) == ids.end()) {
      throw std::invalid_argument(fmt::format("token {} cannot be planted", t));
    }
  }
  PlantedModel out;
  out.model = planted_weights(spec, config);
  out.input = planted_input(spec, config, tokens, sample_seed);
  out.expected_tokens = std::move(tokens);
  return out;
}

PlantedModel build_planted_model(const PlantedSpec& spec, const ModelConfig& config) {
  return sample_planted_input(spec, config, spec.seed);
}

std::vector<FrameSpan> random_partition(std::size_t frames, std::size_t count, std::size_t min_length,
                                        std::uint64_t seed) {
  if (count == 0 || count * min_length > frames) {
    throw std::invalid_argument(
        fmt::format("cannot split {} frames into {} spans of at least {} frames", frames, count, min_length));
  }
  const std::size_t slack = frames - count * min_length;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cut(0, slack);
  std::vector<std::size_t> cuts(count - 1);
  for (auto& c : cuts) c = cut(rng);
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(slack);
  std::vector<FrameSpan> spans;
  std::size_t begin = 0;
  std::size_t previous = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t length = min_length + cuts[i] - previous;
    previous = cuts[i];
    spans.push_back({begin, begin + length});
    begin += length;
  }
  return spans;
}

ModelConfig default_planted_config() {
  ModelConfig c;
  c.context_width = 3;
  return c;
}

}  // namespace xattn
