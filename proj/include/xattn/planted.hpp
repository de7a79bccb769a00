#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xattn/model.hpp"

namespace xattn {

/// Half-open frame interval [begin, end).
struct FrameSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool contains(std::size_t t) const { return t >= begin && t < end; }

  friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

/// Ground-truth harness: output token i depends only on frames alignment[i].
struct PlantedSpec {
  std::size_t frames = 0;
  std::vector<FrameSpan> alignment;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  /// Token ids to plant; drawn from `seed` when empty.
  std::vector<int> tokens;
};

struct PlantedModel {
  Model model;
  Spectrogram input;
  std::vector<int> expected_tokens;
};

/// Token id the planted readout falls back to when no span is audible.
inline constexpr int kPlantedUnknownId = 2;

/// Builds weights and an input such that token i is readable only from
/// frames alignment[i] and the last decoder layer attends to the encoder
/// steps covering that span. Earlier layers carry random, unused attention.
///
/// Requirements on `config`: head_dim >= bins and >= spans + 1,
/// embed_dim >= bins + head_dim, vocab large enough for distinct
/// two-bin signatures. The position tables are resized to fit the plan.
PlantedModel build_planted_model(const PlantedSpec& spec, const ModelConfig& config);

/// Another input for the model built from `spec`: same alignment, tokens and
/// noise drawn from `sample_seed` (tokens taken from spec.tokens if set).
PlantedModel sample_planted_input(const PlantedSpec& spec, const ModelConfig& config, std::uint64_t sample_seed);

/// Encoder steps whose window center falls inside `span`.
std::vector<std::size_t> encoder_image(const FrameSpan& span, std::size_t subsample, std::size_t frames);

/// Random partition of [0, frames) into `count` contiguous spans of at least
/// `min_length` frames each.
std::vector<FrameSpan> random_partition(std::size_t frames, std::size_t count, std::size_t min_length,
                                        std::uint64_t seed);

/// Configuration used by the generator and the acceptance runs: the default
/// ModelConfig with encoder context mixing over three steps.
ModelConfig default_planted_config();

}  // namespace xattn
