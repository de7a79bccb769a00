#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "xattn/model.hpp"
#include "xattn/numerics.hpp"

namespace xattn {

/// Multi-scale partition of the T x F plane. Every cell belongs to exactly
/// one cluster per scale; ids are contiguous from 0 and disjoint across scales.
struct ClusterMap {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> densities;
  std::vector<std::size_t> scale_offsets;  // first id of each scale
  std::vector<std::size_t> scale_sizes;    // number of clusters in each scale
  std::vector<std::vector<std::size_t>> assignment;  // per scale, frames * bins ids

  std::size_t scales() const { return scale_sizes.size(); }
  std::size_t total_clusters() const;
  std::size_t cluster_at(std::size_t scale, std::size_t t, std::size_t f) const {
    return assignment[scale][t * bins + f];
  }
  /// Scale that owns a global cluster id.
  std::size_t scale_of(std::size_t id) const;

  friend bool operator==(const ClusterMap&, const ClusterMap&) = default;
};

inline constexpr std::size_t kDefaultFramesPerUnit = 8;

/// Energy-aware rectangular tiling: per scale, about density * T / frames_per_unit
/// tiles made of time strips (cut where cumulative frame energy crosses
/// seed-jittered quantiles) times even frequency bands.
ClusterMap build_clusters(const Spectrogram& x, std::span<const double> densities, std::uint64_t seed,
                          std::size_t frames_per_unit = kDefaultFramesPerUnit);

enum class PerturbationTarget { kInput, kEncoder };

/// How per-trial KL scores become per-unit relevance.
enum class ScoreAggregation {
  kConditionalMean,  // mean KL over the trials that occluded the unit
  kTrialMean,        // KL summed over occluding trials, divided by all trials
};

struct PerturbationConfig {
  double occlusion_prob = 0.5;
  std::size_t trials = 2000;
  std::uint64_t seed = 0;
  PerturbationTarget target = PerturbationTarget::kInput;
  std::size_t workers = 1;
  ScoreAggregation aggregation = ScoreAggregation::kConditionalMean;

  void validate() const;
};

/// Occlusion mask over `units` units: unit u is drawn with probability p from
/// a generator seeded only by (seed, trial).
std::vector<std::size_t> draw_mask(std::size_t units, double p, std::uint64_t seed, std::size_t trial);

/// Scale used by input trial `trial` (trials cycle through the scales).
std::size_t trial_scale(const ClusterMap& cm, std::size_t trial);

/// Zeroes every cell of the listed clusters.
Spectrogram apply_input_mask(const Spectrogram& x, const ClusterMap& cm, std::span<const std::size_t> clusters);
/// Zeroes the listed encoder steps.
EncoderStates apply_encoder_mask(const EncoderStates& enc, std::span<const std::size_t> steps);

/// Returns the perturbed copy and the occluded global cluster ids.
std::pair<Spectrogram, std::vector<std::size_t>> occlude_input(const Spectrogram& x, const ClusterMap& cm,
                                                               const PerturbationConfig& cfg, std::size_t trial);
std::pair<EncoderStates, std::vector<std::size_t>> occlude_encoder(const EncoderStates& enc,
                                                                   const PerturbationConfig& cfg, std::size_t trial);

/// One perturbation trial: occluded units and KL per produced token.
struct TrialRecord {
  std::size_t trial = 0;
  std::vector<std::size_t> mask;
  std::vector<double> kl;
};

/// Relevance of every spectrogram cell for every produced token, I x T x F.
struct InputSaliency {
  std::size_t tokens = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;

  InputSaliency() = default;
  InputSaliency(std::size_t i, std::size_t t, std::size_t f) : tokens(i), frames(t), bins(f), values(i * t * f, 0.0) {}

  double& at(std::size_t i, std::size_t t, std::size_t f) { return values[(i * frames + t) * bins + f]; }
  double at(std::size_t i, std::size_t t, std::size_t f) const { return values[(i * frames + t) * bins + f]; }
  /// T x F slice of one token.
  Matrix slice(std::size_t i) const;
  /// Copy keeping only the listed token rows.
  InputSaliency select_tokens(std::span<const std::size_t> rows) const;

  friend bool operator==(const InputSaliency&, const InputSaliency&) = default;
};

/// Relevance of every encoder step for every produced token, I x T'.
struct EncoderSaliency {
  Matrix values;

  friend bool operator==(const EncoderSaliency&, const EncoderSaliency&) = default;
};

/// Runs the input trials and returns their records in trial order.
std::vector<TrialRecord> run_input_trials(const Spectrogram& x, const DecodeTrace& trace, const Model& model,
                                          const ClusterMap& cm, const PerturbationConfig& cfg);
std::vector<TrialRecord> run_encoder_trials(const EncoderStates& enc, const DecodeTrace& trace, const Model& model,
                                            const PerturbationConfig& cfg);

InputSaliency compute_input_saliency(const Spectrogram& x, const DecodeTrace& trace, const Model& model,
                                     const ClusterMap& cm, const PerturbationConfig& cfg);
EncoderSaliency compute_encoder_saliency(const EncoderStates& enc, const DecodeTrace& trace, const Model& model,
                                         const PerturbationConfig& cfg);

enum class TokenNormalization {
  kMinMax,  // rescale each token slice to [0, 1]
  kMax,     // divide each token slice by its maximum
};

InputSaliency normalize_token_dim(const InputSaliency& sm, TokenNormalization mode = TokenNormalization::kMinMax);
EncoderSaliency normalize_token_dim(const EncoderSaliency& sm, TokenNormalization mode = TokenNormalization::kMinMax);
/// Same rule applied to each row of an I x T' map.
Matrix normalize_token_rows(const Matrix& m, TokenNormalization mode = TokenNormalization::kMinMax);

// "XSAL1 I T F" followed by I*T rows of F values; "XSALH1 I T'" followed by I rows.
void write_input_saliency(const InputSaliency& sm, std::ostream& out);
InputSaliency read_input_saliency(std::istream& in);
void write_encoder_saliency(const EncoderSaliency& sm, std::ostream& out);
EncoderSaliency read_encoder_saliency(std::istream& in);

}  // namespace xattn
