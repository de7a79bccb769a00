#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xattn/attention_tensor.hpp"
#include "xattn/numerics.hpp"

namespace xattn {

/// Time-frequency input features, T frames x F bins.
struct Spectrogram {
  Matrix values;

  std::size_t frames() const { return values.rows(); }
  std::size_t bins() const { return values.cols(); }

  friend bool operator==(const Spectrogram&, const Spectrogram&) = default;
};

/// Encoder output H, T' steps x D.
struct EncoderStates {
  Matrix values;

  std::size_t steps() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }

  friend bool operator==(const EncoderStates&, const EncoderStates&) = default;
};

struct ModelConfig {
  std::size_t layers = 2;          // decoder layers
  std::size_t heads = 4;
  std::size_t embed_dim = 64;
  std::size_t head_dim = 16;
  std::size_t subsample = 4;
  std::size_t vocab = 24;
  std::size_t bins = 16;
  std::size_t encoder_layers = 1;
  std::size_t ff_dim = 16;
  std::size_t context_width = 1;   // odd width of encoder local averaging; 1 disables it
  std::size_t max_source_positions = 64;
  std::size_t max_target_positions = 32;
  int bos_id = 0;
  int eos_id = 1;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  std::size_t encoder_steps(std::size_t frames) const { return (frames + subsample - 1) / subsample; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct AttentionWeights {
  std::vector<Matrix> query;  // per head, D x d_k
  std::vector<Matrix> key;    // per head, D x d_k
  std::vector<Matrix> value;  // per head, D x d_k
  Matrix output;              // (H * d_k) x D

  friend bool operator==(const AttentionWeights&, const AttentionWeights&) = default;
};

/// relu(x W1 + b1) W2 + b2
struct FeedForwardWeights {
  Matrix w1;  // D x ff
  Matrix b1;  // 1 x ff
  Matrix w2;  // ff x D
  Matrix b2;  // 1 x D

  friend bool operator==(const FeedForwardWeights&, const FeedForwardWeights&) = default;
};

struct DecoderLayerWeights {
  AttentionWeights self_attention;
  AttentionWeights cross_attention;
  FeedForwardWeights feed_forward;

  friend bool operator==(const DecoderLayerWeights&, const DecoderLayerWeights&) = default;
};

struct ModelWeights {
  Matrix frame_projection;  // (s * F) x D, applied to stacked frames
  Matrix frame_bias;        // 1 x D
  Matrix source_positions;  // max_source_positions x D
  std::vector<FeedForwardWeights> encoder_layers;
  Matrix token_embedding;   // V x D
  Matrix target_positions;  // max_target_positions x D
  std::vector<DecoderLayerWeights> decoder_layers;
  Matrix readout;           // D x V
  Matrix readout_bias;      // 1 x V

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

struct Model {
  ModelConfig config;
  ModelWeights weights;

  /// All-zero weights with shapes matching `config`.
  static Model zeros(const ModelConfig& config);
  /// Throws ShapeError if any weight shape disagrees with the config.
  void check_shapes() const;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Result of greedy decoding. `tokens` starts with bos; `distributions` and
/// `attention` have one row per produced token (tokens[1..]).
struct DecodeTrace {
  std::vector<int> tokens;
  Matrix distributions;
  AttentionTensor attention;
  EncoderStates encoder_states;
  int bos_id = 0;
  int eos_id = 1;

  std::size_t produced() const { return tokens.empty() ? 0 : tokens.size() - 1; }
  bool ended_with_eos() const { return tokens.size() > 1 && tokens.back() == eos_id; }
  /// Produced tokens with bos/eos removed.
  std::vector<int> content_tokens() const;
  /// The decoder inputs that yield `distributions` under teacher forcing.
  std::span<const int> teacher_prefix() const { return {tokens.data(), produced()}; }

  friend bool operator==(const DecodeTrace&, const DecodeTrace&) = default;
};

EncoderStates encode(const Spectrogram& x, const Model& model);

/// Greedy decoding; stops at eos, after max_len tokens, or when target
/// positions run out. max_len = 0 selects the default of 4 * T'.
DecodeTrace decode(const EncoderStates& enc, const Model& model, std::size_t max_len = 0);

/// Teacher-forced scoring: row j is P(. | prefix[0..j], H).
Matrix forward_given_prefix(const EncoderStates& enc, std::span<const int> prefix, const Model& model);

/// Decoder pass that also records cross-attention rows for every prefix position.
struct DecoderPass {
  Matrix distributions;
  AttentionTensor attention;
};
DecoderPass run_decoder(const EncoderStates& enc, std::span<const int> prefix, const Model& model);

// Text formats. Weights: "XAPW1" followed by "@<name> <rows> <cols>" sections.
// Spectrogram: "SPG1 <T> <F>" followed by T rows of F values.
void save_weights(const Model& model, const std::filesystem::path& path);
Model load_weights(const std::filesystem::path& path);
void write_weights(const Model& model, std::ostream& out);
Model read_weights(std::istream& in);

void save_spectrogram(const Spectrogram& x, const std::filesystem::path& path);
Spectrogram load_spectrogram(const std::filesystem::path& path);

/// Shortest representation (at most 17 significant digits) that reads back bit-exactly.
std::string format_double(double v);

}  // namespace xattn
