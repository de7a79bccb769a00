#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "xattn/attention.hpp"
#include "xattn/errors.hpp"
#include "xattn/model.hpp"
#include "xattn/planted.hpp"

using namespace xattn;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.embed_dim = 8;
  c.head_dim = 4;
  c.bins = 4;
  c.vocab = 6;
  c.ff_dim = 4;
  return c;
}

Model random_model(const ModelConfig& c, std::uint64_t seed) {
  Model m = Model::zeros(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  auto fill = [&](Matrix& x) {
    for (double& v : x.data()) v = n(rng);
  };
  fill(m.weights.frame_projection);
  fill(m.weights.source_positions);
  fill(m.weights.token_embedding);
  fill(m.weights.target_positions);
  fill(m.weights.readout);
  for (auto& l : m.weights.decoder_layers) {
    for (auto* a : {&l.self_attention, &l.cross_attention}) {
      for (auto& q : a->query) fill(q);
      for (auto& k : a->key) fill(k);
      for (auto& v : a->value) fill(v);
      fill(a->output);
    }
  }
  return m;
}

Spectrogram random_input(std::size_t frames, std::size_t bins, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {support::to_matrix(oracle::random_grid(rng, frames, bins))};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("xattn_test_" + name);
}

}  // namespace

TEST(Encode, SubsamplingCeiling) {
  ModelConfig c = tiny_config();
  const Model m = random_model(c, 1);
  EXPECT_EQ(encode(random_input(8, 4, 2), m).steps(), 2u);
  EXPECT_EQ(encode(random_input(10, 4, 2), m).steps(), 3u);
  for (std::size_t t = 1; t <= 40; ++t) EXPECT_EQ(encode(random_input(t, 4, t), m).steps(), (t + 3) / 4);
}

TEST(Encode, ConstantInputGivesConstantRows) {
  ModelConfig c = tiny_config();
  Model m = Model::zeros(c);
  for (std::size_t j = 0; j < c.subsample; ++j)
    for (std::size_t f = 0; f < c.bins; ++f) m.weights.frame_projection(j * c.bins + f, f) = 1.0;
  const auto enc = encode(Spectrogram{Matrix(12, 4, 0.7)}, m);
  for (std::size_t t = 1; t < enc.steps(); ++t) EXPECT_EQ(enc.values.block(t, t + 1, 0, c.embed_dim), enc.values.block(0, 1, 0, c.embed_dim));
}

TEST(Encode, BinMismatchThrows) {
  const Model m = random_model(tiny_config(), 1);
  EXPECT_THROW(encode(random_input(8, 5, 1), m), ShapeError);
}

TEST(Decode, MaxLenOneAndDeterminism) {
  const Model m = random_model(tiny_config(), 3);
  const auto enc = encode(random_input(16, 4, 4), m);
  const auto one = decode(enc, m, 1);
  EXPECT_EQ(one.produced(), 1u);
  EXPECT_EQ(one.tokens.front(), m.config.bos_id);
  EXPECT_EQ(decode(enc, m), decode(enc, m));
}

TEST(Decode, AttentionRowsSumToOne) {
  const Model m = random_model(tiny_config(), 5);
  const auto trace = decode(encode(random_input(16, 4, 6), m), m, 6);
  const auto& a = trace.attention;
  for (std::size_t l = 0; l < a.layers(); ++l)
    for (std::size_t h = 0; h < a.heads(); ++h)
      for (std::size_t i = 0; i < a.out_len(); ++i) {
        double s = 0;
        for (double v : a.row(l, h, i)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
  for (std::size_t i = 0; i < trace.distributions.rows(); ++i) {
    double s = 0;
    for (double v : trace.distributions.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Decode, NonFiniteLogitsNameStepAndLayer) {
  Model m = random_model(tiny_config(), 7);
  m.weights.decoder_layers[0].cross_attention.output(0, 0) = NAN;
  const auto enc = encode(random_input(8, 4, 1), m);
  try {
    decode(enc, m, 3);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step"), std::string::npos);
    EXPECT_NE(msg.find("layer"), std::string::npos);
  }
}

TEST(ForwardGivenPrefix, ReproducesDecodeDistributions) {
  const Model m = random_model(tiny_config(), 8);
  const auto enc = encode(random_input(20, 4, 9), m);
  const auto trace = decode(enc, m, 5);
  const Matrix d = forward_given_prefix(enc, trace.teacher_prefix(), m);
  ASSERT_EQ(d.rows(), trace.distributions.rows());
  for (std::size_t k = 0; k < d.size(); ++k) EXPECT_NEAR(d.data()[k], trace.distributions.data()[k], 1e-12);
}

TEST(ForwardGivenPrefix, ZeroedEncoderIgnoresAudio) {
  const Model m = random_model(tiny_config(), 10);
  const auto a = encode(random_input(12, 4, 1), m);
  const auto b = encode(random_input(12, 4, 2), m);
  const std::vector<int> prefix{0, 3, 4};
  const EncoderStates za{Matrix(a.steps(), a.dim())};
  const EncoderStates zb{Matrix(b.steps(), b.dim())};
  EXPECT_EQ(forward_given_prefix(za, prefix, m), forward_given_prefix(zb, prefix, m));
  EXPECT_THROW(forward_given_prefix(za, std::vector<int>{}, m), std::invalid_argument);
}

TEST(Planted, NoiseFreeDecodeReproducesTokens) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pm = support::even_planted(96, 6, 0.0, seed);
    const auto trace = decode(encode(pm.input, pm.model), pm.model);
    EXPECT_EQ(trace.content_tokens(), pm.expected_tokens);
    EXPECT_TRUE(trace.ended_with_eos());
  }
}

TEST(Planted, FinalLayerAttentionPeaksInsideSpan) {
  PlantedSpec spec;
  spec.frames = 120;
  spec.seed = 3;
  spec.alignment = random_partition(120, 7, 8, 3);
  const auto pm = build_planted_model(spec, ModelConfig{});
  const auto trace = decode(encode(pm.input, pm.model), pm.model);
  const Matrix avg = aggregate(trace.attention, layer_subset(trace.attention, pm.model.config.layers - 1));
  for (std::size_t i = 0; i < spec.alignment.size(); ++i) {
    const auto row = avg.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const auto image = encoder_image(spec.alignment[i], 4, 120);
    EXPECT_NE(std::find(image.begin(), image.end(), best), image.end()) << "token " << i;
  }
}

TEST(Planted, SingleTokenPlant) {
  PlantedSpec spec;
  spec.frames = 40;
  spec.alignment = {{12, 24}};
  const auto pm = build_planted_model(spec, ModelConfig{});
  const auto trace = decode(encode(pm.input, pm.model), pm.model);
  const Matrix avg = aggregate(trace.attention, layer_subset(trace.attention, 1));
  const Matrix row = strip_sentinels(avg, trace);
  ASSERT_EQ(row.rows(), 1u);
  EXPECT_EQ(row.cols(), 10u);
  const auto r = row.row(0);
  const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  EXPECT_GE(best, 3u);
  EXPECT_LT(best, 6u);
}

TEST(Planted, SeedsChangeNoiseNotTokens) {
  PlantedSpec spec;
  spec.frames = 96;
  spec.noise_level = 0.05;
  spec.alignment = random_partition(96, 6, 12, 11);
  spec.tokens = {3, 4, 5, 6, 7, 8};
  const auto a = sample_planted_input(spec, ModelConfig{}, 1);
  const auto b = sample_planted_input(spec, ModelConfig{}, 2);
  EXPECT_NE(a.input, b.input);
  EXPECT_EQ(a.model, b.model);
  for (const auto* pm : {&a, &b}) {
    EXPECT_EQ(decode(encode(pm->input, pm->model), pm->model).content_tokens(), spec.tokens);
  }
}

TEST(Planted, ZeroingSpanChangesItsToken) {
  const auto pm = support::even_planted(96, 6, 0.0, 4);
  const auto trace = decode(encode(pm.input, pm.model), pm.model);
  for (std::size_t i = 0; i < 6; ++i) {
    Spectrogram x = pm.input;
    for (std::size_t t = i * 16; t < (i + 1) * 16; ++t)
      for (double& v : x.values.row(t)) v = 0.0;
    const Matrix d = forward_given_prefix(encode(x, pm.model), trace.teacher_prefix(), pm.model);
    const auto row = d.row(i);
    const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
    EXPECT_NE(arg, trace.tokens[i + 1]) << "token " << i;
    for (std::size_t j = 0; j < 6; ++j) {
      if (j == i) continue;
      const auto other = d.row(j);
      EXPECT_EQ(std::max_element(other.begin(), other.end()) - other.begin(), trace.tokens[j + 1]);
    }
  }
}

TEST(Planted, InfeasibleSpansThrow) {
  PlantedSpec spec;
  spec.frames = 40;
  spec.alignment = {{0, 3}};
  EXPECT_THROW(build_planted_model(spec, ModelConfig{}), std::invalid_argument);
  spec.alignment = {{0, 12}, {8, 20}};
  EXPECT_THROW(build_planted_model(spec, ModelConfig{}), std::invalid_argument);
  spec.alignment = {{30, 48}};
  EXPECT_THROW(build_planted_model(spec, ModelConfig{}), std::invalid_argument);
}

TEST(Planted, RandomPartitionCoversFrames) {
  const auto spans = random_partition(160, 9, 12, 5);
  ASSERT_EQ(spans.size(), 9u);
  EXPECT_EQ(spans.front().begin, 0u);
  EXPECT_EQ(spans.back().end, 160u);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    EXPECT_GE(spans[i].length(), 12u);
    if (i) EXPECT_EQ(spans[i].begin, spans[i - 1].end);
  }
}

TEST(WeightsIo, RoundTripIsBitExact) {
  const auto pm = support::even_planted(64, 4, 0.0, 2, 3);
  std::stringstream ss;
  write_weights(pm.model, ss);
  EXPECT_EQ(read_weights(ss), pm.model);
  const auto path = temp_path("weights.xapw");
  save_weights(pm.model, path);
  EXPECT_EQ(load_weights(path), pm.model);
  std::filesystem::remove(path);
}

TEST(WeightsIo, TruncatedFileNamesMissingSection) {
  const Model m = random_model(tiny_config(), 1);
  std::stringstream ss;
  write_weights(m, ss);
  const std::string full = ss.str();
  const auto cut = full.find("@readout ");
  ASSERT_NE(cut, std::string::npos);
  std::stringstream truncated(full.substr(0, cut));
  try {
    read_weights(truncated);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("readout"), std::string::npos);
  }
}

TEST(WeightsIo, MismatchedShapeHeaderThrows) {
  const Model m = random_model(tiny_config(), 1);
  std::stringstream ss;
  write_weights(m, ss);
  std::string text = ss.str();
  const auto pos = text.find("@frame_bias 1 8");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 15, "@frame_bias 1 9");
  std::stringstream bad(text);
  EXPECT_THROW(read_weights(bad), ShapeError);
}

TEST(SpectrogramIo, RoundTrip) {
  const auto x = random_input(7, 3, 4);
  const auto path = temp_path("x.spg");
  save_spectrogram(x, path);
  EXPECT_EQ(load_spectrogram(path), x);
  std::filesystem::remove(path);
}
