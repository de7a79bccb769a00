#include "xattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "xattn/errors.hpp"

namespace xattn {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model config: " + what); };
  if (layers == 0) fail("layers must be >= 1");
  if (heads == 0) fail("heads must be >= 1");
  if (head_dim == 0) fail("head_dim must be >= 1");
  if (embed_dim != heads * head_dim) {
    fail(fmt::format("embed_dim {} != heads {} * head_dim {}", embed_dim, heads, head_dim));
  }
  if (subsample == 0) fail("subsample must be >= 1");
  if (bins == 0) fail("bins must be >= 1");
  if (context_width == 0 || context_width % 2 == 0) fail("context_width must be odd");
  if (max_source_positions == 0 || max_target_positions == 0) fail("position tables must be non-empty");
  if (bos_id == eos_id) fail("bos_id equals eos_id");
  if (bos_id < 0 || eos_id < 0 || static_cast<std::size_t>(bos_id) >= vocab ||
      static_cast<std::size_t>(eos_id) >= vocab) {
    fail("bos/eos ids must lie in [0, vocab)");
  }
}

namespace {

AttentionWeights zero_attention(const ModelConfig& c) {
  AttentionWeights a;
  for (std::size_t h = 0; h < c.heads; ++h) {
    a.query.emplace_back(c.embed_dim, c.head_dim);
    a.key.emplace_back(c.embed_dim, c.head_dim);
    a.value.emplace_back(c.embed_dim, c.head_dim);
  }
  a.output = Matrix(c.heads * c.head_dim, c.embed_dim);
  return a;
}

FeedForwardWeights zero_feed_forward(const ModelConfig& c) {
  return {Matrix(c.embed_dim, c.ff_dim), Matrix(1, c.ff_dim), Matrix(c.ff_dim, c.embed_dim), Matrix(1, c.embed_dim)};
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(fmt::format("weight '{}' has shape {}, expected ({}x{})", name, m.shape_string(), rows, cols));
  }
}

void check_attention(const AttentionWeights& a, const ModelConfig& c, const std::string& name) {
  if (a.query.size() != c.heads || a.key.size() != c.heads || a.value.size() != c.heads) {
    throw ShapeError(fmt::format("weight '{}' must have {} heads", name, c.heads));
  }
  for (std::size_t h = 0; h < c.heads; ++h) {
    expect_shape(a.query[h], c.embed_dim, c.head_dim, fmt::format("{}.q.{}", name, h));
    expect_shape(a.key[h], c.embed_dim, c.head_dim, fmt::format("{}.k.{}", name, h));
    expect_shape(a.value[h], c.embed_dim, c.head_dim, fmt::format("{}.v.{}", name, h));
  }
  expect_shape(a.output, c.heads * c.head_dim, c.embed_dim, name + ".out");
}

void check_feed_forward(const FeedForwardWeights& f, const ModelConfig& c, const std::string& name) {
  expect_shape(f.w1, c.embed_dim, c.ff_dim, name + ".w1");
  expect_shape(f.b1, 1, c.ff_dim, name + ".b1");
  expect_shape(f.w2, c.ff_dim, c.embed_dim, name + ".w2");
  expect_shape(f.b2, 1, c.embed_dim, name + ".b2");
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias(0, c);
  }
}

void add_in_place(Matrix& a, const Matrix& b) {
  auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t k = 0; k < ad.size(); ++k) ad[k] += bd[k];
}

Matrix feed_forward(const Matrix& x, const FeedForwardWeights& f) {
  Matrix hidden = matmul(x, f.w1);
  add_row_bias(hidden, f.b1);
  for (double& v : hidden.data()) v = std::max(v, 0.0);
  Matrix out = matmul(hidden, f.w2);
  add_row_bias(out, f.b2);
  return out;
}

// Mean over a centered window of `width` steps, truncated at the edges.
Matrix local_average(const Matrix& x, std::size_t width) {
  const std::size_t radius = width / 2;
  Matrix out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const std::size_t lo = t >= radius ? t - radius : 0;
    const std::size_t hi = std::min(x.rows(), t + radius + 1);
    auto dst = out.row(t);
    for (std::size_t u = lo; u < hi; ++u) {
      auto src = x.row(u);
      for (std::size_t c = 0; c < x.cols(); ++c) dst[c] += src[c];
    }
    const double n = static_cast<double>(hi - lo);
    for (double& v : dst) v /= n;
  }
  return out;
}

// Multi-head attention of `queries_from` over `keys_from`. With `causal`, row i
// only sees key rows <= i. Each head's probabilities are written to `probs[h]`.
Matrix multi_head_attention(const Matrix& queries_from, const Matrix& keys_from, const AttentionWeights& w,
                            const ModelConfig& c, bool causal, std::vector<Matrix>* probs) {
  const std::size_t n = queries_from.rows();
  const std::size_t m = keys_from.rows();
  const double scale = std::sqrt(static_cast<double>(c.head_dim));
  Matrix concat(n, c.heads * c.head_dim);
  if (probs) probs->assign(c.heads, Matrix());
  for (std::size_t h = 0; h < c.heads; ++h) {
    const Matrix q = matmul(queries_from, w.query[h]);
    const Matrix k = matmul(keys_from, w.key[h]);
    const Matrix v = matmul(keys_from, w.value[h]);
    Matrix scores(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t visible = causal ? std::min(i + 1, m) : m;
      for (std::size_t j = 0; j < visible; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < c.head_dim; ++d) dot += q(i, d) * k(j, d);
        scores(i, j) = dot;
      }
    }
    Matrix p(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t visible = causal ? std::min(i + 1, m) : m;
      const Matrix row = softmax_rows(scores.block(i, i + 1, 0, visible), scale);
      std::copy(row.data().begin(), row.data().end(), p.row(i).begin());
    }
    const Matrix head_out = matmul(p, v);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < c.head_dim; ++d) concat(i, h * c.head_dim + d) = head_out(i, d);
    if (probs) (*probs)[h] = std::move(p);
  }
  return matmul(concat, w.output);
}

}  // namespace

Model Model::zeros(const ModelConfig& c) {
  c.validate();
  Model model;
  model.config = c;
  auto& w = model.weights;
  w.frame_projection = Matrix(c.subsample * c.bins, c.embed_dim);
  w.frame_bias = Matrix(1, c.embed_dim);
  w.source_positions = Matrix(c.max_source_positions, c.embed_dim);
  for (std::size_t l = 0; l < c.encoder_layers; ++l) w.encoder_layers.push_back(zero_feed_forward(c));
  w.token_embedding = Matrix(c.vocab, c.embed_dim);
  w.target_positions = Matrix(c.max_target_positions, c.embed_dim);
  for (std::size_t l = 0; l < c.layers; ++l) {
    w.decoder_layers.push_back({zero_attention(c), zero_attention(c), zero_feed_forward(c)});
  }
  w.readout = Matrix(c.embed_dim, c.vocab);
  w.readout_bias = Matrix(1, c.vocab);
  return model;
}

void Model::check_shapes() const {
  const auto& c = config;
  const auto& w = weights;
  c.validate();
  expect_shape(w.frame_projection, c.subsample * c.bins, c.embed_dim, "frame_projection");
  expect_shape(w.frame_bias, 1, c.embed_dim, "frame_bias");
  expect_shape(w.source_positions, c.max_source_positions, c.embed_dim, "source_positions");
  if (w.encoder_layers.size() != c.encoder_layers) throw ShapeError("encoder layer count disagrees with config");
  for (std::size_t l = 0; l < c.encoder_layers; ++l) check_feed_forward(w.encoder_layers[l], c, fmt::format("enc.{}.ff", l));
  expect_shape(w.token_embedding, c.vocab, c.embed_dim, "token_embedding");
  expect_shape(w.target_positions, c.max_target_positions, c.embed_dim, "target_positions");
  if (w.decoder_layers.size() != c.layers) throw ShapeError("decoder layer count disagrees with config");
  for (std::size_t l = 0; l < c.layers; ++l) {
    check_attention(w.decoder_layers[l].self_attention, c, fmt::format("dec.{}.self", l));
    check_attention(w.decoder_layers[l].cross_attention, c, fmt::format("dec.{}.cross", l));
    check_feed_forward(w.decoder_layers[l].feed_forward, c, fmt::format("dec.{}.ff", l));
  }
  expect_shape(w.readout, c.embed_dim, c.vocab, "readout");
  expect_shape(w.readout_bias, 1, c.vocab, "readout_bias");
}

std::vector<int> DecodeTrace::content_tokens() const {
  std::vector<int> out;
  for (std::size_t k = 1; k < tokens.size(); ++k) {
    if (tokens[k] != bos_id && tokens[k] != eos_id) out.push_back(tokens[k]);
  }
  return out;
}

EncoderStates encode(const Spectrogram& x, const Model& model) {
  const auto& c = model.config;
  const auto& w = model.weights;
  if (x.bins() != c.bins) {
    throw ShapeError(fmt::format("spectrogram has {} bins, model expects {}", x.bins(), c.bins));
  }
  if (x.frames() == 0) throw ShapeError("spectrogram has no frames");
  const std::size_t steps = c.encoder_steps(x.frames());
  if (steps > c.max_source_positions) {
    throw ShapeError(fmt::format("{} encoder steps exceed the {} source positions", steps, c.max_source_positions));
  }
  // Stride-s frame stacking; the ragged last window is zero-padded.
  Matrix stacked(steps, c.subsample * c.bins);
  for (std::size_t t = 0; t < x.frames(); ++t) {
    const std::size_t step = t / c.subsample;
    const std::size_t slot = t % c.subsample;
    auto src = x.values.row(t);
    std::copy(src.begin(), src.end(), stacked.row(step).begin() + static_cast<std::ptrdiff_t>(slot * c.bins));
  }
  Matrix h = matmul(stacked, w.frame_projection);
  add_row_bias(h, w.frame_bias);
  add_in_place(h, w.source_positions.block(0, steps, 0, c.embed_dim));
  for (const auto& layer : w.encoder_layers) {
    add_in_place(h, feed_forward(h, layer));
    if (c.context_width > 1) h = local_average(h, c.context_width);
  }
  if (!h.all_finite()) throw NonFiniteError("encoder produced non-finite states");
  return {std::move(h)};
}

DecoderPass run_decoder(const EncoderStates& enc, std::span<const int> prefix, const Model& model) {
  const auto& c = model.config;
  const auto& w = model.weights;
  if (prefix.empty()) throw std::invalid_argument("decoder prefix is empty");
  if (enc.dim() != c.embed_dim) {
    throw ShapeError(fmt::format("encoder states have dim {}, model expects {}", enc.dim(), c.embed_dim));
  }
  if (prefix.size() > c.max_target_positions) {
    throw std::invalid_argument(
        fmt::format("prefix length {} exceeds {} target positions", prefix.size(), c.max_target_positions));
  }
  const std::size_t n = prefix.size();
  Matrix b(n, c.embed_dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (prefix[i] < 0 || static_cast<std::size_t>(prefix[i]) >= c.vocab) {
      throw std::invalid_argument(fmt::format("token id {} at position {} outside vocabulary", prefix[i], i));
    }
    auto dst = b.row(i);
    auto tok = w.token_embedding.row(static_cast<std::size_t>(prefix[i]));
    auto pos = w.target_positions.row(i);
    for (std::size_t d = 0; d < c.embed_dim; ++d) dst[d] = tok[d] + pos[d];
  }

  DecoderPass pass;
  pass.attention = AttentionTensor(c.layers, c.heads, n, enc.steps());
  std::vector<Matrix> probs;
  for (std::size_t l = 0; l < c.layers; ++l) {
    const auto& layer = w.decoder_layers[l];
    add_in_place(b, multi_head_attention(b, b, layer.self_attention, c, /*causal=*/true, nullptr));
    add_in_place(b, multi_head_attention(b, enc.values, layer.cross_attention, c, /*causal=*/false, &probs));
    for (std::size_t h = 0; h < c.heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        auto src = probs[h].row(i);
        std::copy(src.begin(), src.end(), pass.attention.row(l, h, i).begin());
      }
    add_in_place(b, feed_forward(b, layer.feed_forward));
    if (!b.all_finite()) {
      for (std::size_t i = 0; i < n; ++i) {
        for (double v : b.row(i)) {
          if (!std::isfinite(v)) {
            throw NonFiniteError(fmt::format("non-finite decoder state at step {}, layer {}", i, l));
          }
        }
      }
    }
  }
  Matrix logits = matmul(b, w.readout);
  add_row_bias(logits, w.readout_bias);
  if (!logits.all_finite()) throw NonFiniteError("non-finite logits at readout");
  pass.distributions = softmax_rows(logits, 1.0);
  return pass;
}

Matrix forward_given_prefix(const EncoderStates& enc, std::span<const int> prefix, const Model& model) {
  return run_decoder(enc, prefix, model).distributions;
}

DecodeTrace decode(const EncoderStates& enc, const Model& model, std::size_t max_len) {
  const auto& c = model.config;
  if (max_len == 0) max_len = 4 * enc.steps();
  DecodeTrace trace;
  trace.bos_id = c.bos_id;
  trace.eos_id = c.eos_id;
  trace.encoder_states = enc;
  trace.tokens.push_back(c.bos_id);

  std::vector<std::vector<double>> dists;
  std::vector<std::vector<double>> att_rows;  // one per step, L*H*T' values
  while (trace.produced() < max_len && trace.tokens.size() <= c.max_target_positions) {
    const DecoderPass pass = run_decoder(enc, trace.tokens, model);
    const std::size_t last = trace.tokens.size() - 1;
    auto dist = pass.distributions.row(last);
    const auto best = std::max_element(dist.begin(), dist.end());  // first maximum wins ties
    dists.emplace_back(dist.begin(), dist.end());
    std::vector<double> att;
    att.reserve(c.layers * c.heads * enc.steps());
    for (std::size_t l = 0; l < c.layers; ++l)
      for (std::size_t h = 0; h < c.heads; ++h) {
        auto row = pass.attention.row(l, h, last);
        att.insert(att.end(), row.begin(), row.end());
      }
    att_rows.push_back(std::move(att));
    const int token = static_cast<int>(best - dist.begin());
    trace.tokens.push_back(token);
    if (token == c.eos_id) break;
  }

  const std::size_t produced = dists.size();
  trace.distributions = Matrix(produced, c.vocab);
  trace.attention = AttentionTensor(c.layers, c.heads, produced, enc.steps());
  for (std::size_t i = 0; i < produced; ++i) {
    std::copy(dists[i].begin(), dists[i].end(), trace.distributions.row(i).begin());
    std::size_t k = 0;
    for (std::size_t l = 0; l < c.layers; ++l)
      for (std::size_t h = 0; h < c.heads; ++h)
        for (std::size_t t = 0; t < enc.steps(); ++t) trace.attention.at(l, h, i, t) = att_rows[i][k++];
  }
  return trace;
}

}  // namespace xattn
