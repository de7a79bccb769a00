#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "xattn/errors.hpp"
#include "xattn/model.hpp"
#include "xattn/text_io.hpp"

namespace xattn {
namespace {

constexpr std::string_view kWeightsMagic = "XAPW1";
constexpr std::string_view kSpectrogramMagic = "SPG1";
constexpr std::size_t kConfigFields = 14;

template <class M>
using Sections = std::vector<std::pair<std::string, M*>>;

template <class M, class A>
void collect_attention(Sections<M>& out, A& a, const std::string& name) {
  for (std::size_t h = 0; h < a.query.size(); ++h) out.emplace_back(fmt::format("{}.q.{}", name, h), &a.query[h]);
  for (std::size_t h = 0; h < a.key.size(); ++h) out.emplace_back(fmt::format("{}.k.{}", name, h), &a.key[h]);
  for (std::size_t h = 0; h < a.value.size(); ++h) out.emplace_back(fmt::format("{}.v.{}", name, h), &a.value[h]);
  out.emplace_back(name + ".out", &a.output);
}

template <class M, class F>
void collect_feed_forward(Sections<M>& out, F& f, const std::string& name) {
  out.emplace_back(name + ".w1", &f.w1);
  out.emplace_back(name + ".b1", &f.b1);
  out.emplace_back(name + ".w2", &f.w2);
  out.emplace_back(name + ".b2", &f.b2);
}

// Every weight matrix with its section name, in file order. M is Matrix or const Matrix.
template <class M, class W>
Sections<M> collect(W& w) {
  Sections<M> s;
  s.emplace_back("frame_projection", &w.frame_projection);
  s.emplace_back("frame_bias", &w.frame_bias);
  s.emplace_back("source_positions", &w.source_positions);
  for (std::size_t l = 0; l < w.encoder_layers.size(); ++l) {
    collect_feed_forward(s, w.encoder_layers[l], fmt::format("enc.{}.ff", l));
  }
  s.emplace_back("token_embedding", &w.token_embedding);
  s.emplace_back("target_positions", &w.target_positions);
  for (std::size_t l = 0; l < w.decoder_layers.size(); ++l) {
    collect_attention(s, w.decoder_layers[l].self_attention, fmt::format("dec.{}.self", l));
    collect_attention(s, w.decoder_layers[l].cross_attention, fmt::format("dec.{}.cross", l));
    collect_feed_forward(s, w.decoder_layers[l].feed_forward, fmt::format("dec.{}.ff", l));
  }
  s.emplace_back("readout", &w.readout);
  s.emplace_back("readout_bias", &w.readout_bias);
  return s;
}

Matrix config_row(const ModelConfig& c) {
  return Matrix(1, kConfigFields,
                {double(c.layers), double(c.heads), double(c.embed_dim), double(c.head_dim), double(c.subsample),
                 double(c.vocab), double(c.bins), double(c.encoder_layers), double(c.ff_dim), double(c.context_width),
                 double(c.max_source_positions), double(c.max_target_positions), double(c.bos_id),
                 double(c.eos_id)});
}

ModelConfig config_from_row(const Matrix& m) {
  for (double v : m.data()) {
    if (v < 0 || v != static_cast<double>(static_cast<long long>(v))) {
      throw ParseError(fmt::format("section 'config': value {} is not a non-negative integer", v));
    }
  }
  auto u = [&](std::size_t k) { return static_cast<std::size_t>(m(0, k)); };
  ModelConfig c;
  c.layers = u(0);
  c.heads = u(1);
  c.embed_dim = u(2);
  c.head_dim = u(3);
  c.subsample = u(4);
  c.vocab = u(5);
  c.bins = u(6);
  c.encoder_layers = u(7);
  c.ff_dim = u(8);
  c.context_width = u(9);
  c.max_source_positions = u(10);
  c.max_target_positions = u(11);
  c.bos_id = static_cast<int>(u(12));
  c.eos_id = static_cast<int>(u(13));
  return c;
}

struct RawSection {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix values;
};

std::map<std::string, RawSection> read_sections(std::istream& in) {
  std::map<std::string, RawSection> sections;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto words = text::split_words(line);
    if (words.size() != 3 || words[0].size() < 2 || words[0][0] != '@') {
      throw ParseError(fmt::format("expected section header '@<name> <rows> <cols>', got '{}'", line));
    }
    const std::string name = words[0].substr(1);
    RawSection raw;
    try {
      raw.rows = std::stoul(words[1]);
      raw.cols = std::stoul(words[2]);
    } catch (const std::exception&) {
      throw ParseError(fmt::format("section '{}': bad shape '{} {}'", name, words[1], words[2]));
    }
    if (sections.count(name)) throw ParseError(fmt::format("duplicate section '{}'", name));
    // A row whose length disagrees with the header is a shape error; a missing row is a parse error.
    raw.values = Matrix(raw.rows, raw.cols);
    const std::string context = fmt::format("section '{}'", name);
    for (std::size_t r = 0; r < raw.rows; ++r) {
      const auto values = text::parse_doubles(text::next_line(in, context), context);
      if (values.size() != raw.cols) {
        throw ShapeError(fmt::format("section '{}' declares {} columns but row {} has {}", name, raw.cols, r, values.size()));
      }
      std::copy(values.begin(), values.end(), raw.values.row(r).begin());
    }
    sections.emplace(name, std::move(raw));
  }
  return sections;
}

}  // namespace

void write_weights(const Model& model, std::ostream& out) {
  model.check_shapes();
  out << kWeightsMagic << '\n';
  out << "@config 1 " << kConfigFields << '\n';
  text::write_rows(out, config_row(model.config));
  for (const auto& [name, m] : collect<const Matrix>(model.weights)) {
    out << '@' << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
    text::write_rows(out, *m);
  }
}

Model read_weights(std::istream& in) {
  const std::string magic = text::next_line(in, "weights header");
  if (magic != kWeightsMagic) throw ParseError(fmt::format("not a weights file: header '{}'", magic));
  auto sections = read_sections(in);

  auto config_it = sections.find("config");
  if (config_it == sections.end()) throw ParseError("missing section 'config'");
  if (config_it->second.rows != 1 || config_it->second.cols != kConfigFields) {
    throw ShapeError(fmt::format("section 'config' has shape ({}x{}), expected (1x{})", config_it->second.rows,
                                 config_it->second.cols, kConfigFields));
  }
  Model model = Model::zeros(config_from_row(config_it->second.values));
  sections.erase(config_it);

  for (auto& [name, slot] : collect<Matrix>(model.weights)) {
    auto it = sections.find(name);
    if (it == sections.end()) throw ParseError(fmt::format("missing section '{}'", name));
    if (it->second.rows != slot->rows() || it->second.cols != slot->cols()) {
      throw ShapeError(fmt::format("section '{}' has shape ({}x{}), expected {}", name, it->second.rows,
                                   it->second.cols, slot->shape_string()));
    }
    *slot = std::move(it->second.values);
    sections.erase(it);
  }
  if (!sections.empty()) throw ParseError(fmt::format("unexpected section '{}'", sections.begin()->first));
  return model;
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  std::ostringstream out;
  write_weights(model, out);
  text::write_file(path, out.str());
}

Model load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open weights file '{}'", path.string()));
  return read_weights(in);
}

void save_spectrogram(const Spectrogram& x, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kSpectrogramMagic << ' ' << x.frames() << ' ' << x.bins() << '\n';
  text::write_rows(out, x.values);
  text::write_file(path, out.str());
}

Spectrogram load_spectrogram(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open spectrogram '{}'", path.string()));
  const auto header = text::split_words(text::next_line(in, "spectrogram header"));
  if (header.size() != 3 || header[0] != kSpectrogramMagic) {
    throw ParseError(fmt::format("'{}' is not an SPG1 spectrogram", path.string()));
  }
  std::size_t frames = 0;
  std::size_t bins = 0;
  try {
    frames = std::stoul(header[1]);
    bins = std::stoul(header[2]);
  } catch (const std::exception&) {
    throw ParseError(fmt::format("'{}': bad spectrogram shape", path.string()));
  }
  if (frames == 0 || bins == 0) throw ParseError(fmt::format("'{}': empty spectrogram", path.string()));
  Spectrogram x{text::read_rows(in, frames, bins, path.string())};
  if (!x.values.all_finite()) throw ParseError(fmt::format("'{}': non-finite values", path.string()));
  return x;
}

}  // namespace xattn
