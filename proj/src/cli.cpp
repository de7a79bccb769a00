#include "xattn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "xattn/errors.hpp"
#include "xattn/text_io.hpp"

namespace xattn::cli {

namespace fs = std::filesystem;

namespace {

// Allowed keys per command, with their flag help text.
using KeyHelp = std::map<std::string, std::string>;

const KeyHelp kGenKeys = {
    {"out", "output dataset directory (default data)"},
    {"count", "number of samples (default 1)"},
    {"frames", "spectrogram frames T (default 160)"},
    {"spans", "aligned output tokens when no alignment is given (default 9)"},
    {"min-span", "minimum frames per random span (default 12)"},
    {"alignment", "explicit spans as begin-end,... (overrides spans)"},
    {"noise", "spectrogram noise level (default 0.05)"},
    {"seed", "dataset seed (default 0)"},
};
const KeyHelp kRunKeys = {
    {"data", "dataset directory written by gen (default data)"},
    {"out", "output directory (default out)"},
    {"seed", "perturbation seed (default 0)"},
    {"workers", "trial worker threads (default 1)"},
    {"trials-input", "input occlusion trials (default 2000)"},
    {"trials-encoder", "encoder occlusion trials (default 2000)"},
    {"p-input", "input occlusion probability (default 0.5)"},
    {"p-encoder", "encoder occlusion probability (default 0.7)"},
    {"agg", "saliency grid pooling: avg2d, 2step or max2d (default max2d)"},
    {"densities", "clusters per time unit, one scale each (default 2,3,4)"},
    {"frames-per-unit", "frames per cluster time unit (default 8)"},
    {"axis", "attention normalization: framewise or tokenwise (default framewise)"},
    {"token-norm", "saliency token normalization: minmax or max (default minmax)"},
    {"estimator", "cell score: conditional or trial-mean (default conditional)"},
    {"sentence-reduce", "deletion ranking reduce: max or mean (default max)"},
    {"heatmaps", "write PGM and SVG heatmaps: 0 or 1 (default 0)"},
    {"max-len", "decode length limit; 0 means 4 x encoder steps (default 0)"},
    {"probs", "sweep-ph encoder probabilities (default 0.1,0.3,0.5,0.7,0.9)"},
};
const KeyHelp kRenderKeys = {
    {"in", "XATT1, XSAL1, XSALH1 or CSV map to render"},
    {"out", "output image (default input path plus extension)"},
    {"format", "pgm or svg (default pgm)"},
    {"token", "token slice of an input saliency (default max over tokens)"},
};

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ',' || ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, v));
  return out;
}

const std::string* find(const Settings& s, const std::string& key) {
  const auto it = s.find(key);
  return it == s.end() ? nullptr : &it->second;
}

void check_keys(const Settings& s, const KeyHelp& allowed, std::string_view command) {
  for (const auto& [key, value] : s) {
    if (key != "config" && !allowed.contains(key)) throw ConfigError(fmt::format("unknown {} setting '{}'", command, key));
  }
}

std::size_t get_size(const Settings& s, const std::string& key, std::size_t fallback) {
  const auto* v = find(s, key);
  return v ? parse_number<std::size_t>(key, *v) : fallback;
}

double get_double(const Settings& s, const std::string& key, double fallback) {
  const auto* v = find(s, key);
  return v ? parse_number<double>(key, *v) : fallback;
}

double get_probability(const Settings& s, const std::string& key, double fallback) {
  const double p = get_double(s, key, fallback);
  if (!(p > 0.0 && p < 1.0)) throw ConfigError(fmt::format("{}: {} is outside (0, 1)", key, p));
  return p;
}

std::vector<double> get_doubles(const Settings& s, const std::string& key, std::vector<double> fallback) {
  const auto* v = find(s, key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_number<double>(key, item));
  if (out.empty()) throw ConfigError(fmt::format("{}: empty list", key));
  return out;
}

bool get_bool(const Settings& s, const std::string& key, bool fallback) {
  const auto* v = find(s, key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, *v));
}

template <class E>
E get_choice(const Settings& s, const std::string& key, E fallback, const std::map<std::string, E>& choices) {
  const auto* v = find(s, key);
  if (!v) return fallback;
  const auto it = choices.find(*v);
  if (it == choices.end()) {
    std::string names;
    for (const auto& [name, value] : choices) names += (names.empty() ? "" : ", ") + name;
    throw ConfigError(fmt::format("{}: '{}' is not one of {}", key, *v, names));
  }
  return it->second;
}

std::vector<FrameSpan> parse_alignment(const std::string& v) {
  std::vector<FrameSpan> spans;
  for (const auto& item : split_list(v)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw ConfigError(fmt::format("alignment: '{}' is not begin-end", item));
    spans.push_back({parse_number<std::size_t>("alignment", item.substr(0, dash)),
                     parse_number<std::size_t>("alignment", item.substr(dash + 1))});
  }
  return spans;
}

std::vector<int> read_reference(const fs::path& path) {
  std::vector<int> ids;
  for (const auto& word : text::split_words(text::read_file(path))) {
    ids.push_back(parse_number<int>(path.string(), word));
  }
  if (ids.empty()) throw ParseError(fmt::format("{}: empty reference", path.string()));
  return ids;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? " " : "") + std::to_string(v[k]);
  return out;
}

template <class Writer>
void write_with(const fs::path& path, Writer&& writer) {
  std::ostringstream os;
  writer(os);
  text::write_file(path, os.str());
}

std::string sample_name(std::size_t id) { return fmt::format("sample_{:03}", id); }

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); }

DeletionCurve mean_curve(const std::vector<DeletionCurve>& curves) {
  DeletionCurve out = curves.front();
  for (std::size_t k = 1; k < curves.size(); ++k)
    for (std::size_t j = 0; j < out.scores.size(); ++j) out.scores[j] += curves[k].scores[j];
  for (double& v : out.scores) v /= static_cast<double>(curves.size());
  return out;
}

void write_heatmaps(const fs::path& dir, const std::string& stem, const Matrix& m) {
  write_with(dir / (stem + ".pgm"), [&](std::ostream& os) { write_pgm(m, os); });
  write_with(dir / (stem + ".svg"), [&](std::ostream& os) { write_svg(m, os); });
}

struct LoadedSample {
  DatasetSample entry;
  Spectrogram x;
  std::vector<int> ref;
};

// Runs `fn` on every sample; failures go to errors.txt. Returns the number of successes.
template <class Fn>
std::size_t for_each_sample(const Dataset& data, const fs::path& out, std::ostream& log, Fn&& fn) {
  std::string errors;
  std::size_t ok = 0;
  for (const auto& entry : data.samples) {
    try {
      LoadedSample s{entry, load_spectrogram(entry.spectrogram), read_reference(entry.reference)};
      fn(s);
      ++ok;
    } catch (const std::exception& e) {
      errors += fmt::format("{}\t{}\n", sample_name(entry.id), e.what());
      log << fmt::format("{}: failed: {}\n", sample_name(entry.id), e.what());
    }
  }
  text::write_file(out / "errors.txt", errors);
  return ok;
}

PipelineOptions sample_options(const RunConfig& cfg, const DatasetSample& entry) {
  PipelineOptions o = cfg.pipeline;
  o.set_seed(sample_seed(cfg.seed, entry.id));
  o.set_workers(cfg.workers);
  return o;
}

}  // namespace

Settings parse_settings(const std::string& text, const std::string& origin) {
  Settings s;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key = value", origin, number));
    const std::string key = normalize_key(trim(std::string_view(line).substr(0, eq)));
    if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", origin, number));
    s[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return s;
}

Settings read_settings(const fs::path& path) {
  std::string text;
  try {
    text = text::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("cannot read config {}: {}", path.string(), e.what()));
  }
  return parse_settings(text, path.string());
}

GenConfig gen_config(const Settings& s) {
  check_keys(s, kGenKeys, "gen");
  GenConfig c;
  if (const auto* v = find(s, "out")) c.out = *v;
  c.count = get_size(s, "count", c.count);
  c.frames = get_size(s, "frames", c.frames);
  c.spans = get_size(s, "spans", c.spans);
  c.min_span = get_size(s, "min-span", c.min_span);
  if (const auto* v = find(s, "alignment")) c.alignment = parse_alignment(*v);
  c.noise = get_double(s, "noise", c.noise);
  c.seed = get_size(s, "seed", c.seed);
  if (c.count == 0) throw ConfigError("count must be at least 1");
  if (c.noise < 0.0) throw ConfigError("noise must be non-negative");
  return c;
}

RunConfig run_config(const Settings& s) {
  check_keys(s, kRunKeys, "run");
  RunConfig c;
  if (const auto* v = find(s, "data")) c.data = *v;
  if (const auto* v = find(s, "out")) c.out = *v;
  c.seed = get_size(s, "seed", c.seed);
  c.workers = get_size(s, "workers", c.workers);
  if (c.workers == 0) throw ConfigError("workers must be at least 1");
  auto& p = c.pipeline;
  p.input.trials = get_size(s, "trials-input", p.input.trials);
  p.encoder.trials = get_size(s, "trials-encoder", p.encoder.trials);
  if (p.input.trials == 0 || p.encoder.trials == 0) throw ConfigError("trial counts must be at least 1");
  p.input.occlusion_prob = get_probability(s, "p-input", p.input.occlusion_prob);
  p.encoder.occlusion_prob = get_probability(s, "p-encoder", p.encoder.occlusion_prob);
  p.pooling = get_choice<GridPooling>(s, "agg", p.pooling,
                                      {{"avg2d", GridPooling::kAvg2d},
                                       {"2step", GridPooling::kMax1dAvg1d},
                                       {"max1d_avg1d", GridPooling::kMax1dAvg1d},
                                       {"max2d", GridPooling::kMax2d}});
  p.densities = get_doubles(s, "densities", p.densities);
  for (double d : p.densities) {
    if (!(d > 0.0)) throw ConfigError(fmt::format("densities: {} is not positive", d));
  }
  p.frames_per_unit = get_size(s, "frames-per-unit", p.frames_per_unit);
  if (p.frames_per_unit == 0) throw ConfigError("frames-per-unit must be at least 1");
  p.axis = get_choice<NormalizationAxis>(s, "axis", p.axis,
                                         {{"framewise", NormalizationAxis::kFramewise},
                                          {"tokenwise", NormalizationAxis::kTokenwise}});
  p.token_norm = get_choice<TokenNormalization>(s, "token-norm", p.token_norm,
                                                {{"minmax", TokenNormalization::kMinMax}, {"max", TokenNormalization::kMax}});
  const auto estimator = get_choice<ScoreAggregation>(
      s, "estimator", p.input.aggregation,
      {{"conditional", ScoreAggregation::kConditionalMean}, {"trial-mean", ScoreAggregation::kTrialMean}});
  p.input.aggregation = estimator;
  p.encoder.aggregation = estimator;
  p.sentence_reduce = get_choice<SentenceReduce>(s, "sentence-reduce", p.sentence_reduce,
                                                 {{"max", SentenceReduce::kMax}, {"mean", SentenceReduce::kMean}});
  p.max_len = get_size(s, "max-len", p.max_len);
  c.heatmaps = get_bool(s, "heatmaps", c.heatmaps);
  c.probs = get_doubles(s, "probs", c.probs);
  for (double q : c.probs) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError(fmt::format("probs: {} is outside (0, 1)", q));
  }
  return c;
}

RenderConfig render_config(const Settings& s) {
  check_keys(s, kRenderKeys, "render");
  RenderConfig c;
  const auto* in = find(s, "in");
  if (!in) throw ConfigError("render needs --in");
  c.in = *in;
  if (const auto* v = find(s, "out")) c.out = *v;
  if (const auto* v = find(s, "format")) c.format = *v;
  if (c.format != "pgm" && c.format != "svg") throw ConfigError(fmt::format("format: '{}' is not pgm or svg", c.format));
  if (find(s, "token")) c.token = get_size(s, "token", 0);
  return c;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL * (static_cast<std::uint64_t>(index) + 1);
}

Dataset read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw ConfigError(fmt::format("no manifest.txt in {}", dir.string()));
  if (text::next_line(in, "manifest") != "XGEN1") throw ParseError("manifest.txt does not start with XGEN1");
  Dataset d;
  std::string line;
  while (std::getline(in, line)) {
    const auto w = text::split_words(line);
    if (w.empty()) continue;
    if (w[0] == "model" && w.size() >= 2) {
      d.weights = dir / w[1];
    } else if (w[0] == "sample" && w.size() >= 5 && w[4].starts_with("seed=")) {
      DatasetSample s;
      s.id = parse_number<std::size_t>("manifest sample id", w[1]);
      s.spectrogram = dir / w[2];
      s.reference = dir / w[3];
      s.seed = parse_number<std::uint64_t>("manifest seed", w[4].substr(5));
      d.samples.push_back(std::move(s));
    } else {
      throw ParseError(fmt::format("manifest.txt: unrecognized line '{}'", line));
    }
  }
  if (d.weights.empty()) throw ParseError("manifest.txt lists no model");
  if (d.samples.empty()) throw ParseError("manifest.txt lists no samples");
  return d;
}

int cmd_gen(const GenConfig& cfg, std::ostream& log) {
  PlantedSpec spec;
  spec.frames = cfg.frames;
  spec.noise_level = cfg.noise;
  spec.seed = cfg.seed;
  try {
    spec.alignment = cfg.alignment.empty() ? random_partition(cfg.frames, cfg.spans, cfg.min_span, cfg.seed)
                                           : cfg.alignment;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const ModelConfig model_cfg = default_planted_config();

  // Build everything in memory first so an infeasible spec writes nothing.
  std::vector<PlantedModel> samples;
  try {
    for (std::size_t k = 0; k < cfg.count; ++k) samples.push_back(sample_planted_input(spec, model_cfg, sample_seed(cfg.seed, k)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  fs::create_directories(cfg.out);
  save_weights(samples.front().model, cfg.out / "model.xapw");
  std::string manifest = "XGEN1\n";
  manifest += fmt::format("model model.xapw seed={} frames={} spans={} noise={}\n", cfg.seed, cfg.frames,
                          spec.alignment.size(), format_double(cfg.noise));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const std::string stem = sample_name(k);
    save_spectrogram(samples[k].input, cfg.out / (stem + ".spg"));
    text::write_file(cfg.out / (stem + ".ref"), join_ints(samples[k].expected_tokens) + "\n");
    manifest += fmt::format("sample {} {}.spg {}.ref seed={}\n", k, stem, stem, sample_seed(cfg.seed, k));
  }
  text::write_file(cfg.out / "manifest.txt", manifest);
  log << fmt::format("wrote {} samples to {}\n", samples.size(), cfg.out.string());
  return kExitOk;
}

int cmd_run(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = read_manifest(cfg.data);
  const Model model = load_weights(data.weights);
  fs::create_directories(cfg.out / "samples");

  std::vector<CorrelationReport> input_reports;
  std::vector<CorrelationReport> encoder_reports;
  std::vector<DeletionCurve> input_curves;
  std::vector<DeletionCurve> encoder_curves;
  std::string summary = "sample,tokens_match,rho_input,rho_encoder,deletion_input,deletion_encoder\n";

  const std::size_t ok = for_each_sample(data, cfg.out, log, [&](const LoadedSample& s) {
    const SampleAnalysis a = analyze_sample(model, s.x, s.ref, sample_options(cfg, s.entry));
    const std::string name = sample_name(s.entry.id);
    const fs::path dir = cfg.out / "samples" / name;
    fs::create_directories(dir);
    write_with(dir / "attention.xatt", [&](std::ostream& os) { write_attention(a.trace.attention, os); });
    write_with(dir / "saliency_input.xsal", [&](std::ostream& os) { write_input_saliency(*a.input_saliency, os); });
    write_with(dir / "saliency_encoder.xsalh", [&](std::ostream& os) { write_encoder_saliency(a.encoder_saliency, os); });
    write_with(dir / "grid_input.csv", [&](std::ostream& os) { text::write_csv(os, a.input_grid); });
    write_with(dir / "grid_encoder.csv", [&](std::ostream& os) { text::write_csv(os, a.encoder_grid); });
    const Matrix attention_map = aggregate(a.trace.attention, all_heads(a.trace.attention));
    write_with(dir / "attention_avg.csv", [&](std::ostream& os) { text::write_csv(os, attention_map); });
    write_with(dir / "report_input.csv", [&](std::ostream& os) { write_report_csv(*a.input_report, os); });
    write_with(dir / "report_encoder.csv", [&](std::ostream& os) { write_report_csv(a.encoder_report, os); });
    write_with(dir / "deletion_input.csv", [&](std::ostream& os) { write_curve_csv(*a.input_deletion, os); });
    write_with(dir / "deletion_encoder.csv", [&](std::ostream& os) { write_curve_csv(*a.encoder_deletion, os); });
    write_with(dir / "tokens.txt", [&](std::ostream& os) { os << join_ints(a.trace.tokens) << '\n'; });
    if (cfg.heatmaps) {
      write_heatmaps(dir, "heatmap_attention", attention_map);
      write_heatmaps(dir, "heatmap_input", a.input_grid);
      write_heatmaps(dir, "heatmap_encoder", a.encoder_grid);
    }
    summary += fmt::format("{},{},{},{},{},{}\n", name, a.trace.content_tokens() == s.ref ? 1 : 0,
                           optional_cell(a.input_report->global_average()),
                           optional_cell(a.encoder_report.global_average()), format_double(a.input_deletion->area()),
                           format_double(a.encoder_deletion->area()));
    input_reports.push_back(*a.input_report);
    encoder_reports.push_back(a.encoder_report);
    input_curves.push_back(*a.input_deletion);
    encoder_curves.push_back(*a.encoder_deletion);
    log << fmt::format("{}: done\n", name);
  });

  text::write_file(cfg.out / "summary.csv", summary);
  if (ok == 0) {
    log << "all samples failed\n";
    return kExitFailure;
  }
  write_with(cfg.out / "report_input.csv", [&](std::ostream& os) { write_report_csv(average_reports(input_reports), os); });
  write_with(cfg.out / "report_encoder.csv",
             [&](std::ostream& os) { write_report_csv(average_reports(encoder_reports), os); });
  write_with(cfg.out / "deletion_input.csv", [&](std::ostream& os) { write_curve_csv(mean_curve(input_curves), os); });
  write_with(cfg.out / "deletion_encoder.csv", [&](std::ostream& os) { write_curve_csv(mean_curve(encoder_curves), os); });
  log << fmt::format("{} of {} samples succeeded\n", ok, data.samples.size());
  return kExitOk;
}

int cmd_sweep_ph(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = read_manifest(cfg.data);
  const Model model = load_weights(data.weights);
  fs::create_directories(cfg.out);

  std::vector<double> probs;
  for (double p : cfg.probs) {
    if (std::find(probs.begin(), probs.end(), p) == probs.end()) probs.push_back(p);
  }
  const std::size_t layers = model.config.layers;
  std::string table = "p_H";
  for (std::size_t l = 0; l < layers; ++l) table += fmt::format(",l={}", l + 1);
  table += ",l-AVG,deletion\n";

  bool any = false;
  for (double p : probs) {
    RunConfig run = cfg;
    run.pipeline.input_saliency = false;
    run.pipeline.encoder.occlusion_prob = p;
    std::vector<CorrelationReport> reports;
    double area = 0.0;
    const std::size_t ok = for_each_sample(data, cfg.out, log, [&](const LoadedSample& s) {
      const SampleAnalysis a = analyze_sample(model, s.x, s.ref, sample_options(run, s.entry));
      reports.push_back(a.encoder_report);
      area += a.encoder_deletion->area();
    });
    if (ok == 0) {
      log << fmt::format("p_H={}: all samples failed\n", format_double(p));
      continue;
    }
    any = true;
    const CorrelationReport r = average_reports(reports);
    table += format_double(p);
    for (std::size_t l = 0; l < layers; ++l) table += "," + optional_cell(r.layer_average(l));
    table += "," + optional_cell(r.global_average()) + "," + format_double(area / static_cast<double>(ok)) + "\n";
    log << fmt::format("p_H={}: {} samples\n", format_double(p), ok);
  }
  text::write_file(cfg.out / "sweep_ph.csv", table);
  return any ? kExitOk : kExitFailure;
}

int cmd_render(const RenderConfig& cfg, std::ostream& log) {
  std::ifstream in(cfg.in);
  if (!in) throw ConfigError(fmt::format("cannot open {}", cfg.in.string()));
  std::string first;
  std::getline(in, first);
  in.seekg(0);
  const std::string tag = first.substr(0, first.find(' '));
  Matrix m;
  if (tag == "XATT1") {
    const AttentionTensor t = read_attention(in);
    m = aggregate(t, all_heads(t));
  } else if (tag == "XSAL1") {
    const InputSaliency sm = read_input_saliency(in);
    if (cfg.token) {
      m = sm.slice(*cfg.token);
    } else {
      m = sm.slice(0);
      for (std::size_t i = 1; i < sm.tokens; ++i) {
        const Matrix s = sm.slice(i);
        for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = std::max(m.data()[k], s.data()[k]);
      }
    }
  } else if (tag == "XSALH1") {
    m = read_encoder_saliency(in).values;
  } else {
    m = text::read_csv(in, cfg.in.string());
  }
  const fs::path out = cfg.out.empty() ? fs::path(cfg.in.string() + "." + cfg.format) : cfg.out;
  write_with(out, [&](std::ostream& os) {
    if (cfg.format == "svg") {
      write_svg(m, os);
    } else {
      write_pgm(m, os);
    }
  });
  log << fmt::format("wrote {}\n", out.string());
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-attention versus saliency analysis toolkit"};
  app.require_subcommand(1);
  Settings flags;
  std::string config_path;

  auto add_keys = [&](CLI::App* sub, const KeyHelp& keys) {
    sub->add_option("--config", config_path, "key=value settings file; flags override it");
    for (const auto& [key, help] : keys) {
      sub->add_option_function<std::string>(
          "--" + key, [&flags, key = key](const std::string& v) { flags[key] = v; }, help);
    }
  };
  auto* gen = app.add_subcommand("gen", "generate a planted-model dataset");
  add_keys(gen, kGenKeys);
  auto* run_cmd = app.add_subcommand("run", "analyze every sample of a dataset");
  add_keys(run_cmd, kRunKeys);
  auto* sweep = app.add_subcommand("sweep-ph", "encoder occlusion probability sweep");
  add_keys(sweep, kRunKeys);
  auto* render = app.add_subcommand("render", "render a map as PGM or SVG");
  add_keys(render, kRenderKeys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    Settings settings = config_path.empty() ? Settings{} : read_settings(config_path);
    for (const auto& [key, value] : flags) settings[key] = value;
    if (gen->parsed()) return cmd_gen(gen_config(settings), err);
    if (run_cmd->parsed()) return cmd_run(run_config(settings), err);
    if (sweep->parsed()) return cmd_sweep_ph(run_config(settings), err);
    return cmd_render(render_config(settings), err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace xattn::cli
