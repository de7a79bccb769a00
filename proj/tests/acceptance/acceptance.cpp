// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "support.hpp"
#include "xattn/attention.hpp"
#include "xattn/attribution.hpp"
#include "xattn/cli.hpp"
#include "xattn/metrics.hpp"
#include "xattn/pipeline.hpp"
#include "xattn/planted.hpp"
#include "xattn/text_io.hpp"

using namespace xattn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run_criterion(int id, const std::string& name, const std::function<Outcome()>& fn) {
  try {
    report(id, name, fn());
  } catch (const std::exception& e) {
    report(id, name, {false, fmt::format("exception: {}", e.what())});
  }
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  constexpr int kInstances = 1000;
  constexpr double kTol = 1e-10;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> dim(1, 9);
  std::map<std::string, double> worst;
  auto track = [&](const std::string& op, double a, double b) { worst[op] = std::max(worst[op], oracle::rel_err(a, b)); };

  for (int k = 0; k < kInstances; ++k) {
    const std::size_t n = dim(rng);
    const std::size_t m = dim(rng);
    const std::size_t p = dim(rng);

    const auto a = oracle::random_grid(rng, n, m, -5, 5);
    const auto b = oracle::random_grid(rng, m, p, -5, 5);
    const Matrix c = matmul(support::to_matrix(a), support::to_matrix(b));
    const auto co = oracle::matmul(a, b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) track("matmul", c(i, j), co[i][j]);

    const double scale = 0.5 + 3.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto logits = oracle::random_grid(rng, n, m + 1, -30, 30);
    const Matrix s = softmax_rows(support::to_matrix(logits), scale);
    for (std::size_t i = 0; i < n; ++i) {
      const auto so = oracle::softmax(logits[i], scale);
      for (std::size_t j = 0; j <= m; ++j) track("softmax_rows", s(i, j), so[j]);
    }

    auto pq = oracle::random_grid(rng, 2, m + 1, 0, 1);
    for (auto& row : pq) {
      double z = 0;
      for (double v : row) z += v;
      for (double& v : row) v /= z;
    }
    track("kl_divergence", kl_divergence(pq[0], pq[1]), oracle::kl(pq[0], pq[1], kKlSmoothing));

    const auto u = oracle::random_grid(rng, 1, n * m + 1, -3, 3)[0];
    const auto v = oracle::random_grid(rng, 1, n * m + 1, -3, 3)[0];
    track("pearson", pearson(u, v), oracle::pearson(u, v));

    const auto block = oracle::random_grid(rng, n, m, -2, 2);
    const Matrix bm = support::to_matrix(block);
    track("pool2d max", pool2d(bm, PoolMode::kMax), oracle::max_all(block));
    track("pool2d avg", pool2d(bm, PoolMode::kAvg), oracle::mean_all(block));
    track("pool_2step", pool_2step(bm), oracle::two_step(block));

    const auto src = oracle::random_grid(rng, 1, n, -1, 1)[0];
    const std::size_t target = n + dim(rng) * dim(rng);
    const auto up = nn_upsample(src, target);
    const auto uo = oracle::upsample(src, target);
    for (std::size_t t = 0; t < target; ++t) track("nn_upsample", up[t], uo[t]);
  }
  const double elapsed = seconds_since(t0);
  double max_err = 0;
  std::string worst_op;
  for (const auto& [op, e] : worst) {
    if (e >= max_err) {
      max_err = e;
      worst_op = op;
    }
  }
  const bool pass = max_err <= kTol && elapsed < 10.0 && worst.size() == 8;
  return {pass, fmt::format("{} ops x {} instances, max rel err {:.2e} ({}), {:.2f} s (limits {:.0e}, 10 s)",
                            worst.size(), kInstances, max_err, worst_op, elapsed, kTol)};
}

// ---------------------------------------------------------------------------

Outcome estimator_correctness() {
  const auto t0 = Clock::now();
  PlantedSpec spec;
  spec.frames = 32;
  spec.noise_level = 0.0;
  spec.seed = 17;
  spec.alignment = {{0, 16}, {16, 32}};
  const PlantedModel pm = build_planted_model(spec, default_planted_config());
  const EncoderStates enc = encode(pm.input, pm.model);
  const DecodeTrace trace = decode(enc, pm.model);
  const std::size_t tokens = trace.produced();

  const ClusterMap cm = build_clusters(pm.input, std::vector<double>{1.0}, 3);
  const std::size_t k = cm.total_clusters();
  if (k != 4 || tokens > 3) return {false, fmt::format("instance has {} clusters and {} tokens", k, tokens)};

  PerturbationConfig cfg;
  cfg.occlusion_prob = 0.5;
  cfg.trials = 50000;
  cfg.seed = 99;
  const InputSaliency mc = compute_input_saliency(pm.input, trace, pm.model, cm, cfg);

  const auto exact = oracle::exhaustive_conditional_mean(k, tokens, cfg.occlusion_prob, [&](const std::vector<bool>& mask) {
    std::vector<std::size_t> ids;
    for (std::size_t u = 0; u < k; ++u) {
      if (mask[u]) ids.push_back(u);
    }
    const Matrix d = forward_given_prefix(encode(apply_input_mask(pm.input, cm, ids), pm.model), trace.teacher_prefix(),
                                          pm.model);
    std::vector<double> kl(tokens);
    for (std::size_t i = 0; i < tokens; ++i) kl[i] = kl_divergence(trace.distributions.row(i), d.row(i));
    return kl;
  });

  double lo = exact[0][0];
  double hi = exact[0][0];
  double worst = 0;
  for (std::size_t i = 0; i < tokens; ++i)
    for (std::size_t t = 0; t < cm.frames; ++t)
      for (std::size_t f = 0; f < cm.bins; ++f) {
        const double e = exact[i][cm.cluster_at(0, t, f)];
        lo = std::min(lo, e);
        hi = std::max(hi, e);
        worst = std::max(worst, std::abs(mc.at(i, t, f) - e));
      }
  const double range = hi - lo;
  const double elapsed = seconds_since(t0);
  const bool pass = range > 0 && worst <= 0.05 * range && elapsed < 60.0;
  return {pass, fmt::format("{} clusters, {} tokens, N = {}: max |MC - exact| = {:.4g} = {:.2f}% of range {:.4g}, {:.1f} s",
                            k, tokens, cfg.trials, worst, 100.0 * worst / range, range, elapsed)};
}

// ---------------------------------------------------------------------------

struct PlantedRun {
  std::vector<double> rho_encoder;
  std::vector<double> rho_input;
  std::vector<double> shifted_encoder;
  std::vector<double> shifted_input;
  int deletion_input_wins = 0;
  int deletion_encoder_wins = 0;
  bool endpoints_ok = true;
  std::string endpoint_note;
  std::size_t mismatched_decodes = 0;
  double seconds = 0;
};

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? NAN : s / static_cast<double>(v.size());
}

double mean_abs(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return v.empty() ? NAN : s / static_cast<double>(v.size());
}

constexpr std::size_t kPlantedModels = 20;
constexpr std::size_t kPlantedFrames = 160;
constexpr std::size_t kPlantedSpans = 9;
constexpr double kPlantedNoise = 0.05;

const PlantedRun& planted_run() {
  static const PlantedRun run = [] {
    PlantedRun r;
    const auto t0 = Clock::now();
    for (std::size_t m = 0; m < kPlantedModels; ++m) {
      PlantedSpec spec;
      spec.frames = kPlantedFrames;
      spec.noise_level = kPlantedNoise;
      spec.seed = 1000 + m;
      spec.alignment = random_partition(kPlantedFrames, kPlantedSpans, 12, spec.seed);
      const PlantedModel pm = build_planted_model(spec, default_planted_config());

      PipelineOptions o;
      o.input.trials = 2000;
      o.encoder.trials = 2000;
      o.set_seed(m);
      const SampleAnalysis a = analyze_sample(pm.model, pm.input, pm.expected_tokens, o);
      if (a.trace.content_tokens() != pm.expected_tokens) ++r.mismatched_decodes;

      const std::size_t last = pm.model.config.layers - 1;
      r.rho_encoder.push_back(a.encoder_report.layer_average(last).value_or(NAN));
      r.rho_input.push_back(a.input_report->layer_average(last).value_or(NAN));
      const std::size_t shift = a.encoder_grid.cols() / 2;
      const auto se = correlation_report(a.trace.attention, cyclic_shift_columns(a.encoder_grid, shift), a.trace);
      const auto si = correlation_report(a.trace.attention, cyclic_shift_columns(a.input_grid, shift), a.trace);
      r.shifted_encoder.push_back(se.layer_average(last).value_or(NAN));
      r.shifted_input.push_back(si.layer_average(last).value_or(NAN));

      // Reversed ranking: least salient first.
      auto reversed = [](std::vector<double> v) {
        for (double& x : v) x = -x;
        return v;
      };
      const auto scores_x = sentence_saliency(strip_sentinels(a.input_grid, a.trace));
      const auto scores_h = sentence_saliency(strip_sentinels(a.encoder_grid, a.trace));
      const auto rev_x = deletion_curve_input(pm.input, reversed(scores_x), pm.model, pm.expected_tokens);
      const auto rev_h = deletion_curve_encoder(a.trace.encoder_states, reversed(scores_h), pm.model, pm.expected_tokens);
      if (a.input_deletion->area() > rev_x.area()) ++r.deletion_input_wins;
      if (a.encoder_deletion->area() > rev_h.area()) ++r.deletion_encoder_wins;

      const double baseline = wer(a.trace.content_tokens(), pm.expected_tokens);
      const Spectrogram zero_x{Matrix(pm.input.frames(), pm.input.bins())};
      const double terminal_x = wer(decode(encode(zero_x, pm.model), pm.model).content_tokens(), pm.expected_tokens);
      const EncoderStates zero_h{Matrix(a.trace.encoder_states.steps(), a.trace.encoder_states.dim())};
      const double terminal_h = wer(decode(zero_h, pm.model).content_tokens(), pm.expected_tokens);
      for (const auto* c : {&*a.input_deletion, &*a.encoder_deletion, &rev_x, &rev_h}) {
        if (c->scores.front() != baseline) {
          r.endpoints_ok = false;
          r.endpoint_note = fmt::format("model {}: 0% point {} != baseline {}", m, c->scores.front(), baseline);
        }
      }
      for (const auto* c : {&*a.input_deletion, &rev_x}) {
        if (c->scores.back() != terminal_x) {
          r.endpoints_ok = false;
          r.endpoint_note = fmt::format("model {}: input 100% point {} != {}", m, c->scores.back(), terminal_x);
        }
      }
      for (const auto* c : {&*a.encoder_deletion, &rev_h}) {
        if (c->scores.back() != terminal_h) {
          r.endpoints_ok = false;
          r.endpoint_note = fmt::format("model {}: encoder 100% point {} != {}", m, c->scores.back(), terminal_h);
        }
      }
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome planted_recovery() {
  const auto& r = planted_run();
  const double h = mean(r.rho_encoder);
  const double x = mean(r.rho_input);
  const double se = mean_abs(r.shifted_encoder);
  const double si = mean_abs(r.shifted_input);
  const bool pass = h >= 0.7 && x >= 0.5 && se <= 0.15 && si <= 0.15 && r.seconds < 600.0;
  return {pass, fmt::format("{} models (T = {}, F = 16, I = {}, noise {}, N = 2000): rho(CA, SM^H) = {:.3f} (>= 0.7), "
                            "rho(CA, SM^X max2d) = {:.3f} (>= 0.5), shifted |rho| SM^H {:.3f} / SM^X {:.3f} (<= 0.15), "
                            "{} decode mismatches, {:.1f} s",
                            kPlantedModels, kPlantedFrames, kPlantedSpans, kPlantedNoise, h, x, se, si,
                            r.mismatched_decodes, r.seconds)};
}

Outcome encoder_beats_input() {
  const auto& r = planted_run();
  const double h = mean(r.rho_encoder);
  const double x = mean(r.rho_input);
  return {h - x > 0.0, fmt::format("mean rho SM^H {:.3f} - mean rho SM^X {:.3f} = {:+.3f}", h, x, h - x)};
}

Outcome deletion_faithfulness() {
  const auto& r = planted_run();
  const bool pass = r.deletion_input_wins >= 18 && r.deletion_encoder_wins >= 18 && r.endpoints_ok;
  return {pass, fmt::format("true > reversed area: input {}/{}, encoder {}/{} (need 18); endpoints {}",
                            r.deletion_input_wins, kPlantedModels, r.deletion_encoder_wins, kPlantedModels,
                            r.endpoints_ok ? "exact" : r.endpoint_note)};
}

// ---------------------------------------------------------------------------

Outcome aggregation_dominance() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  std::size_t blocks = 0;
  std::size_t violations = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t window = dim(rng);
    const std::size_t steps = dim(rng);
    const std::size_t frames = (steps - 1) * window + dim(rng) % window + 1;
    InputSaliency sm(dim(rng), frames, dim(rng));
    std::uniform_real_distribution<double> u(-1, 1);
    for (double& v : sm.values) v = u(rng);
    const Matrix mx = aggregate_saliency_to_grid(sm, steps, GridPooling::kMax2d, window);
    const Matrix two = aggregate_saliency_to_grid(sm, steps, GridPooling::kMax1dAvg1d, window);
    const Matrix avg = aggregate_saliency_to_grid(sm, steps, GridPooling::kAvg2d, window);
    for (std::size_t e = 0; e < mx.size(); ++e) {
      ++blocks;
      if (!(mx.data()[e] >= two.data()[e] && two.data()[e] >= avg.data()[e])) ++violations;
    }
  }
  return {violations == 0, fmt::format("1000 maps, {} blocks, {} violations of max2d >= 2step >= avg2d", blocks, violations)};
}

// ---------------------------------------------------------------------------

Outcome cli_determinism() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "xattn_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream sink;
  auto call = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "xattn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data(), sink, sink);
  };
  const std::string data = (root / "data").string();
  if (call({"gen", "--out", data, "--count", "3", "--seed", "3"}) != 0) return {false, "gen failed: " + sink.str()};
  for (const char* w : {"1", "4"}) {
    if (call({"run", "--data", data, "--out", (root / fmt::format("w{}", w)).string(), "--workers", w, "--seed", "5",
              "--heatmaps", "1"}) != 0) {
      return {false, fmt::format("run with {} workers failed: {}", w, sink.str())};
    }
  }
  auto tree = [](const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = text::read_file(e.path());
    }
    return files;
  };
  const auto a = tree(root / "w1");
  const auto b = tree(root / "w4");
  const double elapsed = seconds_since(t0);
  fs::remove_all(root);
  const bool pass = a == b && !a.empty() && elapsed < 120.0;
  return {pass, fmt::format("3-sample run, workers 1 vs 4: {} vs {} files, {}, {:.1f} s (limit 120 s)", a.size(), b.size(),
                            a == b ? "byte-identical" : "DIFFERENT", elapsed)};
}

// ---------------------------------------------------------------------------

Outcome normalization_invariants() {
  std::mt19937_64 rng(88);
  std::uniform_int_distribution<std::size_t> dim(2, 12);
  double worst_mean = 0;
  std::size_t argmax_breaks = 0;
  std::size_t slice_breaks = 0;
  auto argmax = [](auto first, auto last) { return std::max_element(first, last) - first; };
  for (int k = 0; k < 1000; ++k) {
    const std::size_t tokens = dim(rng);
    const std::size_t steps = dim(rng);
    Matrix att = support::to_matrix(oracle::random_grid(rng, tokens, steps, 0, 1));
    att = softmax_rows(att, 0.2);
    const Matrix z = normalize_framewise(att);
    std::vector<double> col(tokens);
    std::vector<double> zcol(tokens);
    for (std::size_t c = 0; c < steps; ++c) {
      double m = 0;
      for (std::size_t r = 0; r < tokens; ++r) {
        col[r] = att(r, c);
        zcol[r] = z(r, c);
        m += z(r, c);
      }
      worst_mean = std::max(worst_mean, std::abs(m / static_cast<double>(tokens)));
      if (argmax(col.begin(), col.end()) != argmax(zcol.begin(), zcol.end())) ++argmax_breaks;
    }

    InputSaliency sm(dim(rng), dim(rng), dim(rng));
    std::uniform_real_distribution<double> u(0, 5);
    for (double& v : sm.values) v = u(rng);
    const InputSaliency n = normalize_token_dim(sm);
    const std::size_t cells = sm.frames * sm.bins;
    for (std::size_t i = 0; i < sm.tokens; ++i) {
      const auto a = sm.values.begin() + static_cast<long>(i * cells);
      const auto b = n.values.begin() + static_cast<long>(i * cells);
      if (argmax(a, a + static_cast<long>(cells)) != argmax(b, b + static_cast<long>(cells))) ++slice_breaks;
    }
  }
  const bool pass = worst_mean < 1e-9 && argmax_breaks == 0 && slice_breaks == 0;
  return {pass, fmt::format("1000 attention maps: max column |mean| {:.2e} (< 1e-9), {} column argmax changes; "
                            "1000 saliency maps: {} token-slice argmax changes",
                            worst_mean, argmax_breaks, slice_breaks)};
}

}  // namespace

int main() {
  run_criterion(1, "oracle equivalence of numeric kernels", oracle_equivalence);
  run_criterion(2, "Monte-Carlo saliency matches exhaustive masks", estimator_correctness);
  run_criterion(3, "planted-alignment recovery", planted_recovery);
  run_criterion(4, "encoder saliency correlates more than input saliency", encoder_beats_input);
  run_criterion(5, "grid aggregation dominance", aggregation_dominance);
  run_criterion(6, "deletion faithfulness", deletion_faithfulness);
  run_criterion(7, "run output independent of worker count", cli_determinism);
  run_criterion(8, "normalization invariants", normalization_invariants);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
