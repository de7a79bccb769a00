#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xattn/pipeline.hpp"
#include "xattn/planted.hpp"

namespace xattn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Invalid or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat key=value settings. Keys use dashes ("trials-input"); underscores are accepted on input.
using Settings = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment.
Settings parse_settings(const std::string& text, const std::string& origin);
Settings read_settings(const std::filesystem::path& path);

struct GenConfig {
  std::filesystem::path out = "data";
  std::size_t count = 1;
  std::size_t frames = 160;
  std::size_t spans = 9;
  std::size_t min_span = 12;
  std::vector<FrameSpan> alignment;  // overrides spans/min_span when set
  double noise = 0.05;
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::filesystem::path data = "data";
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  PipelineOptions pipeline;
  bool heatmaps = false;
  std::vector<double> probs{0.1, 0.3, 0.5, 0.7, 0.9};
};

struct RenderConfig {
  std::filesystem::path in;
  std::filesystem::path out;  // empty: input path plus the format extension
  std::string format = "pgm";
  std::optional<std::size_t> token;
};

GenConfig gen_config(const Settings& s);
RunConfig run_config(const Settings& s);
RenderConfig render_config(const Settings& s);

/// One generated dataset entry.
struct DatasetSample {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  std::filesystem::path spectrogram;
  std::filesystem::path reference;
};

struct Dataset {
  std::filesystem::path weights;
  std::vector<DatasetSample> samples;
};

/// Reads "manifest.txt" in `dir`; paths are resolved against `dir`.
Dataset read_manifest(const std::filesystem::path& dir);

/// Seed of sample `index` in a run or dataset seeded with `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

int cmd_gen(const GenConfig& cfg, std::ostream& log);
int cmd_run(const RunConfig& cfg, std::ostream& log);
int cmd_sweep_ph(const RunConfig& cfg, std::ostream& log);
int cmd_render(const RenderConfig& cfg, std::ostream& log);

/// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xattn::cli
