#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "xattn/attribution.hpp"

namespace xattn {

namespace {

// Start frame of each of `strips` time strips. Cuts fall where the cumulative
// frame weight crosses jittered quantiles; every strip keeps at least one frame.
std::vector<std::size_t> strip_starts(const std::vector<double>& cumulative, std::size_t strips, std::mt19937_64& rng) {
  const std::size_t frames = cumulative.size() - 1;
  const double total = cumulative.back();
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);
  std::vector<std::size_t> starts{0};
  for (std::size_t j = 1; j < strips; ++j) {
    const double q = (static_cast<double>(j) + jitter(rng)) / static_cast<double>(strips);
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), q * total);
    auto cut = static_cast<std::size_t>(it - cumulative.begin());
    cut = std::max(cut, starts.back() + 1);
    cut = std::min(cut, frames - (strips - j));
    starts.push_back(cut);
  }
  starts.push_back(frames);
  return starts;
}

}  // namespace

std::size_t ClusterMap::total_clusters() const {
  return scale_sizes.empty() ? 0 : scale_offsets.back() + scale_sizes.back();
}

std::size_t ClusterMap::scale_of(std::size_t id) const {
  for (std::size_t s = 0; s < scales(); ++s) {
    if (id >= scale_offsets[s] && id < scale_offsets[s] + scale_sizes[s]) return s;
  }
  throw std::out_of_range(fmt::format("cluster id {} outside {} clusters", id, total_clusters()));
}

ClusterMap build_clusters(const Spectrogram& x, std::span<const double> densities, std::uint64_t seed,
                          std::size_t frames_per_unit) {
  if (densities.empty()) throw std::invalid_argument("cluster densities are empty");
  if (frames_per_unit == 0) throw std::invalid_argument("frames_per_unit must be positive");
  const std::size_t frames = x.frames();
  const std::size_t bins = x.bins();
  if (frames == 0 || bins == 0) throw std::invalid_argument("cannot cluster an empty spectrogram");

  // Frame weight = energy plus a uniform floor so silent stretches still get strips.
  std::vector<double> energy(frames, 0.0);
  double mean_energy = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    for (double v : x.values.row(t)) energy[t] += v * v;
    mean_energy += energy[t];
  }
  mean_energy /= static_cast<double>(frames);
  const double floor = 0.25 * mean_energy + 1e-12;
  std::vector<double> cumulative(frames + 1, 0.0);
  for (std::size_t t = 0; t < frames; ++t) cumulative[t + 1] = cumulative[t] + energy[t] + floor;

  ClusterMap cm;
  cm.frames = frames;
  cm.bins = bins;
  cm.densities.assign(densities.begin(), densities.end());
  std::size_t next_id = 0;
  for (std::size_t s = 0; s < densities.size(); ++s) {
    const double d = densities[s];
    if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument(fmt::format("cluster density {} is not positive", d));
    const auto target = static_cast<std::size_t>(
        std::llround(d * static_cast<double>(frames) / static_cast<double>(frames_per_unit)));
    if (target == 0) {
      throw std::invalid_argument(
          fmt::format("cluster density {} yields 0 clusters for {} frames ({} frames per unit)", d, frames, frames_per_unit));
    }
    const double k = static_cast<double>(target);
    auto bands = static_cast<std::size_t>(
        std::llround(std::sqrt(k * static_cast<double>(bins) / static_cast<double>(frames))));
    bands = std::clamp<std::size_t>(bands, 1, bins);
    auto strips = static_cast<std::size_t>(std::llround(k / static_cast<double>(bands)));
    strips = std::clamp<std::size_t>(strips, 1, frames);

    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (s + 1));
    const auto starts = strip_starts(cumulative, strips, rng);

    std::vector<std::size_t> assignment(frames * bins);
    for (std::size_t j = 0; j < strips; ++j)
      for (std::size_t t = starts[j]; t < starts[j + 1]; ++t)
        for (std::size_t f = 0; f < bins; ++f) assignment[t * bins + f] = next_id + j * bands + f * bands / bins;

    cm.scale_offsets.push_back(next_id);
    cm.scale_sizes.push_back(strips * bands);
    cm.assignment.push_back(std::move(assignment));
    next_id += strips * bands;
  }
  return cm;
}

}  // namespace xattn
