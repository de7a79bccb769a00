#pragma once

#include <cstddef>
#include <vector>

#include "oracles.hpp"
#include "xattn/numerics.hpp"
#include "xattn/planted.hpp"

namespace support {

inline xattn::Matrix to_matrix(const oracle::Grid& g) { return xattn::Matrix::from_rows(g); }

inline oracle::Grid to_grid(const xattn::Matrix& m) {
  oracle::Grid g(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) g[r].assign(m.row(r).begin(), m.row(r).end());
  return g;
}

/// Planted model over `frames` frames split into `spans` equal spans.
inline xattn::PlantedModel even_planted(std::size_t frames, std::size_t spans, double noise, std::uint64_t seed,
                                        std::size_t context_width = 1) {
  xattn::PlantedSpec spec;
  spec.frames = frames;
  spec.noise_level = noise;
  spec.seed = seed;
  const std::size_t width = frames / spans;
  for (std::size_t i = 0; i < spans; ++i) spec.alignment.push_back({i * width, i + 1 == spans ? frames : (i + 1) * width});
  xattn::ModelConfig c;
  c.context_width = context_width;
  return xattn::build_planted_model(spec, c);
}

}  // namespace support
