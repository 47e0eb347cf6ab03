// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "osd/matio.hpp"
#include "osd/osd.hpp"

namespace osd {

/// Planted test bed: each layer's delta is a low-rank product with sparse,
/// geometrically decaying components, plus sparse spikes and dense noise.
///   delta = sum_j sigma_j a_j b_j^T + spikes + noise,  sigma_j = decay^j
/// a_j, b_j are unit vectors with a `factor_density` fraction of nonzeros.
/// Spike and noise magnitudes are relative to the RMS entry of the planted
/// low-rank part.
struct SynthConfig {
  std::uint64_t seed = 0;
  std::uint32_t rows = 256;
  std::uint32_t cols = 256;
  std::uint32_t true_rank = 8;
  double spike_fraction = 0.01;
  double noise_scale = 0.0;
  std::uint32_t layers = 1;
  double factor_density = 0.3;
  double decay = 0.7;
  double spike_scale = 3.0;
};

struct SynthModel {
  LayerSet pretrained;
  LayerSet finetuned;
  LayerSet delta;
  LayerSet gradient;
  LayerSet importance;  // |gradient .* finetuned|

  std::vector<ImportanceMap> importance_maps() const;
};

/// Fully determined by the config (including the seed). Throws
/// ArgumentError for empty shapes, a true rank outside [1, min(rows, cols)]
/// or fractions outside [0, 1].
SynthModel synthesize(const SynthConfig& config);

}  // namespace osd
