// SPDX-License-Identifier: Apache-2.0
#include "osd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace osd {

namespace {

using MatD = Eigen::MatrixXd;

Eigen::VectorXd sparse_unit(std::mt19937_64& rng, Eigen::Index size, double density) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
  for (Eigen::Index i = 0; i < size; ++i)
    if (unif(rng) < density) v(i) = gauss(rng);
  if (v.squaredNorm() == 0.0) v(std::uniform_int_distribution<Eigen::Index>(0, size - 1)(rng)) = 1.0;
  return v.normalized();
}

}  // namespace

std::vector<ImportanceMap> SynthModel::importance_maps() const {
  std::vector<ImportanceMap> out;
  out.reserve(importance.size());
  for (const auto& layer : importance) out.emplace_back(layer.matrix);
  return out;
}

SynthModel synthesize(const SynthConfig& cfg) {
  if (cfg.rows == 0 || cfg.cols == 0) throw ArgumentError("synthesize: rows and cols must be positive");
  if (cfg.layers == 0) throw ArgumentError("synthesize: need at least one layer");
  if (cfg.true_rank < 1 || cfg.true_rank > std::min(cfg.rows, cfg.cols))
    throw ArgumentError("synthesize: true rank must lie in [1, min(rows, cols)]");
  if (!(cfg.spike_fraction >= 0.0 && cfg.spike_fraction <= 1.0))
    throw ArgumentError("synthesize: spike fraction must lie in [0, 1]");
  if (!(cfg.factor_density > 0.0 && cfg.factor_density <= 1.0))
    throw ArgumentError("synthesize: factor density must lie in (0, 1]");
  if (!(cfg.noise_scale >= 0.0) || !(cfg.spike_scale >= 0.0) || !(cfg.decay > 0.0))
    throw ArgumentError("synthesize: scales must be nonnegative and decay positive");

  const Eigen::Index n = cfg.rows, d = cfg.cols;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss;

  SynthModel model;
  for (std::uint32_t l = 0; l < cfg.layers; ++l) {
    const std::string id = "layer" + std::to_string(l);

    MatD low = MatD::Zero(n, d);
    double energy = 0.0;
    for (std::uint32_t j = 0; j < cfg.true_rank; ++j) {
      const double sigma = std::pow(cfg.decay, j);
      const Eigen::VectorXd a = sparse_unit(rng, n, cfg.factor_density);
      const Eigen::VectorXd b = sparse_unit(rng, d, cfg.factor_density);
      low.noalias() += sigma * a * b.transpose();
      energy += sigma * sigma;
    }
    const double rms = std::sqrt(energy / double(n * d));

    MatD delta = low;
    const auto spikes = static_cast<Eigen::Index>(std::llround(cfg.spike_fraction * double(n * d)));
    if (spikes > 0) {
      std::vector<Eigen::Index> pos(static_cast<std::size_t>(n * d));
      std::iota(pos.begin(), pos.end(), Eigen::Index{0});
      for (Eigen::Index s = 0; s < spikes; ++s) {
        const auto pick = std::uniform_int_distribution<Eigen::Index>(s, n * d - 1)(rng);
        std::swap(pos[s], pos[pick]);
        delta.data()[pos[s]] += cfg.spike_scale * rms * gauss(rng);
      }
    }
    if (cfg.noise_scale > 0.0)
      for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] += cfg.noise_scale * rms * gauss(rng);

    DenseMatrix pre(n, d);
    for (Eigen::Index i = 0; i < pre.size(); ++i) pre.data()[i] = static_cast<float>(0.02 * gauss(rng));
    const DenseMatrix dw = delta.cast<float>();
    const DenseMatrix fine = pre + dw;

    // Gradient with lognormal row and column scales, so that a few rows and
    // columns dominate the importance map.
    Eigen::VectorXd row_scale(n), col_scale(d);
    for (Eigen::Index i = 0; i < n; ++i) row_scale(i) = std::exp(gauss(rng));
    for (Eigen::Index j = 0; j < d; ++j) col_scale(j) = std::exp(gauss(rng));
    DenseMatrix grad(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) grad(i, j) = static_cast<float>(row_scale(i) * col_scale(j) * gauss(rng));

    model.pretrained.add(id, pre);
    model.finetuned.add(id, fine);
    // Stored delta is recomputed from the float weights so that
    // delta(finetuned, pretrained) reproduces it exactly.
    model.delta.add(id, fine - pre);
    model.gradient.add(id, grad);
    model.importance.add(id, importance_from_gradient(grad, fine).matrix());
  }
  return model;
}

}  // namespace osd
