// SPDX-License-Identifier: Apache-2.0
#include "osd/sweep.hpp"

#include <chrono>

namespace osd {

const SweepCandidate& SweepResult::best() const {
  for (const auto& cand : per_c)
    if (cand.ok && cand.c == c_star) return cand;
  throw EvaluationError("sweep has no successful candidate", 0);
}

SweepResult sweep_c(const LayerSet& deltas, const std::vector<ImportanceMap>& importance, std::uint32_t r,
                    std::uint32_t max_c, const EvaluationHook& hook, const SweepOptions& options) {
  if (max_c < 1) throw ArgumentError("sweep_c: the largest relaxation C must be >= 1");
  if (r < 1) throw ArgumentError("sweep_c: reference rank must be >= 1");

  SweepResult result;
  bool have_best = false;
  double best_score = 0.0;
  int first_failure = 0;

  for (std::uint32_t c = 1; c <= max_c; ++c) {
    SweepCandidate cand;
    cand.c = c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cand.layers = compress_layers(options.method, deltas, importance, r, c, options.threads, options.svd);
      LayerSet recon;
      for (const auto& layer : cand.layers) {
        recon.add(layer.id, layer.reconstruct());
        cand.payload_bits += layer.payload_bits().total_bits();
        cand.overhead_bits += layer.overhead_bits();
      }
      cand.score = hook.score(recon);
      cand.ok = true;
    } catch (const Error& e) {
      cand.error = e.what();
      cand.layers.clear();
      if (!first_failure) first_failure = static_cast<int>(c);
    }
    cand.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    if (cand.ok && (!have_best || cand.score > best_score)) {
      have_best = true;
      best_score = cand.score;
      result.c_star = c;
    }
    result.per_c.push_back(std::move(cand));
  }

  if (!have_best) {
    const std::string what = "sweep_c: every candidate failed; first failure at c = " +
                             std::to_string(first_failure) + ": " + result.per_c.front().error;
    throw SweepFailed(what, first_failure, std::move(result));
  }
  return result;
}

}  // namespace osd
