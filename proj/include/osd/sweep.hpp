// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "osd/compress.hpp"

namespace osd {

/// Scores a candidate model, higher is better. The candidate is passed as
/// reconstructed deltas, one per layer, in the order of the input set.
class EvaluationHook {
 public:
  virtual ~EvaluationHook() = default;
  virtual double score(const LayerSet& reconstructed_deltas) const = 0;
};

/// Importance-weighted L1 error sum_l sum_{i,t} Z(i,t) |delta(i,t) - recon(i,t)|,
/// accumulated in double. `importance` empty means all-ones maps.
double proxy_error(const LayerSet& deltas, const LayerSet& reconstructed, const std::vector<ImportanceMap>& importance);

/// score = -proxy_error, so that the best candidate maximizes the score.
class ProxyHook : public EvaluationHook {
 public:
  ProxyHook(const LayerSet& deltas, const std::vector<ImportanceMap>& importance)
      : deltas_(deltas), importance_(importance) {}
  double score(const LayerSet& reconstructed_deltas) const override;

 private:
  const LayerSet& deltas_;
  const std::vector<ImportanceMap>& importance_;
};

/// Runs a user command on each candidate. The candidate (pretrained +
/// reconstruction when a pretrained set is given, else the reconstructed
/// deltas) is written as an SDT1 container to a temporary file whose path
/// replaces every "{}" in the template, or is appended when there is none.
/// The command must exit 0 and print a single decimal score on stdout.
class ExternalHook : public EvaluationHook {
 public:
  ExternalHook(std::string command_template, std::optional<LayerSet> pretrained = std::nullopt,
               std::filesystem::path temp_dir = std::filesystem::temp_directory_path());
  double score(const LayerSet& reconstructed_deltas) const override;

  std::string command_for(const std::filesystem::path& candidate) const;

 private:
  std::string template_;
  std::optional<LayerSet> pretrained_;
  std::filesystem::path temp_dir_;
};

/// Parses the hook's stdout: exactly one decimal number, surrounding
/// whitespace allowed. Throws EvaluationError(c = 0) otherwise.
double parse_score(const std::string& text);

struct SweepCandidate {
  std::uint32_t c = 0;
  bool ok = false;
  double score = 0.0;
  std::string error;
  std::vector<CompressedLayer> layers;
  std::uint64_t payload_bits = 0;
  std::uint64_t overhead_bits = 0;
  double wall_ms = 0.0;
};

struct SweepResult {
  std::vector<SweepCandidate> per_c;
  std::uint32_t c_star = 0;

  const SweepCandidate& best() const;
};

/// Thrown when no candidate in a sweep could be compressed and scored.
struct SweepFailed : EvaluationError {
  SweepFailed(const std::string& w, int c, SweepResult partial)
      : EvaluationError(w, c), partial(std::move(partial)) {}
  SweepResult partial;
};

struct SweepOptions {
  Method method = Method::Osd;
  unsigned threads = 1;
  SvdOptions svd{};
};

/// For c = 1..max_c: compress every layer at rank r + c, evaluate the whole
/// candidate model once with `hook` and record the score. c_star is the
/// argmax over successful candidates, ties going to the smaller c. A failing
/// candidate (compression or hook error) is recorded and skipped; if all
/// fail, SweepFailed carries the first failing c and the partial result.
SweepResult sweep_c(const LayerSet& deltas, const std::vector<ImportanceMap>& importance, std::uint32_t r,
                    std::uint32_t max_c, const EvaluationHook& hook, const SweepOptions& options = {});

}  // namespace osd
