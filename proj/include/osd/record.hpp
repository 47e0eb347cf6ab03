// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "osd/budget.hpp"
#include "osd/linalg.hpp"
#include "osd/sparsify.hpp"

namespace osd {

enum class Method { TruncSvd, Mag, Osd, SparseOnly };

std::string to_string(Method m);
Method parse_method(const std::string& name);  // throws ArgumentError

// Record layouts (all integers little-endian):
//   OSD1  u32 n, d, k, r, c; u64 s_u, s_v; u8 idx_bits_u, idx_bits_v;
//         U index bits, U values (f32), V index bits, V values (f32)
//   SPM1  u32 rows, cols, r; u64 s; u8 idx_bits; index bits, values (f32)
//   TSV1  u32 n, d, k; n*k f32 of U', then k*d f32 of V'
// Index bitstreams are MSB-first and zero-padded to a byte boundary.
inline constexpr std::size_t kFactorHeaderBytes = 4 + 5 * 4 + 2 * 8 + 2;
inline constexpr std::size_t kSparseHeaderBytes = 4 + 3 * 4 + 8 + 1;
inline constexpr std::size_t kDenseHeaderBytes = 4 + 3 * 4;

std::vector<std::uint8_t> encode(const SparseFactorPair& sp);
SparseFactorPair decode(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode(const SparseMatrix& sm, std::uint32_t r);
std::vector<std::uint8_t> encode_dense(const FactorPair& f);

/// One compressed layer, whatever the method produced.
struct CompressedLayer {
  std::string id;
  Method method = Method::Osd;
  std::uint32_t n = 0, d = 0, r = 0, c = 0;
  std::variant<SparseFactorPair, SparseMatrix, FactorPair> payload;

  /// Bits counted against the budget: values plus indices.
  BitCost payload_bits() const;
  /// Per-layer cap 32 r (n + d).
  std::uint64_t budget_bits() const { return svd_cost(n, d, r).total_bits(); }
  bool within_budget() const { return payload_bits().total_bits() <= budget_bits(); }
  /// Record header plus bitstream padding, reported apart from the payload.
  std::uint64_t overhead_bits() const;

  /// Reconstructed delta, n x d.
  DenseMatrix reconstruct() const;

  std::vector<std::uint8_t> encode() const;
  static CompressedLayer decode(const std::string& id, const std::vector<std::uint8_t>& bytes);
};

/// A compressed model: a JSON manifest naming the method, the pre-trained
/// container it applies to and one binary record per layer, in order.
struct CompressedModel {
  Method method = Method::Osd;
  std::uint32_t r = 1, c = 0;
  std::optional<std::filesystem::path> pretrained;
  std::vector<CompressedLayer> layers;

  LayerSet reconstruct_deltas() const;
};

/// Writes `path` (manifest) and `<path>.records/NNNN.rec`.
void save_compressed_model(const std::filesystem::path& path, const CompressedModel& model);
CompressedModel load_compressed_model(const std::filesystem::path& path);

}  // namespace osd
