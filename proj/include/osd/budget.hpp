// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>

namespace osd {

struct SparseFactorPair;

/// Bits needed to address `size` distinct positions: ceil(log2(size)),
/// with ceil_log2(1) == 0.
constexpr unsigned ceil_log2(std::uint64_t size) {
  return size <= 1 ? 0u : static_cast<unsigned>(std::bit_width(size - 1));
}

struct BitCost {
  std::uint64_t value_bits = 0;
  std::uint64_t index_bits = 0;

  std::uint64_t total_bits() const { return value_bits + index_bits; }
  friend BitCost operator+(BitCost a, BitCost b) {
    return {a.value_bits + b.value_bits, a.index_bits + b.index_bits};
  }
  friend bool operator==(const BitCost&, const BitCost&) = default;
};

/// Dense rank-k factor storage: 32 * k * (n + d) bits.
BitCost svd_cost(std::uint64_t n, std::uint64_t d, std::uint64_t k);

/// Sparse storage of `num_entries` values in a rows x cols matrix, each with
/// a ceil(log2(rows*cols))-bit flat index. Throws ArgumentError if
/// num_entries > rows*cols.
BitCost sparse_cost(std::uint64_t num_entries, std::uint64_t rows, std::uint64_t cols);

struct SparsityLevels {
  std::uint64_t s_u = 0;
  std::uint64_t s_v = 0;
  friend bool operator==(const SparsityLevels&, const SparsityLevels&) = default;
};

/// Equal-budget retained-entry counts for the rank r + c factors:
///   s_u = floor(32 r n / (32 + ceil(log2(n (r+c)))))
///   s_v = floor(32 r d / (32 + ceil(log2(d (r+c)))))
/// clamped to the factor sizes n (r+c) and d (r+c).
SparsityLevels sparsity_levels(std::uint64_t n, std::uint64_t d, std::uint64_t r, std::uint64_t c);

/// Everything a compressor needs to know about one layer's budget.
struct BudgetSpec {
  std::uint64_t n = 0, d = 0;
  std::uint64_t r = 0, c = 0;
  std::uint64_t k = 0;
  std::uint64_t s_u = 0, s_v = 0;
  std::uint64_t bits_svd = 0;
  unsigned idx_bits_u = 0, idx_bits_v = 0;

  /// Per-layer cap B = 32 r (n + d).
  std::uint64_t cap_bits() const { return bits_svd; }
  std::uint64_t entry_bits_u() const { return 32u + idx_bits_u; }
  std::uint64_t entry_bits_v() const { return 32u + idx_bits_v; }
};

/// Throws ArgumentError for zero dimensions or r == 0.
BudgetSpec make_budget(std::uint64_t n, std::uint64_t d, std::uint64_t r, std::uint64_t c);

/// Largest number of entries a pure top-s sparsification of the whole
/// n x d delta can keep under the rank-r budget:
///   floor(32 r (n + d) / (32 + ceil(log2(n d)))), clamped to n d.
std::uint64_t sparse_only_entries(std::uint64_t n, std::uint64_t d, std::uint64_t r);

/// Payload bits of a sparse factor pair (values plus per-factor indices).
/// Container headers and byte padding are not included.
BitCost payload_cost(const SparseFactorPair& pair);

/// True iff payload_cost(pair) <= 32 r (n + d).
bool assert_within_budget(const SparseFactorPair& pair, const BudgetSpec& spec);

}  // namespace osd
