// SPDX-License-Identifier: Apache-2.0
#include "osd/budget.hpp"

#include <algorithm>
#include <string>

#include "osd/error.hpp"
#include "osd/sparsify.hpp"

namespace osd {

BitCost svd_cost(std::uint64_t n, std::uint64_t d, std::uint64_t k) { return {32 * k * (n + d), 0}; }

BitCost sparse_cost(std::uint64_t num_entries, std::uint64_t rows, std::uint64_t cols) {
  const std::uint64_t size = rows * cols;
  if (num_entries > size)
    throw ArgumentError("sparse_cost: " + std::to_string(num_entries) + " entries exceed matrix size " +
                        std::to_string(size));
  return {32 * num_entries, std::uint64_t{ceil_log2(size)} * num_entries};
}

SparsityLevels sparsity_levels(std::uint64_t n, std::uint64_t d, std::uint64_t r, std::uint64_t c) {
  if (r == 0) throw ArgumentError("sparsity_levels: reference rank must be >= 1");
  const std::uint64_t k = r + c;
  const std::uint64_t s_u = (32 * r * n) / (32 + ceil_log2(n * k));
  const std::uint64_t s_v = (32 * r * d) / (32 + ceil_log2(d * k));
  return {std::min(s_u, n * k), std::min(s_v, d * k)};
}

BudgetSpec make_budget(std::uint64_t n, std::uint64_t d, std::uint64_t r, std::uint64_t c) {
  if (n == 0 || d == 0) throw ArgumentError("make_budget: matrix dimensions must be positive");
  if (r == 0) throw ArgumentError("make_budget: reference rank must be >= 1");
  BudgetSpec b;
  b.n = n;
  b.d = d;
  b.r = r;
  b.c = c;
  b.k = r + c;
  const auto levels = sparsity_levels(n, d, r, c);
  b.s_u = levels.s_u;
  b.s_v = levels.s_v;
  b.bits_svd = svd_cost(n, d, r).total_bits();
  b.idx_bits_u = ceil_log2(n * b.k);
  b.idx_bits_v = ceil_log2(d * b.k);
  return b;
}

std::uint64_t sparse_only_entries(std::uint64_t n, std::uint64_t d, std::uint64_t r) {
  const std::uint64_t s = svd_cost(n, d, r).total_bits() / (32 + ceil_log2(n * d));
  return std::min(s, n * d);
}

BitCost payload_cost(const SparseFactorPair& pair) {
  const std::uint64_t nu = pair.entries_u.size(), nv = pair.entries_v.size();
  return {32 * (nu + nv), std::uint64_t{pair.idx_bits_u} * nu + std::uint64_t{pair.idx_bits_v} * nv};
}

bool assert_within_budget(const SparseFactorPair& pair, const BudgetSpec& spec) {
  const std::uint64_t nu = pair.entries_u.size(), nv = pair.entries_v.size();
  if (pair.n != spec.n || pair.d != spec.d) return false;
  if (nu > std::uint64_t{pair.n} * pair.k || nv > std::uint64_t{pair.k} * pair.d) return false;
  // Index widths follow the stored factor shapes; a pair that claims
  // narrower indices than its shape needs is not a valid payload.
  const std::uint64_t bits_u = std::max<std::uint64_t>(pair.idx_bits_u, ceil_log2(std::uint64_t{pair.n} * pair.k));
  const std::uint64_t bits_v = std::max<std::uint64_t>(pair.idx_bits_v, ceil_log2(std::uint64_t{pair.k} * pair.d));
  const std::uint64_t used = (32 + bits_u) * nu + (32 + bits_v) * nv;
  return used <= 32 * spec.r * (spec.n + spec.d);
}

}  // namespace osd
