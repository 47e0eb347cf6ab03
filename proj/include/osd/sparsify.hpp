// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "osd/error.hpp"
#include "osd/linalg.hpp"
#include "osd/matio.hpp"

namespace osd {

/// One retained value addressed by its row-major flat index.
struct SparseEntry {
  std::uint64_t index = 0;
  float value = 0.0f;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Canonical sparse matrix: strictly increasing flat indices, nonzero
/// finite values.
struct SparseMatrix {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<SparseEntry> entries;

  unsigned index_bits() const;
  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;
};

/// Sparsified relaxed-rank factors: U' is n x k, V' is k x d. `r` and `c`
/// record the reference rank and relaxation the pair was built for
/// (k == r + c for relaxed methods).
struct SparseFactorPair {
  std::uint32_t n = 0, d = 0, k = 0;
  std::uint32_t r = 0, c = 0;
  std::vector<SparseEntry> entries_u;
  std::vector<SparseEntry> entries_v;
  std::uint8_t idx_bits_u = 0, idx_bits_v = 0;

  /// Empty pair with index widths derived from the shapes.
  static SparseFactorPair empty(std::uint32_t n, std::uint32_t d, std::uint32_t k, std::uint32_t r,
                                std::uint32_t c);

  friend bool operator==(const SparseFactorPair&, const SparseFactorPair&) = default;
};

/// Throws FormatError/IntegrityError describing the first violated
/// canonical-form rule.
void validate(const SparseMatrix& sm);
void validate(const SparseFactorPair& sp);

/// Keep the min(s, nnz) largest-magnitude nonzero entries of `m`. Ties in
/// magnitude go to the lower flat index. Entries come back in ascending
/// index order. Throws ArgumentError if s > rows*cols.
template <typename Derived>
std::vector<SparseEntry> top_s_entries(const Eigen::MatrixBase<Derived>& m, std::uint64_t s) {
  const std::uint64_t size = static_cast<std::uint64_t>(m.rows()) * static_cast<std::uint64_t>(m.cols());
  if (s > size)
    throw ArgumentError("top_s: s = " + std::to_string(s) + " exceeds matrix size " + std::to_string(size));

  const Eigen::Index cols = m.cols();
  std::vector<SparseEntry> nz;
  nz.reserve(size);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      const float v = static_cast<float>(m(i, j));
      if (v != 0.0f) nz.push_back({static_cast<std::uint64_t>(i * cols + j), v});
    }

  const auto before = [](const SparseEntry& a, const SparseEntry& b) {
    const float ma = std::abs(a.value), mb = std::abs(b.value);
    return ma != mb ? ma > mb : a.index < b.index;
  };
  if (s < nz.size()) {
    std::nth_element(nz.begin(), nz.begin() + static_cast<std::ptrdiff_t>(s), nz.end(), before);
    nz.resize(s);
  }
  std::sort(nz.begin(), nz.end(), [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
  return nz;
}

template <typename Derived>
SparseMatrix top_s(const Eigen::MatrixBase<Derived>& m, std::uint64_t s) {
  return {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()), top_s_entries(m, s)};
}

/// Scatter entries into a dense rows x cols matrix. Throws IntegrityError
/// on out-of-range indices.
DenseMatrix densify(const std::vector<SparseEntry>& entries, std::uint64_t rows, std::uint64_t cols);
DenseMatrix densify(const SparseMatrix& sm);

/// Dense U' (n x k) and V' (k x d). Singular values are not recoverable
/// from a sparse pair and are left empty.
FactorPair densify(const SparseFactorPair& sp);

/// Dense n x d product of the sparsified factors.
DenseMatrix reconstruct(const SparseFactorPair& sp);

/// MSB-first bit packing of fixed-width indices, zero-padded to a whole
/// byte. Exposed for tests of the stream length.
std::vector<std::uint8_t> pack_indices(const std::vector<SparseEntry>& entries, unsigned width);

}  // namespace osd
