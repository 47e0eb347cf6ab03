// SPDX-License-Identifier: Apache-2.0
#include "osd/sparsify.hpp"

#include "osd/budget.hpp"

namespace osd {

unsigned SparseMatrix::index_bits() const { return ceil_log2(rows * cols); }

SparseFactorPair SparseFactorPair::empty(std::uint32_t n, std::uint32_t d, std::uint32_t k, std::uint32_t r,
                                         std::uint32_t c) {
  SparseFactorPair p;
  p.n = n;
  p.d = d;
  p.k = k;
  p.r = r;
  p.c = c;
  p.idx_bits_u = static_cast<std::uint8_t>(ceil_log2(std::uint64_t{n} * k));
  p.idx_bits_v = static_cast<std::uint8_t>(ceil_log2(std::uint64_t{k} * d));
  return p;
}

namespace {

void validate_entries(const std::vector<SparseEntry>& entries, std::uint64_t size, const char* what) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.index >= size)
      throw IntegrityError(std::string(what) + ": index " + std::to_string(e.index) + " out of range " +
                           std::to_string(size));
    if (i > 0 && e.index <= entries[i - 1].index)
      throw FormatError(std::string(what) + ": indices not strictly increasing at position " + std::to_string(i));
    if (e.value == 0.0f || !std::isfinite(e.value))
      throw FormatError(std::string(what) + ": stored value at index " + std::to_string(e.index) +
                        " is zero or non-finite");
  }
}

}  // namespace

void validate(const SparseMatrix& sm) { validate_entries(sm.entries, sm.rows * sm.cols, "sparse matrix"); }

void validate(const SparseFactorPair& sp) {
  const std::uint64_t size_u = std::uint64_t{sp.n} * sp.k, size_v = std::uint64_t{sp.k} * sp.d;
  if (sp.idx_bits_u != ceil_log2(size_u) || sp.idx_bits_v != ceil_log2(size_v))
    throw FormatError("sparse factor pair: index widths " + std::to_string(sp.idx_bits_u) + "/" +
                      std::to_string(sp.idx_bits_v) + " do not match shapes");
  validate_entries(sp.entries_u, size_u, "U' factor");
  validate_entries(sp.entries_v, size_v, "V' factor");
}

DenseMatrix densify(const std::vector<SparseEntry>& entries, std::uint64_t rows, std::uint64_t cols) {
  DenseMatrix m = DenseMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const std::uint64_t size = rows * cols;
  for (const auto& e : entries) {
    if (e.index >= size)
      throw IntegrityError("densify: index " + std::to_string(e.index) + " out of range " + std::to_string(size));
    m.data()[e.index] = e.value;
  }
  return m;
}

DenseMatrix densify(const SparseMatrix& sm) { return densify(sm.entries, sm.rows, sm.cols); }

FactorPair densify(const SparseFactorPair& sp) {
  FactorPair f;
  f.u_prime = densify(sp.entries_u, sp.n, sp.k);
  f.v_prime = densify(sp.entries_v, sp.k, sp.d);
  return f;
}

DenseMatrix reconstruct(const SparseFactorPair& sp) {
  const FactorPair f = densify(sp);
  return factor_product(f.u_prime, f.v_prime);
}

std::vector<std::uint8_t> pack_indices(const std::vector<SparseEntry>& entries, unsigned width) {
  const std::uint64_t bits = std::uint64_t{width} * entries.size();
  std::vector<std::uint8_t> out((bits + 7) / 8, 0);
  std::uint64_t pos = 0;
  for (const auto& e : entries) {
    for (unsigned b = width; b-- > 0; ++pos)
      if ((e.index >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(0x80u >> (pos % 8));
  }
  return out;
}

}  // namespace osd
