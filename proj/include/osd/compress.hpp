// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "osd/osd.hpp"
#include "osd/record.hpp"

namespace osd {

/// Rank-r truncated SVD, stored densely (32 r (n + d) bits).
FactorPair compress_truncsvd(const DenseMatrix& delta, std::uint32_t r, const SvdOptions& svd = {});

/// Rank r + c truncated SVD followed by independent magnitude top-s on each
/// factor, at the equal-budget levels s_u, s_v.
SparseFactorPair compress_mag(const DenseMatrix& delta, std::uint32_t r, std::uint32_t c,
                              const SvdOptions& svd = {});

/// Rank r + c truncated SVD, importance-weighted sensitivities, then joint
/// selection over both factors under the rank-r budget.
SparseFactorPair compress_osd(const DenseMatrix& delta, const ImportanceMap& z, std::uint32_t r, std::uint32_t c,
                              const SvdOptions& svd = {});

/// Magnitude top-s of the whole delta with s = sparse_only_entries(n, d, r).
SparseMatrix compress_sparse_only(const DenseMatrix& delta, std::uint32_t r);

/// Dispatch on `method`. `z` is only consulted by Method::Osd. The result is
/// re-checked against the layer budget; a violation throws DataError.
CompressedLayer compress_layer(Method method, const std::string& id, const DenseMatrix& delta,
                               const ImportanceMap& z, std::uint32_t r, std::uint32_t c,
                               const SvdOptions& svd = {});

/// Per-layer compression of a whole set. `importance` is either empty
/// (all-ones maps) or aligned with `deltas`. Layers are processed on up to
/// `threads` workers; output order and content do not depend on it.
/// Errors are rethrown with the layer id for the first failing layer.
std::vector<CompressedLayer> compress_layers(Method method, const LayerSet& deltas,
                                             const std::vector<ImportanceMap>& importance, std::uint32_t r,
                                             std::uint32_t c, unsigned threads = 1, const SvdOptions& svd = {});

/// Runs fn(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace osd
