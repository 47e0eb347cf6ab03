// SPDX-License-Identifier: Apache-2.0
#include "osd/compress.hpp"

#include <atomic>
#include <exception>
#include <thread>

namespace osd {

FactorPair compress_truncsvd(const DenseMatrix& delta, std::uint32_t r, const SvdOptions& svd) {
  return truncated_svd(delta, r, svd);
}

SparseFactorPair compress_mag(const DenseMatrix& delta, std::uint32_t r, std::uint32_t c, const SvdOptions& svd) {
  const BudgetSpec spec = make_budget(delta.rows(), delta.cols(), r, c);
  const FactorPair f = truncated_svd(delta, r + c, svd);
  SparseFactorPair out = SparseFactorPair::empty(static_cast<std::uint32_t>(spec.n),
                                                 static_cast<std::uint32_t>(spec.d),
                                                 static_cast<std::uint32_t>(spec.k), r, c);
  out.entries_u = top_s_entries(f.u_prime, spec.s_u);
  out.entries_v = top_s_entries(f.v_prime, spec.s_v);
  return out;
}

SparseFactorPair compress_osd(const DenseMatrix& delta, const ImportanceMap& z, std::uint32_t r, std::uint32_t c,
                              const SvdOptions& svd) {
  if (z.rows() != delta.rows() || z.cols() != delta.cols())
    throw StructuralError("compress_osd: importance map is " + std::to_string(z.rows()) + "x" +
                          std::to_string(z.cols()) + " but the delta is " + std::to_string(delta.rows()) + "x" +
                          std::to_string(delta.cols()));
  const BudgetSpec spec = make_budget(delta.rows(), delta.cols(), r, c);
  const FactorPair f = truncated_svd(delta, r + c, svd);
  return joint_select(f, sensitivity(f, z), spec);
}

SparseMatrix compress_sparse_only(const DenseMatrix& delta, std::uint32_t r) {
  return top_s(delta, sparse_only_entries(delta.rows(), delta.cols(), r));
}

CompressedLayer compress_layer(Method method, const std::string& id, const DenseMatrix& delta,
                               const ImportanceMap& z, std::uint32_t r, std::uint32_t c, const SvdOptions& svd) {
  CompressedLayer layer;
  layer.id = id;
  layer.method = method;
  layer.n = static_cast<std::uint32_t>(delta.rows());
  layer.d = static_cast<std::uint32_t>(delta.cols());
  layer.r = r;
  switch (method) {
    case Method::TruncSvd:
      layer.payload = compress_truncsvd(delta, r, svd);
      break;
    case Method::SparseOnly:
      layer.payload = compress_sparse_only(delta, r);
      break;
    case Method::Mag:
      layer.c = c;
      layer.payload = compress_mag(delta, r, c, svd);
      break;
    case Method::Osd:
      layer.c = c;
      layer.payload = compress_osd(delta, z, r, c, svd);
      break;
  }
  if (!layer.within_budget())
    throw DataError("layer '" + id + "': " + std::to_string(layer.payload_bits().total_bits()) +
                    " payload bits exceed the budget of " + std::to_string(layer.budget_bits()));
  return layer;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<CompressedLayer> compress_layers(Method method, const LayerSet& deltas,
                                             const std::vector<ImportanceMap>& importance, std::uint32_t r,
                                             std::uint32_t c, unsigned threads, const SvdOptions& svd) {
  if (!importance.empty() && importance.size() != deltas.size())
    throw StructuralError("compress_layers: " + std::to_string(importance.size()) + " importance maps for " +
                          std::to_string(deltas.size()) + " layers");
  std::vector<CompressedLayer> out(deltas.size());
  parallel_for(deltas.size(), threads, [&](std::size_t i) {
    const auto& layer = deltas[i];
    try {
      ImportanceMap ones;
      if (method == Method::Osd && importance.empty()) ones = ones_importance(layer.matrix.rows(), layer.matrix.cols());
      const ImportanceMap& z = importance.empty() ? ones : importance[i];
      out[i] = compress_layer(method, layer.id, layer.matrix, z, r, c, svd);
    } catch (const Error& e) {
      if (std::string(e.what()).rfind("layer '", 0) == 0) throw;
      throw Error(e.kind(), "layer '" + layer.id + "': " + e.what());
    }
  });
  return out;
}

}  // namespace osd
