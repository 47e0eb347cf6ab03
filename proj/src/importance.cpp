// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "osd/osd.hpp"

namespace osd {

ImportanceMap::ImportanceMap(DenseMatrix scores) : scores_(std::move(scores)) {
  const float* p = scores_.data();
  for (Eigen::Index i = 0; i < scores_.size(); ++i)
    if (!(p[i] >= 0.0f) || !std::isfinite(p[i]))
      throw DataError("importance map: entry at flat index " + std::to_string(i) + " is negative or non-finite");
}

ImportanceMap importance_from_gradient(const DenseMatrix& grad, const DenseMatrix& weights) {
  if (grad.rows() != weights.rows() || grad.cols() != weights.cols())
    throw StructuralError("importance_from_gradient: gradient is " + std::to_string(grad.rows()) + "x" +
                          std::to_string(grad.cols()) + " but weights are " + std::to_string(weights.rows()) +
                          "x" + std::to_string(weights.cols()));
  return ImportanceMap(grad.cwiseProduct(weights).cwiseAbs());
}

ImportanceMap ones_importance(Eigen::Index n, Eigen::Index d) { return ImportanceMap(DenseMatrix::Ones(n, d)); }

namespace {

struct Candidate {
  double q;
  bool in_v;
  std::uint64_t index;
  float value;
};

}  // namespace

SparseFactorPair joint_select(const FactorPair& f, const SensitivityPair<double>& q, const BudgetSpec& spec) {
  const auto n = static_cast<std::uint32_t>(f.rows()), d = static_cast<std::uint32_t>(f.cols()),
             k = static_cast<std::uint32_t>(f.rank());
  if (q.q_u.rows() != f.u_prime.rows() || q.q_u.cols() != f.u_prime.cols() || q.q_v.rows() != f.v_prime.rows() ||
      q.q_v.cols() != f.v_prime.cols())
    throw StructuralError("joint_select: sensitivity shapes do not match the factors");
  if (spec.n != n || spec.d != d || spec.k != k)
    throw StructuralError("joint_select: budget is for " + std::to_string(spec.n) + "x" + std::to_string(spec.d) +
                          " rank " + std::to_string(spec.k) + ", factors are " + std::to_string(n) + "x" +
                          std::to_string(d) + " rank " + std::to_string(k));

  SparseFactorPair out = SparseFactorPair::empty(n, d, k, static_cast<std::uint32_t>(spec.r),
                                                 static_cast<std::uint32_t>(spec.c));

  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(f.u_prime.size() + f.v_prime.size()));
  for (Eigen::Index i = 0; i < f.u_prime.size(); ++i)
    if (f.u_prime.data()[i] != 0.0f && q.q_u.data()[i] > 0.0)
      cands.push_back({q.q_u.data()[i], false, static_cast<std::uint64_t>(i), f.u_prime.data()[i]});
  for (Eigen::Index i = 0; i < f.v_prime.size(); ++i)
    if (f.v_prime.data()[i] != 0.0f && q.q_v.data()[i] > 0.0)
      cands.push_back({q.q_v.data()[i], true, static_cast<std::uint64_t>(i), f.v_prime.data()[i]});

  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.q != b.q) return a.q > b.q;
    if (a.in_v != b.in_v) return !a.in_v;
    return a.index < b.index;
  });

  const std::uint64_t cap = spec.cap_bits();
  const std::uint64_t cost_u = 32u + out.idx_bits_u, cost_v = 32u + out.idx_bits_v;
  std::uint64_t used = 0;
  for (const auto& c : cands) {
    const std::uint64_t cost = c.in_v ? cost_v : cost_u;
    if (used + cost > cap) break;
    used += cost;
    (c.in_v ? out.entries_v : out.entries_u).push_back({c.index, c.value});
  }

  const auto by_index = [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; };
  std::sort(out.entries_u.begin(), out.entries_u.end(), by_index);
  std::sort(out.entries_v.begin(), out.entries_v.end(), by_index);
  return out;
}

}  // namespace osd
