// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "osd/budget.hpp"
#include "osd/error.hpp"
#include "osd/linalg.hpp"
#include "osd/sparsify.hpp"

namespace osd {

/// Nonnegative per-parameter importance scores for one n x d layer.
class ImportanceMap {
 public:
  ImportanceMap() = default;
  // Throws DataError on negative or non-finite entries.
  explicit ImportanceMap(DenseMatrix scores);

  const DenseMatrix& matrix() const { return scores_; }
  Eigen::Index rows() const { return scores_.rows(); }
  Eigen::Index cols() const { return scores_.cols(); }

 private:
  DenseMatrix scores_;
};

/// First-order Taylor saliency |grad .* weights|.
ImportanceMap importance_from_gradient(const DenseMatrix& grad, const DenseMatrix& weights);

/// All-ones map; turns the weighted sensitivities into plain L1 row/column
/// perturbation costs.
ImportanceMap ones_importance(Eigen::Index n, Eigen::Index d);

/// Cost of zeroing each factor entry:
///   q_u(i,j) = sum_t Z(i,t) |U'(i,j) V'(j,t)|
///   q_v(i,j) = sum_t Z(t,j) |U'(t,i) V'(i,j)|
template <typename Scalar>
struct SensitivityPair {
  Matrix<Scalar> q_u;  // n x k
  Matrix<Scalar> q_v;  // k x d
};

/// Factored evaluation of the sensitivities. Since |U'(i,j) V'(j,t)| =
/// |U'(i,j)| |V'(j,t)|, both sums collapse into two products,
///   q_u = |U'| .* (Z |V'|^T)   and   q_v = |V'| .* (|U'|^T Z),
/// for O(n d k) total work.
template <typename Scalar = double, typename DU, typename DV, typename DZ>
SensitivityPair<Scalar> sensitivity(const Eigen::MatrixBase<DU>& u_prime, const Eigen::MatrixBase<DV>& v_prime,
                                    const Eigen::MatrixBase<DZ>& z) {
  if (u_prime.cols() != v_prime.rows() || z.rows() != u_prime.rows() || z.cols() != v_prime.cols())
    throw StructuralError("sensitivity: shapes U' " + std::to_string(u_prime.rows()) + "x" +
                          std::to_string(u_prime.cols()) + ", V' " + std::to_string(v_prime.rows()) + "x" +
                          std::to_string(v_prime.cols()) + ", Z " + std::to_string(z.rows()) + "x" +
                          std::to_string(z.cols()) + " are inconsistent");
  const Matrix<Scalar> abs_u = u_prime.template cast<Scalar>().cwiseAbs();
  const Matrix<Scalar> abs_v = v_prime.template cast<Scalar>().cwiseAbs();
  const Matrix<Scalar> zs = z.template cast<Scalar>();

  SensitivityPair<Scalar> q;
  q.q_u.noalias() = zs * abs_v.transpose();
  q.q_u.array() *= abs_u.array();
  q.q_v.noalias() = abs_u.transpose() * zs;
  q.q_v.array() *= abs_v.array();
  return q;
}

inline SensitivityPair<double> sensitivity(const FactorPair& f, const ImportanceMap& z) {
  return sensitivity<double>(f.u_prime, f.v_prime, z.matrix());
}

/// Global selection over the concatenated sensitivities [q_u q_v].
/// Candidates are the nonzero factor entries with q > 0, ranked by q descending, then
/// U' before V', then lower flat index. The ranked prefix is kept while its
/// exact payload (32 + index width bits per entry) fits 32 r (n + d);
/// selection stops at the first entry that does not fit.
SparseFactorPair joint_select(const FactorPair& f, const SensitivityPair<double>& q, const BudgetSpec& spec);

}  // namespace osd
