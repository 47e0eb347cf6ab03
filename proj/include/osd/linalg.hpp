// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "osd/matio.hpp"

namespace osd {

/// Relaxed-rank SVD factors: u_prime = U_k * Sigma_k (n x k) and
/// v_prime = V_k^T (k x d). Columns of u_prime have norms equal to the
/// singular values; rows of v_prime are orthonormal.
struct FactorPair {
  DenseMatrix u_prime;
  DenseMatrix v_prime;
  Vector<float> singular_values;

  Eigen::Index rank() const { return v_prime.rows(); }
  Eigen::Index rows() const { return u_prime.rows(); }
  Eigen::Index cols() const { return v_prime.cols(); }
};

struct SvdOptions {
  // Below this many flops (min(n,d)^2 * max(n,d)) a full dense SVD is used;
  // above it, blocked subspace iteration on a k + oversample block.
  double dense_flop_limit = double(1 << 24);
  int oversample = 8;
  int min_power_iterations = 4;
  int max_iterations = 100;
  // Converged when the captured energy sum_j sigma_j^2 of the top k
  // changes by at most `tolerance` (relative) between iterations.
  double tolerance = 1e-6;
  // At max_iterations a change up to this bound is accepted: the remaining
  // drift comes from a flat tail where any basis is equally good in
  // Frobenius norm. Larger drift raises NumericError.
  double stagnation_tolerance = 1e-3;
};

/// Top-k truncated SVD with a fixed sign convention: for every singular
/// pair, the largest-magnitude entry of the right singular vector is
/// nonnegative (ties go to the lowest index). Computation runs in double.
/// Throws ArgumentError if k is outside [1, min(n,d)] and NumericError
/// if the iterative path does not converge.
FactorPair truncated_svd(const DenseMatrix& m, Eigen::Index k, const SvdOptions& options = {});

/// u_prime * v_prime, accumulated in double and rounded once to float.
DenseMatrix reconstruct(const FactorPair& f);

/// Product of two factor matrices with the same rounding rule as
/// `reconstruct`. Every reconstruction in the library goes through here.
DenseMatrix factor_product(const DenseMatrix& u, const DenseMatrix& v);

}  // namespace osd
