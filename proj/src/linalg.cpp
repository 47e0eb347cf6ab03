// SPDX-License-Identifier: Apache-2.0
#include "osd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "osd/error.hpp"

namespace osd {

namespace {

using MatD = Eigen::MatrixXd;
using VecD = Eigen::VectorXd;

struct Triplets {
  MatD u;  // n x k, orthonormal columns
  VecD s;  // k
  MatD v;  // d x k, orthonormal columns
};

Triplets dense_svd(const MatD& a, Eigen::Index k) {
  Eigen::BDCSVD<MatD> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU().leftCols(k), svd.singularValues().head(k), svd.matrixV().leftCols(k)};
}

MatD orthonormalize(const MatD& y) {
  Eigen::HouseholderQR<MatD> qr(y);
  return qr.householderQ() * MatD::Identity(y.rows(), y.cols());
}

// Blocked subspace iteration. Each step refines the column space Q of A
// through A^T and A; singular values are read off the small l x d
// projection B = Q^T A.
Triplets subspace_svd(const MatD& a, Eigen::Index k, const SvdOptions& opt) {
  const Eigen::Index n = a.rows(), d = a.cols();
  const Eigen::Index l = std::min<Eigen::Index>(k + opt.oversample, std::min(n, d));

  std::mt19937_64 rng(0x05D5EEDULL);
  std::normal_distribution<double> gauss;
  MatD omega(d, l);
  for (Eigen::Index i = 0; i < omega.size(); ++i) omega.data()[i] = gauss(rng);

  MatD q = orthonormalize(a * omega);
  double previous = -1.0;
  double change = 0.0;

  for (int it = 1;; ++it) {
    const MatD b = q.transpose() * a;  // l x d
    Eigen::JacobiSVD<MatD> small(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double energy = small.singularValues().head(k).squaredNorm();
    change = std::abs(energy - previous) / (energy > 0.0 ? energy : 1.0);
    previous = energy;

    const bool converged = it >= opt.min_power_iterations && change <= opt.tolerance;
    if (converged || (it >= opt.max_iterations && change <= opt.stagnation_tolerance))
      return {q * small.matrixU().leftCols(k), small.singularValues().head(k), small.matrixV().leftCols(k)};
    if (it >= opt.max_iterations) break;
    q = orthonormalize(a * orthonormalize(b.transpose()));
  }
  throw NumericError("truncated_svd: subspace iteration did not converge in " +
                         std::to_string(opt.max_iterations) + " iterations (relative energy change " +
                         std::to_string(change) + ")",
                     change);
}

void fix_signs(Triplets& t) {
  for (Eigen::Index j = 0; j < t.v.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < t.v.rows(); ++i) {
      const double m = std::abs(t.v(i, j));
      if (m > best_abs) {
        best_abs = m;
        best = i;
      }
    }
    if (t.v(best, j) < 0.0) {
      t.v.col(j) *= -1.0;
      t.u.col(j) *= -1.0;
    }
  }
}

}  // namespace

FactorPair truncated_svd(const DenseMatrix& m, Eigen::Index k, const SvdOptions& options) {
  const Eigen::Index n = m.rows(), d = m.cols();
  const Eigen::Index min_dim = std::min(n, d);
  if (k < 1 || k > min_dim)
    throw ArgumentError("truncated_svd: rank " + std::to_string(k) + " outside [1, " + std::to_string(min_dim) +
                        "] for a " + std::to_string(n) + "x" + std::to_string(d) + " matrix");
  if (!m.allFinite()) throw DataError("truncated_svd: input contains non-finite values");

  const MatD a = m.cast<double>();
  const double flops = double(min_dim) * double(min_dim) * double(std::max(n, d));
  const bool dense = flops <= options.dense_flop_limit || 4 * (k + options.oversample) >= min_dim;

  Triplets t = dense ? dense_svd(a, k) : subspace_svd(a, k, options);
  fix_signs(t);

  FactorPair f;
  f.u_prime = (t.u * t.s.asDiagonal()).cast<float>();
  f.v_prime = t.v.transpose().cast<float>();
  f.singular_values = t.s.cast<float>();
  return f;
}

DenseMatrix factor_product(const DenseMatrix& u, const DenseMatrix& v) {
  if (u.cols() != v.rows())
    throw IntegrityError("factor_product: inner dimensions differ (" + std::to_string(u.cols()) + " vs " +
                         std::to_string(v.rows()) + ")");
  if (u.cols() == 0) return DenseMatrix::Zero(u.rows(), v.cols());
  return (u.cast<double>() * v.cast<double>()).cast<float>();
}

DenseMatrix reconstruct(const FactorPair& f) { return factor_product(f.u_prime, f.v_prime); }

}  // namespace osd
