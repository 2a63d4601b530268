#pragma once

#include "ceb/common.hpp"

namespace ceb {

/// Pairwise squared L2 distances between two sample batches, divided by
/// the sample-space dimension d. Built with the three-term factorization
/// (cross products plus row-wise squared sums) so the N x K x d
/// intermediate never materializes.
struct DistanceMatrix {
  Matrix values;       // N x K, entries >= 0
  Eigen::Index d = 0;  // sample-space dimension

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Gaussian Gram matrix, entrywise exp(-M / (2v)) of a DistanceMatrix.
/// Stabilized by construction: no normalizing constant.
struct GramMatrix {
  Matrix values;
  double variance = 0.0;
  bool stabilized = true;
};

DistanceMatrix pairwise_sq_dists(const Matrix& X, const Matrix& Xp);

GramMatrix gauss_gram(const DistanceMatrix& M, double v);

/// Gram of the joint: exp(-MX/(2vX) - MY/(2vY)). Equals the elementwise
/// product of the two individual Grams.
GramMatrix joint_gram(const DistanceMatrix& MX, double vX,
                      const DistanceMatrix& MY, double vY);

/// N x K matrix of Gaussian differences N(A_i - B_j; v), either as true
/// isotropic densities or in the stabilized convention.
Matrix gauss_diff_matrix(const Matrix& A, const Matrix& B, double variance,
                         bool stabilized);

}  // namespace ceb
