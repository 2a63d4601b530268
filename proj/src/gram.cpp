#include "ceb/gram.hpp"

#include <cmath>
#include <numbers>

namespace ceb {

DistanceMatrix pairwise_sq_dists(const Matrix& X, const Matrix& Xp) {
  require(X.rows() > 0 && Xp.rows() > 0, "pairwise_sq_dists: empty batch");
  require(X.cols() == Xp.cols(), "pairwise_sq_dists: dimension mismatch");
  const double d = static_cast<double>(X.cols());
  const Matrix cross = X * Xp.transpose();
  const Vector row_sq = X.array().square().rowwise().sum();
  const Vector col_sq = Xp.array().square().rowwise().sum();
  Matrix M = ((row_sq.replicate(1, Xp.rows()) +
               col_sq.transpose().replicate(X.rows(), 1) - 2.0 * cross) /
              d)
                 .cwiseMax(0.0);  // kill negative round-off
  return DistanceMatrix{std::move(M), X.cols()};
}

GramMatrix gauss_gram(const DistanceMatrix& M, double v) {
  require(v > 0.0, "gauss_gram: variance must be > 0");
  return GramMatrix{(-M.values / (2.0 * v)).array().exp(), v, true};
}

GramMatrix joint_gram(const DistanceMatrix& MX, double vX,
                      const DistanceMatrix& MY, double vY) {
  require(MX.rows() == MY.rows() && MX.cols() == MY.cols(),
          "joint_gram: shape mismatch");
  require(vX > 0.0 && vY > 0.0, "joint_gram: variance must be > 0");
  Matrix K =
      (-MX.values / (2.0 * vX) - MY.values / (2.0 * vY)).array().exp();
  return GramMatrix{std::move(K), vX, true};
}

Matrix gauss_diff_matrix(const Matrix& A, const Matrix& B, double variance,
                         bool stabilized) {
  require(variance > 0.0, "gauss_diff_matrix: variance must be > 0");
  const DistanceMatrix M = pairwise_sq_dists(A, B);
  const double d = static_cast<double>(M.d);
  if (stabilized) return (-M.values / (2.0 * variance)).array().exp();
  const double logc =
      -0.5 * d * std::log(2.0 * std::numbers::pi * variance);
  return ((-M.values * d / (2.0 * variance)).array() + logc).exp();
}

}  // namespace ceb
