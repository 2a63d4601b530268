#include "ceb/baselines.hpp"

#include "ceb/gram.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ceb {

MineEstimator MineEstimator::make(int d_x, int d_y,
                                  const std::vector<int>& hidden,
                                  Variant variant, Rng& rng) {
  std::vector<int> widths;
  widths.push_back(d_x + d_y);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  const Activation out = variant == Variant::Shannon
                             ? Activation::Linear
                             : Activation::SigmoidShift;
  return MineEstimator{MlpNetwork(widths, rng, Activation::Tanh, out),
                       variant};
}

Tensor mine_objective(const MineEstimator& est, const Tensor& joint,
                      const Tensor& marginal) {
  require(joint.cols() == est.net.input_width() &&
              marginal.cols() == est.net.input_width(),
          "mine_objective: pair width mismatch");
  require(joint.rows() > 0 && marginal.rows() > 0,
          "mine_objective: empty batch");
  Tensor fj = est.net.forward(joint);
  Tensor fm = est.net.forward(marginal);
  if (est.variant == MineEstimator::Variant::Shannon) {
    Tensor m = mean(exp(fm));
    if (!(m.scalar_value() > 0.0))
      throw std::runtime_error("mine_objective: log of non-positive mean");
    return sub(mean(fj), log(m));
  }
  return div(square(mean(fj)), mean(square(fm)));
}

Tensor mine_objective(const MineEstimator& est, const Matrix& joint,
                      const Matrix& marginal) {
  return mine_objective(est, Tensor::constant(joint),
                        Tensor::constant(marginal));
}

namespace {

Matrix centered_gram(const Matrix& Z, const KernelDependenceConfig& cfg) {
  Matrix R = gauss_diff_matrix(Z, Z, 2.0 * cfg.v, true);
  const Eigen::Index n = R.rows();
  const Matrix H =
      Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / double(n));
  return H * R * H;
}

// Inverse of the SPD matrix (R + eps I) via symmetric eigendecomposition
// with an eigenvalue floor.
Matrix regularized_inverse(const Matrix& R, double eps) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(R);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("kernel dependence: eigendecomposition failed");
  Vector lam = (eig.eigenvalues().array() + eps).max(1e-10);
  return eig.eigenvectors() * lam.cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

Matrix permute_conjugate(const Matrix& B, const std::vector<int>& perm) {
  if (perm.empty()) return B;
  const Eigen::Index n = B.rows();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = B(perm[i], perm[j]);
  return out;
}

}  // namespace

CenteredKernels dependence_precompute(const Matrix& X, const Matrix& Y,
                                      const KernelDependenceConfig& cfg) {
  cfg.validate();
  require(X.rows() == Y.rows(), "kernel dependence: batch sizes differ");
  require(X.rows() >= 4, "kernel dependence: batch too small");
  const Matrix Rx = centered_gram(X, cfg);
  const Matrix Ry = centered_gram(Y, cfg);
  CenteredKernels k;
  k.A1 = regularized_inverse(Rx, cfg.eps) * Rx;
  k.B = Ry * regularized_inverse(Ry, cfg.eps);
  return k;
}

double kgv_score(const CenteredKernels& k, const std::vector<int>& perm) {
  const Matrix C = k.A1 * permute_conjugate(k.B, perm);
  // Positive half of the symmetric generalized-eigenvalue spectrum:
  // the singular values of C, obtained from the eigenvalues of C^T C.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(C.transpose() * C);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("kica_kgv: eigendecomposition failed");
  const Vector s2 = eig.eigenvalues().cwiseMax(0.0).cwiseMin(1.0 - 1e-12);
  return -0.5 * (1.0 - s2.array()).log().sum();
}

double nocco_score(const CenteredKernels& k, const std::vector<int>& perm) {
  if (perm.empty()) return (k.A1.array() * k.B.transpose().array()).sum();
  // trace(A1 P B P^T) without forming the product.
  const Eigen::Index n = k.A1.rows();
  double tr = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      tr += k.A1(i, j) * k.B(perm[j], perm[i]);
  return tr;
}

double kica_kgv(const Matrix& X, const Matrix& Y,
                const KernelDependenceConfig& cfg) {
  return kgv_score(dependence_precompute(X, Y, cfg));
}

double hsic_nocco(const Matrix& X, const Matrix& Y,
                  const KernelDependenceConfig& cfg) {
  return nocco_score(dependence_precompute(X, Y, cfg));
}

std::vector<double> permutation_null(
    const CenteredKernels& k,
    const std::function<double(const CenteredKernels&,
                               const std::vector<int>&)>& score,
    int replicates, Rng& rng) {
  require(replicates >= 1, "permutation_null: replicates must be >= 1");
  std::vector<int> perm(static_cast<std::size_t>(k.B.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> null;
  null.reserve(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    std::shuffle(perm.begin(), perm.end(), rng);
    null.push_back(score(k, perm));
  }
  return null;
}

}  // namespace ceb
