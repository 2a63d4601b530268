#pragma once

#include "ceb/nn.hpp"

#include <functional>

namespace ceb {

/// Neural MI estimator. The Shannon variant optimizes the
/// Donsker-Varadhan value with a linear output head; the Renyi variant
/// optimizes a squared-mean over second-moment ratio and keeps its
/// output above 0.1 with a shifted sigmoid.
struct MineEstimator {
  enum class Variant { Shannon, Renyi };

  MlpNetwork net;
  Variant variant;

  static MineEstimator make(int d_x, int d_y, const std::vector<int>& hidden,
                            Variant variant, Rng& rng);
};

/// Objective value for a batch of joint pairs and within-batch shuffled
/// (marginal) pairs, both N x (d_x + d_y). Used to train the critic and,
/// through it, an encoder: the Tensor overload lets gradients flow back
/// into whatever produced the pairs.
Tensor mine_objective(const MineEstimator& est, const Tensor& joint,
                      const Tensor& marginal);
Tensor mine_objective(const MineEstimator& est, const Matrix& joint,
                      const Matrix& marginal);

struct KernelDependenceConfig {
  double v = 0.001;  // kernel variance
  double eps = 1.0;  // regularization constant

  void validate() const {
    require(v > 0.0 && eps > 0.0, "KernelDependenceConfig: v, eps must be > 0");
  }
};

/// KICA's kernel generalized variance from the positive half of the
/// symmetric generalized-eigenvalue spectrum.
double kica_kgv(const Matrix& X, const Matrix& Y,
                const KernelDependenceConfig& cfg = {});

/// HSIC's NOCCO statistic, the trace of the normalized cross-covariance.
double hsic_nocco(const Matrix& X, const Matrix& Y,
                  const KernelDependenceConfig& cfg = {});

/// Precomputed factors shared by the direct scores and their permutation
/// nulls: permuting Y rows conjugates B without recomputing kernels.
struct CenteredKernels {
  Matrix A1;  // (Rx + eps I)^-1 Rx, centered
  Matrix B;   // Ry (Ry + eps I)^-1, centered
};

CenteredKernels dependence_precompute(const Matrix& X, const Matrix& Y,
                                      const KernelDependenceConfig& cfg = {});

/// Score with Y rows permuted; the identity permutation gives the plain
/// score. perm may be empty for identity.
double kgv_score(const CenteredKernels& k, const std::vector<int>& perm = {});
double nocco_score(const CenteredKernels& k, const std::vector<int>& perm = {});

/// Null distribution of a score under row shuffles of Y.
std::vector<double> permutation_null(
    const CenteredKernels& k,
    const std::function<double(const CenteredKernels&, const std::vector<int>&)>&
        score,
    int replicates, Rng& rng);

}  // namespace ceb
