#pragma once

#include "ceb/nn.hpp"
#include "ceb/tensor.hpp"

namespace ceb {

/// Shared knobs for the training objectives. v_p smooths the data side,
/// v_q the model side; they are kept equal unless explicitly overridden.
/// epsilon guards the log in the KL cost.
struct LossConfig {
  double v_p = 0.01;
  double v_q = 0.01;
  bool stabilized = true;
  double epsilon = 1e-12;
  bool trainable_params = false;
  bool allow_unequal_variances = false;

  void validate() const;
};

/// Mean over data of log mean-over-generated Gaussian differences,
/// maximized. Uses v_q as the Gaussian variance.
Tensor kl_mdn_cost(const Matrix& X, const Tensor& Xgen,
                   const LossConfig& cfg);

struct NipResult {
  Tensor cost;    // <p,q>^2 / <q,q>
  Tensor inner;   // <p,q>
  Tensor q_norm;  // <q,q>
  double p_norm;  // <p,p>, the tracked upper bound
};

/// Normalized-inner-product cost for MDNs: the Cauchy-Schwarz ratio
/// bounded by the norm of the data mixture.
NipResult nip_cost(const Matrix& X, const Tensor& Xgen, const LossConfig& cfg);

/// Nuclear norm of the stabilized Gaussian cross Gram between a data
/// batch and a generated batch.
Tensor nuclear_cost(const Matrix& X, const Tensor& Xgen, double v);

/// Nuclear norm of the joint Gram built from the data/decoder pairs and
/// the prior/encoder pairs.
Tensor elbo_nuclear_cost(const Matrix& X, const Tensor& Xgen, const Matrix& Y,
                         const Tensor& Ygen, double vX, double vY);

struct CondNipResult {
  Tensor cost;
  Tensor inner;
  Tensor q_norm;
};

/// Conditional contrastive cost for the encoder-mixture-decoder. The
/// denominator pairs reconstructions only within each sample's fan.
CondNipResult conditional_nip_cost(const Matrix& X, const ReconFan& recon,
                                   const LossConfig& cfg);

struct ParametricResult {
  Tensor cost;
  Tensor inner;
  Tensor q_norm;
};

/// Marginal mixture cost with network-emitted weights and per-dimension
/// variances. Always evaluated with plain (constant-carrying) densities,
/// since trainable variances live in the normalizing constants.
ParametricResult parametric_mixture_cost(const Matrix& X, const Tensor& means,
                                         const Tensor& weights,
                                         const Tensor& variances,
                                         const LossConfig& cfg);

/// Per-sample fan with trainable weights and variances: element k holds
/// the k-th output's means (N x d), variances (N x d) and weights (N x 1,
/// normalized across k for each sample).
struct ParametricFan {
  std::vector<Tensor> means;
  std::vector<Tensor> variances;
  std::vector<Tensor> weights;

  int k() const { return static_cast<int>(means.size()); }
};

/// Conditional variant of the parametric cost.
ParametricResult parametric_conditional_cost(const Matrix& X,
                                             const ParametricFan& fan,
                                             const LossConfig& cfg);

/// Mean-over-dims squared distances between row batches as a graph op,
/// clamped at zero; shared by the loss builders.
Tensor ad_sq_dists(const Tensor& a, const Tensor& b);

/// Gaussian matrix from mean-normalized squared distances.
Tensor ad_gauss(const Tensor& mean_sq_dists, double variance, Eigen::Index d,
                bool stabilized);

}  // namespace ceb
