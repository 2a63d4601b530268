#pragma once

#include "ceb/tensor.hpp"

#include <optional>
#include <vector>

namespace ceb {

/// Samples and features with their additive-Gaussian-noise copies,
/// X_hat = X + sqrt(v_x) z and Y_hat = Y + sqrt(v_y) s. The hats realize
/// draws from the assumed mixture joint.
struct NoisySamplePair {
  Matrix X, Y, X_hat, Y_hat;
  double v_x = 0.0, v_y = 0.0;
};

NoisySamplePair make_noisy_pairs(const Matrix& X, const Matrix& Y, double v_x,
                                 double v_y, Rng& rng);

/// Ratio-of-sums estimator of ||p(X|Y)||^2 under p(Y), the upper bound of
/// the conditional contrastive cost.
double estimate_p_cond_norm(const NoisySamplePair& pairs);

/// Sample estimator of Shannon mutual information (nats) under the
/// mixture assumption. The draw noise is integrated out analytically, so
/// the estimate depends on the samples and variances of the pair, not on
/// the particular hat realizations.
double estimate_shannon_mi(const NoisySamplePair& pairs);

/// Sample estimator of the Renyi-type ratio integral; 1 for independent
/// data, larger under dependence. Noise integrated out as above.
double estimate_renyi_mi(const NoisySamplePair& pairs);

struct CostTerms {
  double inner = 0.0;
  double q_norm = 0.0;
  double cost = 0.0;
};

/// Cost-side terms of the conditional bound from a reconstruction fan
/// built on the noisy features (plain densities, low-dimensional data).
CostTerms estimate_cost_terms(const NoisySamplePair& pairs,
                              const std::vector<Matrix>& recon, double v_q);

struct HighDimTerms {
  double cost_new = 0.0;
  double bound_new = 0.0;
};

/// Relative cost/bound for high-dimensional data with the Gaussian
/// constants cancelled on both sides; requires v_q == v_x. Both values
/// lie in (0, 1].
HighDimTerms highdim_cost_bound(const Matrix& X,
                                const std::vector<Matrix>& recon,
                                const Matrix& Y, const Matrix& Y_hat,
                                double v_x, double v_y, double v_q);

struct DecompositionReport {
  double value = 0.0;   // nuclear norm of diag(sqrt P) K diag(sqrt Q)
  double bound = 0.0;   // Gaussian at zero, N(0; 2v)
  bool holds = false;
};

/// Discrete check of the decomposition lemma on a common grid: the
/// nuclear norm is bounded by N(0; 2v) with equality when P == Q.
DecompositionReport discrete_decomposition_check(const Vector& P,
                                                 const Vector& Q,
                                                 const Matrix& grid, double v);

// Differentiable versions of the direct objectives, for training an
// encoder against the bound or the MI estimators. For the bound, X and
// its noisy copy are data constants; Y is the encoder output and y_noise
// the standard normal draws that build Y_hat = Y + sqrt(v_y) * y_noise.
// The MI objectives mirror the sample estimators and need no draws.
Tensor p_cond_norm_objective(const Matrix& X, const Matrix& X_hat,
                             const Tensor& Y, const Matrix& y_noise,
                             double v_x, double v_y);
Tensor shannon_mi_objective(const Matrix& X, const Tensor& Y, double v_x,
                            double v_y);
Tensor renyi_mi_objective(const Matrix& X, const Tensor& Y, double v_x,
                          double v_y);

/// One tracked row of a training run.
struct BoundReport {
  long iteration = 0;
  double cost = 0.0;
  double bound = 0.0;
  double inner = 0.0;
  double q_norm = 0.0;
  std::optional<double> shannon_mi;
  std::optional<double> renyi_mi;
};

/// Fixed-schema CSV: header plus one row per report, columns
/// iteration,cost,bound,inner,q_norm,shannon_mi,renyi_mi.
void write_bound_reports_csv(const std::vector<BoundReport>& reports,
                             const std::string& path);

}  // namespace ceb
