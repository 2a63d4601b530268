#pragma once

#include "ceb/common.hpp"

#include <vector>

namespace ceb {

/// A single Gaussian over R^d with a diagonal covariance. The variance
/// vector either has one entry per dimension or a single entry shared by
/// all dimensions (the isotropic case, stored compactly).
struct Gaussian {
  Vector mean;
  Vector variance;

  Gaussian(Vector mean_, Vector variance_);
  Gaussian(Vector mean_, double isotropic_variance);

  Eigen::Index dim() const { return mean.size(); }
  double var(Eigen::Index i) const {
    return variance.size() == 1 ? variance(0) : variance(i);
  }
};

/// Weighted Gaussian mixture. Weights are nonnegative and sum to one;
/// all components share the sample-space dimension.
///
/// `stabilized` selects the evaluation convention used for high
/// dimensions: the normalizing constant is dropped and the squared
/// distance in the exponent is averaged over dimensions instead of
/// summed. Stabilized and plain mixtures never mix in one expression.
struct GaussianMixture {
  std::vector<Gaussian> components;
  Vector weights;
  bool stabilized = false;

  GaussianMixture(std::vector<Gaussian> components_, Vector weights_,
                  bool stabilized_ = false);
  /// Uniform 1/N weights.
  explicit GaussianMixture(std::vector<Gaussian> components_,
                           bool stabilized_ = false);

  Eigen::Index dim() const { return components.front().dim(); }
  Eigen::Index size() const {
    return static_cast<Eigen::Index>(components.size());
  }
};

/// Closed-form inner product of two Gaussian densities,
/// the Gaussian of the mean difference with summed variances.
/// In stabilized mode the constant is dropped and the squared distance is
/// averaged over dimensions.
double gauss_inner(const Gaussian& a, const Gaussian& b,
                   bool stabilized = false);

/// Closed-form inner product of two mixtures: the weighted double sum of
/// component inner products. Exactly symmetric in its arguments.
double mixture_inner(const GaussianMixture& p, const GaussianMixture& q);

/// Closed-form squared L2 norm of a mixture.
double mixture_norm(const GaussianMixture& p);

/// Closed-form integral of p^order for integer order >= 2, by completing
/// the square over order-tuples of components. The sum has N^order terms,
/// so the order is capped (default 4) and the term count is guarded.
double mixture_moment(const GaussianMixture& p, int order, int max_order = 4);

/// Mixture density value at a point (stabilized variant when flagged).
double eval_density(const GaussianMixture& p, const Vector& x);

}  // namespace ceb
