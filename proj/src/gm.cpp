#include "ceb/gm.hpp"

#include <cmath>
#include <numbers>

namespace ceb {

double pairwise_sum(std::span<const double> terms) {
  const std::size_t n = terms.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(terms.first(half)) + pairwise_sum(terms.subspan(half));
}

Gaussian::Gaussian(Vector mean_, Vector variance_)
    : mean(std::move(mean_)), variance(std::move(variance_)) {
  require(mean.size() > 0, "Gaussian: empty mean");
  require(variance.size() == 1 || variance.size() == mean.size(),
          "Gaussian: variance must be scalar or one entry per dimension");
  require(mean.allFinite(), "Gaussian: non-finite mean");
  require((variance.array() > 0.0).all(), "Gaussian: variance must be > 0");
}

Gaussian::Gaussian(Vector mean_, double isotropic_variance)
    : Gaussian(std::move(mean_), Vector::Constant(1, isotropic_variance)) {}

namespace {

void validate_mixture(const GaussianMixture& m) {
  require(!m.components.empty(),
          "GaussianMixture: needs at least one component");
  require(m.weights.size() == m.size(),
          "GaussianMixture: weight count mismatch");
  require((m.weights.array() >= 0.0).all(), "GaussianMixture: negative weight");
  require(std::abs(m.weights.sum() - 1.0) <= 1e-12,
          "GaussianMixture: weights must sum to 1");
  const Eigen::Index d = m.components.front().dim();
  for (const auto& c : m.components)
    require(c.dim() == d, "GaussianMixture: mixed dimensions");
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<Gaussian> components_,
                                 Vector weights_, bool stabilized_)
    : components(std::move(components_)),
      weights(std::move(weights_)),
      stabilized(stabilized_) {
  validate_mixture(*this);
}

GaussianMixture::GaussianMixture(std::vector<Gaussian> components_,
                                 bool stabilized_)
    : components(std::move(components_)), stabilized(stabilized_) {
  weights = Vector::Constant(size(), 1.0 / static_cast<double>(size()));
  validate_mixture(*this);
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// log N(delta; v) for a diagonal Gaussian, or the stabilized exponent.
double log_gauss_diff(const Gaussian& a, const Gaussian& b, bool stabilized) {
  const Eigen::Index d = a.dim();
  double expo = 0.0;
  double logconst = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double v = a.var(i) + b.var(i);
    const double delta = a.mean(i) - b.mean(i);
    expo += delta * delta / (2.0 * v);
    if (!stabilized) logconst += 0.5 * std::log(kTwoPi * v);
  }
  if (stabilized) return -expo / static_cast<double>(d);
  return -expo - logconst;
}

// Deterministic ordering of mixtures so that inner products are computed
// in a canonical argument order and symmetry holds exactly.
int mixture_order(const GaussianMixture& p, const GaussianMixture& q) {
  if (p.size() != q.size()) return p.size() < q.size() ? -1 : 1;
  if (p.dim() != q.dim()) return p.dim() < q.dim() ? -1 : 1;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p.weights(k) != q.weights(k)) return p.weights(k) < q.weights(k) ? -1 : 1;
    for (Eigen::Index i = 0; i < p.dim(); ++i) {
      const double pm = p.components[k].mean(i), qm = q.components[k].mean(i);
      if (pm != qm) return pm < qm ? -1 : 1;
      const double pv = p.components[k].var(i), qv = q.components[k].var(i);
      if (pv != qv) return pv < qv ? -1 : 1;
    }
  }
  return 0;
}

double inner_ordered(const GaussianMixture& p, const GaussianMixture& q) {
  const Eigen::Index n = p.size(), m = q.size();
  std::vector<double> rows(static_cast<std::size_t>(n));
  std::vector<double> terms(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      terms[static_cast<std::size_t>(j)] =
          p.weights(i) * q.weights(j) *
          std::exp(log_gauss_diff(p.components[i], q.components[j],
                                  p.stabilized));
    }
    rows[static_cast<std::size_t>(i)] = pairwise_sum(terms);
  }
  return pairwise_sum(rows);
}

}  // namespace

double gauss_inner(const Gaussian& a, const Gaussian& b, bool stabilized) {
  require(a.dim() == b.dim(), "gauss_inner: dimension mismatch");
  return std::exp(log_gauss_diff(a, b, stabilized));
}

double mixture_inner(const GaussianMixture& p, const GaussianMixture& q) {
  require(p.dim() == q.dim(), "mixture_inner: dimension mismatch");
  require(p.stabilized == q.stabilized,
          "mixture_inner: stabilization modes differ");
  return mixture_order(q, p) < 0 ? inner_ordered(q, p) : inner_ordered(p, q);
}

double mixture_norm(const GaussianMixture& p) { return inner_ordered(p, p); }

double mixture_moment(const GaussianMixture& p, int order, int max_order) {
  require(order >= 2, "mixture_moment: order must be >= 2");
  require(order <= max_order, "mixture_moment: order exceeds configured cap");
  require(!p.stabilized,
          "mixture_moment: closed form requires plain (non-stabilized) mode");
  const Eigen::Index n = p.size();
  const Eigen::Index d = p.dim();
  double tcount = std::pow(static_cast<double>(n), order);
  require(tcount <= 5e7, "mixture_moment: term count exceeds configured cap");

  // Integral over a product of `order` Gaussians per tuple, dimension by
  // dimension: complete the square with precisions tau = 1/v.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(order), 0);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(tcount));
  while (true) {
    double logterm = 0.0;
    double wprod = 1.0;
    for (int r = 0; r < order; ++r) wprod *= p.weights(idx[r]);
    for (Eigen::Index l = 0; l < d; ++l) {
      double tau_sum = 0.0, mtau = 0.0, m2tau = 0.0, logv = 0.0;
      for (int r = 0; r < order; ++r) {
        const Gaussian& g = p.components[static_cast<std::size_t>(idx[r])];
        const double v = g.var(l);
        const double m = g.mean(l);
        tau_sum += 1.0 / v;
        mtau += m / v;
        m2tau += m * m / v;
        logv += std::log(v);
      }
      const double residual = m2tau - mtau * mtau / tau_sum;
      logterm += -0.5 * (order - 1) * std::log(kTwoPi) -
                 0.5 * (logv + std::log(tau_sum)) - 0.5 * residual;
    }
    terms.push_back(wprod * std::exp(logterm));

    int r = order - 1;
    while (r >= 0 && ++idx[r] == n) idx[r--] = 0;
    if (r < 0) break;
  }
  return pairwise_sum(terms);
}

double eval_density(const GaussianMixture& p, const Vector& x) {
  require(x.size() == p.dim(), "eval_density: dimension mismatch");
  const Eigen::Index d = p.dim();
  std::vector<double> terms(static_cast<std::size_t>(p.size()));
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const Gaussian& g = p.components[static_cast<std::size_t>(k)];
    double expo = 0.0, logconst = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double delta = x(i) - g.mean(i);
      expo += delta * delta / (2.0 * g.var(i));
      if (!p.stabilized) logconst += 0.5 * std::log(kTwoPi * g.var(i));
    }
    const double lg = p.stabilized ? -expo / static_cast<double>(d)
                                   : -expo - logconst;
    terms[static_cast<std::size_t>(k)] = p.weights(k) * std::exp(lg);
  }
  return pairwise_sum(terms);
}

}  // namespace ceb
