// Test-only oracles, independent of the library code paths they check.
#pragma once

#include "ceb/gm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using ceb::Matrix;
using ceb::Vector;

// Adaptive Simpson quadrature on [a, b].
inline double simpson_segment(const std::function<double(double)>& f, double a,
                              double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double b, double fa, double fm,
                               double fb, double whole, double tol,
                               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson_segment(f, a, m, fa, flm, fm);
  const double right = simpson_segment(f, m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

inline double integrate_1d(const std::function<double(double)>& f, double a,
                           double b, double tol = 1e-11) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = simpson_segment(f, a, b, fa, fm, fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

// Integration box extending 8 sigma past the extreme centers, per axis.
inline std::pair<Vector, Vector> mixture_box(const ceb::GaussianMixture& p) {
  const Eigen::Index d = p.dim();
  Vector lo = Vector::Constant(d, std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(d, -std::numeric_limits<double>::infinity());
  for (const auto& c : p.components) {
    for (Eigen::Index l = 0; l < d; ++l) {
      const double s = std::sqrt(c.var(l));
      lo(l) = std::min(lo(l), c.mean(l) - 8.0 * s);
      hi(l) = std::max(hi(l), c.mean(l) + 8.0 * s);
    }
  }
  return {lo, hi};
}

// Composite Simpson on a 2-D box with n panels per axis (n even).
inline double integrate_2d(const std::function<double(double, double)>& f,
                           const Vector& lo, const Vector& hi, int n = 512) {
  if (n % 2 == 1) ++n;
  const double hx = (hi(0) - lo(0)) / n;
  const double hy = (hi(1) - lo(1)) / n;
  auto w = [n](int i) {
    if (i == 0 || i == n) return 1.0;
    return i % 2 == 1 ? 4.0 : 2.0;
  };
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo(0) + i * hx;
    double row = 0.0;
    for (int j = 0; j <= n; ++j) row += w(j) * f(x, lo(1) + j * hy);
    total += w(i) * row;
  }
  return total * hx * hy / 9.0;
}

inline double quad_mixture_product(const ceb::GaussianMixture& p,
                                   const ceb::GaussianMixture& q) {
  auto [plo, phi] = mixture_box(p);
  auto [qlo, qhi] = mixture_box(q);
  const Vector lo = plo.cwiseMin(qlo), hi = phi.cwiseMax(qhi);
  if (p.dim() == 1) {
    return integrate_1d(
        [&](double x) {
          Vector v(1);
          v << x;
          return ceb::eval_density(p, v) * ceb::eval_density(q, v);
        },
        lo(0), hi(0));
  }
  return integrate_2d(
      [&](double x, double y) {
        Vector v(2);
        v << x, y;
        return ceb::eval_density(p, v) * ceb::eval_density(q, v);
      },
      lo, hi);
}

inline double quad_mixture_power(const ceb::GaussianMixture& p, int order) {
  auto [lo, hi] = mixture_box(p);
  if (p.dim() == 1) {
    return integrate_1d(
        [&](double x) {
          Vector v(1);
          v << x;
          return std::pow(ceb::eval_density(p, v), order);
        },
        lo(0), hi(0));
  }
  return integrate_2d(
      [&](double x, double y) {
        Vector v(2);
        v << x, y;
        return std::pow(ceb::eval_density(p, v), order);
      },
      lo, hi);
}

// Naive O(N K d) pairwise squared distances divided by d.
inline Matrix naive_sq_dists(const Matrix& X, const Matrix& Xp) {
  Matrix M(X.rows(), Xp.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < Xp.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < X.cols(); ++l) {
        const double dlt = X(i, l) - Xp(j, l);
        s += dlt * dlt;
      }
      M(i, j) = s / static_cast<double>(X.cols());
    }
  return M;
}

// Plain k-means with k-means++ style seeding for cluster-recovery checks.
inline std::pair<Matrix, double> kmeans_once(const Matrix& X, int k,
                                             int iters, ceb::Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, X.rows() - 1);
  Matrix centers(k, X.cols());
  centers.row(0) = X.row(pick(rng));
  for (int c = 1; c < k; ++c) {
    // Farthest-point seeding over a random subsample.
    double best_dist = -1.0;
    Eigen::Index best_i = 0;
    for (int probe = 0; probe < 256; ++probe) {
      const Eigen::Index i = pick(rng);
      double nearest = std::numeric_limits<double>::infinity();
      for (int c2 = 0; c2 < c; ++c2)
        nearest =
            std::min(nearest, (X.row(i) - centers.row(c2)).squaredNorm());
      if (nearest > best_dist) {
        best_dist = nearest;
        best_i = i;
      }
    }
    centers.row(c) = X.row(best_i);
  }
  std::vector<int> assign(static_cast<std::size_t>(X.rows()), 0);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dist = (X.row(i) - centers.row(c)).squaredNorm();
        if (dist < best) {
          best = dist;
          assign[static_cast<std::size_t>(i)] = c;
        }
      }
    }
    Matrix sums = Matrix::Zero(k, X.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
  }
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    inertia +=
        (X.row(i) - centers.row(assign[static_cast<std::size_t>(i)]))
            .squaredNorm();
  return {centers, inertia};
}

inline std::pair<Matrix, double> kmeans(const Matrix& X, int k, int iters,
                                        ceb::Rng& rng, int restarts = 5) {
  auto best = kmeans_once(X, k, iters, rng);
  for (int r = 1; r < restarts; ++r) {
    auto next = kmeans_once(X, k, iters, rng);
    if (next.second < best.second) best = std::move(next);
  }
  return best;
}

// Lilliefors-style KS distance against a normal with estimated moments.
inline double ks_normal_distance(std::vector<double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n - 1.0;
  const double sd = std::sqrt(var);
  std::sort(xs.begin(), xs.end());
  double dmax = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double z = (xs[i] - mean) / sd;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    dmax = std::max({dmax, std::abs(cdf - lo), std::abs(cdf - hi)});
  }
  return dmax;
}

inline double percentile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * (static_cast<double>(xs.size()) - 1.0);
  const std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= xs.size()) return xs.back();
  const double frac = pos - static_cast<double>(i);
  return xs[i] * (1.0 - frac) + xs[i + 1] * frac;
}

inline ceb::GaussianMixture random_mixture(int n_components, int dim,
                                           ceb::Rng& rng,
                                           bool stabilized = false) {
  std::uniform_real_distribution<double> center(-2.0, 2.0);
  std::uniform_real_distribution<double> var(0.05, 1.0);
  std::uniform_real_distribution<double> wraw(0.1, 1.0);
  std::vector<ceb::Gaussian> comps;
  Vector weights(n_components);
  for (int k = 0; k < n_components; ++k) {
    Vector m(dim), v(dim);
    for (int l = 0; l < dim; ++l) {
      m(l) = center(rng);
      v(l) = var(rng);
    }
    comps.emplace_back(std::move(m), std::move(v));
    weights(k) = wraw(rng);
  }
  weights /= weights.sum();
  // Renormalize exactly; the constructor checks to 1e-12.
  weights(n_components - 1) += 1.0 - weights.sum();
  return ceb::GaussianMixture(std::move(comps), std::move(weights),
                              stabilized);
}

}  // namespace oracle
