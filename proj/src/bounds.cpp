#include "ceb/bounds.hpp"

#include "ceb/gram.hpp"
#include "ceb/losses.hpp"
#include "ceb/svd.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace ceb {

namespace {

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = normal(rng);
  return z;
}

void check_rows_positive(const Vector& den, const char* what) {
  if (!(den.minCoeff() > 0.0))
    throw std::runtime_error(std::string(what) +
                             ": denominator underflow; variances too small "
                             "for the sample spread");
}

}  // namespace

NoisySamplePair make_noisy_pairs(const Matrix& X, const Matrix& Y, double v_x,
                                 double v_y, Rng& rng) {
  require(X.rows() == Y.rows(), "make_noisy_pairs: batch sizes differ");
  require(X.rows() >= 2, "make_noisy_pairs: need at least two samples");
  require(v_x >= 0.0 && v_y >= 0.0, "make_noisy_pairs: negative variance");
  NoisySamplePair out;
  out.X = X;
  out.Y = Y;
  out.X_hat = X + std::sqrt(v_x) * standard_normal(X.rows(), X.cols(), rng);
  out.Y_hat = Y + std::sqrt(v_y) * standard_normal(Y.rows(), Y.cols(), rng);
  out.v_x = v_x;
  out.v_y = v_y;
  return out;
}

double estimate_p_cond_norm(const NoisySamplePair& pairs) {
  const Matrix Gx = gauss_diff_matrix(pairs.X_hat, pairs.X, pairs.v_x, false);
  const Matrix Gy = gauss_diff_matrix(pairs.Y_hat, pairs.Y, pairs.v_y, false);
  const Vector num = Gx.cwiseProduct(Gy).rowwise().sum();
  const Vector den = Gy.rowwise().sum();
  check_rows_positive(den, "estimate_p_cond_norm");
  return (num.array() / den.array()).mean();
}

namespace {

// Density-ratio terms shared by the two MI estimators. The additive
// noise of the assumed mixture is integrated out analytically: drawing
// X_hat = X_m + sqrt(v) z and evaluating a v-kernel mixture at X_hat is,
// in expectation over z, a 2v-kernel evaluation at X_m itself. The
// estimators therefore work on leave-one-out kernel sums at the sample
// points, which removes both the self-term inflation and the draw noise
// of the literal construction.
struct MiRatioTerms {
  Matrix Gx, Gy;
  Vector num, dx, dy;
  double scale = 0.0;  // N - 1 components remain in each sum
};

MiRatioTerms mi_ratio_terms(const NoisySamplePair& pairs, double bandwidth,
                            const char* what) {
  MiRatioTerms t;
  t.Gx = gauss_diff_matrix(pairs.X, pairs.X, bandwidth * pairs.v_x, false);
  t.Gy = gauss_diff_matrix(pairs.Y, pairs.Y, bandwidth * pairs.v_y, false);
  t.Gx.diagonal().setZero();
  t.Gy.diagonal().setZero();
  t.num = t.Gx.cwiseProduct(t.Gy).rowwise().sum();
  t.dx = t.Gx.rowwise().sum();
  t.dy = t.Gy.rowwise().sum();
  t.scale = static_cast<double>(pairs.X.rows()) - 1.0;
  check_rows_positive(t.dx, what);
  check_rows_positive(t.dy, what);
  return t;
}

}  // namespace

double estimate_shannon_mi(const NoisySamplePair& pairs) {
  // Kernel variance 3v: 2v from integrating the draw noise out plus one
  // extra bandwidth step that concentrates the sparse joint sums; the
  // estimand stays exactly zero under independence for any width.
  const MiRatioTerms t = mi_ratio_terms(pairs, 3.0, "estimate_shannon_mi");
  check_rows_positive(t.num, "estimate_shannon_mi");
  const Eigen::Index n = pairs.X.rows();
  Vector value =
      (t.scale * t.num.array() / (t.dx.array() * t.dy.array())).log();

  // Second-order correction of the log of each kernel sum (with the
  // cross-covariances; num shares its factors with dx and dy).
  for (Eigen::Index m = 0; m < n; ++m) {
    double vn = 0, vx = 0, vy = 0, cnx = 0, cny = 0, cxy = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == m) continue;
      const double tx = t.Gx(m, j), ty = t.Gy(m, j), tj = tx * ty;
      vn += tj * tj;
      vx += tx * tx;
      vy += ty * ty;
      cnx += tj * tx;
      cny += tj * ty;
      cxy += tx * ty;
    }
    const double num = t.num(m), dx = t.dx(m), dy = t.dy(m);
    vn -= num * num / t.scale;
    vx -= dx * dx / t.scale;
    vy -= dy * dy / t.scale;
    cnx -= num * dx / t.scale;
    cny -= num * dy / t.scale;
    cxy -= dx * dy / t.scale;
    value(m) += vn / (2 * num * num) - vx / (2 * dx * dx) -
                vy / (2 * dy * dy) - cnx / (num * dx) - cny / (num * dy) +
                cxy / (dx * dy);
  }
  return value.mean();
}

double estimate_renyi_mi(const NoisySamplePair& pairs) {
  const MiRatioTerms t = mi_ratio_terms(pairs, 2.0, "estimate_renyi_mi");
  return (t.scale * t.num.array() / (t.dx.array() * t.dy.array())).mean();
}

CostTerms estimate_cost_terms(const NoisySamplePair& pairs,
                              const std::vector<Matrix>& recon, double v_q) {
  require(!recon.empty(), "estimate_cost_terms: empty reconstruction fan");
  require(v_q > 0.0, "estimate_cost_terms: v_q must be > 0");
  const Eigen::Index n = pairs.X.rows();
  const Eigen::Index d = pairs.X.cols();
  const int K = static_cast<int>(recon.size());
  for (const auto& r : recon)
    require(r.rows() == n && r.cols() == d,
            "estimate_cost_terms: fan shape mismatch");

  const double N = static_cast<double>(n);
  const double Kd = static_cast<double>(K);
  const double v_cross = pairs.v_x + v_q;
  const double logc_cross =
      -0.5 * d * std::log(2.0 * std::numbers::pi * v_cross);
  const double logc_qq =
      -0.5 * d * std::log(2.0 * std::numbers::pi * 2.0 * v_q);

  double inner = 0.0;
  for (int k = 0; k < K; ++k) {
    const Vector sq =
        (pairs.X - recon[k]).array().square().rowwise().sum();
    inner += (logc_cross - sq.array() / (2.0 * v_cross)).exp().sum();
  }
  inner /= N * Kd;

  double q_norm = 0.0;
  for (int i = 0; i < K; ++i) {
    q_norm += N * std::exp(logc_qq);  // i == j diagonal
    for (int j = i + 1; j < K; ++j) {
      const Vector sq = (recon[i] - recon[j]).array().square().rowwise().sum();
      q_norm += 2.0 * (logc_qq - sq.array() / (4.0 * v_q)).exp().sum();
    }
  }
  q_norm /= N * Kd * Kd;
  if (!(q_norm > 0.0))
    throw std::runtime_error("estimate_cost_terms: q_norm underflow");

  return CostTerms{inner, q_norm, inner * inner / q_norm};
}

HighDimTerms highdim_cost_bound(const Matrix& X,
                                const std::vector<Matrix>& recon,
                                const Matrix& Y, const Matrix& Y_hat,
                                double v_x, double v_y, double v_q) {
  if (v_q != v_x)
    throw std::invalid_argument(
        "highdim_cost_bound: the derivation assumes v_q == v_x");
  require(!recon.empty(), "highdim_cost_bound: empty reconstruction fan");
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const int K = static_cast<int>(recon.size());
  const double dd = static_cast<double>(d);

  // All terms share exp(-||.||^2 / (4 v_x d)), the constants cancelled.
  auto rel_exp = [&](const Matrix& A, const Matrix& B) -> Matrix {
    const DistanceMatrix M = pairwise_sq_dists(A, B);
    return (-M.values * dd / (4.0 * v_x * dd)).array().exp();
  };

  double num = 0.0;
  for (int k = 0; k < K; ++k) {
    const Vector sq = (X - recon[k]).array().square().rowwise().sum();
    num += (-sq.array() / (4.0 * v_x * dd)).exp().sum();
  }
  double den = 0.0;
  for (int i = 0; i < K; ++i) {
    den += static_cast<double>(n);  // i == j
    for (int j = i + 1; j < K; ++j) {
      const Vector sq = (recon[i] - recon[j]).array().square().rowwise().sum();
      den += 2.0 * (-sq.array() / (4.0 * v_x * dd)).exp().sum();
    }
  }
  const double cost_new = num * num / den / static_cast<double>(n);

  const Matrix Exx = rel_exp(X, X);
  const Matrix Gy = gauss_diff_matrix(Y_hat, Y, v_y, true);
  const Vector bnum = Exx.cwiseProduct(Gy).rowwise().sum();
  const Vector bden = Gy.rowwise().sum();
  check_rows_positive(bden, "highdim_cost_bound");
  const double bound_new = (bnum.array() / bden.array()).mean();

  return HighDimTerms{cost_new, bound_new};
}

DecompositionReport discrete_decomposition_check(const Vector& P,
                                                 const Vector& Q,
                                                 const Matrix& grid,
                                                 double v) {
  require(P.size() == grid.rows() && Q.size() == grid.rows(),
          "discrete_decomposition_check: grids mismatched");
  require((P.array() >= 0.0).all() && (Q.array() >= 0.0).all(),
          "discrete_decomposition_check: densities must be nonnegative");
  require(std::abs(P.sum() - 1.0) <= 1e-9 && std::abs(Q.sum() - 1.0) <= 1e-9,
          "discrete_decomposition_check: densities must sum to 1");
  require(v > 0.0, "discrete_decomposition_check: variance must be > 0");

  const Matrix K = gauss_diff_matrix(grid, grid, 2.0 * v, false);
  const Matrix A = P.cwiseSqrt().asDiagonal() * K * Q.cwiseSqrt().asDiagonal();
  const SvdResult dec = svd(A);
  const double value = dec.S.sum();
  const double bound = std::pow(
      2.0 * std::numbers::pi * 2.0 * v, -0.5 * static_cast<double>(grid.cols()));
  return DecompositionReport{value, bound, value <= bound * (1.0 + 1e-9)};
}

namespace {

// Leave-one-out ratio terms for the differentiable MI objectives,
// mirroring the plain estimators (without the second-order correction,
// which only matters for reading values off, not for ascent).
struct MiParts {
  Tensor num;  // N x 1, row sums of Gx .* Gy, self terms excluded
  Tensor dy;   // N x 1, row sums of Gy
  Matrix dx;   // N x 1, row sums of the constant Gx
};

MiParts mi_objective_parts(const Matrix& X, const Tensor& Y, double v_x,
                           double v_y, double bandwidth) {
  require(v_x > 0.0 && v_y > 0.0, "mi objective: variances must be > 0");
  Matrix Gx = gauss_diff_matrix(X, X, bandwidth * v_x, false);
  Gx.diagonal().setZero();
  Matrix mask = Matrix::Ones(Y.rows(), Y.rows());
  mask.diagonal().setZero();
  Tensor Gy = mul(ad_gauss(ad_sq_dists(Y, Y), bandwidth * v_y, Y.cols(),
                           false),
                  Tensor::constant(mask));
  MiParts parts;
  parts.num = row_sum(mul(Tensor::constant(Gx), Gy));
  parts.dy = row_sum(Gy);
  parts.dx = Gx.rowwise().sum();
  return parts;
}

}  // namespace

Tensor p_cond_norm_objective(const Matrix& X, const Matrix& X_hat,
                             const Tensor& Y, const Matrix& y_noise,
                             double v_x, double v_y) {
  require(v_x > 0.0 && v_y > 0.0,
          "p_cond_norm_objective: variances must be > 0");
  require(y_noise.rows() == Y.rows() && y_noise.cols() == Y.cols(),
          "p_cond_norm_objective: noise shape mismatch");
  const Matrix Gx = gauss_diff_matrix(X_hat, X, v_x, false);
  Tensor Y_hat = add(Y, Tensor::constant(std::sqrt(v_y) * y_noise));
  Tensor Gy = ad_gauss(ad_sq_dists(Y_hat, Y), v_y, Y.cols(), false);
  Tensor num = row_sum(mul(Tensor::constant(Gx), Gy));
  return mean(div(num, row_sum(Gy)));
}

Tensor shannon_mi_objective(const Matrix& X, const Tensor& Y, double v_x,
                            double v_y) {
  const double scale = static_cast<double>(X.rows()) - 1.0;
  MiParts parts = mi_objective_parts(X, Y, v_x, v_y, 3.0);
  Tensor ratio = div(parts.num, mul(Tensor::constant(parts.dx), parts.dy));
  return mean(log(scalar_mul(scale, ratio)));
}

Tensor renyi_mi_objective(const Matrix& X, const Tensor& Y, double v_x,
                          double v_y) {
  const double scale = static_cast<double>(X.rows()) - 1.0;
  MiParts parts = mi_objective_parts(X, Y, v_x, v_y, 2.0);
  Tensor ratio = div(parts.num, mul(Tensor::constant(parts.dx), parts.dy));
  return scalar_mul(scale, mean(ratio));
}

void write_bound_reports_csv(const std::vector<BoundReport>& reports,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "iteration,cost,bound,inner,q_norm,shannon_mi,renyi_mi\n";
  char buf[64];
  auto fmt = [&buf](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : reports) {
    out << r.iteration << ',' << fmt(r.cost) << ',' << fmt(r.bound) << ','
        << fmt(r.inner) << ',' << fmt(r.q_norm) << ','
        << fmt(r.shannon_mi.value_or(nan)) << ','
        << fmt(r.renyi_mi.value_or(nan)) << '\n';
  }
}

}  // namespace ceb
