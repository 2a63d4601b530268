#include "ceb/bounds.hpp"

#include "ceb/gm.hpp"
#include "ceb/gram.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace ceb;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

// Correlated bivariate normal pairs (X, Y) with unit marginals.
std::pair<Matrix, Matrix> bivariate(double rho, int n, Rng& rng) {
  Matrix X = randn(n, 1, rng);
  Matrix Z = randn(n, 1, rng);
  Matrix Y = rho * X + std::sqrt(1.0 - rho * rho) * Z;
  return {X, Y};
}

}  // namespace

TEST_CASE("make_noisy_pairs") {
  Rng rng(137);
  Matrix X = randn(500, 2, rng);
  Matrix Y = randn(500, 1, rng);

  // Zero variances: the hats equal the originals.
  const NoisySamplePair clean = make_noisy_pairs(X, Y, 0.0, 0.0, rng);
  CHECK((clean.X_hat - X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((clean.Y_hat - Y).cwiseAbs().maxCoeff() == 0.0);

  // Noise magnitude matches sqrt(v).
  const NoisySamplePair noisy = make_noisy_pairs(X, Y, 0.09, 0.04, rng);
  const double sx =
      std::sqrt((noisy.X_hat - X).array().square().mean());
  CHECK(std::abs(sx - 0.3) / 0.3 < 0.05);

  // Seeded repeat is identical.
  Rng ra(31), rb(31);
  const NoisySamplePair p1 = make_noisy_pairs(X, Y, 0.01, 0.01, ra);
  const NoisySamplePair p2 = make_noisy_pairs(X, Y, 0.01, 0.01, rb);
  CHECK((p1.X_hat - p2.X_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p1.Y_hat - p2.Y_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("estimate_p_cond_norm on degenerate and analytic data") {
  Rng rng(139);
  // All X identical and all Y identical: the estimator collapses to
  // N(X_hat - X; v_x), whose expectation is the norm of one Gaussian.
  Matrix X = Matrix::Zero(50, 1);
  Matrix Y = Matrix::Zero(50, 1);
  const NoisySamplePair pairs = make_noisy_pairs(X, Y, 1e-8, 1e-8, rng);
  const double val = estimate_p_cond_norm(pairs);
  // With v -> 0 the Gaussian at the noisy point is within a few percent
  // of N(0; v) scale; sanity: strictly positive and finite.
  CHECK(val > 0.0);

  // 1-D mixture with an analytically known joint: compare against
  // quadrature of the ratio on the assumed mixture.
  const int n = 5000;
  Matrix Xs = randn(n, 1, rng);
  Matrix Ys = 0.8 * Xs + 0.2 * randn(n, 1, rng);
  const double v = 0.05;
  Rng noise_rng(7);
  const NoisySamplePair ps = make_noisy_pairs(Xs, Ys, v, v, noise_rng);
  const double est = estimate_p_cond_norm(ps);

  // Quadrature oracle on a coarse subsample (the assumed mixture with
  // 400 centers keeps the double integral tractable).
  const int m = 400;
  std::vector<Gaussian> joint;
  for (int i = 0; i < m; ++i) {
    Vector mu(2);
    mu << Xs(i, 0), Ys(i, 0);
    joint.emplace_back(std::move(mu), v);
  }
  GaussianMixture pj(std::move(joint));
  Rng sub_rng(9);
  const NoisySamplePair sub = make_noisy_pairs(
      Xs.topRows(m), Ys.topRows(m), v, v, sub_rng);
  const double est_sub = estimate_p_cond_norm(sub);
  // ||p(X|Y)||^2 = int p^2(x,y)/p(y) dx dy via 2-D quadrature.
  auto p_y = [&](double y) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
      const double dlt = y - Ys(i, 0);
      s += std::exp(-dlt * dlt / (2.0 * v)) /
           std::sqrt(2.0 * std::numbers::pi * v);
    }
    return s / m;
  };
  auto [lo, hi] = oracle::mixture_box(pj);
  const double quad = oracle::integrate_2d(
      [&](double x, double y) {
        Vector pt(2);
        pt << x, y;
        const double pxy = eval_density(pj, pt);
        const double py = p_y(y);
        return py > 1e-300 ? pxy * pxy / py : 0.0;
      },
      lo, hi, 700);
  CHECK(std::abs(est_sub - quad) / quad < 0.05);
  CHECK(est > 0.0);
}

TEST_CASE("estimate_cost_terms") {
  Rng rng(149);
  Matrix X = randn(6, 2, rng);
  Matrix Y = randn(6, 1, rng);
  NoisySamplePair pairs = make_noisy_pairs(X, Y, 1e-12, 1e-12, rng);

  // Perfect reconstruction at every output: cost equals the bound value
  // for degenerate data; in plain densities both equal N(0; v_x + v_q).
  std::vector<Matrix> recon{X, X, X};
  const CostTerms terms = estimate_cost_terms(pairs, recon, 1e-12);
  CHECK(terms.cost == doctest::Approx(terms.inner * terms.inner /
                                      terms.q_norm));
  CHECK(terms.inner > 0.0);

  // Cost stays below the bound (Cauchy-Schwarz with estimator slack).
  // The reconstruction fans must be functions of the noisy features: a
  // fan that peeks at X would not define a conditional q(X|Y).
  Matrix Xs = randn(400, 2, rng);
  Matrix Ys = 0.7 * Xs.col(0) + 0.3 * Xs.col(1);
  const double v = 0.05;
  for (int rep = 0; rep < 10; ++rep) {
    NoisySamplePair ps = make_noisy_pairs(Xs, Ys, v, v, rng);
    std::vector<Matrix> fan;
    for (int k = 0; k < 3; ++k) {
      Matrix r(400, 2);
      const double a = 0.5 + 0.2 * k, b = 0.1 * k;
      r.col(0) = a * ps.Y_hat.col(0).array() + b;
      r.col(1) = (ps.Y_hat.col(0).array() * ps.Y_hat.col(0).array()) * 0.1 -
                 b;
      fan.push_back(std::move(r));
    }
    const CostTerms t = estimate_cost_terms(ps, fan, v);
    const double bound = estimate_p_cond_norm(ps);
    CHECK(t.cost <= bound * 1.02);
  }
}

TEST_CASE("shannon and renyi MI estimators") {
  Rng rng(151);
  const double v = 0.01;

  // Independent data: Shannon near 0, Renyi near 1.
  Matrix X = randn(2000, 1, rng);
  Matrix Y = randn(2000, 1, rng);
  NoisySamplePair ind = make_noisy_pairs(X, Y, v, v, rng);
  CHECK(std::abs(estimate_shannon_mi(ind)) < 0.05);
  CHECK(std::abs(estimate_renyi_mi(ind) - 1.0) < 0.05);

  // Bivariate Gaussian at rho = 0.9 matches the closed form.
  auto [Xc, Yc] = bivariate(0.9, 5000, rng);
  NoisySamplePair cor = make_noisy_pairs(Xc, Yc, v, v, rng);
  const double target = -0.5 * std::log(1.0 - 0.81);
  CHECK(std::abs(estimate_shannon_mi(cor) - target) < 0.05);

  // Y == X: the estimates grow as the noise variance shrinks.
  Matrix Z = randn(1500, 1, rng);
  double prev_s = -1e9, prev_r = 0.0;
  for (double vv : {0.1, 0.01, 0.001}) {
    NoisySamplePair same = make_noisy_pairs(Z, Z, vv, vv, rng);
    const double s = estimate_shannon_mi(same);
    const double r = estimate_renyi_mi(same);
    CHECK(s > prev_s);
    CHECK(r > prev_r);
    prev_s = s;
    prev_r = r;
  }

  // Renyi stays above 1 - tolerance for arbitrary data (the invariant is
  // stated at N = 2000 with 5% tolerance).
  for (int rep = 0; rep < 4; ++rep) {
    Matrix A = randn(2000, 2, rng);
    Matrix B = randn(2000, 1, rng);
    NoisySamplePair any = make_noisy_pairs(A, B, 0.05, 0.05, rng);
    CHECK(estimate_renyi_mi(any) >= 1.0 - 0.05);
  }
}

TEST_CASE("highdim_cost_bound") {
  Rng rng(157);
  const int d = 64;
  Matrix X = randn(40, d, rng);
  Matrix Y = randn(40, 1, rng);
  Matrix Y_hat = Y + 0.1 * randn(40, 1, rng);

  // Perfect reconstruction with K = 1: cost_new is exactly 1.
  const HighDimTerms perfect =
      highdim_cost_bound(X, {X}, Y, Y_hat, 0.05, 0.01, 0.05);
  CHECK(perfect.cost_new == doctest::Approx(1.0));

  // Well-separated Y clusters with small v_y: the bound approaches 1.
  Matrix Yc(40, 1);
  for (int i = 0; i < 40; ++i) Yc(i, 0) = static_cast<double>(i);
  const HighDimTerms sep = highdim_cost_bound(
      X, {X}, Yc, Matrix(Yc + 1e-4 * randn(40, 1, rng)), 0.05, 1e-6, 0.05);
  CHECK(sep.bound_new == doctest::Approx(1.0).epsilon(1e-6));

  // Both terms in (0, 1] and ordered, across random fans.
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<Matrix> fan;
    for (int k = 0; k < 4; ++k) fan.push_back(X + 0.5 * randn(40, d, rng));
    Matrix Yh = Y + 0.1 * randn(40, 1, rng);
    const HighDimTerms t = highdim_cost_bound(X, fan, Y, Yh, 0.05, 0.01, 0.05);
    CHECK(t.cost_new > 0.0);
    CHECK(t.cost_new <= 1.0 + 1e-12);
    CHECK(t.bound_new > 0.0);
    CHECK(t.bound_new <= 1.0 + 1e-12);
    CHECK(t.cost_new <= t.bound_new * 1.02);
  }

  CHECK_THROWS(highdim_cost_bound(X, {X}, Y, Y_hat, 0.05, 0.01, 0.03));
}

TEST_CASE("discrete_decomposition_check") {
  Rng rng(163);
  // Uniform P == Q on a 64-point 1-D grid: nuclear norm equals the trace.
  Matrix grid(64, 1);
  for (int i = 0; i < 64; ++i) grid(i, 0) = i / 64.0;
  Vector P = Vector::Constant(64, 1.0 / 64.0);
  const DecompositionReport uni =
      discrete_decomposition_check(P, P, grid, 0.01);
  CHECK(uni.holds);
  CHECK(uni.value == doctest::Approx(uni.bound).epsilon(1e-6));

  // Arbitrary P == Q: equality within 1e-6.
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector Q(64);
  for (int i = 0; i < 64; ++i) Q(i) = u(rng);
  Q /= Q.sum();
  const DecompositionReport eq = discrete_decomposition_check(Q, Q, grid, 0.02);
  CHECK(eq.holds);
  CHECK(eq.value == doctest::Approx(eq.bound).epsilon(1e-6));

  // Disjoint supports far apart: the nuclear norm nearly vanishes.
  Vector Pl = Vector::Zero(64), Qr = Vector::Zero(64);
  for (int i = 0; i < 8; ++i) Pl(i) = 1.0 / 8.0;
  for (int i = 56; i < 64; ++i) Qr(i) = 1.0 / 8.0;
  const DecompositionReport dis =
      discrete_decomposition_check(Pl, Qr, grid, 1e-4);
  CHECK(dis.value <= 1e-6 * dis.bound);

  Vector bad(63);
  CHECK_THROWS(discrete_decomposition_check(bad, Q, grid, 0.01));
}

TEST_CASE("differentiable objectives agree with the plain estimators") {
  Rng rng(167);
  Matrix X = randn(60, 2, rng);
  Matrix Y = randn(60, 1, rng);
  const double vx = 0.05, vy = 0.02;
  Matrix zx = randn(60, 2, rng);
  Matrix zy = randn(60, 1, rng);
  Matrix X_hat = X + std::sqrt(vx) * zx;

  NoisySamplePair pairs;
  pairs.X = X;
  pairs.Y = Y;
  pairs.X_hat = X_hat;
  pairs.Y_hat = Y + std::sqrt(vy) * zy;
  pairs.v_x = vx;
  pairs.v_y = vy;

  Tensor Yt = Tensor::constant(Y);
  CHECK(p_cond_norm_objective(X, X_hat, Yt, zy, vx, vy).scalar_value() ==
        doctest::Approx(estimate_p_cond_norm(pairs)).epsilon(1e-12));
  // The renyi objective is the uncorrected estimator; exact agreement.
  CHECK(renyi_mi_objective(X, Yt, vx, vy).scalar_value() ==
        doctest::Approx(estimate_renyi_mi(pairs)).epsilon(1e-12));
  // The shannon estimator adds a small-sample correction to the
  // objective's value.
  CHECK(shannon_mi_objective(X, Yt, vx, vy).scalar_value() ==
        doctest::Approx(estimate_shannon_mi(pairs)).epsilon(0.2));

  // Gradients w.r.t. the features.
  auto f = [&](const Tensor& t) {
    return p_cond_norm_objective(X, X_hat, t, zy, vx, vy);
  };
  CHECK(finite_diff_check(f, Y, 1e-6).max_rel_error < 1e-4);
  auto fs = [&](const Tensor& t) {
    return shannon_mi_objective(X, t, vx, vy);
  };
  CHECK(finite_diff_check(fs, Y, 1e-6).max_rel_error < 1e-4);
  auto fr = [&](const Tensor& t) {
    return renyi_mi_objective(X, t, vx, vy);
  };
  CHECK(finite_diff_check(fr, Y, 1e-6).max_rel_error < 1e-4);
}

TEST_CASE("bound report CSV schema") {
  std::vector<BoundReport> rows(2);
  rows[0].iteration = 100;
  rows[0].cost = 0.5;
  rows[0].bound = 0.75;
  rows[0].inner = 0.6;
  rows[0].q_norm = 0.72;
  rows[1].iteration = 200;
  rows[1].cost = 0.6;
  rows[1].bound = 0.76;
  rows[1].inner = 0.65;
  rows[1].q_norm = 0.7;
  rows[1].shannon_mi = 1.5;
  rows[1].renyi_mi = 4.0;

  const std::string path =
      (std::filesystem::temp_directory_path() / "ceb_report_test.csv")
          .string();
  write_bound_reports_csv(rows, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iteration,cost,bound,inner,q_norm,shannon_mi,renyi_mi");
  std::string line1, line2;
  std::getline(in, line1);
  std::getline(in, line2);
  CHECK(line1.substr(0, 4) == "100,");
  CHECK(line1.find("nan") != std::string::npos);
  CHECK(line2.find("1.5") != std::string::npos);
  std::filesystem::remove(path);
}
