#include "ceb/gram.hpp"

#include "ceb/svd.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace ceb;

TEST_CASE("pairwise_sq_dists basics") {
  Matrix X(1, 2), Xp(1, 2);
  X << 0.0, 0.0;
  Xp << 2.0, 0.0;
  CHECK(pairwise_sq_dists(X, X).values(0, 0) == 0.0);
  CHECK(pairwise_sq_dists(X, Xp).values(0, 0) == doctest::Approx(2.0));

  Matrix bad(1, 3);
  CHECK_THROWS(pairwise_sq_dists(X, bad));
}

TEST_CASE("memory trick equals the naive loop") {
  Rng rng(17);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const int k = 1 + static_cast<int>(rng() % 8);
    const int d = 1 + static_cast<int>(rng() % 6);
    Matrix X(n, d), Xp(k, d);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < d; ++l) X(i, l) = normal(rng);
    for (int i = 0; i < k; ++i)
      for (int l = 0; l < d; ++l) Xp(i, l) = normal(rng);
    const Matrix M = pairwise_sq_dists(X, Xp).values;
    const Matrix R = oracle::naive_sq_dists(X, Xp);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j)
        CHECK(M(i, j) ==
              doctest::Approx(R(i, j)).epsilon(1e-10).scale(
                  std::max(1.0, R(i, j))));
  }
}

TEST_CASE("self distances are symmetric with zero diagonal") {
  Rng rng(23);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix X(7, 3);
  for (int i = 0; i < 7; ++i)
    for (int l = 0; l < 3; ++l) X(i, l) = normal(rng);
  const Matrix M = pairwise_sq_dists(X, X).values;
  CHECK(M.diagonal().cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(M.minCoeff() >= 0.0);
}

TEST_CASE("gauss_gram") {
  DistanceMatrix M{Matrix::Zero(2, 2), 3};
  M.values(0, 1) = 2.0;
  M.values(1, 0) = 2.0;
  const GramMatrix K = gauss_gram(M, 1.0);
  CHECK(K.values(0, 0) == 1.0);
  CHECK(K.values(0, 1) == doctest::Approx(std::exp(-1.0)));
  CHECK_THROWS(gauss_gram(M, 0.0));

  // Entrywise reference loop.
  Rng rng(29);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix X(5, 4), Xp(6, 4);
  for (int i = 0; i < 5; ++i)
    for (int l = 0; l < 4; ++l) X(i, l) = normal(rng);
  for (int i = 0; i < 6; ++i)
    for (int l = 0; l < 4; ++l) Xp(i, l) = normal(rng);
  const DistanceMatrix D = pairwise_sq_dists(X, Xp);
  const GramMatrix G = gauss_gram(D, 0.7);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(G.values(i, j) ==
            doctest::Approx(std::exp(-D.values(i, j) / 1.4)).epsilon(1e-14));
}

TEST_CASE("joint_gram equals the elementwise product of individual Grams") {
  Rng rng(31);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix X(6, 3), Xp(6, 3), Y(6, 2), Yp(6, 2);
  for (auto* m : {&X, &Xp}) {
    for (int i = 0; i < 6; ++i)
      for (int l = 0; l < 3; ++l) (*m)(i, l) = normal(rng);
  }
  for (auto* m : {&Y, &Yp}) {
    for (int i = 0; i < 6; ++i)
      for (int l = 0; l < 2; ++l) (*m)(i, l) = normal(rng);
  }
  const DistanceMatrix MX = pairwise_sq_dists(X, Xp);
  const DistanceMatrix MY = pairwise_sq_dists(Y, Yp);
  const Matrix J = joint_gram(MX, 0.4, MY, 0.9).values;
  const Matrix P =
      gauss_gram(MX, 0.4).values.cwiseProduct(gauss_gram(MY, 0.9).values);
  CHECK((J - P).cwiseAbs().maxCoeff() <= 1e-14);

  // Trivial cases.
  DistanceMatrix Z{Matrix::Zero(1, 1), 1};
  CHECK(joint_gram(Z, 1.0, Z, 1.0).values(0, 0) == 1.0);
  DistanceMatrix M2{Matrix::Constant(1, 1, 2.0), 1};
  CHECK(joint_gram(M2, 1.0, Z, 1.0).values(0, 0) ==
        doctest::Approx(std::exp(-1.0)));

  DistanceMatrix wrong{Matrix::Zero(2, 1), 1};
  CHECK_THROWS(joint_gram(Z, 1.0, wrong, 1.0));
}

TEST_CASE("self Gram is positive semidefinite") {
  Rng rng(37);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 4 + static_cast<int>(rng() % 12);
    Matrix X(n, 2);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < 2; ++l) X(i, l) = normal(rng);
    const GramMatrix K = gauss_gram(pairwise_sq_dists(X, X), 0.5);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(K.values);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
  }
}
