#include "ceb/gm.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ceb;

namespace {

Gaussian g1(double mean, double var) {
  Vector m(1), v(1);
  m << mean;
  v << var;
  return Gaussian(std::move(m), std::move(v));
}

}  // namespace

TEST_CASE("gauss_inner closed form") {
  // <N(0;0.5), N(0;0.5)> = N(0;1) = 1/sqrt(2 pi)
  CHECK(gauss_inner(g1(0.0, 0.5), g1(0.0, 0.5)) ==
        doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi))
            .epsilon(1e-12));

  // Offset centers against the quadrature oracle.
  const double expected = oracle::integrate_1d(
      [](double x) {
        const double a = std::exp(-x * x / 1.0) / std::sqrt(std::numbers::pi);
        const double b = std::exp(-(x - 1.0) * (x - 1.0) / 1.0) /
                         std::sqrt(std::numbers::pi);
        return a * b;
      },
      -10.0, 11.0);
  CHECK(gauss_inner(g1(0.0, 0.5), g1(1.0, 0.5)) ==
        doctest::Approx(expected).epsilon(1e-9));

  // Stabilized inner with equal means is exactly one.
  CHECK(gauss_inner(g1(0.3, 0.2), g1(0.3, 0.9), true) == 1.0);

  Vector m2(2);
  m2 << 0.0, 0.0;
  CHECK_THROWS(gauss_inner(Gaussian(m2, 1.0), g1(0.0, 1.0)));
  CHECK_THROWS(g1(0.0, -1.0));
}

TEST_CASE("mixture_inner and mixture_norm against quadrature") {
  // Single component inner equals the component inner.
  GaussianMixture single({g1(0.4, 0.3)});
  CHECK(mixture_inner(single, single) ==
        doctest::Approx(gauss_inner(g1(0.4, 0.3), g1(0.4, 0.3))));

  // Two 1-D mixtures with centers {0, 1} and {0.5}, all v = 0.1.
  GaussianMixture p({g1(0.0, 0.1), g1(1.0, 0.1)});
  GaussianMixture q({g1(0.5, 0.1)});
  CHECK(mixture_inner(p, q) ==
        doctest::Approx(oracle::quad_mixture_product(p, q)).epsilon(1e-8));

  // p == q coincides with the norm.
  CHECK(mixture_inner(p, p) == doctest::Approx(mixture_norm(p)));

  // Single component, v = 0.5 -> N(0;1).
  GaussianMixture lone({g1(0.0, 0.5)});
  CHECK(mixture_norm(lone) ==
        doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));

  // Duplicate equal-weight components collapse to the same norm.
  GaussianMixture dup({g1(0.0, 0.5), g1(0.0, 0.5)});
  CHECK(mixture_norm(dup) == doctest::Approx(mixture_norm(lone)));

  // 5-component random 2-D mixture against the grid oracle.
  Rng rng(7);
  GaussianMixture r2 = oracle::random_mixture(5, 2, rng);
  CHECK(mixture_norm(r2) ==
        doctest::Approx(oracle::quad_mixture_power(r2, 2)).epsilon(1e-6));
}

TEST_CASE("mixture_inner is exactly symmetric") {
  Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    GaussianMixture p = oracle::random_mixture(4, 2, rng);
    GaussianMixture q = oracle::random_mixture(6, 2, rng);
    CHECK(mixture_inner(p, q) == mixture_inner(q, p));
  }
}

TEST_CASE("mixture_moment closed forms") {
  GaussianMixture p({g1(0.0, 1.0)});
  // order 2 agrees with the norm to 1e-12.
  CHECK(mixture_moment(p, 2) == doctest::Approx(mixture_norm(p)).epsilon(1e-12));

  // Integral of N(x;1)^3 = 1 / (2 pi sqrt(3)).
  CHECK(mixture_moment(p, 3) ==
        doctest::Approx(1.0 / (2.0 * std::numbers::pi * std::sqrt(3.0)))
            .epsilon(1e-12));

  // 3-component mixture, third moment against quadrature.
  Rng rng(11);
  GaussianMixture m3 = oracle::random_mixture(3, 1, rng);
  CHECK(mixture_moment(m3, 3) ==
        doctest::Approx(oracle::quad_mixture_power(m3, 3)).epsilon(1e-8));

  CHECK_THROWS(mixture_moment(p, 1));
  CHECK_THROWS(mixture_moment(p, 5));       // above the default order cap
  CHECK(mixture_moment(p, 5, 5) > 0.0);     // raised cap admits it
}

TEST_CASE("moment order 2 equals norm on random mixtures") {
  Rng rng(3);
  for (int rep = 0; rep < 25; ++rep) {
    GaussianMixture p = oracle::random_mixture(2 + rep % 4, 1 + rep % 2, rng);
    CHECK(mixture_moment(p, 2) ==
          doctest::Approx(mixture_norm(p)).epsilon(1e-12));
  }
}

TEST_CASE("eval_density") {
  GaussianMixture lone({g1(0.0, 1.0)});
  Vector x(1);
  x << 0.0;
  CHECK(eval_density(lone, x) ==
        doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));

  // Stabilized: at a component center with the others far, the density is
  // that component's weight.
  Vector w(2);
  w << 0.3, 0.7;
  GaussianMixture two({g1(0.0, 0.01), g1(100.0, 0.01)}, w, true);
  CHECK(eval_density(two, x) == doctest::Approx(0.3).epsilon(1e-12));

  // Random point against a plain summation loop.
  Rng rng(5);
  GaussianMixture p = oracle::random_mixture(6, 2, rng);
  Vector pt(2);
  pt << 0.3, -0.4;
  double ref = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    double logterm = 0.0;
    for (int l = 0; l < 2; ++l) {
      const auto& c = p.components[static_cast<std::size_t>(k)];
      const double delta = pt(l) - c.mean(l);
      logterm += -delta * delta / (2.0 * c.var(l)) -
                 0.5 * std::log(2.0 * std::numbers::pi * c.var(l));
    }
    ref += p.weights(k) * std::exp(logterm);
  }
  CHECK(eval_density(p, pt) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("Cauchy-Schwarz holds on random mixtures") {
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    GaussianMixture p = oracle::random_mixture(1 + rep % 5, 1 + rep % 2, rng);
    GaussianMixture q = oracle::random_mixture(1 + (rep / 2) % 5,
                                               1 + rep % 2, rng);
    const double inner = mixture_inner(p, q);
    const double bound = mixture_norm(p) * mixture_norm(q);
    CHECK(inner * inner <= bound * (1.0 + 1e-12));
  }
}

TEST_CASE("mixture validation") {
  Vector bad_w(2);
  bad_w << 0.5, 0.6;
  CHECK_THROWS(GaussianMixture({g1(0, 1), g1(1, 1)}, bad_w));
  CHECK_THROWS(GaussianMixture(std::vector<Gaussian>{}));
  Vector m2(2);
  m2 << 0.0, 0.0;
  CHECK_THROWS(GaussianMixture({g1(0, 1), Gaussian(m2, 1.0)}));

  GaussianMixture stab({g1(0, 1)}, true);
  GaussianMixture plain({g1(0, 1)}, false);
  CHECK_THROWS(mixture_inner(stab, plain));
}
