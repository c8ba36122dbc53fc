#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dirl/special_math.hpp"
#include "oracles.hpp"

using dirl::AllocationSample;
using dirl::Concentration;
using dirl::ConcentrationBounds;
using Eigen::VectorXd;

namespace {
constexpr double kEuler = 0.57721566490153286;
}

TEST_CASE("digamma matches known closed forms", "[special_math]") {
  CHECK(dirl::digamma(1.0) == Catch::Approx(-kEuler).epsilon(0).margin(1e-12));
  CHECK(dirl::digamma(2.0) == Catch::Approx(1.0 - kEuler).epsilon(0).margin(1e-12));
  CHECK(dirl::digamma(0.5) ==
        Catch::Approx(-kEuler - 2.0 * std::log(2.0)).epsilon(0).margin(1e-12));
  CHECK_THROWS_AS(dirl::digamma(0.0), std::domain_error);
  CHECK_THROWS_AS(dirl::digamma(-1.5), std::domain_error);
}

TEST_CASE("digamma satisfies the recurrence over a wide range", "[special_math]") {
  dirl::Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const double x = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
    const double lhs = dirl::digamma(x + 1.0) - dirl::digamma(x);
    CHECK(lhs == Catch::Approx(1.0 / x).epsilon(0).margin(1e-12 * std::max(1.0, 1.0 / x)));
  }
  // Spot precision against the asymptotic regime boundary and large arguments.
  CHECK(dirl::digamma(1e6) == Catch::Approx(std::log(1e6) - 0.5e-6).epsilon(1e-14));
}

TEST_CASE("log multivariate beta on closed-form cases", "[special_math]") {
  CHECK(dirl::log_multivariate_beta(Concentration::from(Eigen::Vector3d(1, 1, 1))) ==
        Catch::Approx(-std::log(2.0)).epsilon(0).margin(1e-12));
  CHECK(dirl::log_multivariate_beta(Concentration::from(Eigen::Vector2d(1, 1))) ==
        Catch::Approx(0.0).epsilon(0).margin(1e-12));
  CHECK(dirl::log_multivariate_beta(Concentration::from(Eigen::Vector2d(0.5, 0.5))) ==
        Catch::Approx(std::log(M_PI)).epsilon(0).margin(1e-12));
}

TEST_CASE("log multivariate beta agrees with simplex quadrature", "[special_math]") {
  const VectorXd cases[] = {
      (Eigen::Vector2d() << 0.5, 0.5).finished(),
      (Eigen::Vector2d() << 1.3, 0.7).finished(),
      (Eigen::Vector3d() << 0.5, 1.2, 0.8).finished(),
      (Eigen::Vector3d() << 1.1, 1.4, 1.2).finished(),
  };
  for (const auto& a : cases) {
    const double closed = std::exp(dirl::log_multivariate_beta(Concentration::from(a)));
    const long res = a.size() == 2 ? 4000000 : 2500;
    const double quad =
        oracles::dirichlet_weighted_integral(a, [](const VectorXd&) { return 1.0; }, res);
    CHECK(quad == Catch::Approx(closed).epsilon(1e-3));
  }
}

TEST_CASE("bounds-checked beta rejects overflowing magnitudes", "[special_math]") {
  ConcentrationBounds bounds;
  bounds.kappa_max = 100.0;
  // 300 tiny concentrations push sum(lgamma) above the ceiling.
  VectorXd a = VectorXd::Constant(300, 0.05);
  CHECK_THROWS_AS(dirl::log_multivariate_beta(Concentration::from(a), bounds),
                  std::overflow_error);
  CHECK_NOTHROW(dirl::log_multivariate_beta(Concentration::from(Eigen::Vector3d(1, 1, 1)), bounds));
}

TEST_CASE("dirichlet samples live on the simplex and are reproducible", "[special_math]") {
  const Concentration a = Concentration::from(Eigen::Vector3d(0.3, 0.9, 1.4));
  dirl::Rng r1(123), r2(123);
  for (int i = 0; i < 200; ++i) {
    const AllocationSample w1 = dirl::dirichlet_sample(a, r1);
    const AllocationSample w2 = dirl::dirichlet_sample(a, r2);
    REQUIRE(w1.w == w2.w);
    CHECK(w1.w.minCoeff() >= 1e-12);
    CHECK(std::abs(w1.w.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("flat dirichlet marginal is uniform", "[special_math]") {
  const Concentration a = Concentration::from(Eigen::Vector2d(1, 1));
  dirl::Rng rng(7);
  const long n = 200000;
  // Kolmogorov-Smirnov style check on a coarse grid of quantiles.
  std::vector<double> draws;
  draws.reserve(n);
  for (long i = 0; i < n; ++i) draws.push_back(dirl::dirichlet_sample(a, rng).w[0]);
  std::sort(draws.begin(), draws.end());
  double worst = 0.0;
  for (int q = 1; q < 20; ++q) {
    const double p = q / 20.0;
    const double empirical =
        static_cast<double>(std::lower_bound(draws.begin(), draws.end(), p) - draws.begin()) / n;
    worst = std::max(worst, std::abs(empirical - p));
  }
  CHECK(worst < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("sample moments match the closed forms", "[special_math]") {
  struct Case {
    VectorXd a;
    long draws;
  };
  const Case cases[] = {
      {VectorXd::Constant(5, 1.0), 200000},
      {(Eigen::Vector3d() << 0.3, 0.9, 1.4).finished(), 200000},
  };
  for (const auto& c : cases) {
    const Concentration conc = Concentration::from(c.a);
    dirl::Rng rng(99);
    const int n = conc.size();
    VectorXd s1 = VectorXd::Zero(n), s2 = VectorXd::Zero(n);
    for (long i = 0; i < c.draws; ++i) {
      const AllocationSample w = dirl::dirichlet_sample(conc, rng);
      s1 += w.w;
      s2 += w.w.cwiseProduct(w.w);
    }
    for (int i = 0; i < n; ++i) {
      const double mean_true = conc.a[i] / conc.sigma;
      const double var_true = mean_true * (1.0 - mean_true) / (conc.sigma + 1.0);
      const double mean_mc = s1[i] / c.draws;
      const double var_mc = s2[i] / c.draws - mean_mc * mean_mc;
      CHECK(std::abs(mean_mc - mean_true) <= 3.0 * std::sqrt(var_true / c.draws));
      // Variance gate from the large-sample variance of a sample variance.
      CHECK(std::abs(var_mc - var_true) <= 4.0 * var_true * std::sqrt(2.0 / c.draws) + 1e-9);
    }
  }
}

TEST_CASE("log pdf on closed-form cases", "[special_math]") {
  AllocationSample w{(Eigen::Vector3d() << 0.2, 0.3, 0.5).finished()};
  CHECK(dirl::dirichlet_log_pdf(w, Concentration::from(Eigen::Vector3d(1, 1, 1))) ==
        Catch::Approx(std::log(2.0)).epsilon(0).margin(1e-12));
  AllocationSample half{(Eigen::Vector2d() << 0.5, 0.5).finished()};
  CHECK(dirl::dirichlet_log_pdf(half, Concentration::from(Eigen::Vector2d(2, 2))) ==
        Catch::Approx(std::log(6.0 * 0.25)).epsilon(0).margin(1e-12));
}

TEST_CASE("pdf integrates to one over the simplex", "[special_math]") {
  const VectorXd a = (Eigen::Vector3d() << 0.5, 1.2, 0.8).finished();
  const Concentration conc = Concentration::from(a);
  // Strip the density's own w^{a-1} kernel so the quadrature weight absorbs it.
  const double integral = oracles::dirichlet_weighted_integral(
      a,
      [&](const VectorXd& w) {
        double log_kernel = 0.0;
        for (Eigen::Index i = 0; i < w.size(); ++i) log_kernel += (a[i] - 1.0) * std::log(w[i]);
        return std::exp(dirl::dirichlet_log_pdf(AllocationSample{w}, conc) - log_kernel);
      },
      2500);
  CHECK(integral == Catch::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("log pdf rejects boundary and off-simplex points", "[special_math]") {
  const Concentration a = Concentration::from(Eigen::Vector2d(1, 1));
  CHECK_THROWS_AS(dirl::dirichlet_log_pdf(AllocationSample{Eigen::Vector2d(0.0, 1.0)}, a),
                  std::domain_error);
  CHECK_THROWS_AS(dirl::dirichlet_log_pdf(AllocationSample{Eigen::Vector2d(0.6, 0.6)}, a),
                  std::domain_error);
}

TEST_CASE("expected log weight identities", "[special_math]") {
  // E[ln U] for uniform U on (0,1).
  CHECK(dirl::expected_log_weight(Concentration::from(Eigen::Vector2d(1, 1)), 0) ==
        Catch::Approx(-1.0).epsilon(0).margin(1e-12));

  // Quadrature oracle on the Beta(2,2) marginal.
  const double quad = oracles::integral_01(
      [](double u) { return std::log(u) * 6.0 * u * (1.0 - u); });
  CHECK(dirl::expected_log_weight(Concentration::from(Eigen::Vector2d(2, 2)), 0) ==
        Catch::Approx(quad).epsilon(0).margin(1e-6));

  // Monte-Carlo oracle for an asymmetric case.
  const Concentration c = Concentration::from(Eigen::Vector2d(0.5, 1.5));
  dirl::Rng rng(5);
  const auto est = oracles::mc_mean(
      [&](dirl::Rng& r) { return std::log(dirl::dirichlet_sample(c, r).w[0]); }, 400000, rng);
  CHECK(std::abs(dirl::expected_log_weight(c, 0) - est.mean) <= 3.0 * est.se);
  CHECK(dirl::expected_log_weight(c, 0) ==
        Catch::Approx(dirl::digamma(0.5) - dirl::digamma(2.0)).epsilon(0).margin(1e-12));
}

TEST_CASE("expected w log w identities", "[special_math]") {
  const Concentration flat = Concentration::from(Eigen::Vector2d(1, 1));
  // integral of u ln u over (0,1) is -1/4.
  CHECK(dirl::expected_w_log_w(flat, 0, 0) == Catch::Approx(-0.25).epsilon(0).margin(1e-12));

  const double cross_quad =
      oracles::integral_01([](double u) { return u * std::log(1.0 - u); });
  CHECK(dirl::expected_w_log_w(flat, 0, 1) ==
        Catch::Approx(cross_quad).epsilon(0).margin(1e-6));

  const Concentration c = Concentration::from(Eigen::Vector3d(0.4, 0.8, 0.8));
  dirl::Rng rng(17);
  const auto est = oracles::mc_mean(
      [&](dirl::Rng& r) {
        const AllocationSample w = dirl::dirichlet_sample(c, r);
        return w.w[0] * std::log(w.w[1]);
      },
      400000, rng);
  CHECK(std::abs(dirl::expected_w_log_w(c, 0, 1) - est.mean) <= 3.0 * est.se);

  CHECK_THROWS_AS(dirl::expected_w_log_w(c, 0, 3), std::out_of_range);
}

TEST_CASE("dimension bounds reproduce the rule-of-thumb ceilings", "[special_math]") {
  ConcentrationBounds bounds;
  bounds.kappa_max = 100.0;
  bounds.delta = 8.0;
  bounds.a_plus = 1.6;
  bounds.a_minus = 0.5;

  const auto d100 = dirl::check_dimension_bounds(bounds, 100);
  CHECK(d100.ok);
  CHECK(d100.max_assets == 108);  // floor(800 / (1.6 ln 100))
  CHECK(d100.a_minus_limit == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));

  auto loose = bounds;
  loose.a_minus = 0.2;
  const auto d_low = dirl::check_dimension_bounds(loose, 100);
  CHECK_FALSE(d_low.ok);
  CHECK_FALSE(d_low.lower_ok);
  CHECK(d_low.upper_ok);
  CHECK_FALSE(d_low.reason.empty());

  auto tight = bounds;
  tight.a_plus = 20.0;
  const auto d_up = dirl::check_dimension_bounds(tight, 100);
  CHECK_FALSE(d_up.upper_ok);
}

TEST_CASE("log pdf stays finite inside passing bounds", "[special_math]") {
  ConcentrationBounds bounds;
  bounds.a_minus = 0.5;
  bounds.a_plus = 1.6;
  REQUIRE(dirl::check_dimension_bounds(bounds, 100).ok);
  dirl::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd a(100);
    for (int i = 0; i < 100; ++i) a[i] = rng.uniform(bounds.a_minus, bounds.a_plus);
    const Concentration conc = Concentration::from(a);
    const double log_beta = dirl::log_multivariate_beta(conc, bounds);
    CHECK(std::abs(log_beta) <= bounds.kappa_max);
    const AllocationSample w = dirl::dirichlet_sample(conc, rng);
    CHECK(std::isfinite(dirl::dirichlet_log_pdf(w, conc)));
  }
}

TEST_CASE("incomplete beta matches reference points", "[special_math]") {
  // I_x(1, 1) = x and I_x(2, 2) = x^2 (3 - 2x).
  CHECK(dirl::regularized_incomplete_beta(1, 1, 0.3) == Catch::Approx(0.3).epsilon(1e-12));
  CHECK(dirl::regularized_incomplete_beta(2, 2, 0.4) ==
        Catch::Approx(0.4 * 0.4 * (3 - 0.8)).epsilon(1e-12));
  // Student-t two-sided p at the classic 5% critical value for 10 dof.
  CHECK(dirl::student_t_two_sided_p(2.228138852, 10.0) == Catch::Approx(0.05).epsilon(1e-6));
}
