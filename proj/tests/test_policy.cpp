#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dirl/policy.hpp"
#include "oracles.hpp"

using dirl::AllocationSample;
using dirl::FeaturePanel;
using dirl::PolicyForm;
using dirl::PolicyParams;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

FeaturePanel two_asset_panel() {
  MatrixXd x(2, 2);
  x << 1.0, 0.25, 1.0, -0.25;
  return oracles::make_panel(x);
}

PolicyParams make_params(VectorXd theta, PolicyForm form) {
  PolicyParams p;
  p.theta = std::move(theta);
  p.form = form;
  return p;
}

FeaturePanel random_panel(int n, int k, dirl::Rng& rng) {
  MatrixXd x(n, k + 1);
  x.col(0).setOnes();
  for (int i = 0; i < n; ++i)
    for (int j = 1; j <= k; ++j) x(i, j) = rng.uniform(-0.5, 0.5);
  FeaturePanel raw = oracles::make_panel(x);
  return dirl::preprocess_uniform(raw, dirl::UniformInterval::centered);
}

}  // namespace

TEST_CASE("concentrations from features", "[policy]") {
  MatrixXd ones(2, 1);
  ones << 1.0, 1.0;
  const auto c0 = dirl::concentration_from_features(
      oracles::make_panel(ones), make_params(VectorXd::Ones(1), PolicyForm::F1));
  CHECK(c0.a == Eigen::Vector2d(1, 1));
  CHECK(c0.sigma == 2.0);

  const FeaturePanel panel = two_asset_panel();
  const auto c1 = dirl::concentration_from_features(
      panel, make_params((Eigen::Vector2d() << 1.0, 0.4).finished(), PolicyForm::F1));
  CHECK(c1.a[0] == Catch::Approx(1.1).margin(1e-15));
  CHECK(c1.a[1] == Catch::Approx(0.9).margin(1e-15));

  const auto c2 = dirl::concentration_from_features(
      panel, make_params((Eigen::Vector2d() << 1.0, 0.4).finished(), PolicyForm::F2));
  CHECK(c2.a[0] == Catch::Approx(std::exp(1.1)).epsilon(1e-12));
  CHECK(c2.a[1] == Catch::Approx(std::exp(0.9)).epsilon(1e-12));

  CHECK_THROWS_AS(dirl::concentration_from_features(
                      panel, make_params((Eigen::Vector2d() << 0.1, 1.0).finished(), PolicyForm::F1)),
                  dirl::infeasible_parameters_error);
  CHECK_THROWS_AS(dirl::concentration_from_features(
                      panel, make_params(VectorXd::Ones(3), PolicyForm::F1)),
                  std::invalid_argument);
}

TEST_CASE("mean weights decompose around the uniform allocation", "[policy]") {
  dirl::Rng rng(21);
  // Constant-only parameters give the equally weighted portfolio for any bias.
  const FeaturePanel panel = random_panel(8, 2, rng);
  VectorXd theta = VectorXd::Zero(3);
  theta[0] = 1.7;
  const auto ew = dirl::mean_weights(panel, make_params(theta, PolicyForm::F1));
  for (int i = 0; i < 8; ++i) {
    CHECK(ew.w_bar[i] == Catch::Approx(0.125).margin(1e-15));
    CHECK(ew.tilde_w[i] == Catch::Approx(0.0).margin(1e-15));
  }

  const auto m = dirl::mean_weights(
      two_asset_panel(), make_params((Eigen::Vector2d() << 1.0, 0.4).finished(), PolicyForm::F1));
  CHECK(m.w_bar[0] == Catch::Approx(0.55).margin(1e-12));
  CHECK(m.w_bar[1] == Catch::Approx(0.45).margin(1e-12));
  CHECK(m.tilde_w[0] == Catch::Approx(0.05).margin(1e-12));
  CHECK(m.tilde_w[1] == Catch::Approx(-0.05).margin(1e-12));
  CHECK(m.tilde_w == m.tilt);  // exact identity for the linear form
}

TEST_CASE("linear mean weights split exactly on zero-sum columns", "[policy]") {
  dirl::Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const FeaturePanel panel = random_panel(6 + rng.uniform_int(20), 1 + rng.uniform_int(3), rng);
    PolicyParams params;
    params.form = PolicyForm::F1;
    params.theta.resize(panel.n_features() + 1);
    params.theta[0] = rng.uniform(0.9, 1.4);
    for (int j = 1; j <= panel.n_features(); ++j) params.theta[j] = rng.uniform(-0.3, 0.3);
    const auto m = dirl::mean_weights(panel, params);
    const auto c = dirl::concentration_from_features(panel, params);
    // sigma = N theta0 on centered grids.
    CHECK(c.sigma ==
          Catch::Approx(panel.n_assets() * params.theta[0]).epsilon(0).margin(1e-12 * c.sigma));
    CHECK(std::abs(m.tilde_w.sum()) < 1e-12);
    CHECK((m.tilde_w - m.tilt).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.tilt.cwiseAbs().maxCoeff() <= m.tilt_bound + 1e-15);
  }
}

TEST_CASE("exponential mean weights approach the first-order form", "[policy]") {
  dirl::Rng rng(23);
  const FeaturePanel panel = random_panel(12, 2, rng);
  std::vector<double> scales = {1e-1, 1e-2, 1e-3};
  std::vector<double> errors;
  for (double s : scales) {
    PolicyParams params;
    params.form = PolicyForm::F2;
    params.theta.resize(3);
    params.theta << 0.4, 0.6 * s, -0.4 * s;
    const auto m = dirl::mean_weights(panel, params);
    const VectorXd approx =
        VectorXd::Constant(12, 1.0 / 12.0) + params.theta[0] * m.tilt;
    errors.push_back((m.w_bar - approx).cwiseAbs().maxCoeff());
  }
  // Error must shrink at least linearly in the scale of theta^(-0).
  CHECK(errors[1] < errors[0] * 0.2);
  CHECK(errors[2] < errors[1] * 0.2);
}

TEST_CASE("score gradient matches the hand-computed flat case", "[policy]") {
  MatrixXd ones(2, 1);
  ones << 1.0, 1.0;
  const FeaturePanel panel = oracles::make_panel(ones);
  const PolicyParams params = make_params(VectorXd::Ones(1), PolicyForm::F1);
  const AllocationSample w{(Eigen::Vector2d() << 0.5, 0.5).finished()};
  const VectorXd g = dirl::score_gradient(w, panel, params);
  // 2 (psi(2) - psi(1)) + ln(1/4)
  CHECK(g[0] == Catch::Approx(2.0 + std::log(0.25)).epsilon(0).margin(1e-12));
  const VectorXd fd = oracles::fd_log_pdf_gradient(w, panel, params);
  CHECK(g[0] == Catch::Approx(fd[0]).margin(1e-7));
}

TEST_CASE("score gradient agrees with finite differences", "[policy]") {
  dirl::Rng rng(31);
  for (int form_idx = 0; form_idx < 2; ++form_idx) {
    const PolicyForm form = form_idx == 0 ? PolicyForm::F1 : PolicyForm::F2;
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 3 + rng.uniform_int(6);
      const int k = rng.uniform_int(4);
      const FeaturePanel panel = random_panel(n, k, rng);
      PolicyParams params;
      params.form = form;
      params.theta.resize(k + 1);
      if (form == PolicyForm::F1) {
        params.theta[0] = rng.uniform(0.9, 1.3);
        for (int j = 1; j <= k; ++j) params.theta[j] = rng.uniform(-0.4, 0.4);
      } else {
        params.theta[0] = rng.uniform(-0.5, 0.5);
        for (int j = 1; j <= k; ++j) params.theta[j] = rng.uniform(-1.0, 1.0);
      }
      const AllocationSample w =
          dirl::dirichlet_sample(dirl::concentration_from_features(panel, params), rng);
      const VectorXd g = dirl::score_gradient(w, panel, params);
      const VectorXd fd = oracles::fd_log_pdf_gradient(w, panel, params);
      for (int j = 0; j <= k; ++j) {
        if (std::abs(g[j]) > 1e-3)
          CHECK(std::abs(g[j] - fd[j]) / std::abs(g[j]) < 1e-5);
        else
          CHECK(std::abs(g[j] - fd[j]) < 1e-8);
      }
    }
  }
}

TEST_CASE("score function has zero mean under the policy", "[policy]") {
  dirl::Rng rng(37);
  const FeaturePanel panel = random_panel(6, 2, rng);
  PolicyParams params;
  params.form = PolicyForm::F1;
  params.theta.resize(3);
  params.theta << 1.0, 0.3, -0.2;
  const auto conc = dirl::concentration_from_features(panel, params);
  const long draws = 200000;
  VectorXd sum = VectorXd::Zero(3), sum_sq = VectorXd::Zero(3);
  for (long i = 0; i < draws; ++i) {
    const VectorXd g =
        dirl::score_gradient(dirl::dirichlet_sample(conc, rng), panel, params);
    sum += g;
    sum_sq += g.cwiseProduct(g);
  }
  for (int j = 0; j < 3; ++j) {
    const double mean = sum[j] / draws;
    const double se = std::sqrt((sum_sq[j] / draws - mean * mean) / draws);
    CHECK(std::abs(mean) <= 3.0 * se);
  }
}

TEST_CASE("score weights are centered log weights", "[policy]") {
  dirl::Rng rng(41);
  const FeaturePanel panel = random_panel(5, 1, rng);
  PolicyParams params;
  params.form = PolicyForm::F1;
  params.theta = (Eigen::Vector2d() << 1.1, 0.25).finished();
  const auto conc = dirl::concentration_from_features(panel, params);
  const AllocationSample w = dirl::dirichlet_sample(conc, rng);
  for (int n = 0; n < 5; ++n) {
    const double lhs =
        dirl::digamma(conc.sigma) - dirl::digamma(conc.a[n]) + std::log(w.w[n]);
    const double rhs = std::log(w.w[n]) - dirl::expected_log_weight(conc, n);
    CHECK(lhs == Catch::Approx(rhs).epsilon(0).margin(1e-12));
  }
}

TEST_CASE("projection is the identity on feasible points", "[policy]") {
  const FeaturePanel panel = two_asset_panel();
  dirl::ConcentrationBounds bounds;
  const VectorXd feasible = (Eigen::Vector2d() << 1.0, 0.4).finished();
  CHECK(dirl::project_feasible(feasible, panel, bounds) == feasible);
}

TEST_CASE("projection clamps the one-dimensional case", "[policy]") {
  MatrixXd ones(2, 1);
  ones << 1.0, 1.0;
  const FeaturePanel panel = oracles::make_panel(ones);
  dirl::ConcentrationBounds bounds;  // [0.2, 1.6]
  const VectorXd projected = dirl::project_feasible(VectorXd::Constant(1, 2.0), panel, bounds);
  CHECK(projected[0] == Catch::Approx(1.6).margin(1e-9));
  const VectorXd below = dirl::project_feasible(VectorXd::Constant(1, 0.05), panel, bounds);
  CHECK(below[0] == Catch::Approx(0.2).margin(1e-9));
}

TEST_CASE("projection matches the brute-force solver on small instances", "[policy]") {
  dirl::Rng rng(53);
  dirl::ConcentrationBounds bounds;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + rng.uniform_int(3);
    const int k = 1 + rng.uniform_int(2);
    const FeaturePanel panel = random_panel(n, k, rng);
    VectorXd target(k + 1);
    target[0] = rng.uniform(-1.0, 3.0);
    for (int j = 1; j <= k; ++j) target[j] = rng.uniform(-2.0, 2.0);
    const VectorXd projected = dirl::project_feasible(target, panel, bounds);
    const VectorXd oracle =
        oracles::brute_force_projection(target, panel.x, bounds.a_minus, bounds.a_plus);
    CHECK((projected - oracle).cwiseAbs().maxCoeff() < 1e-6);

    const Eigen::VectorXd a = panel.x * projected;
    CHECK(a.minCoeff() >= bounds.a_minus - 1e-9);
    CHECK(a.maxCoeff() <= bounds.a_plus + 1e-9);

    const VectorXd twice = dirl::project_feasible(projected, panel, bounds);
    CHECK((twice - projected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("projection rejects malformed bounds", "[policy]") {
  const FeaturePanel panel = two_asset_panel();
  dirl::ConcentrationBounds bad;
  bad.a_minus = 1.0;
  bad.a_plus = 0.5;
  CHECK_THROWS_AS(dirl::project_feasible(VectorXd::Ones(2), panel, bad), std::invalid_argument);
}
