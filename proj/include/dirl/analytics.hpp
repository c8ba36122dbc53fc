#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dirl/market.hpp"
#include "dirl/policy.hpp"

namespace dirl {

// Gradient of the one-step performance measure for the risk-insensitive
// agent: sum_n (E[r_n] - E_pi[R]) grad a_n / sigma.
inline VectorXd closed_form_gradient(const FeaturePanel& panel, const PolicyParams& params,
                                     const VectorXd& expected_returns) {
  if (expected_returns.size() != panel.x.rows())
    throw std::invalid_argument("closed_form_gradient: expected returns size mismatch");
  const Concentration c = concentration_from_features(panel, params);
  const double policy_return = c.a.dot(expected_returns) / c.sigma;
  VectorXd excess = expected_returns.array() - policy_return;
  if (params.form == PolicyForm::F2) excess = excess.cwiseProduct(c.a);
  return panel.x.transpose() * excess / c.sigma;
}

// Performance sensitivities restricted to an index subset, for panels with a
// single non-constant characteristic.
struct SubsetGradient {
  double d_theta0 = 0.0;
  double d_theta1 = 0.0;
};

inline SubsetGradient subset_gradient(const FeaturePanel& panel, const PolicyParams& params,
                                      const VectorXd& expected_returns,
                                      const std::vector<int>& subset) {
  if (panel.n_features() != 1)
    throw std::invalid_argument("subset_gradient: requires exactly one non-constant characteristic");
  if (expected_returns.size() != panel.x.rows())
    throw std::invalid_argument("subset_gradient: expected returns size mismatch");
  if (subset.empty()) throw std::invalid_argument("subset_gradient: empty subset");
  const FeaturePanel sub = panel.subset(subset);
  VectorXd mu(static_cast<Eigen::Index>(subset.size()));
  for (std::size_t i = 0; i < subset.size(); ++i) mu[static_cast<Eigen::Index>(i)] = expected_returns[subset[i]];
  const Concentration c = concentration_from_features(sub, params);
  const double policy_return = c.a.dot(mu) / c.sigma;
  const VectorXd excess = mu.array() - policy_return;
  SubsetGradient g;
  g.d_theta0 = excess.sum() / c.sigma;
  g.d_theta1 = sub.x.col(1).dot(excess) / c.sigma;
  return g;
}

// Finite-state characteristic chain: a panel per state and a row-stochastic
// transition matrix applied at every step.
struct FiniteChain {
  std::vector<FeaturePanel> states;
  MatrixXd transition;
  int horizon = 0;

  void validate() const {
    const auto n = static_cast<Eigen::Index>(states.size());
    if (n == 0) throw std::invalid_argument("chain: needs at least one state");
    if (transition.rows() != n || transition.cols() != n)
      throw std::invalid_argument("chain: transition matrix shape mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(transition.row(i).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("chain: transition rows must sum to one");
      if (transition.row(i).minCoeff() < 0.0)
        throw std::invalid_argument("chain: transition entries must be nonnegative");
    }
    if (horizon < 1) throw std::invalid_argument("chain: horizon must be positive");
  }
};

// Value of state `state` at time t under the mean policy, by backward
// recursion: V(t) = E[R_{t+1}] + sum_xi P(xi | s) V(t+1, xi), terminal
// V(T-1) = E[R_T], with E[R | s] = w_bar(s)' f(s).
inline double bellman_value(const FiniteChain& chain, const PolicyParams& params, int t, int state,
                            const std::vector<VectorXd>& expected_return_per_state) {
  chain.validate();
  if (t < 0 || t >= chain.horizon) throw std::invalid_argument("bellman_value: t out of horizon");
  if (state < 0 || state >= static_cast<int>(chain.states.size()))
    throw std::out_of_range("bellman_value: state index");
  if (expected_return_per_state.size() != chain.states.size())
    throw std::invalid_argument("bellman_value: one expected-return vector per state required");

  const int n_states = static_cast<int>(chain.states.size());
  VectorXd step_reward(n_states);
  for (int s = 0; s < n_states; ++s) {
    const auto& panel = chain.states[static_cast<std::size_t>(s)];
    if (expected_return_per_state[static_cast<std::size_t>(s)].size() != panel.x.rows())
      throw std::invalid_argument("bellman_value: expected-return length mismatch at state " +
                                  std::to_string(s));
    const MeanAllocation m = mean_weights(panel, params);
    step_reward[s] = m.w_bar.dot(expected_return_per_state[static_cast<std::size_t>(s)]);
  }

  VectorXd value = step_reward;  // V(T-1, .)
  for (int u = chain.horizon - 2; u >= t; --u) value = step_reward + chain.transition * value;
  return value[state];
}

// Closed-form solution of the quadratic characteristics-based allocation.
struct QuadraticSolution {
  VectorXd theta_star;                // budget-constrained optimum
  VectorXd theta_star_unconstrained;  // c = 0 variant
  double scaling_c = 0.0;             // multiplier enforcing theta' X' 1 = 1
};

// Solves max_theta E[theta'X'X beta - (gamma/2) theta'X'(X(beta - beta_bar) +
// eps)(...)'X theta] subject to theta'X'1 = 1, for diagonal loading and noise
// covariances. Also reports the unconstrained variant.
inline QuadraticSolution lemma1_solution(const FeaturePanel& panel, const FactorModelSpec& spec,
                                         double gamma_risk) {
  panel.validate();
  spec.validate();
  if (!(gamma_risk > 0.0)) throw std::invalid_argument("lemma1_solution: gamma_risk must be positive");
  const Eigen::Index dim = panel.x.cols();
  if (spec.beta_bar.size() != dim)
    throw std::invalid_argument("lemma1_solution: beta_bar length does not match panel");
  if (panel.x.rows() <= dim)
    throw std::invalid_argument("lemma1_solution: needs more assets than parameters");

  const MatrixXd a = panel.x.transpose() * panel.x;
  Eigen::FullPivLU<MatrixXd> lu_a(a);
  if (!lu_a.isInvertible()) throw std::runtime_error("lemma1_solution: singular X'X");

  MatrixXd b = spec.sigma_beta_sq.asDiagonal() * a;
  b.diagonal().array() += spec.sigma_eps_sq;
  Eigen::FullPivLU<MatrixXd> lu_b(b);
  if (!lu_b.isInvertible()) throw std::runtime_error("lemma1_solution: singular risk matrix");

  const VectorXd budget = panel.x.transpose() * VectorXd::Ones(panel.x.rows());  // X' 1
  QuadraticSolution sol;
  sol.theta_star_unconstrained = lu_b.solve(spec.beta_bar) / gamma_risk;
  const VectorXd direction = lu_b.solve(lu_a.solve(budget)) / gamma_risk;
  const double denom = budget.dot(direction);
  if (!(std::abs(denom) > 0.0))
    throw std::runtime_error("lemma1_solution: degenerate budget direction");
  sol.scaling_c = (1.0 - budget.dot(sol.theta_star_unconstrained)) / denom;
  sol.theta_star = sol.theta_star_unconstrained + sol.scaling_c * direction;
  return sol;
}

// OLS cross-sectional regression of next-period returns on the panel.
struct OlsFit {
  VectorXd beta_hat;
  double residual_variance = 0.0;  // denominator N - K - 1
};

inline OlsFit cross_sectional_betas(const FeaturePanel& panel, const ReturnSlice& next_returns) {
  panel.validate();
  if (next_returns.returns.size() != panel.x.rows() || next_returns.date != panel.date.next())
    throw alignment_error("cross_sectional_betas: panel and returns are misaligned");
  const Eigen::Index n = panel.x.rows();
  const Eigen::Index p = panel.x.cols();
  if (n <= p) throw std::invalid_argument("cross_sectional_betas: needs N > K + 1");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(panel.x);
  if (qr.rank() < p) throw std::runtime_error("cross_sectional_betas: singular design");
  OlsFit fit;
  fit.beta_hat = qr.solve(next_returns.returns);
  const VectorXd resid = next_returns.returns - panel.x * fit.beta_hat;
  fit.residual_variance = resid.squaredNorm() / static_cast<double>(n - p);
  return fit;
}

// Per-month inputs for the scaled unconstrained allocation parameters.
struct BetaEstimates {
  VectorXd beta_hat;
  VectorXd sigma_x_sq;     // cross-sectional column variances (entry 0 is 0)
  VectorXd sigma_beta_sq;  // trailing time-series variances of beta_hat
  double sigma_eps_sq = 0.0;
};

// theta~_j = (beta_j / (gamma N)) / (sigma_X,j^2 sigma_beta,j^2 + sigma_eps^2 / N).
inline VectorXd scaled_unconstrained_theta(const BetaEstimates& est, int n_assets, double gamma_risk) {
  if (n_assets < 1) throw std::invalid_argument("scaled_unconstrained_theta: n_assets must be positive");
  if (!(gamma_risk > 0.0)) throw std::invalid_argument("scaled_unconstrained_theta: gamma_risk must be positive");
  const Eigen::Index p = est.beta_hat.size();
  if (est.sigma_x_sq.size() != p || est.sigma_beta_sq.size() != p)
    throw std::invalid_argument("scaled_unconstrained_theta: estimate sizes differ");
  VectorXd out(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double denom = est.sigma_x_sq[j] * est.sigma_beta_sq[j] + est.sigma_eps_sq / n_assets;
    if (denom == 0.0) throw std::domain_error("scaled_unconstrained_theta: zero denominator");
    out[j] = est.beta_hat[j] / (gamma_risk * n_assets) / denom;
  }
  return out;
}

// Monthly OLS estimates with trailing-window time-series variances of the
// loadings. Months are emitted once the window is full.
inline std::vector<std::pair<MonthDate, BetaEstimates>> rolling_beta_estimates(
    const MarketDataset& ds, int window = 24) {
  if (window < 2) throw std::invalid_argument("rolling_beta_estimates: window must be >= 2");
  std::vector<std::pair<MonthDate, BetaEstimates>> out;
  std::deque<VectorXd> history;
  for (int i = 0; i < ds.n_periods(); ++i) {
    if (!ds.has_forward(i)) continue;
    const auto& panel = ds.panels[static_cast<std::size_t>(i)];
    const OlsFit fit = cross_sectional_betas(panel, ds.forward_returns[static_cast<std::size_t>(i)]);
    history.push_back(fit.beta_hat);
    if (static_cast<int>(history.size()) > window) history.pop_front();
    if (static_cast<int>(history.size()) < window) continue;

    BetaEstimates est;
    est.beta_hat = fit.beta_hat;
    est.sigma_eps_sq = fit.residual_variance;
    const Eigen::Index p = fit.beta_hat.size();
    est.sigma_x_sq.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double mean = panel.x.col(j).mean();
      est.sigma_x_sq[j] = (panel.x.col(j).array() - mean).square().sum() / panel.x.rows();
    }
    est.sigma_beta_sq.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      double mean = 0.0;
      for (const auto& b : history) mean += b[j];
      mean /= static_cast<double>(history.size());
      double var = 0.0;
      for (const auto& b : history) var += (b[j] - mean) * (b[j] - mean);
      est.sigma_beta_sq[j] = var / static_cast<double>(history.size() - 1);
    }
    out.emplace_back(panel.date, std::move(est));
  }
  return out;
}

// Per-feature OLS of policy updates on the quadratic-model parameters.
struct SlopeTest {
  double slope = 0.0;
  double intercept = 0.0;
  double p_value = 1.0;
};

namespace detail {

inline SlopeTest ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::domain_error("compare_updates: degenerate regressor");
  SlopeTest t;
  t.slope = sxy / sxx;
  t.intercept = my - t.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - t.intercept - t.slope * x[i];
    rss += e * e;
  }
  const double dof = static_cast<double>(n) - 2.0;
  const double s2 = rss / dof;
  if (s2 <= 0.0) {
    t.p_value = t.slope == 0.0 ? 1.0 : 0.0;
    return t;
  }
  const double se = std::sqrt(s2 / sxx);
  t.p_value = student_t_two_sided_p(t.slope / se, dof);
  return t;
}

}  // namespace detail

// Regresses the policy update Delta theta_t = theta_t - theta_{t-1} on the
// aligned quadratic-model series, one regression per feature. Both paths must
// have equal length; entry t of tilde pairs with the update into t.
inline std::vector<SlopeTest> compare_updates(const std::vector<VectorXd>& theta_path,
                                              const std::vector<VectorXd>& tilde_theta_path) {
  if (theta_path.size() != tilde_theta_path.size())
    throw std::invalid_argument("compare_updates: series lengths differ");
  if (theta_path.size() < 4)
    throw std::invalid_argument("compare_updates: needs at least three regression points");
  const Eigen::Index p = theta_path.front().size();
  for (const auto& v : theta_path)
    if (v.size() != p) throw std::invalid_argument("compare_updates: ragged theta path");
  for (const auto& v : tilde_theta_path)
    if (v.size() != p) throw std::invalid_argument("compare_updates: ragged tilde path");

  std::vector<SlopeTest> out;
  out.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> x, y;
    x.reserve(theta_path.size() - 1);
    y.reserve(theta_path.size() - 1);
    for (std::size_t t = 1; t < theta_path.size(); ++t) {
      x.push_back(tilde_theta_path[t][j]);
      y.push_back(theta_path[t][j] - theta_path[t - 1][j]);
    }
    out.push_back(detail::ols_slope(x, y));
  }
  return out;
}

}  // namespace dirl
