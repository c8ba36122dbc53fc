#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <string>

#include "dirl/market.hpp"
#include "dirl/special_math.hpp"

namespace dirl {

enum class PolicyForm { F1, F2 };

// Policy parameters: theta maps characteristics to concentrations, either
// linearly (F1) or through an exponential (F2).
struct PolicyParams {
  VectorXd theta;  // K+1 entries, bias first
  PolicyForm form = PolicyForm::F1;
  ConcentrationBounds bounds;
};

namespace detail {

inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("DIRL_LOG");
    if (!env) return 0;
    const std::string v(env);
    if (v == "debug") return 3;
    if (v == "info") return 2;
    if (v == "warn" || v == "warning") return 1;
    return 0;
  }();
  return level;
}

inline void log_warn(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[dirl warn] " << msg << '\n';
}

}  // namespace detail

// Concentrations induced by the panel: a = X theta (F1) or exp(X theta) (F2).
// Under F1 a non-positive concentration means theta left the feasible set and
// the caller must project first.
inline Concentration concentration_from_features(const FeaturePanel& panel, const PolicyParams& params) {
  panel.validate();
  if (params.theta.size() != panel.x.cols())
    throw std::invalid_argument("concentration_from_features: theta length does not match panel");
  VectorXd a = panel.x * params.theta;
  if (params.form == PolicyForm::F1) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (!(a[i] > 0.0))
        throw infeasible_parameters_error(
            "concentration_from_features: non-positive concentration under F1; project theta first");
    return Concentration::from(std::move(a));
  }
  a = a.array().exp();
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]))
      throw std::overflow_error("concentration_from_features: exponential concentration overflow");
  if (a.maxCoeff() > params.bounds.a_plus)
    detail::log_warn("F2 concentration " + std::to_string(a.maxCoeff()) + " exceeds a_plus " +
                     std::to_string(params.bounds.a_plus) + " at " + panel.date.str());
  return Concentration::from(std::move(a));
}

// Mean policy weights and their split around the uniform allocation.
// tilde_w is the deviation w_bar - 1/N; tilt is the characteristic-driven
// long-short component (1/(N theta0)) * X^(-0) theta^(-0), which equals
// tilde_w exactly under F1 on zero-sum columns and enters the first-order
// form 1/N + theta0 * tilt under F2. tilt_bound caps |tilt| when the
// characteristics live in [-0.5, 0.5].
struct MeanAllocation {
  VectorXd w_bar;
  VectorXd tilde_w;
  VectorXd tilt;
  double tilt_bound = 0.0;
};

inline MeanAllocation mean_weights(const FeaturePanel& panel, const PolicyParams& params) {
  const Concentration c = concentration_from_features(panel, params);
  const int n = panel.n_assets();
  MeanAllocation m;
  m.w_bar = c.a / c.sigma;
  m.tilde_w = m.w_bar.array() - 1.0 / n;
  const double theta0 = params.theta[0];
  const Eigen::Index k = params.theta.size() - 1;
  if (theta0 != 0.0 && k > 0) {
    m.tilt = panel.x.rightCols(k) * params.theta.tail(k) / (n * theta0);
    m.tilt_bound = params.theta.tail(k).cwiseAbs().sum() / (2.0 * n * std::abs(theta0));
  } else {
    m.tilt = VectorXd::Zero(n);
    m.tilt_bound = k > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return m;
}

// Gradient of the log policy density with respect to theta at the sampled
// weights: sum_n (psi(sigma) - psi(a_n) + ln w_n) * grad a_n, where grad a_n
// is x_n under F1 and a_n x_n under F2.
inline VectorXd score_gradient(const AllocationSample& w, const FeaturePanel& panel,
                               const PolicyParams& params) {
  const Concentration c = concentration_from_features(panel, params);
  if (w.w.size() != c.a.size()) throw std::invalid_argument("score_gradient: dimension mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < w.w.size(); ++i) {
    if (!(w.w[i] > 0.0))
      throw std::domain_error("score_gradient: weights must be strictly inside the simplex");
    sum += w.w[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::domain_error("score_gradient: weights must sum to one");

  const double psi_sigma = digamma(c.sigma);
  VectorXd coef(c.a.size());
  for (Eigen::Index i = 0; i < c.a.size(); ++i)
    coef[i] = psi_sigma - digamma(c.a[i]) + std::log(w.w[i]);
  if (params.form == PolicyForm::F2) coef = coef.cwiseProduct(c.a);
  return panel.x.transpose() * coef;
}

namespace detail {

inline bool concentrations_within(const FeaturePanel& panel, const VectorXd& theta,
                                  const ConcentrationBounds& bounds, double tol) {
  const VectorXd a = panel.x * theta;
  return a.minCoeff() >= bounds.a_minus - tol && a.maxCoeff() <= bounds.a_plus + tol;
}

}  // namespace detail

// Euclidean projection of theta onto {theta : a_minus <= X theta <= a_plus},
// computed with Dykstra's alternating projections over the 2N halfspaces.
// Feasible inputs are returned unchanged. The set is nonempty whenever the
// panel carries the constant column, since the midpoint bias is feasible.
inline VectorXd project_feasible(const VectorXd& theta_star, const FeaturePanel& panel,
                                 const ConcentrationBounds& bounds) {
  panel.validate();
  bounds.validate();
  if (theta_star.size() != panel.x.cols())
    throw std::invalid_argument("project_feasible: theta length does not match panel");
  if (detail::concentrations_within(panel, theta_star, bounds, 0.0)) return theta_star;

  const int n = panel.n_assets();
  const Eigen::Index dim = theta_star.size();
  constexpr int kMaxSweeps = 10000;
  constexpr double kTol = 1e-10;

  VectorXd theta = theta_star;
  Eigen::MatrixXd corrections = Eigen::MatrixXd::Zero(dim, 2 * n);
  VectorXd row_sq(n);
  for (int i = 0; i < n; ++i) row_sq[i] = panel.x.row(i).squaredNorm();

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    const VectorXd before = theta;
    for (int i = 0; i < 2 * n; ++i) {
      const int row = i / 2;
      const VectorXd y = theta + corrections.col(i);
      const double v = panel.x.row(row).dot(y);
      double shift = 0.0;
      if (i % 2 == 0) {
        if (v > bounds.a_plus) shift = (v - bounds.a_plus) / row_sq[row];
      } else {
        if (v < bounds.a_minus) shift = (v - bounds.a_minus) / row_sq[row];
      }
      theta = y - shift * panel.x.row(row).transpose();
      corrections.col(i) = y - theta;
    }
    if ((theta - before).cwiseAbs().maxCoeff() < kTol &&
        detail::concentrations_within(panel, theta, bounds, 1e-9))
      break;
  }
  if (!detail::concentrations_within(panel, theta, bounds, 1e-9))
    throw std::runtime_error("project_feasible: projection did not converge");
  return theta;
}

}  // namespace dirl
