#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dirl/special_math.hpp"

namespace dirl {

enum class RewardKind { ret, diff_sharpe };

struct RewardConfig {
  RewardKind kind = RewardKind::ret;
  double kappa = 0.1;    // EW decay, used only for diff_sharpe
  double gamma = 1.0;    // discount

  void validate() const {
    if (!(gamma > 0.0) || gamma > 1.0) throw std::invalid_argument("reward: gamma must be in (0, 1]");
    if (kind == RewardKind::diff_sharpe && (!(kappa > 0.0) || !(kappa < 1.0)))
      throw std::invalid_argument("reward: kappa must be in (0, 1)");
  }
};

// Exponentially weighted return moments driving the differential Sharpe
// reward. Starts from the zero-information state.
struct SharpeState {
  double mu_hat = 0.0;
  double sigma_sq_hat = 0.0;
  double kappa = 0.1;
  double k_kappa = 0.0;  // sqrt((1 - kappa/2) / (1 - kappa))

  static SharpeState initial(double kappa) {
    if (!(kappa > 0.0) || !(kappa < 1.0))
      throw std::invalid_argument("SharpeState: kappa must be in (0, 1)");
    SharpeState s;
    s.kappa = kappa;
    s.k_kappa = std::sqrt((1.0 - 0.5 * kappa) / (1.0 - kappa));
    return s;
  }
};

inline double portfolio_return(const AllocationSample& w, const VectorXd& returns) {
  if (w.w.size() != returns.size()) throw std::invalid_argument("portfolio_return: dimension mismatch");
  return w.w.dot(returns);
}

struct SharpeUpdate {
  SharpeState state;
  double reward = 0.0;
};

// One step of the differential Sharpe recursion. A degenerate variance
// (below 1e-18) caps the reward at +-100 with the sign of the mean.
inline SharpeUpdate sharpe_update(const SharpeState& state, double rho) {
  constexpr double kVarFloor = 1e-18;
  constexpr double kCap = 100.0;
  SharpeUpdate out;
  out.state = state;
  out.state.mu_hat = state.kappa * rho + (1.0 - state.kappa) * state.mu_hat;
  out.state.sigma_sq_hat = state.kappa * rho * rho + (1.0 - state.kappa) * state.sigma_sq_hat;
  const double var = out.state.sigma_sq_hat - out.state.mu_hat * out.state.mu_hat;
  if (var <= kVarFloor) {
    const double sign = out.state.mu_hat > 0.0 ? 1.0 : (out.state.mu_hat < 0.0 ? -1.0 : 0.0);
    out.reward = sign * kCap;
    return out;
  }
  out.reward = out.state.mu_hat / (state.k_kappa * std::sqrt(var));
  return out;
}

// Discounted gains G_t by the backward recursion G_t = R_{t+1} + gamma G_{t+1}.
inline std::vector<double> discounted_gains(const std::vector<double>& rewards, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("discounted_gains: empty reward sequence");
  if (!(gamma > 0.0) || gamma > 1.0) throw std::invalid_argument("discounted_gains: gamma must be in (0, 1]");
  std::vector<double> gains(rewards.size());
  gains.back() = rewards.back();
  for (std::size_t i = rewards.size() - 1; i-- > 0;)
    gains[i] = rewards[i] + gamma * gains[i + 1];
  return gains;
}

}  // namespace dirl
