#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dirl/market.hpp"
#include "dirl/policy.hpp"
#include "dirl/rewards.hpp"

namespace dirl {

enum class Protocol { bootstrap, chronological };

// Knobs of one learning run. theta_init left empty means all ones.
struct LearnConfig {
  int n_episodes = 500;
  double learning_rate = 0.1;
  RewardConfig reward;
  int n_assets_per_draw = 100;
  VectorXd theta_init;
  std::uint64_t seed = 42;
  Protocol protocol = Protocol::bootstrap;
  PolicyForm form = PolicyForm::F1;
  ConcentrationBounds bounds;
  bool reinit_each_period = false;

  void validate() const {
    if (n_episodes < 0) throw std::invalid_argument("learn: n_episodes must be nonnegative");
    if (!(learning_rate > 0.0) || !(learning_rate < 1.0))
      throw std::invalid_argument("learn: learning_rate must be in (0, 1)");
    if (n_assets_per_draw < 2) throw std::invalid_argument("learn: n_assets_per_draw must be >= 2");
    reward.validate();
    bounds.validate();
    if (protocol == Protocol::bootstrap && reward.kind == RewardKind::diff_sharpe)
      throw std::invalid_argument(
          "learn: bootstrapped sequences are single-step and support only return rewards");
  }

  VectorXd initial_theta(Eigen::Index dim) const {
    if (theta_init.size() == 0) return VectorXd::Ones(dim);
    if (theta_init.size() != dim) throw std::invalid_argument("learn: theta_init length mismatch");
    return theta_init;
  }
};

// One realized state-action-reward sequence.
struct EpisodeRecord {
  std::vector<std::vector<int>> universe;
  std::vector<AllocationSample> actions;
  std::vector<double> rewards;
  std::vector<double> gains;

  std::size_t n_steps() const { return actions.size(); }
};

namespace detail {

inline VectorXd max_normalized(const VectorXd& g) {
  const double peak = g.cwiseAbs().maxCoeff();
  return peak > 0.0 ? VectorXd(g / peak) : g;
}

inline bool positive_concentrations(const FeaturePanel& panel, const VectorXd& theta) {
  return (panel.x * theta).minCoeff() > 0.0;
}

}  // namespace detail

// Applies theta <- theta + eta gamma^t G_t ghat for every step of the
// episode, where ghat is the score gradient scaled by its largest absolute
// component. Under F1 each update is projected back onto the feasible set of
// that step's panel.
inline PolicyParams reinforce_update(const PolicyParams& params, const EpisodeRecord& episode,
                                     const std::vector<FeaturePanel>& step_panels,
                                     const LearnConfig& config) {
  const std::size_t steps = episode.n_steps();
  if (episode.rewards.size() != steps || episode.gains.size() != steps ||
      step_panels.size() != steps)
    throw std::invalid_argument("reinforce_update: episode pieces have unequal lengths");

  PolicyParams out = params;
  double discount = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const FeaturePanel& panel = step_panels[t];
    if (out.form == PolicyForm::F1 && !detail::positive_concentrations(panel, out.theta))
      out.theta = project_feasible(out.theta, panel, out.bounds);
    const VectorXd ghat = detail::max_normalized(score_gradient(episode.actions[t], panel, out));
    out.theta += config.learning_rate * discount * episode.gains[t] * ghat;
    if (out.form == PolicyForm::F1) out.theta = project_feasible(out.theta, panel, out.bounds);
    discount *= config.reward.gamma;
  }
  return out;
}

struct LearningRun {
  PolicyParams params;
  std::vector<EpisodeRecord> episodes;
};

namespace detail {

constexpr std::uint64_t kBootstrapStream = 1;
constexpr std::uint64_t kChronologicalStream = 2;

inline PolicyParams start_params(const LearnConfig& config, Eigen::Index dim) {
  PolicyParams p;
  p.theta = config.initial_theta(dim);
  p.form = config.form;
  p.bounds = config.bounds;
  return p;
}

}  // namespace detail

// Single-step bootstrap learning at month t: every episode resamples N assets
// (with replacement) from the previous month, draws weights from the current
// policy, and reinforces with the realized return of that draw.
inline LearningRun run_bootstrap_learning(const MarketDataset& ds, const MonthDate& date,
                                          const LearnConfig& config, PolicyParams params) {
  config.validate();
  if (config.reward.kind != RewardKind::ret)
    throw std::invalid_argument("bootstrap learning supports only return rewards");
  const int i = ds.index_of(date);
  if (i < 1) throw std::invalid_argument("bootstrap learning needs the preceding month");
  const auto& panel = ds.panels[static_cast<std::size_t>(i - 1)];
  if (panel.date.next() != date)
    throw alignment_error("bootstrap learning: preceding panel is not the previous calendar month");
  if (!ds.has_forward(i - 1))
    throw std::invalid_argument("bootstrap learning: missing returns for the previous month");
  const auto& slice = ds.forward_returns[static_cast<std::size_t>(i - 1)];

  LearningRun run;
  run.episodes.reserve(static_cast<std::size_t>(config.n_episodes));
  for (int e = 0; e < config.n_episodes; ++e) {
    Rng rng = Rng::substream(config.seed, {detail::kBootstrapStream,
                                           static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(e)});
    EpisodeRecord episode;
    episode.universe.push_back(
        sample_universe(ds, panel.date, config.n_assets_per_draw, rng, true));
    const FeaturePanel sub = panel.subset(episode.universe.front());
    if (params.form == PolicyForm::F1)
      params.theta = project_feasible(params.theta, sub, params.bounds);
    const Concentration a = concentration_from_features(sub, params);
    episode.actions.push_back(dirichlet_sample(a, rng));
    const double rho = portfolio_return(episode.actions.front(), slice.subset(episode.universe.front()));
    episode.rewards.push_back(rho);
    episode.gains = discounted_gains(episode.rewards, config.reward.gamma);
    params = reinforce_update(params, episode, {sub}, config);
    run.episodes.push_back(std::move(episode));
  }
  run.params = std::move(params);
  return run;
}

inline LearningRun run_bootstrap_learning(const MarketDataset& ds, const MonthDate& date,
                                          const LearnConfig& config) {
  const int i = ds.index_of(date);
  if (i < 1) throw std::invalid_argument("bootstrap learning needs the preceding month");
  return run_bootstrap_learning(
      ds, date, config,
      detail::start_params(config, ds.panels[static_cast<std::size_t>(i - 1)].x.cols()));
}

// Twelve-step chronological learning at a January: episodes walk the
// preceding year month by month, resampling assets at every step; rewards are
// either raw returns or the differential Sharpe ratio, whose state resets at
// each episode start.
inline LearningRun run_chronological_learning(const MarketDataset& ds, const MonthDate& january,
                                              const LearnConfig& config, PolicyParams params) {
  config.validate();
  const int j = ds.index_of(january);
  if (j < 12) throw std::invalid_argument("chronological learning needs 12 months of history");
  for (int s = 0; s < 12; ++s) {
    const int idx = j - 12 + s;
    if (ds.panels[static_cast<std::size_t>(idx)].date.serial() != january.serial() - 12 + s)
      throw alignment_error("chronological learning: history months are not consecutive");
    if (!ds.has_forward(idx))
      throw std::invalid_argument("chronological learning: missing returns in the history year");
  }

  LearningRun run;
  run.episodes.reserve(static_cast<std::size_t>(config.n_episodes));
  for (int e = 0; e < config.n_episodes; ++e) {
    Rng rng = Rng::substream(config.seed, {detail::kChronologicalStream,
                                           static_cast<std::uint64_t>(j),
                                           static_cast<std::uint64_t>(e)});
    EpisodeRecord episode;
    std::vector<FeaturePanel> step_panels;
    step_panels.reserve(12);
    SharpeState sharpe = SharpeState::initial(config.reward.kappa);
    for (int s = 0; s < 12; ++s) {
      const auto& panel = ds.panels[static_cast<std::size_t>(j - 12 + s)];
      episode.universe.push_back(
          sample_universe(ds, panel.date, config.n_assets_per_draw, rng, true));
      FeaturePanel sub = panel.subset(episode.universe.back());
      if (params.form == PolicyForm::F1)
        params.theta = project_feasible(params.theta, sub, params.bounds);
      const Concentration a = concentration_from_features(sub, params);
      episode.actions.push_back(dirichlet_sample(a, rng));
      const double rho = portfolio_return(
          episode.actions.back(),
          ds.forward_returns[static_cast<std::size_t>(j - 12 + s)].subset(episode.universe.back()));
      if (config.reward.kind == RewardKind::ret) {
        episode.rewards.push_back(rho);
      } else {
        const SharpeUpdate up = sharpe_update(sharpe, rho);
        sharpe = up.state;
        episode.rewards.push_back(up.reward);
      }
      step_panels.push_back(std::move(sub));
    }
    episode.gains = discounted_gains(episode.rewards, config.reward.gamma);
    params = reinforce_update(params, episode, step_panels, config);
    run.episodes.push_back(std::move(episode));
  }
  run.params = std::move(params);
  return run;
}

inline LearningRun run_chronological_learning(const MarketDataset& ds, const MonthDate& january,
                                              const LearnConfig& config) {
  const int j = ds.index_of(january);
  if (j < 12) throw std::invalid_argument("chronological learning needs 12 months of history");
  return run_chronological_learning(
      ds, january, config,
      detail::start_params(config, ds.panels[static_cast<std::size_t>(j)].x.cols()));
}

// One rebalancing date: target weights, drifted pre-rebalance weights over the
// same (union) index, and the current universe size used as denominator.
struct WeightPair {
  VectorXd rebalanced;
  VectorXd drifted;
  int n_assets = 0;  // 0 means rebalanced.size()
};

// Average monthly rotation (1/T) sum_t N_t^{-1} sum_n |w_{t,n} - w_{t-,n}|.
inline double turnover(const std::vector<WeightPair>& weights_path) {
  if (weights_path.empty()) throw std::invalid_argument("turnover: empty path");
  double total = 0.0;
  for (const auto& pair : weights_path) {
    if (pair.rebalanced.size() != pair.drifted.size())
      throw std::invalid_argument("turnover: misaligned weight pair");
    const int n = pair.n_assets > 0 ? pair.n_assets : static_cast<int>(pair.rebalanced.size());
    total += (pair.rebalanced - pair.drifted).cwiseAbs().sum() / static_cast<double>(n);
  }
  return total / static_cast<double>(weights_path.size());
}

// Walk-forward backtest output.
struct BacktestReport {
  std::vector<MonthDate> dates;
  std::vector<double> monthly_returns;  // mean-policy realized returns
  std::vector<double> ew_returns;       // equally-weighted benchmark
  std::vector<VectorXd> theta_path;     // parameters used at each allocation
  std::vector<double> monthly_turnover; // first allocation has no defined rotation
  std::vector<bool> turnover_defined;
  std::map<int, std::vector<double>> weight_histograms;  // year -> weights
  double avg_return = 0.0;
  double avg_ew_return = 0.0;
  double sharpe = 0.0;
  double turnover = 0.0;

  int n_months() const { return static_cast<int>(dates.size()); }
};

namespace detail {

struct AllocationState {
  bool has_previous = false;
  std::vector<std::string> prev_ids;
  VectorXd prev_weights;
  int prev_index = -1;
};

// Drifts the previous allocation with realized returns, renormalizes, and
// evaluates the per-date rotation against the new target weights. Assets that
// left the universe contribute their full drifted weight; entrants start at 0.
inline double rotation_against_previous(const MarketDataset& ds, const AllocationState& state,
                                        int index, const std::vector<std::string>& ids,
                                        const VectorXd& weights) {
  const auto& drift_slice = ds.forward_returns[static_cast<std::size_t>(index - 1)];
  std::unordered_map<std::string, double> drifted;
  drifted.reserve(state.prev_ids.size());
  double total = 0.0;
  for (std::size_t n = 0; n < state.prev_ids.size(); ++n) {
    const double value = state.prev_weights[static_cast<Eigen::Index>(n)] *
                         (1.0 + drift_slice.returns[static_cast<Eigen::Index>(n)]);
    drifted[state.prev_ids[n]] = value;
    total += value;
  }
  double rotation = 0.0;
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const auto it = drifted.find(ids[n]);
    double pre = 0.0;
    if (it != drifted.end()) {
      pre = it->second / total;
      drifted.erase(it);
    }
    rotation += std::abs(weights[static_cast<Eigen::Index>(n)] - pre);
  }
  for (const auto& [id, value] : drifted) {
    (void)id;
    rotation += value / total;
  }
  return rotation / static_cast<double>(ids.size());
}

}  // namespace detail

// Walks the dataset forward under the configured protocol: learn, then
// allocate out of sample with the mean policy over the full universe, record
// realized returns, the parameter path, rotation and weight histograms.
inline BacktestReport run_backtest(const MarketDataset& ds, const LearnConfig& config) {
  config.validate();
  ds.validate();
  if (ds.n_periods() < 2) throw std::invalid_argument("run_backtest: dataset too short");

  BacktestReport report;
  detail::AllocationState state;
  PolicyParams params = detail::start_params(config, ds.panels.front().x.cols());

  auto allocate = [&](int index) {
    const auto& panel = ds.panels[static_cast<std::size_t>(index)];
    PolicyParams alloc = params;
    if (alloc.form == PolicyForm::F1)
      alloc.theta = project_feasible(alloc.theta, panel, alloc.bounds);
    const MeanAllocation m = mean_weights(panel, alloc);
    const auto& slice = ds.forward_returns[static_cast<std::size_t>(index)];

    report.dates.push_back(slice.date);
    report.monthly_returns.push_back(m.w_bar.dot(slice.returns));
    report.ew_returns.push_back(slice.returns.mean());
    report.theta_path.push_back(alloc.theta);
    const bool contiguous = state.has_previous && state.prev_index == index - 1;
    report.turnover_defined.push_back(contiguous);
    report.monthly_turnover.push_back(
        contiguous ? detail::rotation_against_previous(ds, state, index, panel.asset_ids, m.w_bar)
                   : 0.0);
    auto& bucket = report.weight_histograms[panel.date.year];
    bucket.insert(bucket.end(), m.w_bar.data(), m.w_bar.data() + m.w_bar.size());

    state.has_previous = true;
    state.prev_ids = panel.asset_ids;
    state.prev_weights = m.w_bar;
    state.prev_index = index;
  };

  if (config.protocol == Protocol::bootstrap) {
    for (int i = 1; i < ds.n_periods(); ++i) {
      if (!ds.has_forward(i - 1) || !ds.has_forward(i)) break;
      if (config.reinit_each_period)
        params.theta = config.initial_theta(ds.panels[static_cast<std::size_t>(i)].x.cols());
      if (config.n_episodes > 0)
        params = run_bootstrap_learning(ds, ds.panels[static_cast<std::size_t>(i)].date, config,
                                        std::move(params))
                     .params;
      allocate(i);
    }
  } else {
    for (int j = 12; j < ds.n_periods(); ++j) {
      if (ds.panels[static_cast<std::size_t>(j)].date.month != 1) continue;
      if (config.reinit_each_period)
        params.theta = config.initial_theta(ds.panels[static_cast<std::size_t>(j)].x.cols());
      if (config.n_episodes > 0)
        params = run_chronological_learning(ds, ds.panels[static_cast<std::size_t>(j)].date,
                                            config, std::move(params))
                     .params;
      for (int s = 0; s < 12 && j + s < ds.n_periods(); ++s) {
        if (!ds.has_forward(j + s)) break;
        allocate(j + s);
      }
    }
  }

  if (!report.monthly_returns.empty()) {
    double sum = 0.0, sum_ew = 0.0;
    for (std::size_t i = 0; i < report.monthly_returns.size(); ++i) {
      sum += report.monthly_returns[i];
      sum_ew += report.ew_returns[i];
    }
    const double n = static_cast<double>(report.monthly_returns.size());
    report.avg_return = sum / n;
    report.avg_ew_return = sum_ew / n;
    if (report.monthly_returns.size() > 1) {
      double ss = 0.0;
      for (double r : report.monthly_returns) ss += (r - report.avg_return) * (r - report.avg_return);
      const double sd = std::sqrt(ss / (n - 1.0));
      report.sharpe = sd > 0.0 ? report.avg_return / sd : 0.0;
    }
    double turn = 0.0;
    int defined = 0;
    for (std::size_t i = 0; i < report.monthly_turnover.size(); ++i) {
      if (!report.turnover_defined[i]) continue;
      turn += report.monthly_turnover[i];
      ++defined;
    }
    report.turnover = defined > 0 ? turn / defined : 0.0;
  }
  return report;
}

}  // namespace dirl
