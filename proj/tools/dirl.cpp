// Command-line surface: synthetic dataset generation, walk-forward backtests,
// cross-sectional diagnostics, and the numerical verification suite.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dirl/analytics.hpp"
#include "dirl/io.hpp"
#include "dirl/market.hpp"
#include "dirl/reinforce.hpp"
#include "dirl/verification.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

using nlohmann::json;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  json j;
  in >> j;
  return j;
}

template <typename T>
void maybe_set(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

struct LearnFlags {
  std::optional<int> episodes;
  std::optional<double> eta;
  std::optional<double> kappa;
  std::optional<double> gamma;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> protocol;
  std::optional<std::string> policy;
  std::optional<std::string> reward;
  std::optional<double> a_min;
  std::optional<double> a_max;
  std::optional<int> n_draw;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--episodes", episodes, "episodes per learning pass");
    cmd->add_option("--eta", eta, "learning rate in (0,1)");
    cmd->add_option("--kappa", kappa, "EW decay for the differential Sharpe reward");
    cmd->add_option("--gamma", gamma, "reward discount in (0,1]");
    cmd->add_option("--seed", seed, "random seed driving every draw");
    cmd->add_option("--protocol", protocol, "bootstrap|chrono")
        ->check(CLI::IsMember({"bootstrap", "chrono", "chronological"}));
    cmd->add_option("--policy", policy, "f1|f2")->check(CLI::IsMember({"f1", "f2"}));
    cmd->add_option("--reward", reward, "return|diff_sharpe")
        ->check(CLI::IsMember({"return", "diff_sharpe"}));
    cmd->add_option("--a-min", a_min, "lower concentration bound");
    cmd->add_option("--a-max", a_max, "upper concentration bound");
    cmd->add_option("--n-draw", n_draw, "assets sampled per episode step");
  }
};

dirl::LearnConfig parse_learn_config(const json& cfg, const LearnFlags& flags) {
  dirl::LearnConfig learn;
  const json j = cfg.contains("learn") ? cfg.at("learn") : cfg;
  maybe_set(j, "episodes", learn.n_episodes);
  maybe_set(j, "eta", learn.learning_rate);
  maybe_set(j, "seed", learn.seed);
  maybe_set(j, "n_draw", learn.n_assets_per_draw);
  maybe_set(j, "kappa", learn.reward.kappa);
  maybe_set(j, "gamma", learn.reward.gamma);
  maybe_set(j, "a_min", learn.bounds.a_minus);
  maybe_set(j, "a_max", learn.bounds.a_plus);
  maybe_set(j, "kappa_max", learn.bounds.kappa_max);
  maybe_set(j, "reinit_each_period", learn.reinit_each_period);
  if (j.contains("theta_init")) {
    const auto v = j.at("theta_init").get<std::vector<double>>();
    learn.theta_init = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  auto parse_protocol = [&](const std::string& s) {
    learn.protocol = (s == "bootstrap") ? dirl::Protocol::bootstrap : dirl::Protocol::chronological;
  };
  auto parse_policy = [&](const std::string& s) {
    learn.form = (s == "f1") ? dirl::PolicyForm::F1 : dirl::PolicyForm::F2;
  };
  auto parse_reward = [&](const std::string& s) {
    learn.reward.kind = (s == "return") ? dirl::RewardKind::ret : dirl::RewardKind::diff_sharpe;
  };
  if (j.contains("protocol")) parse_protocol(j.at("protocol").get<std::string>());
  if (j.contains("policy")) parse_policy(j.at("policy").get<std::string>());
  if (j.contains("reward")) parse_reward(j.at("reward").get<std::string>());

  if (flags.episodes) learn.n_episodes = *flags.episodes;
  if (flags.eta) learn.learning_rate = *flags.eta;
  if (flags.kappa) learn.reward.kappa = *flags.kappa;
  if (flags.gamma) learn.reward.gamma = *flags.gamma;
  if (flags.seed) learn.seed = *flags.seed;
  if (flags.n_draw) learn.n_assets_per_draw = *flags.n_draw;
  if (flags.a_min) learn.bounds.a_minus = *flags.a_min;
  if (flags.a_max) learn.bounds.a_plus = *flags.a_max;
  if (flags.protocol) parse_protocol(*flags.protocol == "chrono" ? "chronological" : *flags.protocol);
  if (flags.policy) parse_policy(*flags.policy);
  if (flags.reward) parse_reward(*flags.reward);
  learn.validate();
  return learn;
}

dirl::FactorModelSpec parse_model_spec(const json& cfg, int k_features) {
  dirl::FactorModelSpec spec;
  const json j = cfg.contains("model") ? cfg.at("model") : cfg;
  spec.beta_bar = Eigen::VectorXd::Zero(k_features + 1);
  spec.beta_bar[0] = 0.01;
  spec.sigma_beta_sq = Eigen::VectorXd::Zero(k_features + 1);
  if (j.contains("beta_bar")) {
    const auto v = j.at("beta_bar").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != k_features + 1)
      throw std::invalid_argument("beta_bar must have features + 1 entries");
    spec.beta_bar = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (j.contains("sigma_beta_sq")) {
    const auto v = j.at("sigma_beta_sq").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != k_features + 1)
      throw std::invalid_argument("sigma_beta_sq must have features + 1 entries");
    spec.sigma_beta_sq =
        Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  maybe_set(j, "sigma_eps_sq", spec.sigma_eps_sq);
  maybe_set(j, "t_dof", spec.t_dof);
  if (j.contains("noise")) {
    const auto s = j.at("noise").get<std::string>();
    if (s == "gaussian") spec.noise_law = dirl::NoiseLaw::gaussian;
    else if (s == "student_t") spec.noise_law = dirl::NoiseLaw::student_t;
    else throw std::invalid_argument("noise must be gaussian or student_t");
  }
  spec.validate();
  return spec;
}

int cmd_generate(const std::string& config_path, const std::string& out_path,
                 const LearnFlags& flags, std::optional<int> assets, std::optional<int> periods,
                 std::optional<int> features) {
  json cfg;
  int n_assets = 100, n_periods = 60, k_features = 3;
  std::uint64_t seed = 42;
  double redraw = 1.0;
  auto interval = dirl::UniformInterval::centered;
  dirl::MonthDate start{2000, 1};
  dirl::FactorModelSpec spec;
  try {
    cfg = load_config(config_path);
    maybe_set(cfg, "assets", n_assets);
    maybe_set(cfg, "periods", n_periods);
    maybe_set(cfg, "features", k_features);
    maybe_set(cfg, "seed", seed);
    maybe_set(cfg, "feature_redraw_prob", redraw);
    if (cfg.contains("interval")) {
      const auto s = cfg.at("interval").get<std::string>();
      if (s == "centered") interval = dirl::UniformInterval::centered;
      else if (s == "unit") interval = dirl::UniformInterval::unit;
      else throw std::invalid_argument("interval must be centered or unit");
    }
    if (cfg.contains("start")) start = dirl::MonthDate::parse(cfg.at("start").get<std::string>());
    if (assets) n_assets = *assets;
    if (periods) n_periods = *periods;
    if (features) k_features = *features;
    if (flags.seed) seed = *flags.seed;
    spec = parse_model_spec(cfg, k_features);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    dirl::Rng rng(seed);
    const dirl::MarketDataset ds =
        dirl::generate_synthetic(spec, n_assets, n_periods, k_features, rng, redraw, interval, start);
    dirl::save_csv(ds, out_path);
    std::cout << "wrote " << out_path << ": N=" << n_assets << " K=" << k_features
              << " T=" << n_periods << '\n';
    for (int k = 0; k <= k_features; ++k) {
      double pac = 0.0;
      for (int i = 0; i < ds.n_periods(); ++i)
        pac += dirl::realized_pac(ds.panels[static_cast<std::size_t>(i)],
                                  ds.forward_returns[static_cast<std::size_t>(i)], k);
      pac /= ds.n_periods();
      std::cout << "  avg realized PAC " << ds.panels.front().feature_names[static_cast<std::size_t>(k)]
                << " = " << pac << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

int cmd_backtest(const std::string& config_path, const std::string& dataset_path,
                 const std::string& out_dir, const LearnFlags& flags) {
  dirl::LearnConfig learn;
  std::string dataset = dataset_path;
  try {
    const json cfg = load_config(config_path);
    if (dataset.empty() && cfg.contains("dataset")) dataset = cfg.at("dataset").get<std::string>();
    if (dataset.empty()) throw std::invalid_argument("no dataset given (--dataset or config)");
    learn = parse_learn_config(cfg, flags);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const dirl::CsvLoadResult loaded = dirl::load_csv(dataset);
    if (loaded.dropped_rows > 0)
      std::cout << "dropped " << loaded.dropped_rows << " rows with missing characteristics\n";
    const dirl::BacktestReport report = dirl::run_backtest(loaded.dataset, learn);
    std::filesystem::create_directories(out_dir);
    dirl::write_backtest_csv(report, out_dir + "/report.csv");
    dirl::write_backtest_json(report, out_dir + "/report.json");
    std::cout << "months: " << report.n_months() << '\n'
              << "avg monthly return: " << report.avg_return << '\n'
              << "avg EW return:      " << report.avg_ew_return << '\n'
              << "delta vs EW:        " << report.avg_return - report.avg_ew_return << '\n'
              << "monthly sharpe:     " << report.sharpe << '\n'
              << "avg turnover:       " << report.turnover << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

int cmd_diagnose(const std::string& config_path, const std::string& dataset_path,
                 const std::string& out_dir, const LearnFlags& flags, int window,
                 double gamma_risk, bool no_compare) {
  dirl::LearnConfig learn;
  std::string dataset = dataset_path;
  try {
    const json cfg = load_config(config_path);
    if (dataset.empty() && cfg.contains("dataset")) dataset = cfg.at("dataset").get<std::string>();
    if (dataset.empty()) throw std::invalid_argument("no dataset given (--dataset or config)");
    learn = parse_learn_config(cfg, flags);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const dirl::CsvLoadResult loaded = dirl::load_csv(dataset);
    const dirl::MarketDataset& ds = loaded.dataset;
    const auto estimates = dirl::rolling_beta_estimates(ds, window);
    if (estimates.empty())
      throw std::invalid_argument("dataset shorter than the rolling window (" +
                                  std::to_string(window) + " months)");

    std::map<int, Eigen::VectorXd> tilde_by_month;
    for (const auto& [date, est] : estimates) {
      const int n = ds.panels[static_cast<std::size_t>(ds.index_of(date))].n_assets();
      tilde_by_month[date.serial()] = dirl::scaled_unconstrained_theta(est, n, gamma_risk);
    }

    std::map<int, Eigen::VectorXd> delta_by_month;
    std::vector<dirl::SlopeTest> slopes;
    if (!no_compare) {
      const dirl::BacktestReport report = dirl::run_backtest(ds, learn);
      for (std::size_t i = 1; i < report.dates.size(); ++i)
        delta_by_month[report.dates[i].serial()] =
            report.theta_path[i] - report.theta_path[i - 1];
      std::vector<Eigen::VectorXd> theta_aligned, tilde_aligned;
      for (std::size_t i = 0; i < report.dates.size(); ++i) {
        const auto it = tilde_by_month.find(report.dates[i].serial());
        if (it == tilde_by_month.end()) continue;
        theta_aligned.push_back(report.theta_path[i]);
        tilde_aligned.push_back(it->second);
      }
      if (theta_aligned.size() >= 4) slopes = dirl::compare_updates(theta_aligned, tilde_aligned);
    }

    const auto& names = ds.panels.front().feature_names;
    std::vector<dirl::DiagnosticsRow> rows;
    for (const auto& [date, est] : estimates) {
      const auto tilde = tilde_by_month.at(date.serial());
      const auto delta_it = delta_by_month.find(date.serial());
      for (Eigen::Index k = 0; k < est.beta_hat.size(); ++k) {
        dirl::DiagnosticsRow row;
        row.date = date;
        row.feature = names[static_cast<std::size_t>(k)];
        row.beta_hat = est.beta_hat[k];
        row.has_tilde = true;
        row.theta_tilde = tilde[k];
        if (delta_it != delta_by_month.end()) {
          row.has_delta = true;
          row.delta_theta = delta_it->second[k];
        }
        rows.push_back(row);
      }
    }

    std::filesystem::create_directories(out_dir);
    dirl::write_diagnostics_csv(rows, out_dir + "/diagnostics.csv");
    json summary;
    summary["months"] = estimates.size();
    summary["window"] = window;
    summary["gamma_risk"] = gamma_risk;
    for (int k = 0; k <= ds.panels.front().n_features(); ++k) {
      double pac = 0.0;
      int months = 0;
      for (int i = 0; i < ds.n_periods(); ++i) {
        if (!ds.has_forward(i)) continue;
        pac += dirl::realized_pac(ds.panels[static_cast<std::size_t>(i)],
                                  ds.forward_returns[static_cast<std::size_t>(i)], k);
        ++months;
      }
      summary["avg_realized_pac"][names[static_cast<std::size_t>(k)]] = pac / std::max(months, 1);
    }
    if (!slopes.empty()) {
      for (std::size_t k = 0; k < slopes.size(); ++k) {
        json s;
        s["slope"] = slopes[k].slope;
        s["intercept"] = slopes[k].intercept;
        s["p_value"] = slopes[k].p_value;
        summary["update_regression"][names[k]] = std::move(s);
      }
    }
    std::ofstream out(out_dir + "/diagnostics.json");
    out << summary.dump(2) << '\n';
    std::cout << "wrote " << out_dir << "/diagnostics.csv and diagnostics.json ("
              << estimates.size() << " months)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

int cmd_verify(bool quick, std::uint64_t seed, double fault) {
  dirl::VerifyOptions opts;
  opts.quick = quick;
  opts.seed = seed;
  opts.digamma_fault = fault;
  bool all_pass = true;
  for (const dirl::CheckResult& r : dirl::run_all_checks(opts)) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << '\n';
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dirichlet-policy reinforcement learning for factor portfolios"};
  app.require_subcommand(1);

  std::string config_path, dataset_path, out_path, out_dir;
  LearnFlags flags;
  std::optional<int> assets, periods, features;
  int window = 24;
  double gamma_risk = 2.0;
  bool no_compare = false;
  bool quick = false;
  std::uint64_t verify_seed = 42;
  double fault = 0.0;

  auto* generate = app.add_subcommand("generate", "write a synthetic dataset CSV");
  generate->add_option("--config", config_path, "JSON config");
  generate->add_option("--out", out_path, "output CSV path")->required();
  generate->add_option("--assets", assets, "universe size");
  generate->add_option("--periods", periods, "number of months");
  generate->add_option("--features", features, "non-constant characteristics");
  flags.add_to(generate);

  auto* backtest = app.add_subcommand("backtest", "walk-forward learning and allocation");
  backtest->add_option("--config", config_path, "JSON config");
  backtest->add_option("--dataset", dataset_path, "dataset CSV");
  backtest->add_option("--out", out_dir, "output directory")->required();
  flags.add_to(backtest);

  auto* diagnose = app.add_subcommand("diagnose", "cross-sectional loadings and update regressions");
  diagnose->add_option("--config", config_path, "JSON config");
  diagnose->add_option("--dataset", dataset_path, "dataset CSV");
  diagnose->add_option("--out", out_dir, "output directory")->required();
  diagnose->add_option("--window", window, "rolling window for loading variances");
  diagnose->add_option("--gamma-risk", gamma_risk, "risk aversion scaling");
  diagnose->add_flag("--no-compare", no_compare, "skip the backtest update regression");
  flags.add_to(diagnose);

  auto* verify = app.add_subcommand("verify", "run the numerical verification suite");
  verify->add_flag("--quick", quick, "reduced sample counts, 5-SE gates");
  verify->add_option("--seed", verify_seed, "random seed");
  verify->add_option("--inject-digamma-fault", fault, "test hook: perturb the analytic gradient")
      ->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(config_path, out_path, flags, assets, periods, features);
    if (backtest->parsed()) return cmd_backtest(config_path, dataset_path, out_dir, flags);
    if (diagnose->parsed())
      return cmd_diagnose(config_path, dataset_path, out_dir, flags, window, gamma_risk, no_compare);
    if (verify->parsed()) return cmd_verify(quick, verify_seed, fault);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
