#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dirl/analytics.hpp"
#include "dirl/reinforce.hpp"

namespace dirl {

// Time series of a backtest: date,avg_policy_return,ew_return,theta_*,turnover.
inline void write_backtest_csv(const BacktestReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Eigen::Index dim = report.theta_path.empty() ? 0 : report.theta_path.front().size();
  out << "date,avg_policy_return,ew_return";
  for (Eigen::Index k = 0; k < dim; ++k) out << ",theta_" << k;
  out << ",turnover\n";
  for (std::size_t i = 0; i < report.dates.size(); ++i) {
    out << report.dates[i].str() << ',' << detail::format_double(report.monthly_returns[i]) << ','
        << detail::format_double(report.ew_returns[i]);
    for (Eigen::Index k = 0; k < dim; ++k)
      out << ',' << detail::format_double(report.theta_path[i][k]);
    out << ',';
    if (report.turnover_defined[i]) out << detail::format_double(report.monthly_turnover[i]);
    out << '\n';
  }
}

inline nlohmann::json backtest_report_json(const BacktestReport& report) {
  nlohmann::json j;
  j["summary"] = {
      {"months", report.n_months()},
      {"avg_return", report.avg_return},
      {"avg_ew_return", report.avg_ew_return},
      {"sharpe", report.sharpe},
      {"turnover", report.turnover},
  };
  auto& series = j["series"];
  series = nlohmann::json::array();
  for (std::size_t i = 0; i < report.dates.size(); ++i) {
    nlohmann::json row;
    row["date"] = report.dates[i].str();
    row["avg_policy_return"] = report.monthly_returns[i];
    row["ew_return"] = report.ew_returns[i];
    row["theta"] = std::vector<double>(report.theta_path[i].data(),
                                       report.theta_path[i].data() + report.theta_path[i].size());
    if (report.turnover_defined[i]) row["turnover"] = report.monthly_turnover[i];
    series.push_back(std::move(row));
  }
  auto& hist = j["weight_histograms"];
  hist = nlohmann::json::object();
  for (const auto& [year, weights] : report.weight_histograms)
    hist[std::to_string(year)] = weights;
  return j;
}

inline void write_backtest_json(const BacktestReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << backtest_report_json(report).dump(2) << '\n';
}

// One diagnostics row per (month, feature).
struct DiagnosticsRow {
  MonthDate date;
  std::string feature;
  double beta_hat = 0.0;
  bool has_tilde = false;
  double theta_tilde = 0.0;
  bool has_delta = false;
  double delta_theta = 0.0;
};

inline void write_diagnostics_csv(const std::vector<DiagnosticsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "date,feature,beta_hat,theta_tilde,delta_theta\n";
  for (const auto& row : rows) {
    out << row.date.str() << ',' << row.feature << ',' << detail::format_double(row.beta_hat) << ',';
    if (row.has_tilde) out << detail::format_double(row.theta_tilde);
    out << ',';
    if (row.has_delta) out << detail::format_double(row.delta_theta);
    out << '\n';
  }
}

}  // namespace dirl
