#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dirl/rng.hpp"
#include "dirl/special_math.hpp"

namespace dirl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Raised on malformed dataset files (bad header, unparseable field).
class schema_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when panels and return slices do not line up.
class alignment_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Calendar month, serialized as ISO "YYYY-MM".
struct MonthDate {
  int year = 2000;
  int month = 1;

  static MonthDate parse(const std::string& s) {
    if (s.size() != 7 || s[4] != '-') throw schema_error("bad date '" + s + "', expected YYYY-MM");
    for (int i : {0, 1, 2, 3, 5, 6})
      if (!std::isdigit(static_cast<unsigned char>(s[i])))
        throw schema_error("bad date '" + s + "', expected YYYY-MM");
    MonthDate d;
    d.year = std::stoi(s.substr(0, 4));
    d.month = std::stoi(s.substr(5, 2));
    if (d.month < 1 || d.month > 12) throw schema_error("bad month in date '" + s + "'");
    return d;
  }

  std::string str() const {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return buf;
  }

  MonthDate next() const {
    MonthDate d = *this;
    if (++d.month > 12) {
      d.month = 1;
      ++d.year;
    }
    return d;
  }

  int serial() const { return year * 12 + (month - 1); }

  friend bool operator==(const MonthDate& a, const MonthDate& b) { return a.serial() == b.serial(); }
  friend bool operator!=(const MonthDate& a, const MonthDate& b) { return !(a == b); }
  friend bool operator<(const MonthDate& a, const MonthDate& b) { return a.serial() < b.serial(); }
};

// Cross-section of characteristics at one date. The first column is the
// constant and every row describes one asset.
struct FeaturePanel {
  MonthDate date;
  MatrixXd x;  // N x (K+1), first column all ones
  std::vector<std::string> asset_ids;
  std::vector<std::string> feature_names;  // K+1 labels, first "cst"

  int n_assets() const { return static_cast<int>(x.rows()); }
  int n_features() const { return static_cast<int>(x.cols()) - 1; }

  void validate() const {
    if (x.rows() != static_cast<Eigen::Index>(asset_ids.size()))
      throw std::invalid_argument("panel: asset id count mismatch");
    if (!feature_names.empty() && x.cols() != static_cast<Eigen::Index>(feature_names.size()))
      throw std::invalid_argument("panel: feature name count mismatch");
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (std::abs(x(i, 0) - 1.0) > 1e-12)
        throw std::invalid_argument("panel: first column must be all ones");
  }

  // Rows restricted to the given asset indices (duplicates allowed).
  FeaturePanel subset(const std::vector<int>& idx) const {
    FeaturePanel p;
    p.date = date;
    p.feature_names = feature_names;
    p.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    p.asset_ids.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      p.x.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
      p.asset_ids.push_back(asset_ids[static_cast<std::size_t>(idx[r])]);
    }
    return p;
  }
};

// Realized total returns over the month ending at `date`.
struct ReturnSlice {
  MonthDate date;
  VectorXd returns;
  std::vector<std::string> asset_ids;

  bool empty() const { return returns.size() == 0; }

  VectorXd subset(const std::vector<int>& idx) const {
    VectorXd r(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) r[static_cast<Eigen::Index>(i)] = returns[idx[i]];
    return r;
  }
};

enum class NoiseLaw { gaussian, student_t };

// Linear return model r = X beta + eps with randomized loadings.
struct FactorModelSpec {
  VectorXd beta_bar;       // K+1 mean loadings, constant first
  VectorXd sigma_beta_sq;  // K+1 loading variances, entry 0 must be 0
  double sigma_eps_sq = 0.0025;
  NoiseLaw noise_law = NoiseLaw::gaussian;
  double t_dof = 5.0;

  void validate() const {
    if (beta_bar.size() != sigma_beta_sq.size())
      throw std::invalid_argument("factor model: beta_bar and sigma_beta_sq sizes differ");
    if (beta_bar.size() < 1) throw std::invalid_argument("factor model: needs at least the constant loading");
    if (sigma_beta_sq[0] != 0.0)
      throw std::invalid_argument("factor model: the constant loading is not randomized");
    for (Eigen::Index i = 0; i < sigma_beta_sq.size(); ++i)
      if (sigma_beta_sq[i] < 0.0) throw std::invalid_argument("factor model: negative loading variance");
    if (!(sigma_eps_sq > 0.0) && sigma_eps_sq != 0.0)
      throw std::invalid_argument("factor model: negative idiosyncratic variance");
    if (noise_law == NoiseLaw::student_t && !(t_dof > 2.0))
      throw std::invalid_argument("factor model: student-t needs dof > 2");
  }
};

// Time-ordered panels with forward returns: forward_returns[i] realizes over
// (panels[i].date, panels[i].date + 1 month] and is dated the latter. Trailing
// panels may lack a forward slice.
struct MarketDataset {
  std::vector<FeaturePanel> panels;
  std::vector<ReturnSlice> forward_returns;

  int n_periods() const { return static_cast<int>(panels.size()); }

  bool has_forward(int i) const {
    return i >= 0 && i < static_cast<int>(forward_returns.size()) && !forward_returns[i].empty();
  }

  int index_of(const MonthDate& d) const {
    for (std::size_t i = 0; i < panels.size(); ++i)
      if (panels[i].date == d) return static_cast<int>(i);
    throw std::out_of_range("dataset: date " + d.str() + " not found");
  }

  void validate() const {
    for (std::size_t i = 0; i + 1 < panels.size(); ++i)
      if (!(panels[i].date < panels[i + 1].date))
        throw alignment_error("dataset: dates must strictly increase");
    if (forward_returns.size() > panels.size())
      throw alignment_error("dataset: return slice without a preceding panel");
    for (std::size_t i = 0; i < forward_returns.size(); ++i) {
      if (forward_returns[i].empty()) continue;
      if (forward_returns[i].date != panels[i].date.next())
        throw alignment_error("dataset: return slice date must follow its panel");
      if (forward_returns[i].asset_ids != panels[i].asset_ids)
        throw alignment_error("dataset: asset ids differ between panel and next-period returns");
    }
  }
};

enum class UniformInterval { centered, unit };

// Rank transform of every non-constant column onto the equispaced grid
// spanning [-0.5, 0.5] (centered) or [0, 1] (unit). Ties break by asset id.
inline FeaturePanel preprocess_uniform(const FeaturePanel& raw, UniformInterval interval) {
  raw.validate();
  const int n = raw.n_assets();
  if (n < 2) throw std::invalid_argument("preprocess_uniform: need at least two assets");
  FeaturePanel out = raw;
  for (Eigen::Index col = 1; col < raw.x.cols(); ++col) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
      if (raw.x(i, col) != raw.x(j, col)) return raw.x(i, col) < raw.x(j, col);
      return raw.asset_ids[static_cast<std::size_t>(i)] < raw.asset_ids[static_cast<std::size_t>(j)];
    });
    if (raw.x(order.front(), col) == raw.x(order.back(), col))
      throw std::domain_error("preprocess_uniform: degenerate column " +
                              (col < static_cast<Eigen::Index>(raw.feature_names.size())
                                   ? raw.feature_names[static_cast<std::size_t>(col)]
                                   : std::to_string(col)));
    for (int rank = 0; rank < n; ++rank) {
      const double grid = static_cast<double>(rank) / static_cast<double>(n - 1);
      out.x(order[static_cast<std::size_t>(rank)], col) =
          interval == UniformInterval::centered ? grid - 0.5 : grid;
    }
  }
  return out;
}

namespace detail {

inline double draw_noise(const FactorModelSpec& spec, Rng& rng) {
  const double sd = std::sqrt(spec.sigma_eps_sq);
  if (spec.noise_law == NoiseLaw::gaussian) return sd * rng.normal();
  const double scale = std::sqrt(spec.t_dof / (spec.t_dof - 2.0));
  return sd * rng.student_t(spec.t_dof) / scale;
}

}  // namespace detail

// Synthetic market: per period, fresh uniform characteristics (rank-mapped to
// the grid), loadings beta ~ (beta_bar, Sigma_beta), idiosyncratic noise with
// variance sigma_eps_sq, and forward returns r = X beta + eps. Columns are
// redrawn each period with probability feature_redraw_prob, else carried over.
inline MarketDataset generate_synthetic(const FactorModelSpec& spec, int n_assets, int n_periods,
                                        int k_features, Rng& rng,
                                        double feature_redraw_prob = 1.0,
                                        UniformInterval interval = UniformInterval::centered,
                                        MonthDate start = MonthDate{2000, 1}) {
  spec.validate();
  if (n_assets < 2 || n_periods < 2) throw std::invalid_argument("generate_synthetic: counts must be >= 2");
  if (k_features < 0 || spec.beta_bar.size() != k_features + 1)
    throw std::invalid_argument("generate_synthetic: beta_bar must have k_features + 1 entries");

  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n_assets));
  for (int i = 0; i < n_assets; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "A%04d", i);
    ids.emplace_back(buf);
  }
  std::vector<std::string> names;
  names.emplace_back("cst");
  for (int k = 1; k <= k_features; ++k) names.emplace_back("f" + std::to_string(k));

  MarketDataset ds;
  MatrixXd raw(n_assets, k_features + 1);
  raw.col(0).setOnes();
  MonthDate date = start;
  for (int t = 0; t < n_periods; ++t) {
    for (int k = 1; k <= k_features; ++k) {
      const bool redraw = t == 0 || rng.uniform() < feature_redraw_prob;
      if (redraw)
        for (int i = 0; i < n_assets; ++i) raw(i, k) = rng.uniform();
    }
    FeaturePanel panel;
    panel.date = date;
    panel.x = raw;
    panel.asset_ids = ids;
    panel.feature_names = names;
    panel = preprocess_uniform(panel, interval);

    VectorXd beta = spec.beta_bar;
    for (int k = 1; k <= k_features; ++k)
      if (spec.sigma_beta_sq[k] > 0.0) beta[k] += std::sqrt(spec.sigma_beta_sq[k]) * rng.normal();

    ReturnSlice slice;
    slice.date = date.next();
    slice.asset_ids = ids;
    slice.returns = panel.x * beta;
    for (int i = 0; i < n_assets; ++i) {
      if (spec.sigma_eps_sq > 0.0) slice.returns[i] += detail::draw_noise(spec, rng);
      slice.returns[i] = std::max(slice.returns[i], -0.999999);
    }

    ds.panels.push_back(std::move(panel));
    ds.forward_returns.push_back(std::move(slice));
    date = date.next();
  }
  return ds;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

struct CsvLoadResult {
  MarketDataset dataset;
  std::size_t dropped_rows = 0;
};

// Reads the dataset schema `date,asset_id,ret_fwd,<features...>`. Rows with
// missing characteristic values are dropped and counted; ret_fwd may be empty
// (no forward return for that date).
inline CsvLoadResult load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw schema_error("cannot open dataset file " + path);
  std::string line;
  if (!std::getline(in, line)) throw schema_error("empty dataset file " + path);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "date" || header[1] != "asset_id" || header[2] != "ret_fwd")
    throw schema_error("dataset header must start with date,asset_id,ret_fwd");
  const int k = static_cast<int>(header.size()) - 3;

  struct Row {
    std::string asset_id;
    std::optional<double> ret_fwd;
    std::vector<double> features;
  };
  std::map<int, std::pair<MonthDate, std::vector<Row>>> by_date;
  std::size_t dropped = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw schema_error("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " fields, got " +
                         std::to_string(fields.size()));
    const MonthDate date = MonthDate::parse(fields[0]);
    Row row;
    row.asset_id = fields[1];
    auto parse_num = [&](const std::string& s) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw schema_error("line " + std::to_string(line_no) + ": unparseable number '" + s + "'");
      }
    };
    if (!fields[2].empty()) row.ret_fwd = parse_num(fields[2]);
    bool missing = false;
    for (int j = 0; j < k; ++j) {
      const std::string& f = fields[static_cast<std::size_t>(3 + j)];
      if (f.empty()) {
        missing = true;
        break;
      }
      const double v = parse_num(f);
      if (std::isnan(v)) {
        missing = true;
        break;
      }
      row.features.push_back(v);
    }
    if (missing) {
      ++dropped;
      continue;
    }
    auto& bucket = by_date[date.serial()];
    bucket.first = date;
    bucket.second.push_back(std::move(row));
  }

  CsvLoadResult result;
  result.dropped_rows = dropped;
  for (auto& [serial, bucket] : by_date) {
    (void)serial;
    auto& rows = bucket.second;
    FeaturePanel panel;
    panel.date = bucket.first;
    panel.feature_names.emplace_back("cst");
    for (int j = 0; j < k; ++j) panel.feature_names.push_back(header[static_cast<std::size_t>(3 + j)]);
    panel.x.resize(static_cast<Eigen::Index>(rows.size()), k + 1);
    panel.x.col(0).setOnes();
    std::size_t with_ret = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      panel.asset_ids.push_back(rows[i].asset_id);
      for (int j = 0; j < k; ++j) panel.x(static_cast<Eigen::Index>(i), j + 1) = rows[i].features[static_cast<std::size_t>(j)];
      if (rows[i].ret_fwd) ++with_ret;
    }
    ReturnSlice slice;
    if (with_ret == rows.size()) {
      slice.date = panel.date.next();
      slice.asset_ids = panel.asset_ids;
      slice.returns.resize(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) slice.returns[static_cast<Eigen::Index>(i)] = *rows[i].ret_fwd;
    } else if (with_ret != 0) {
      throw alignment_error("date " + panel.date.str() + ": ret_fwd present for some assets but not all");
    }
    result.dataset.panels.push_back(std::move(panel));
    result.dataset.forward_returns.push_back(std::move(slice));
  }
  while (!result.dataset.forward_returns.empty() && result.dataset.forward_returns.back().empty() &&
         result.dataset.forward_returns.size() > result.dataset.panels.size())
    result.dataset.forward_returns.pop_back();
  result.dataset.validate();
  return result;
}

// Writes the CSV schema read by load_csv, with full double precision.
inline void save_csv(const MarketDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path);
  const std::vector<std::string>* names = nullptr;
  if (!ds.panels.empty()) names = &ds.panels.front().feature_names;
  out << "date,asset_id,ret_fwd";
  if (names)
    for (std::size_t j = 1; j < names->size(); ++j) out << ',' << (*names)[j];
  out << '\n';
  for (std::size_t i = 0; i < ds.panels.size(); ++i) {
    const auto& panel = ds.panels[i];
    const bool has_ret = i < ds.forward_returns.size() && !ds.forward_returns[i].empty();
    for (int n = 0; n < panel.n_assets(); ++n) {
      out << panel.date.str() << ',' << panel.asset_ids[static_cast<std::size_t>(n)] << ',';
      if (has_ret) out << detail::format_double(ds.forward_returns[i].returns[n]);
      for (Eigen::Index j = 1; j < panel.x.cols(); ++j)
        out << ',' << detail::format_double(panel.x(n, j));
      out << '\n';
    }
  }
}

// Draws an episode universe from the panel at `date`: n indices, with or
// without replacement, deterministic given the stream.
inline std::vector<int> sample_universe(const MarketDataset& ds, const MonthDate& date, int n,
                                        Rng& rng, bool with_replacement) {
  const int idx = ds.index_of(date);
  const int universe = ds.panels[static_cast<std::size_t>(idx)].n_assets();
  if (n <= 0) throw std::invalid_argument("sample_universe: n must be positive");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  if (with_replacement) {
    for (int i = 0; i < n; ++i) out.push_back(rng.uniform_int(universe));
    return out;
  }
  if (n > universe) throw std::invalid_argument("sample_universe: n exceeds universe without replacement");
  std::vector<int> pool(static_cast<std::size_t>(universe));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < n; ++i) {
    const int j = i + rng.uniform_int(universe - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    out.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Cross-sectional mean of r_{t+1,n} * x_{t,n}^(k). Feature 0 gives the
// equally-weighted mean return.
inline double realized_pac(const FeaturePanel& panel, const ReturnSlice& next_returns, int feature) {
  if (feature < 0 || feature > panel.n_features())
    throw std::out_of_range("realized_pac: feature index");
  if (next_returns.returns.size() != panel.x.rows() ||
      next_returns.date != panel.date.next() ||
      (!next_returns.asset_ids.empty() && next_returns.asset_ids != panel.asset_ids))
    throw alignment_error("realized_pac: panel and returns are misaligned");
  return panel.x.col(feature).dot(next_returns.returns) / static_cast<double>(panel.n_assets());
}

// Mean of the 12 monthly realized PACs ending at `date`.
inline double realized_pac_annual(const MarketDataset& ds, const MonthDate& date, int feature) {
  const int i = ds.index_of(date);
  if (i < 11) throw std::invalid_argument("realized_pac_annual: needs 12 months of history");
  double sum = 0.0;
  for (int s = 0; s < 12; ++s) {
    const int j = i - s;
    if (!ds.has_forward(j))
      throw std::invalid_argument("realized_pac_annual: missing returns at " +
                                  ds.panels[static_cast<std::size_t>(j)].date.str());
    sum += realized_pac(ds.panels[static_cast<std::size_t>(j)],
                        ds.forward_returns[static_cast<std::size_t>(j)], feature);
  }
  return sum / 12.0;
}

}  // namespace dirl
