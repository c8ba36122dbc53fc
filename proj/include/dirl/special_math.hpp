#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dirl/rng.hpp"

namespace dirl {

using Eigen::VectorXd;

// Raised when a linear policy produces concentrations outside its feasible set.
class infeasible_parameters_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dirichlet concentration vector with its cached sum (the scale parameter).
struct Concentration {
  VectorXd a;
  double sigma = 0.0;

  static Concentration from(VectorXd values) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0.0) || !std::isfinite(values[i]))
        throw std::domain_error("Concentration: all entries must be positive and finite");
    }
    Concentration c;
    c.sigma = values.sum();
    c.a = std::move(values);
    return c;
  }

  int size() const { return static_cast<int>(a.size()); }
};

// Box [a_minus, a_plus] for concentrations plus the overflow ceiling kappa_max
// on |log B(a)| and the diversification constant delta.
struct ConcentrationBounds {
  double a_minus = 0.2;
  double a_plus = 1.6;
  double kappa_max = 100.0;
  double delta = 8.0;

  void validate() const {
    if (!(a_minus > 0.0)) throw std::invalid_argument("bounds: a_minus must be positive");
    if (!(a_plus > a_minus)) throw std::invalid_argument("bounds: a_plus must exceed a_minus");
    if (!(kappa_max > 1.0)) throw std::invalid_argument("bounds: kappa_max must exceed 1");
    if (!(delta > 1.0)) throw std::invalid_argument("bounds: delta must exceed 1");
  }
};

// Point on the simplex: nonnegative weights summing to one.
struct AllocationSample {
  VectorXd w;
};

// Digamma with absolute error below 1e-12 on [1e-3, 1e6]: upward recurrence
// into x >= 10, then the asymptotic series with Bernoulli terms through x^-16.
inline double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: requires x > 0");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  static const double coef[8] = {
      1.0 / 12.0,      -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0,
      1.0 / 132.0,     -691.0 / 32760.0, 1.0 / 12.0, -3617.0 / 8160.0};
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double value = std::log(x) - 0.5 * inv;
  double p = inv2;
  for (double c : coef) {
    value -= c * p;
    p *= inv2;
  }
  return acc + value;
}

// log B(a) = sum_n ln Gamma(a_n) - ln Gamma(sigma), evaluated in log space.
inline double log_multivariate_beta(const Concentration& a) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.a.size(); ++i) s += std::lgamma(a.a[i]);
  return s - std::lgamma(a.sigma);
}

// Bounds-checked variant: rejects results whose magnitude exceeds kappa_max.
inline double log_multivariate_beta(const Concentration& a, const ConcentrationBounds& bounds) {
  const double v = log_multivariate_beta(a);
  if (std::abs(v) > bounds.kappa_max) {
    std::ostringstream msg;
    msg << "log_multivariate_beta: |" << v << "| exceeds kappa_max=" << bounds.kappa_max;
    throw std::overflow_error(msg.str());
  }
  return v;
}

namespace detail {
constexpr double kWeightFloor = 1e-12;
}

// Draw from Dir(a) by normalizing independent Gamma(a_n, 1) variates.
// Components below 1e-12 are clamped and the vector renormalized, so
// downstream log-weights stay finite.
inline AllocationSample dirichlet_sample(const Concentration& a, Rng& rng) {
  const int n = a.size();
  VectorXd w(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    w[i] = rng.gamma(a.a[i]);
    total += w[i];
  }
  bool clamped = false;
  if (!(total > 0.0) || !std::isfinite(total)) {
    w.setConstant(detail::kWeightFloor);
    clamped = true;
  } else {
    w /= total;
    for (int i = 0; i < n; ++i) {
      if (w[i] < detail::kWeightFloor) {
        w[i] = detail::kWeightFloor;
        clamped = true;
      }
    }
  }
  if (clamped) w /= w.sum();
  return AllocationSample{std::move(w)};
}

// Log density of Dir(a) at an interior point of the simplex.
inline double dirichlet_log_pdf(const AllocationSample& w, const Concentration& a) {
  if (w.w.size() != a.a.size())
    throw std::invalid_argument("dirichlet_log_pdf: dimension mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < w.w.size(); ++i) {
    if (!(w.w[i] > 0.0)) throw std::domain_error("dirichlet_log_pdf: weights must be strictly positive");
    sum += w.w[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::domain_error("dirichlet_log_pdf: weights must sum to one");
  double v = -log_multivariate_beta(a);
  for (Eigen::Index i = 0; i < w.w.size(); ++i) v += (a.a[i] - 1.0) * std::log(w.w[i]);
  return v;
}

// E[ln W_n] = psi(a_n) - psi(sigma).
inline double expected_log_weight(const Concentration& a, int n) {
  if (n < 0 || n >= a.size()) throw std::out_of_range("expected_log_weight: index");
  return digamma(a.a[n]) - digamma(a.sigma);
}

// E[W_n ln W_n] for n == m, E[W_n ln W_m] otherwise.
inline double expected_w_log_w(const Concentration& a, int n, int m) {
  if (n < 0 || n >= a.size() || m < 0 || m >= a.size())
    throw std::out_of_range("expected_w_log_w: index");
  const double ratio = a.a[n] / a.sigma;
  if (n == m)
    return ratio * (digamma(a.a[n]) + 1.0 / a.a[n] - digamma(a.sigma) - 1.0 / a.sigma);
  return ratio * (digamma(a.a[m]) - digamma(a.sigma) - 1.0 / a.sigma);
}

// Outcome of the high-dimension feasibility test on concentration bounds.
struct BoundsDiagnosis {
  bool ok = false;
  bool upper_ok = false;   // a_plus <= (delta / N) * kappa_max / ln(kappa_max)
  bool lower_ok = false;   // a_minus >= exp(-kappa_max / N)
  double a_plus_limit = 0.0;
  double a_minus_limit = 0.0;
  long max_assets = 0;     // largest N for which both conditions hold
  std::string reason;      // empty when ok
};

// Checks the two large-N conditions linking the concentration box, kappa_max
// and the asset count, and reports the implied ceiling on N.
inline BoundsDiagnosis check_dimension_bounds(const ConcentrationBounds& bounds, int n_assets) {
  bounds.validate();
  if (n_assets < 2) throw std::invalid_argument("check_dimension_bounds: n_assets must be >= 2");
  const double log_kappa = std::log(bounds.kappa_max);

  BoundsDiagnosis d;
  d.a_plus_limit = (bounds.delta / n_assets) * bounds.kappa_max / log_kappa;
  d.a_minus_limit = std::exp(-bounds.kappa_max / n_assets);
  d.upper_ok = bounds.a_plus <= d.a_plus_limit;
  d.lower_ok = bounds.a_minus >= d.a_minus_limit;
  d.ok = d.upper_ok && d.lower_ok;

  const double n_from_upper =
      bounds.delta * bounds.kappa_max / (bounds.a_plus * log_kappa);
  double n_from_lower = std::numeric_limits<double>::infinity();
  if (bounds.a_minus < 1.0) n_from_lower = bounds.kappa_max / std::log(1.0 / bounds.a_minus);
  const double n_cap = std::min(n_from_upper, n_from_lower);
  d.max_assets = n_cap >= static_cast<double>(std::numeric_limits<long>::max())
                     ? std::numeric_limits<long>::max()
                     : static_cast<long>(std::floor(n_cap));

  if (!d.ok) {
    std::ostringstream msg;
    if (!d.upper_ok)
      msg << "a_plus=" << bounds.a_plus << " exceeds limit " << d.a_plus_limit
          << " at N=" << n_assets << "; ";
    if (!d.lower_ok)
      msg << "a_minus=" << bounds.a_minus << " below limit " << d.a_minus_limit
          << " at N=" << n_assets << "; ";
    msg << "implied max N=" << d.max_assets;
    d.reason = msg.str();
  }
  return d;
}

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::domain_error("regularized_incomplete_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;

  auto contfrac = [](double aa, double bb, double xx) {
    const double qab = aa + bb;
    const double qap = aa + 1.0;
    const double qam = aa - 1.0;
    const double tiny = 1e-300;
    double c = 1.0;
    double d = 1.0 - qab * xx / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
      const int m2 = 2 * m;
      double num = m * (bb - m) * xx / ((qam + m2) * (aa + m2));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      num = -(aa + m) * (qab + m) * xx / ((aa + m2) * (qap + m2));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h;
  };

  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln_front) * contfrac(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * contfrac(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a t statistic with the given degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw std::domain_error("student_t_two_sided_p: dof must be positive");
  if (!std::isfinite(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

}  // namespace dirl
