#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dirl/analytics.hpp"
#include "dirl/market.hpp"
#include "dirl/policy.hpp"
#include "dirl/rng.hpp"
#include "dirl/special_math.hpp"

namespace dirl {

// Scale and fault knobs for the verification checks. quick mode cuts sample
// counts and widens Monte-Carlo gates from 3 to 5 standard errors.
struct VerifyOptions {
  bool quick = false;
  std::uint64_t seed = 42;
  double digamma_fault = 0.0;  // test hook: perturbs the analytic gradient path
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

namespace verify_detail {

inline FeaturePanel random_uniform_panel(int n, int k, Rng& rng,
                                         UniformInterval interval = UniformInterval::centered) {
  FeaturePanel raw;
  raw.date = MonthDate{2000, 1};
  raw.x.resize(n, k + 1);
  raw.x.col(0).setOnes();
  raw.asset_ids.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "A%04d", i);
    raw.asset_ids.emplace_back(buf);
    for (int j = 1; j <= k; ++j) raw.x(i, j) = rng.uniform();
  }
  raw.feature_names.emplace_back("cst");
  for (int j = 1; j <= k; ++j) raw.feature_names.push_back("f" + std::to_string(j));
  return preprocess_uniform(raw, interval);
}

struct MomentAccumulator {
  // Raw power sums per tracked component, plus transform sums for the
  // log-moment identities.
  Eigen::ArrayXd s1, s2, s3, s4;
  Eigen::ArrayXd lw1, lw2;    // ln w
  Eigen::ArrayXd wlw1, wlw2;  // w ln w
  std::vector<std::pair<int, int>> pairs;
  Eigen::ArrayXd pair1, pair2;  // w_n ln w_m
  long draws = 0;
};

inline double guarded_z(double estimate, double truth, double se) {
  return std::abs(estimate - truth) / std::max(se, 1e-300);
}

}  // namespace verify_detail

// Monte-Carlo estimates of the Dirichlet moment identities (mean, variance,
// E[ln W], E[W ln W], cross E[W_n ln W_m]) against their closed forms, over
// random concentration vectors with entries in [0.2, 1.6] and N in {2, 5, 100}.
inline CheckResult check_moment_identities(const VerifyOptions& opts) {
  const int n_vectors = opts.quick ? 12 : 50;
  const long draws = opts.quick ? 20000 : 1000000;
  const double gate = opts.quick ? 5.0 : 3.0;

  std::vector<int> sizes(static_cast<std::size_t>(n_vectors));
  for (int v = 0; v < n_vectors; ++v) {
    // Cycle small sizes, keep a handful of N=100 vectors for the tail.
    if (v % 8 == 7) sizes[static_cast<std::size_t>(v)] = 100;
    else sizes[static_cast<std::size_t>(v)] = (v % 2 == 0) ? 2 : 5;
  }

  std::vector<double> worst(static_cast<std::size_t>(n_vectors), 0.0);
  auto run_vector = [&](int v) {
    Rng rng = Rng::substream(opts.seed, {3, static_cast<std::uint64_t>(v)});
    const int n = sizes[static_cast<std::size_t>(v)];
    VectorXd raw(n);
    for (int i = 0; i < n; ++i) raw[i] = rng.uniform(0.2, 1.6);
    const Concentration conc = Concentration::from(raw);

    const int tracked = std::min(n, 5);
    verify_detail::MomentAccumulator acc;
    acc.s1 = Eigen::ArrayXd::Zero(n);
    acc.s2 = Eigen::ArrayXd::Zero(tracked);
    acc.s3 = Eigen::ArrayXd::Zero(tracked);
    acc.s4 = Eigen::ArrayXd::Zero(tracked);
    acc.lw1 = Eigen::ArrayXd::Zero(tracked);
    acc.lw2 = Eigen::ArrayXd::Zero(tracked);
    acc.wlw1 = Eigen::ArrayXd::Zero(tracked);
    acc.wlw2 = Eigen::ArrayXd::Zero(tracked);
    acc.pairs = {{0, n - 1}, {n - 1, 0}};
    if (n > 2) acc.pairs.emplace_back(1, 2);
    acc.pair1 = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(acc.pairs.size()));
    acc.pair2 = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(acc.pairs.size()));

    for (long d = 0; d < draws; ++d) {
      const AllocationSample sample = dirichlet_sample(conc, rng);
      acc.s1 += sample.w.array();
      for (int i = 0; i < tracked; ++i) {
        const double w = sample.w[i];
        const double w2 = w * w;
        acc.s2[i] += w2;
        acc.s3[i] += w2 * w;
        acc.s4[i] += w2 * w2;
        const double lw = std::log(w);
        acc.lw1[i] += lw;
        acc.lw2[i] += lw * lw;
        const double wlw = w * lw;
        acc.wlw1[i] += wlw;
        acc.wlw2[i] += wlw * wlw;
      }
      for (std::size_t p = 0; p < acc.pairs.size(); ++p) {
        const double t = sample.w[acc.pairs[p].first] * std::log(sample.w[acc.pairs[p].second]);
        acc.pair1[static_cast<Eigen::Index>(p)] += t;
        acc.pair2[static_cast<Eigen::Index>(p)] += t * t;
      }
    }

    const double m = static_cast<double>(draws);
    double z_max = 0.0;
    auto mean_z = [&](double sum, double sum_sq, double truth) {
      const double est = sum / m;
      const double var = std::max(sum_sq / m - est * est, 0.0);
      return verify_detail::guarded_z(est, truth, std::sqrt(var / m));
    };
    for (int i = 0; i < n; ++i) {
      const double mean_true = conc.a[i] / conc.sigma;
      // SE of the sample mean of a [0,1] variable bounded via its variance.
      const double var_true = mean_true * (1.0 - mean_true) / (conc.sigma + 1.0);
      const double z = verify_detail::guarded_z(acc.s1[i] / m, mean_true, std::sqrt(var_true / m));
      z_max = std::max(z_max, z);
    }
    for (int i = 0; i < tracked; ++i) {
      const double m1 = acc.s1[i] / m;
      const double m2 = acc.s2[i] / m;
      const double m3 = acc.s3[i] / m;
      const double m4 = acc.s4[i] / m;
      const double mu2 = m2 - m1 * m1;
      const double mu4 = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1 * m1 * m1 * m1;
      const double mean_true = conc.a[i] / conc.sigma;
      const double var_true = mean_true * (1.0 - mean_true) / (conc.sigma + 1.0);
      const double se_var = std::sqrt(std::max(mu4 - mu2 * mu2, 0.0) / m);
      z_max = std::max(z_max, verify_detail::guarded_z(mu2, var_true, se_var));
      z_max = std::max(z_max, mean_z(acc.lw1[i], acc.lw2[i], expected_log_weight(conc, i)));
      z_max = std::max(z_max, mean_z(acc.wlw1[i], acc.wlw2[i], expected_w_log_w(conc, i, i)));
    }
    for (std::size_t p = 0; p < acc.pairs.size(); ++p) {
      const double truth = expected_w_log_w(conc, acc.pairs[p].first, acc.pairs[p].second);
      z_max = std::max(z_max, mean_z(acc.pair1[static_cast<Eigen::Index>(p)],
                                     acc.pair2[static_cast<Eigen::Index>(p)], truth));
    }
    worst[static_cast<std::size_t>(v)] = z_max;
  };

  const unsigned n_threads = std::min(4u, std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> threads;
  std::atomic<int> next{0};
  for (unsigned t = 0; t < n_threads; ++t)
    threads.emplace_back([&] {
      for (;;) {
        const int v = next.fetch_add(1);
        if (v >= n_vectors) return;
        run_vector(v);
      }
    });
  for (auto& t : threads) t.join();

  CheckResult r;
  r.name = "dirichlet moment identities";
  r.tolerance = gate;
  r.observed = *std::max_element(worst.begin(), worst.end());
  r.pass = r.observed <= gate;
  std::ostringstream msg;
  msg << n_vectors << " vectors x " << draws << " draws, max |z| = " << r.observed
      << " (gate " << gate << " SE)";
  r.detail = msg.str();
  return r;
}

// Analytic score gradient against central finite differences of the log
// density, for random panels, parameters and interior weights, both policy
// forms. The analytic path is recomputed locally so a digamma fault can be
// injected; with no fault it must coincide with the library gradient.
inline CheckResult check_score_gradient(const VerifyOptions& opts) {
  const int n_cases = opts.quick ? 20 : 100;
  const double h = 1e-6;
  Rng rng = Rng::substream(opts.seed, {4});

  double worst = 0.0;
  std::string worst_what;
  for (int form_idx = 0; form_idx < 2; ++form_idx) {
    const PolicyForm form = form_idx == 0 ? PolicyForm::F1 : PolicyForm::F2;
    for (int c = 0; c < n_cases; ++c) {
      const int n = 3 + rng.uniform_int(6);
      const int k = rng.uniform_int(4);
      const FeaturePanel panel = verify_detail::random_uniform_panel(n, k, rng);
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
      const Concentration conc = concentration_from_features(panel, params);
      const AllocationSample w = dirichlet_sample(conc, rng);

      // Local analytic gradient with the faultable digamma path.
      const double psi_sigma = digamma(conc.sigma) + opts.digamma_fault * conc.sigma;
      VectorXd coef(n);
      for (int i = 0; i < n; ++i)
        coef[i] = psi_sigma - (digamma(conc.a[i]) + opts.digamma_fault * conc.a[i]) +
                  std::log(w.w[i]);
      if (form == PolicyForm::F2) coef = coef.cwiseProduct(conc.a);
      const VectorXd analytic = panel.x.transpose() * coef;

      if (opts.digamma_fault == 0.0) {
        const VectorXd lib = score_gradient(w, panel, params);
        if ((lib - analytic).cwiseAbs().maxCoeff() > 1e-12) {
          CheckResult r;
          r.name = "score gradient vs finite differences";
          r.pass = false;
          r.observed = (lib - analytic).cwiseAbs().maxCoeff();
          r.tolerance = 1e-12;
          r.detail = "library gradient diverged from the closed form";
          return r;
        }
      }

      for (int j = 0; j <= k; ++j) {
        PolicyParams up = params, dn = params;
        up.theta[j] += h;
        dn.theta[j] -= h;
        const double f_up = dirichlet_log_pdf(w, concentration_from_features(panel, up));
        const double f_dn = dirichlet_log_pdf(w, concentration_from_features(panel, dn));
        const double fd = (f_up - f_dn) / (2.0 * h);
        const double diff = std::abs(analytic[j] - fd);
        const double scale = std::abs(analytic[j]);
        const double violation = scale > 1e-3 ? (diff / scale) / 1e-5 : diff / 1e-8;
        if (violation > worst) {
          worst = violation;
          std::ostringstream what;
          what << (form == PolicyForm::F1 ? "F1" : "F2") << " case " << c << " component " << j
               << ": analytic " << analytic[j] << " vs fd " << fd;
          worst_what = what.str();
        }
      }
    }
  }

  CheckResult r;
  r.name = "score gradient vs finite differences";
  r.tolerance = 1.0;  // violation ratio: rel err / 1e-5, abs err / 1e-8 for tiny components
  r.observed = worst;
  r.pass = worst <= 1.0;
  std::ostringstream msg;
  msg << 2 * n_cases << " cases, worst tolerance ratio " << worst
      << " (rel gate 1e-5, abs gate 1e-8); " << worst_what;
  r.detail = msg.str();
  return r;
}

// Episode-averaged Monte-Carlo policy gradient on single-step episodes against
// the closed-form performance gradient: cosine similarity and per-component
// z-scores.
inline CheckResult check_gradient_closure(const VerifyOptions& opts) {
  const long episodes = opts.quick ? 20000 : 100000;
  const double gate = opts.quick ? 5.0 : 3.0;
  Rng setup = Rng::substream(opts.seed, {5});
  const FeaturePanel panel = verify_detail::random_uniform_panel(10, 2, setup);
  VectorXd beta(3);
  beta << 0.01, 0.08, -0.06;
  const VectorXd expected = panel.x * beta;

  double worst_z = 0.0;
  double worst_cos = 1.0;
  for (int form_idx = 0; form_idx < 2; ++form_idx) {
    PolicyParams params;
    params.form = form_idx == 0 ? PolicyForm::F1 : PolicyForm::F2;
    params.theta.resize(3);
    if (params.form == PolicyForm::F1) params.theta << 1.0, 0.3, -0.2;
    else params.theta << 0.1, 0.4, -0.3;
    const Concentration conc = concentration_from_features(panel, params);

    Rng rng = Rng::substream(opts.seed, {6, static_cast<std::uint64_t>(form_idx)});
    VectorXd sum = VectorXd::Zero(3);
    VectorXd sum_sq = VectorXd::Zero(3);
    for (long e = 0; e < episodes; ++e) {
      const AllocationSample w = dirichlet_sample(conc, rng);
      const double gain = w.w.dot(expected);
      const VectorXd term = gain * score_gradient(w, panel, params);
      sum += term;
      sum_sq += term.cwiseProduct(term);
    }
    const double m = static_cast<double>(episodes);
    const VectorXd mc = sum / m;
    const VectorXd closed = closed_form_gradient(panel, params, expected);
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt(std::max(sum_sq[j] / m - mc[j] * mc[j], 0.0) / m);
      worst_z = std::max(worst_z, verify_detail::guarded_z(mc[j], closed[j], se));
    }
    const double cosine = mc.dot(closed) / (mc.norm() * closed.norm());
    worst_cos = std::min(worst_cos, cosine);
  }

  CheckResult r;
  r.name = "policy gradient closure";
  r.tolerance = gate;
  r.observed = worst_z;
  r.pass = worst_z <= gate && worst_cos > 0.99;
  std::ostringstream msg;
  msg << episodes << " episodes per form, max |z| = " << worst_z << " (gate " << gate
      << " SE), min cosine = " << worst_cos << " (gate 0.99)";
  r.detail = msg.str();
  return r;
}

namespace verify_detail {

// Iterative oracle for the quadratic allocation problem: projected gradient
// ascent on the Lagrangian objective over the affine budget constraint, with
// exact line search. Independent of the closed-form route.
inline VectorXd maximize_quadratic_allocation(const FeaturePanel& panel, const FactorModelSpec& spec,
                                              double gamma_risk) {
  const MatrixXd a = panel.x.transpose() * panel.x;
  const MatrixXd h = a * spec.sigma_beta_sq.asDiagonal() * a + spec.sigma_eps_sq * a;
  const VectorXd linear = a * spec.beta_bar;
  const VectorXd v = panel.x.transpose() * VectorXd::Ones(panel.x.rows());
  const double v_sq = v.squaredNorm();

  VectorXd theta = v / v_sq;  // feasible start
  const double scale = 1.0 + linear.norm();
  for (long iter = 0; iter < 2000000; ++iter) {
    const VectorXd grad = linear - gamma_risk * (h * theta);
    VectorXd tangent = grad - (v.dot(grad) / v_sq) * v;
    const double norm = tangent.norm();
    if (norm <= 1e-13 * scale) break;
    const double curvature = gamma_risk * tangent.dot(h * tangent);
    if (!(curvature > 0.0)) break;
    theta += (tangent.squaredNorm() / curvature) * tangent;
    theta -= ((v.dot(theta) - 1.0) / v_sq) * v;
  }
  return theta;
}

}  // namespace verify_detail

// Closed-form quadratic allocation against the iterative maximizer on random
// instances, the exact 1/N bias on centered panels, and the monotone decay of
// the characteristic parameters as loading uncertainty grows.
inline CheckResult check_quadratic_allocation(const VerifyOptions& opts) {
  const int n_instances = opts.quick ? 6 : 20;
  Rng rng = Rng::substream(opts.seed, {7});

  double worst_rel = 0.0;
  double worst_bias = 0.0;
  bool monotone = true;
  for (int c = 0; c < n_instances; ++c) {
    const int n = 8 + rng.uniform_int(13);
    const int k = 1 + rng.uniform_int(3);
    const FeaturePanel panel = verify_detail::random_uniform_panel(n, k, rng);
    FactorModelSpec spec;
    spec.beta_bar.resize(k + 1);
    spec.sigma_beta_sq = VectorXd::Zero(k + 1);
    spec.beta_bar[0] = rng.uniform(-0.01, 0.03);
    for (int j = 1; j <= k; ++j) {
      spec.beta_bar[j] = rng.uniform(-0.02, 0.02);
      spec.sigma_beta_sq[j] = rng.uniform(0.001, 0.05);
    }
    spec.sigma_eps_sq = rng.uniform(5e-4, 5e-3);
    const double gamma_risk = c % 3 == 0 ? 1.0 : (c % 3 == 1 ? 2.0 : 5.0);

    const QuadraticSolution sol = lemma1_solution(panel, spec, gamma_risk);
    const VectorXd oracle = verify_detail::maximize_quadratic_allocation(panel, spec, gamma_risk);
    const double rel = (sol.theta_star - oracle).cwiseAbs().maxCoeff() /
                       std::max(1e-12, sol.theta_star.cwiseAbs().maxCoeff());
    worst_rel = std::max(worst_rel, rel);

    // Centered columns force the bias parameter to 1/N through the budget.
    worst_bias = std::max(worst_bias, std::abs(sol.theta_star[0] - 1.0 / n));

    if (c == 0) {
      double prev = std::numeric_limits<double>::infinity();
      for (int d = 0; d < 6; ++d) {
        FactorModelSpec swept = spec;
        swept.sigma_beta_sq *= std::pow(10.0, d);
        const QuadraticSolution s = lemma1_solution(panel, swept, gamma_risk);
        const double mag = s.theta_star.tail(k).cwiseAbs().maxCoeff();
        if (d > 0 && mag >= prev) monotone = false;
        prev = mag;
      }
    }
  }

  CheckResult r;
  r.name = "quadratic allocation closed form";
  r.tolerance = 1e-6;
  r.observed = worst_rel;
  r.pass = worst_rel <= 1e-6 && worst_bias <= 1e-12 && monotone;
  std::ostringstream msg;
  msg << n_instances << " instances, worst rel gap to maximizer " << worst_rel
      << " (gate 1e-6), worst |theta0 - 1/N| " << worst_bias
      << " (gate 1e-12), monotone decay " << (monotone ? "yes" : "NO");
  r.detail = msg.str();
  return r;
}

inline std::vector<CheckResult> run_all_checks(const VerifyOptions& opts) {
  return {
      check_moment_identities(opts),
      check_score_gradient(opts),
      check_gradient_closure(opts),
      check_quadratic_allocation(opts),
  };
}

}  // namespace dirl
