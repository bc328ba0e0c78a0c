#pragma once

// Two-sample test statistics for current status data: the smoothed
// likelihood ratio V_N, the raw LR statistic on isotonic MLEs, and the
// moment-functional competitors U_N and W_N, plus pivot normalisation and
// the diagnostics used to check the asymptotic expansion of V_N.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cstest/estimators.hpp"
#include "cstest/kernel.hpp"
#include "cstest/sample.hpp"

namespace cstest {

// Evaluation window [a, b] inside (0, M) and the bandwidth rule b_N = c N^-exponent.
struct TestConfig {
  double a = 0.1;
  double b = 1.9;
  double M = 2.0;
  double bandwidth_c = 2.0;
  double bandwidth_exponent = 0.2;
  std::optional<double> fixed_bandwidth;
  BoundaryMode boundary = BoundaryMode::corrected;

  void validate() const {
    if (!(0.0 < a && a < b && b < M)) throw std::invalid_argument("TestConfig: need 0 < a < b < M");
    if (fixed_bandwidth) {
      if (!(*fixed_bandwidth > 0.0)) throw std::invalid_argument("TestConfig: bandwidth must be positive");
      return;
    }
    if (!(bandwidth_c > 0.0)) throw std::invalid_argument("TestConfig: bandwidth constant must be positive");
    if (!(bandwidth_exponent >= 0.2 && bandwidth_exponent < 1.0 / 3.0)) {
      throw std::invalid_argument("TestConfig: bandwidth exponent must lie in [1/5, 1/3)");
    }
  }

  double bandwidth(std::size_t N) const {
    if (fixed_bandwidth) return *fixed_bandwidth;
    return bandwidth_c * std::pow(static_cast<double>(N), -bandwidth_exponent);
  }
  KernelSpec kernel(std::size_t N) const { return {KernelId::triweight, bandwidth(N), boundary}; }
  GridSpec grid(std::size_t N) const { return GridSpec::for_bandwidth(M, bandwidth(N)); }
};

struct TestOutcome {
  double statistic = 0.0;
  double pivot = 0.0;
  double centering = 0.0;
  double bias_correction = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  std::size_t n_bootstrap = 0;
};

// Hidden-variable distribution and observation densities of a simulation model.
struct PopulationModel {
  std::function<double(double)> F, f;
  std::function<double(double)> g1, dg1, g2, dg2;
};

// V_N on grid arrays (all on `grid`); `scratch` holds the window integrand.
inline double v_n_from_arrays(std::span<const double> F1, std::span<const double> F2, std::span<const double> F,
                              std::span<const double> g1, std::span<const double> h1, std::span<const double> g2,
                              std::span<const double> h2, const GridSpec& grid, std::size_t m, std::size_t n,
                              double a, double b, std::vector<double>& scratch) {
  const std::size_t sz = grid.count;
  if (F1.size() != sz || F2.size() != sz || F.size() != sz || g1.size() != sz || h1.size() != sz ||
      g2.size() != sz || h2.size() != sz) {
    throw std::invalid_argument("v_n_statistic: grid mismatch");
  }
  const double N = static_cast<double>(m + n);
  const double w1 = 2.0 * static_cast<double>(m) / N;
  const double w2 = 2.0 * static_cast<double>(n) / N;
  const auto [k0, k1] = window_indices(grid, a, b);
  scratch.resize(k1 - k0 + 1);
  for (std::size_t k = k0; k <= k1; ++k) {
    const double p = clamp_prob(F[k]);
    const double lp = std::log(p), lq = std::log1p(-p);
    const double p1 = clamp_prob(F1[k]), p2 = clamp_prob(F2[k]);
    const double t1 = h1[k] * (std::log(p1) - lp) + (g1[k] - h1[k]) * (std::log1p(-p1) - lq);
    const double t2 = h2[k] * (std::log(p2) - lp) + (g2[k] - h2[k]) * (std::log1p(-p2) - lq);
    scratch[k - k0] = w1 * t1 + w2 * t2;
  }
  return integrate_samples(scratch, grid.at(k0), grid.step, a, b);
}

inline double v_n_statistic(const SmoothEstimate& est1, const SmoothEstimate& est2, const SmoothEstimate& est,
                            const GridFunction& g1, const GridFunction& h1, const GridFunction& g2,
                            const GridFunction& h2, std::size_t m, std::size_t n, const TestConfig& config) {
  const auto& grid = est.F.grid;
  for (const GridFunction* gf : {&est1.F, &est2.F, &g1, &h1, &g2, &h2}) {
    if (!gf->grid.same_as(grid)) throw std::invalid_argument("v_n_statistic: grid mismatch");
  }
  std::vector<double> scratch;
  return v_n_from_arrays(est1.F.values, est2.F.values, est.F.values, g1.values, h1.values, g2.values, h2.values,
                         grid, m, n, config.a, config.b, scratch);
}

inline double v_n_statistic(const TwoSampleSmoothFit& fit, const TestConfig& config) {
  return v_n_statistic(fit.F1, fit.F2, fit.F, fit.first.g, fit.first.h, fit.second.g, fit.second.h, fit.m, fit.n,
                       config);
}

// Raw LR statistic from the per-sample and pooled isotonic MLEs, over T_i in [a, b].
inline double lr_statistic(const CurrentStatusSample& s1, const CurrentStatusSample& s2, const TestConfig& config) {
  if (s1.empty() || s2.empty()) throw std::invalid_argument("lr_statistic: empty sample");
  const auto F1 = mle(s1);
  const auto F2 = mle(s2);
  const auto F = mle(CurrentStatusSample::pooled(s1, s2));
  double sum = 0.0;
  auto add = [&](const CurrentStatusSample& s, const MonotoneStepFunction& Fj) {
    for (const auto& o : s.observations()) {
      if (o.t < config.a || o.t > config.b) continue;
      const double pj = clamp_prob(Fj(o.t)), p = clamp_prob(F(o.t));
      sum += o.delta ? std::log(pj) - std::log(p) : std::log1p(-pj) - std::log1p(-p);
    }
  };
  add(s1, F1);
  add(s2, F2);
  return sum;
}

// (b - a)/(N b_N) int K^2: the null centering of V_N.
inline double v_n_centering(std::size_t N, const TestConfig& config, const KernelMoments& moments) {
  return (config.b - config.a) / (static_cast<double>(N) * config.bandwidth(N)) * moments.int_K2;
}

// alpha beta int f^2 (g1' g2 - g2' g1)^2 / (F(1-F) gbar g1 g2) dt (int u^2 K)^2 b_N^4.
inline double bias_term_dn(const PopulationModel& model, double alpha, double bandwidth, const KernelMoments& moments,
                           double a, double b) {
  const double beta = 1.0 - alpha;
  auto integrand = [&](double t) {
    const double g1 = model.g1(t), g2 = model.g2(t);
    const double cross = model.dg1(t) * g2 - model.dg2(t) * g1;
    if (cross == 0.0) return 0.0;
    const double F = model.F(t), f = model.f(t);
    const double gbar = alpha * g1 + beta * g2;
    return f * f * cross * cross / (F * (1.0 - F) * gbar * g1 * g2);
  };
  const double I = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, a, b, 15, 1e-12);
  return alpha * beta * I * moments.int_u2K * moments.int_u2K * std::pow(bandwidth, 4);
}

struct BiasInputs {
  PopulationModel model;
  double alpha = 0.5;
};

// N sqrt(b_N/(b-a)) (V_N - centering - D_N); D_N only when bias inputs are given.
inline double pivot_v_n(double v_n, std::size_t N, const TestConfig& config, const KernelMoments& moments,
                        const BiasInputs* bias = nullptr) {
  const double bw = config.bandwidth(N);
  double d = 0.0;
  if (bias != nullptr) d = bias_term_dn(bias->model, bias->alpha, bw, moments, config.a, config.b);
  return static_cast<double>(N) * std::sqrt(bw / (config.b - config.a)) *
         (v_n - v_n_centering(N, config, moments) - d);
}

// U~_N / sigma-hat_N with sigma-hat^2 = alpha beta p (1 - p), p = mean of the pooled MLE at the T_i.
inline double u_n_statistic(const CurrentStatusSample& s1, const CurrentStatusSample& s2) {
  if (s1.empty() || s2.empty()) throw std::invalid_argument("u_n_statistic: empty sample");
  const double m = static_cast<double>(s1.size()), n = static_cast<double>(s2.size());
  const double N = m + n;
  const double alpha = m / N, beta = n / N;
  const double u_tilde = (beta * static_cast<double>(s1.event_count()) - alpha * static_cast<double>(s2.event_count())) /
                         std::sqrt(N);
  const auto pooled = CurrentStatusSample::pooled(s1, s2);
  const auto fit = mle_fit(pooled);
  double p = 0.0;
  {
    std::size_t k = 0;
    for (const auto& o : pooled.observations()) {
      while (fit.times[k] < o.t) ++k;
      p += fit.values[k];
    }
    p /= N;
  }
  const double var = alpha * beta * p * (1.0 - p);
  if (!(var > 0.0)) throw std::domain_error("u_n_statistic: degenerate pooled MLE");
  return u_tilde / std::sqrt(var);
}

// Unnormalised U_cw and the variance estimate it was originally paired with (reference only; this
// variance overstates the true one, so it is never used for decisions).
struct SunReference {
  double u_cw = 0.0;
  double variance = 0.0;
};

inline SunReference sun_reference(const CurrentStatusSample& s1, const CurrentStatusSample& s2) {
  const double m = static_cast<double>(s1.size()), n = static_cast<double>(s2.size());
  const double N = m + n;
  const double alpha = m / N, beta = n / N;
  const double e1 = static_cast<double>(s1.event_count()), e2 = static_cast<double>(s2.event_count());
  return {beta * e1 - alpha * e2, (beta * beta * e1 + alpha * alpha * e2) / N};
}

// sqrt(N) int_[a,b] (F1^2 - F2^2) dG_N / sqrt(4/(alpha beta) int_[a,b] F^3 (1-F) dG_N).
inline double w_n_statistic(const CurrentStatusSample& s1, const CurrentStatusSample& s2, const TestConfig& config) {
  if (s1.empty() || s2.empty()) throw std::invalid_argument("w_n_statistic: empty sample");
  const auto F1 = mle(s1);
  const auto F2 = mle(s2);
  const auto pooled = CurrentStatusSample::pooled(s1, s2);
  const auto F = mle(pooled);
  const double N = static_cast<double>(pooled.size());
  const double alpha = static_cast<double>(s1.size()) / N, beta = 1.0 - alpha;
  double num = 0.0, den = 0.0;
  for (const auto& o : pooled.observations()) {
    if (o.t < config.a || o.t > config.b) continue;
    const double a1 = F1(o.t), a2 = F2(o.t), p = F(o.t);
    num += a1 * a1 - a2 * a2;
    den += p * p * p * (1.0 - p);
  }
  num /= N;
  den = 4.0 / (alpha * beta) * den / N;
  if (!(den > 0.0)) throw std::domain_error("w_n_statistic: zero denominator");
  return std::sqrt(N) * num / std::sqrt(den);
}

// Diagnostic pieces of the expansion V_N - centering = A_N + B_N - C_N + D_N + remainder.
struct DecompositionResult {
  double v_n = 0.0;
  double centering = 0.0;
  double A_N = 0.0, B_N = 0.0, C_N = 0.0, D_N = 0.0;
  double leading_integral = 0.0;
  double residual = 0.0;
};

inline DecompositionResult decompose_v_n(const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                                         const PopulationModel& model, const TestConfig& config,
                                         const KernelMoments& moments) {
  const std::size_t N = s1.size() + s2.size();
  const auto kspec = config.kernel(N);
  const auto grid = config.grid(N);
  const auto fit = fit_two_sample(s1, s2, kspec, grid);
  const double alpha = fit.alpha(), beta = 1.0 - alpha;
  const double m = static_cast<double>(fit.m), n = static_cast<double>(fit.n);

  DecompositionResult r;
  r.v_n = v_n_statistic(fit, config);
  r.centering = v_n_centering(N, config, moments);
  r.D_N = bias_term_dn(model, alpha, kspec.bandwidth, moments, config.a, config.b);

  const GridKernel kernel(kspec, grid);
  const auto [k0, k1] = window_indices(grid, config.a, config.b);
  const std::size_t W = k1 - k0 + 1;
  // S = sum e_i K(t - T_i), Q = sum e_i^2 K(t - T_i)^2 with e_i = delta_i - F(T_i)
  auto sums = [&](const CurrentStatusSample& s, std::vector<double>& S, std::vector<double>& Q) {
    S.assign(W, 0.0);
    Q.assign(W, 0.0);
    for (const auto& o : s.observations()) {
      const double e = o.delta - model.F(o.t);
      auto [first, last] = kernel.support(o.t);
      first = std::max(first, k0);
      last = std::min(last, k1 + 1);
      for (std::size_t k = first; k < last; ++k) {
        const double kv = kernel.value(k, o.t);
        S[k - k0] += e * kv;
        Q[k - k0] += e * e * kv * kv;
      }
    }
  };
  std::vector<double> S1, Q1, S2, Q2;
  sums(s1, S1, Q1);
  sums(s2, S2, Q2);

  std::vector<double> ia(W), ib(W), ic(W), il(W);
  for (std::size_t j = 0; j < W; ++j) {
    const std::size_t k = k0 + j;
    const double t = grid.at(k);
    const double F = model.F(t), g1 = model.g1(t), g2 = model.g2(t);
    const double denom = F * (1.0 - F) * (alpha * g1 + beta * g2);
    ia[j] = g2 / (g1 * denom) * 0.5 * (S1[j] * S1[j] - Q1[j]);
    ib[j] = g1 / (g2 * denom) * 0.5 * (S2[j] * S2[j] - Q2[j]);
    ic[j] = S1[j] * S2[j] / denom;
    const double diff = fit.second.g[k] * fit.first.h[k] - fit.first.g[k] * fit.second.h[k];
    il[j] = diff * diff / (denom * g1 * g2);
  }
  const double t0 = grid.at(k0);
  auto integrate = [&](const std::vector<double>& v) {
    return integrate_samples(v, t0, grid.step, config.a, config.b);
  };
  r.A_N = 2.0 * alpha * beta / (m * m) * integrate(ia);
  r.B_N = 2.0 * alpha * beta / (n * n) * integrate(ib);
  r.C_N = 2.0 * alpha * beta / (m * n) * integrate(ic);
  r.leading_integral = alpha * beta * integrate(il);
  r.residual = r.v_n - r.centering - (r.A_N + r.B_N - r.C_N + r.D_N);
  return r;
}

// Moment constant 4 E Z^2 of the Chernoff-type limit of the MLE (reported only).
inline constexpr double kChernoffMoment = 1.05423856;

// int_a^b (f^2 g)^(1/3) / (4 F (1 - F))^(1/3) dx
inline double jump_intensity_integral(const std::function<double(double)>& F, const std::function<double(double)>& f,
                                      const std::function<double(double)>& g, double a, double b) {
  auto integrand = [&](double x) {
    const double Fx = F(x);
    return std::cbrt(f(x) * f(x) * g(x)) / std::cbrt(4.0 * Fx * (1.0 - Fx));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, a, b, 15, 1e-12);
}

// K_N / (N^(1/3) int ...): number of MLE jumps on [a, b] relative to the asymptotic intensity.
inline double chernoff_ratio(const CurrentStatusSample& pooled, const std::function<double(double)>& F,
                             const std::function<double(double)>& f, const std::function<double(double)>& g,
                             double a, double b) {
  const auto Fhat = mle(pooled);
  const auto K = static_cast<double>(jump_count(Fhat, a, b));
  return K / (std::cbrt(static_cast<double>(pooled.size())) * jump_intensity_integral(F, f, g, a, b));
}

}  // namespace cstest
