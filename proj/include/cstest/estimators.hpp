#pragma once

// Nonparametric MLE (discrete cusum) and maximum smoothed likelihood
// estimator (continuous cusum of kernel estimates) of the hidden-variable
// distribution function under current status censoring.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cstest/isotonic.hpp"
#include "cstest/kernel.hpp"
#include "cstest/sample.hpp"

namespace cstest {

// Floor applied to smoothed observation densities before they become cusum abscissae.
inline constexpr double kDensityFloor = 1e-8;
// Clamp for arguments of log and ratio computations.
inline constexpr double kProbClamp = 1e-10;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// Right-continuous nondecreasing step function, 0 before the first jump.
class MonotoneStepFunction {
 public:
  MonotoneStepFunction() = default;
  MonotoneStepFunction(std::vector<double> jumps, std::vector<double> values)
      : jumps_(std::move(jumps)), values_(std::move(values)) {
    if (jumps_.size() != values_.size()) throw std::invalid_argument("step function: size mismatch");
  }

  double operator()(double t) const {
    const auto it = std::upper_bound(jumps_.begin(), jumps_.end(), t);
    if (it == jumps_.begin()) return 0.0;
    return values_[static_cast<std::size_t>(it - jumps_.begin()) - 1];
  }

  std::span<const double> jump_locations() const { return jumps_; }
  std::span<const double> post_jump_values() const { return values_; }

 private:
  std::vector<double> jumps_;
  std::vector<double> values_;
};

// Isotonic fit at distinct observation times; the step function form drops flat stretches.
struct MleFit {
  std::vector<double> times;   // distinct, increasing
  std::vector<double> values;  // F-hat at each distinct time

  MonotoneStepFunction step_function() const {
    std::vector<double> j, v;
    double prev = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (values[k] > prev) {
        j.push_back(times[k]);
        v.push_back(values[k]);
        prev = values[k];
      }
    }
    return {std::move(j), std::move(v)};
  }
};

// Cusum (cumulative count, cumulative delta) over tie-merged times; slopes of its GCM.
inline MleFit mle_fit(const CurrentStatusSample& sample) {
  if (sample.empty()) throw std::invalid_argument("mle: empty sample");
  MleFit fit;
  std::vector<double> dx, dy;
  const auto obs = sample.observations();
  for (std::size_t i = 0; i < obs.size();) {
    std::size_t j = i;
    double events = 0.0;
    while (j < obs.size() && obs[j].t == obs[i].t) events += obs[j++].delta;
    fit.times.push_back(obs[i].t);
    dx.push_back(static_cast<double>(j - i));
    dy.push_back(events);
    i = j;
  }
  fit.values = left_slopes_at_points(CusumDiagram::from_increments(dx, dy));
  for (auto& v : fit.values) v = std::clamp(v, 0.0, 1.0);
  return fit;
}

inline MonotoneStepFunction mle(const CurrentStatusSample& sample) { return mle_fit(sample).step_function(); }

// Number of strict increases with jump location in [a, b].
inline std::size_t jump_count(const MonotoneStepFunction& f, double a, double b) {
  if (!(a < b)) throw std::invalid_argument("jump_count: need a < b");
  std::size_t c = 0;
  for (double t : f.jump_locations()) c += (t >= a && t <= b) ? 1 : 0;
  return c;
}

struct SmoothEstimate {
  GridFunction F;                // distribution role
  std::optional<GridFunction> f; // density role, when requested
  double source_bandwidth = 0.0;

  double operator()(double t) const { return F(t); }
};

namespace detail {

// Cumulative trapezoid of max(g, floor).
inline void floored_cumulative(std::span<const double> g, double step, std::span<double> g_floor,
                               std::span<double> G) {
  G[0] = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    g_floor[k] = std::max(g[k], kDensityFloor);
    if (!std::isfinite(g[k])) throw std::domain_error("msle: observation density is not finite");
    if (k > 0) G[k] = G[k - 1] + 0.5 * (g_floor[k - 1] + g_floor[k]) * step;
  }
}

}  // namespace detail

// Reusable buffers for repeated MSLE evaluation.
struct MsleWorkspace {
  std::vector<double> H;
  std::vector<std::size_t> hull;
};

// GCM slope of the cusum {(G(t_k), H(t_k))}. At hull vertices the tangent h/g is used,
// held between the neighbouring hull slopes; elsewhere the enclosing segment slope.
inline void msle_into(std::span<const double> g_floor, std::span<const double> G, std::span<const double> h,
                      double step, MsleWorkspace& ws, std::span<double> out) {
  const std::size_t n = G.size();
  ws.H.resize(n);
  ws.H[0] = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    if (!(G[k] > G[k - 1])) throw std::domain_error("msle: cusum abscissa is not increasing");
    ws.H[k] = ws.H[k - 1] + 0.5 * (h[k - 1] + h[k]) * step;
  }
  gcm_indices(G, ws.H, ws.hull);
  const auto& hull = ws.hull;
  const std::size_t J = hull.size() - 1;
  auto slope = [&](std::size_t j) {  // segment j: hull[j-1] -> hull[j], 1 <= j <= J
    const auto a = hull[j - 1], b = hull[j];
    return (ws.H[b] - ws.H[a]) / (G[b] - G[a]);
  };
  double s_prev = slope(1);
  out[0] = std::min(h[0] / g_floor[0], s_prev);
  for (std::size_t j = 1; j <= J; ++j) {
    const double s = s_prev;
    for (std::size_t k = hull[j - 1] + 1; k < hull[j]; ++k) out[k] = s;
    const auto v = hull[j];
    const double tangent = h[v] / g_floor[v];
    if (j < J) {
      const double s_next = slope(j + 1);
      out[v] = std::clamp(tangent, s, s_next);
      s_prev = s_next;
    } else {
      out[v] = std::max(tangent, s);
    }
  }
  for (std::size_t k = 0; k < n; ++k) out[k] = std::clamp(out[k], 0.0, 1.0);
}

inline SmoothEstimate msle(const GridFunction& g, const GridFunction& h, double bandwidth = 0.0) {
  if (!g.grid.same_as(h.grid)) throw std::invalid_argument("msle: g and h on different grids");
  if (g.size() < 2) throw std::invalid_argument("msle: grid too small");
  std::vector<double> gf(g.size()), G(g.size());
  detail::floored_cumulative(g.values, g.grid.step, gf, G);
  MsleWorkspace ws;
  SmoothEstimate est{GridFunction(g.grid), std::nullopt, bandwidth};
  msle_into(gf, G, h.values, g.grid.step, ws, est.F.values);
  return est;
}

// Everything the smoothed LR statistic needs from a pair of samples.
struct TwoSampleSmoothFit {
  GridSpec grid;
  double bandwidth = 0.0;
  std::size_t m = 0, n = 0;
  DensityEstimates first, second;  // per-sample g~, h~
  GridFunction g, h;               // alpha g1 + beta g2, likewise h
  SmoothEstimate F1, F2, F;

  double alpha() const { return static_cast<double>(m) / static_cast<double>(m + n); }
};

inline GridFunction mix(const GridFunction& a, double wa, const GridFunction& b, double wb) {
  GridFunction out(a.grid);
  for (std::size_t k = 0; k < out.size(); ++k) out.values[k] = wa * a.values[k] + wb * b.values[k];
  return out;
}

// Combined MSLE from alpha g~1 + beta g~2 and alpha h~1 + beta h~2; either sample may be empty.
inline SmoothEstimate combined_msle(const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                                    const KernelSpec& spec, const GridSpec& grid) {
  if (s1.empty() && s2.empty()) throw std::invalid_argument("combined_msle: both samples empty");
  const double N = static_cast<double>(s1.size() + s2.size());
  const double alpha = static_cast<double>(s1.size()) / N;
  if (s2.empty()) {
    const auto d = estimate_densities(s1, spec, grid);
    return msle(d.g, d.h, spec.bandwidth);
  }
  if (s1.empty()) {
    const auto d = estimate_densities(s2, spec, grid);
    return msle(d.g, d.h, spec.bandwidth);
  }
  const auto d1 = estimate_densities(s1, spec, grid);
  const auto d2 = estimate_densities(s2, spec, grid);
  return msle(mix(d1.g, alpha, d2.g, 1.0 - alpha), mix(d1.h, alpha, d2.h, 1.0 - alpha), spec.bandwidth);
}

inline TwoSampleSmoothFit fit_two_sample(const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                                         const KernelSpec& spec, const GridSpec& grid) {
  if (s1.empty() || s2.empty()) throw std::invalid_argument("fit_two_sample: empty sample");
  TwoSampleSmoothFit fit;
  fit.grid = grid;
  fit.bandwidth = spec.bandwidth;
  fit.m = s1.size();
  fit.n = s2.size();
  fit.first = estimate_densities(s1, spec, grid);
  fit.second = estimate_densities(s2, spec, grid);
  const double a = fit.alpha();
  fit.g = mix(fit.first.g, a, fit.second.g, 1.0 - a);
  fit.h = mix(fit.first.h, a, fit.second.h, 1.0 - a);
  fit.F1 = msle(fit.first.g, fit.first.h, spec.bandwidth);
  fit.F2 = msle(fit.second.g, fit.second.h, spec.bandwidth);
  fit.F = msle(fit.g, fit.h, spec.bandwidth);
  return fit;
}

// MSLE plus the density f~ = h~'/g~ - g~' h~ / g~^2 from derivative kernels.
inline SmoothEstimate msle_with_density(const CurrentStatusSample& sample, double bandwidth, const GridSpec& grid,
                                        double a, double b,
                                        BoundaryMode boundary = BoundaryMode::corrected) {
  if (sample.empty()) throw std::invalid_argument("msle_with_density: empty sample");
  const KernelSpec spec{KernelId::triweight, bandwidth, boundary};
  const GridKernel kernel(spec, grid);
  const auto times = sample.times();
  const auto deltas = sample.deltas();
  const double inv_n = 1.0 / static_cast<double>(sample.size());
  GridFunction g(grid), h(grid), dg(grid), dh(grid);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto [first, last] = kernel.support(times[i]);
    for (std::size_t k = first; k < last; ++k) {
      const double kv = kernel.value(k, times[i]) * inv_n;
      const double kd = kernel.derivative(k, times[i]) * inv_n;
      g.values[k] += kv;
      dg.values[k] += kd;
      if (deltas[i]) {
        h.values[k] += kv;
        dh.values[k] += kd;
      }
    }
  }
  for (std::size_t k = 0; k < grid.count; ++k) {
    const double t = grid.at(k);
    if (t >= a && t <= b && g.values[k] < kDensityFloor) {
      throw std::domain_error("msle_with_density: observation density below floor on the window");
    }
  }
  auto est = msle(g, h, bandwidth);
  GridFunction f(grid);
  for (std::size_t k = 0; k < grid.count; ++k) {
    const double gk = std::max(g.values[k], kDensityFloor);
    f.values[k] = dh.values[k] / gk - dg.values[k] * h.values[k] / (gk * gk);
  }
  est.f = std::move(f);
  return est;
}

}  // namespace cstest
