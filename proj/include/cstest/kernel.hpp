#pragma once

// Triweight kernel, boundary-corrected kernel smoothing on a uniform grid,
// kernel moment constants and trapezoidal grid quadrature.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "cstest/sample.hpp"

namespace cstest {

enum class KernelId { triweight };
enum class BoundaryMode { corrected, uncorrected };

struct KernelSpec {
  KernelId id = KernelId::triweight;
  double bandwidth = 1.0;
  BoundaryMode boundary = BoundaryMode::corrected;

  void validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
      throw std::invalid_argument("kernel bandwidth must be positive");
    }
  }
};

// Uniform grid start, start + step, ..., start + (count - 1) * step.
struct GridSpec {
  double start = 0.0;
  double step = 1.0;
  std::size_t count = 0;

  double at(std::size_t k) const { return start + static_cast<double>(k) * step; }
  double end() const { return at(count - 1); }

  // [0, M] divided into `intervals` equal pieces.
  static GridSpec uniform(double M, std::size_t intervals) {
    if (!(M > 0.0) || intervals == 0) throw std::invalid_argument("GridSpec::uniform: bad arguments");
    return {0.0, M / static_cast<double>(intervals), intervals + 1};
  }

  // Step at most min(b/20, M/2000), rounded so the grid ends exactly at M.
  static GridSpec for_bandwidth(double M, double b) {
    if (!(M > 0.0) || !(b > 0.0)) throw std::invalid_argument("GridSpec::for_bandwidth: bad arguments");
    const double target = std::min(b / 20.0, M / 2000.0);
    const auto intervals = static_cast<std::size_t>(std::ceil(M / target - 1e-9));
    return uniform(M, intervals);
  }

  bool same_as(const GridSpec& o) const {
    return count == o.count && start == o.start && step == o.step;
  }
};

// Values tabulated on a GridSpec; linear interpolation in between.
struct GridFunction {
  GridSpec grid;
  std::vector<double> values;

  GridFunction() = default;
  GridFunction(GridSpec g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.count) throw std::invalid_argument("GridFunction: size mismatch");
  }
  explicit GridFunction(GridSpec g, double fill = 0.0) : grid(g), values(g.count, fill) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
  double& operator[](std::size_t k) { return values[k]; }
  double t(std::size_t k) const { return grid.at(k); }

  double operator()(double t) const {
    const double pos = (t - grid.start) / grid.step;
    if (pos <= 0.0) return values.front();
    const auto last = static_cast<double>(values.size() - 1);
    if (pos >= last) return values.back();
    const auto k = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(k);
    return values[k] + w * (values[k + 1] - values[k]);
  }
};

inline constexpr double kTriweightNorm = 35.0 / 32.0;

// K(u) = (35/32)(1 - u^2)^3 on [-1, 1].
inline double kernel_eval(double u) {
  if (u < -1.0 || u > 1.0) return 0.0;
  const double w = 1.0 - u * u;
  return kTriweightNorm * w * w * w;
}

inline double kernel_derivative(double u) {
  if (u < -1.0 || u > 1.0) return 0.0;
  const double w = 1.0 - u * u;
  return -6.0 * kTriweightNorm * u * w * w;
}

// Integral of u^j K(u) over [-1, rho], closed form.
inline double truncated_moment(int j, double rho) {
  auto anti = [j](double u) {
    const double p = std::pow(u, j + 1);
    const double u2 = u * u;
    return kTriweightNorm * p *
           (1.0 / (j + 1) - 3.0 * u2 / (j + 3) + 3.0 * u2 * u2 / (j + 5) - u2 * u2 * u2 / (j + 7));
  };
  return anti(rho) - anti(-1.0);
}

// alpha K(u) + beta u K(u) restricted to [-1, rho] has zeroth moment 1 and first moment 0.
struct BoundaryCoefficients {
  double alpha = 1.0;
  double beta = 0.0;
};

inline BoundaryCoefficients boundary_coefficients(double rho) {
  if (!(rho >= 0.0) || rho > 1.0) {
    throw std::domain_error("boundary kernel: support fraction outside [0, 1]; bandwidth too large for the domain");
  }
  if (rho == 1.0) return {1.0, 0.0};
  const double m0 = truncated_moment(0, rho);
  const double m1 = truncated_moment(1, rho);
  const double m2 = truncated_moment(2, rho);
  const double det = m0 * m2 - m1 * m1;
  if (!(det > 1e-14)) {
    throw std::domain_error("boundary kernel moment system is singular; bandwidth too large for the domain");
  }
  return {m2 / det, -m1 / det};
}

inline double boundary_kernel_eval(double u, double rho) {
  const auto c = boundary_coefficients(rho);
  if (u > rho) return 0.0;
  return (c.alpha + c.beta * u) * kernel_eval(u);
}

// Per grid point kernel K_b(t_k - T), with the edge correction of t_k baked in.
class GridKernel {
 public:
  GridKernel(const KernelSpec& spec, const GridSpec& grid) : b_(spec.bandwidth), grid_(grid) {
    spec.validate();
    const double M = grid.end();
    coef_.assign(grid.count, {1.0, 0.0});
    side_.assign(grid.count, 0);
    if (spec.boundary == BoundaryMode::uncorrected) return;
    if (2.0 * b_ > M - grid.start) {
      throw std::domain_error("bandwidth exceeds half the observation window");
    }
    for (std::size_t k = 0; k < grid.count; ++k) {
      const double t = grid.at(k);
      const double left = (t - grid.start) / b_;
      const double right = (M - t) / b_;
      if (left < 1.0) {
        coef_[k] = boundary_coefficients(std::max(0.0, left));
        side_[k] = -1;
      } else if (right < 1.0) {
        coef_[k] = boundary_coefficients(std::max(0.0, right));
        side_[k] = 1;
      }
    }
  }

  double bandwidth() const { return b_; }
  const GridSpec& grid() const { return grid_; }

  double value(std::size_t k, double obs_time) const {
    const double u = (grid_.at(k) - obs_time) / b_;
    const double base = kernel_eval(u);
    if (base == 0.0) return 0.0;
    const auto& c = coef_[k];
    const double lin = side_[k] > 0 ? c.alpha - c.beta * u : c.alpha + c.beta * u;
    return lin * base / b_;
  }

  // d/dt K_b(t - T) at t = t_k, coefficients held fixed at their t_k values.
  double derivative(std::size_t k, double obs_time) const {
    const double u = (grid_.at(k) - obs_time) / b_;
    if (u < -1.0 || u > 1.0) return 0.0;
    const auto& c = coef_[k];
    double d = 0.0;
    if (side_[k] > 0) {
      d = -c.beta * kernel_eval(u) + (c.alpha - c.beta * u) * kernel_derivative(u);
    } else {
      d = c.beta * kernel_eval(u) + (c.alpha + c.beta * u) * kernel_derivative(u);
    }
    return d / (b_ * b_);
  }

  // Grid index range [first, last) where K_b(t_k - T) may be nonzero.
  std::pair<std::size_t, std::size_t> support(double obs_time) const {
    const double lo = (obs_time - b_ - grid_.start) / grid_.step;
    const double hi = (obs_time + b_ - grid_.start) / grid_.step;
    const auto n = static_cast<double>(grid_.count);
    const auto first = static_cast<std::size_t>(std::clamp(std::ceil(lo), 0.0, n));
    const auto last = static_cast<std::size_t>(std::clamp(std::floor(hi) + 1.0, 0.0, n));
    return {first, std::max(first, last)};
  }

 private:
  double b_;
  GridSpec grid_;
  std::vector<BoundaryCoefficients> coef_;
  std::vector<int> side_;
};

// Kernel contributions of one observation on its support.
struct KernelRow {
  std::size_t first = 0;
  std::vector<double> values;
};

inline std::vector<KernelRow> kernel_rows(const GridKernel& kernel, std::span<const double> times) {
  std::vector<KernelRow> rows(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto [first, last] = kernel.support(times[i]);
    rows[i].first = first;
    rows[i].values.resize(last - first);
    for (std::size_t k = first; k < last; ++k) rows[i].values[k - first] = kernel.value(k, times[i]);
  }
  return rows;
}

// out[k] += scale * sum over selected rows.
inline void accumulate_rows(std::span<const KernelRow> rows, std::span<const int> select, double scale,
                            std::span<double> out) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!select.empty() && select[i] == 0) continue;
    const auto& r = rows[i];
    double* dst = out.data() + r.first;
    for (std::size_t j = 0; j < r.values.size(); ++j) dst[j] += scale * r.values[j];
  }
}

struct DensityEstimates {
  GridFunction g;  // observation density
  GridFunction h;  // sub-density of observations with delta = 1
};

// g(t) = (1/n) sum K_b(t - T_i), h(t) = (1/n) sum delta_i K_b(t - T_i).
inline DensityEstimates estimate_densities(const CurrentStatusSample& sample, const KernelSpec& spec,
                                           const GridSpec& grid) {
  if (sample.empty()) throw std::invalid_argument("estimate_densities: empty sample");
  const GridKernel kernel(spec, grid);
  const auto times = sample.times();
  const auto deltas = sample.deltas();
  const auto rows = kernel_rows(kernel, times);
  DensityEstimates d{GridFunction(grid), GridFunction(grid)};
  const double scale = 1.0 / static_cast<double>(sample.size());
  accumulate_rows(rows, {}, scale, d.g.values);
  accumulate_rows(rows, deltas, scale, d.h.values);
  return d;
}

// Composite trapezoid of the piecewise-linear interpolant of v (v[k] at start + k*step) over [from, to].
inline double integrate_samples(std::span<const double> v, double start, double step, double from, double to) {
  const double last_t = start + static_cast<double>(v.size() - 1) * step;
  const double eps = 1e-9 * step;
  if (v.empty() || from > to || from < start - eps || to > last_t + eps) {
    throw std::out_of_range("integrate_grid: range outside grid");
  }
  from = std::max(from, start);
  to = std::min(to, last_t);
  if (from == to) return 0.0;
  auto interp = [&](double t) {
    const double pos = std::clamp((t - start) / step, 0.0, static_cast<double>(v.size() - 1));
    const auto k = std::min(static_cast<std::size_t>(pos), v.size() - 2);
    const double w = pos - static_cast<double>(k);
    return v[k] + w * (v[k + 1] - v[k]);
  };
  const double p0 = (from - start) / step;
  const double p1 = (to - start) / step;
  const auto k0 = static_cast<std::size_t>(std::ceil(p0 - 1e-9));
  const auto k1 = std::min(static_cast<std::size_t>(std::floor(p1 + 1e-9)), v.size() - 1);
  if (k0 > k1) return 0.5 * (interp(from) + interp(to)) * (to - from);
  double sum = 0.0;
  for (std::size_t k = k0; k < k1; ++k) sum += 0.5 * (v[k] + v[k + 1]) * step;
  const double tk0 = start + static_cast<double>(k0) * step;
  const double tk1 = start + static_cast<double>(k1) * step;
  if (tk0 > from) sum += 0.5 * (interp(from) + v[k0]) * (tk0 - from);
  if (to > tk1) sum += 0.5 * (v[k1] + interp(to)) * (to - tk1);
  return sum;
}

inline double integrate_grid(const GridFunction& f, double from, double to) {
  return integrate_samples(f.values, f.grid.start, f.grid.step, from, to);
}

// Smallest index range [k0, k1] of grid points whose span covers [a, b].
inline std::pair<std::size_t, std::size_t> window_indices(const GridSpec& g, double a, double b) {
  const double p0 = (a - g.start) / g.step;
  const double p1 = (b - g.start) / g.step;
  const auto last = static_cast<double>(g.count - 1);
  const auto k0 = static_cast<std::size_t>(std::clamp(std::floor(p0 + 1e-9), 0.0, last));
  const auto k1 = static_cast<std::size_t>(std::clamp(std::ceil(p1 - 1e-9), 0.0, last));
  return {k0, k1};
}

// Running trapezoid integral from the grid start.
inline GridFunction cumulative(const GridFunction& f) {
  GridFunction out(f.grid, 0.0);
  for (std::size_t k = 1; k < f.size(); ++k) {
    out.values[k] = out.values[k - 1] + 0.5 * (f.values[k - 1] + f.values[k]) * f.grid.step;
  }
  return out;
}

struct KernelMoments {
  double int_K2 = 0.0;    // int K(u)^2 du
  double int_u2K = 0.0;   // int u^2 K(u) du
  double sigma_K2 = 0.0;  // 2 int (int K(u+v) K(u) du)^2 dv
};

namespace detail {

// Gauss-Legendre with 64 nodes on each of `panels` equal pieces of [lo, hi].
template <class F>
double gauss_panels(F&& f, double lo, double hi, int panels) {
  using Rule = boost::math::quadrature::gauss<double, 64>;
  const double w = (hi - lo) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * w;
    sum += Rule::integrate(f, a, a + w);
  }
  return sum;
}

template <class F>
double gauss_refined(F&& f, double lo, double hi, double tol) {
  int panels = std::max(1, static_cast<int>(std::ceil(hi - lo)));
  double prev = gauss_panels(f, lo, hi, panels);
  for (int it = 0; it < 8; ++it) {
    panels *= 2;
    const double cur = gauss_panels(f, lo, hi, panels);
    if (std::abs(cur - prev) <= tol) return cur;
    prev = cur;
  }
  return prev;
}

}  // namespace detail

inline KernelMoments kernel_moments(const KernelSpec& spec, double quad_tol = 1e-12) {
  (void)spec;  // triweight only
  auto k2 = [](double u) { return kernel_eval(u) * kernel_eval(u); };
  auto u2k = [](double u) { return u * u * kernel_eval(u); };
  auto autocorr = [quad_tol](double v) {
    const double lo = std::max(-1.0, -1.0 - v);
    const double hi = std::min(1.0, 1.0 - v);
    if (lo >= hi) return 0.0;
    return detail::gauss_refined([v](double u) { return kernel_eval(u + v) * kernel_eval(u); }, lo, hi,
                                 quad_tol * 1e-2);
  };
  auto autocorr2 = [&](double v) {
    const double r = autocorr(v);
    return r * r;
  };
  KernelMoments m;
  m.int_K2 = detail::gauss_refined(k2, -1.0, 1.0, quad_tol);
  m.int_u2K = detail::gauss_refined(u2k, -1.0, 1.0, quad_tol);
  // autocorrelation is a polynomial on each side of v = 0
  m.sigma_K2 = 2.0 * (detail::gauss_refined(autocorr2, -2.0, 0.0, quad_tol) +
                      detail::gauss_refined(autocorr2, 0.0, 2.0, quad_tol));
  return m;
}

}  // namespace cstest
