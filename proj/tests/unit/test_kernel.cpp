#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cstest/kernel.hpp"
#include "cstest/sample.hpp"

using namespace cstest;

namespace {

// Composite Simpson, used as an oracle independent of the library's quadrature.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST(KernelEval, TriweightValues) {
  EXPECT_DOUBLE_EQ(kernel_eval(0.0), 35.0 / 32.0);
  EXPECT_DOUBLE_EQ(kernel_eval(1.0), 0.0);
  EXPECT_DOUBLE_EQ(kernel_eval(-1.5), 0.0);
  EXPECT_NEAR(kernel_eval(0.5), 0.461426, 1e-6);
  for (double u = -1.2; u <= 1.2; u += 0.07) EXPECT_DOUBLE_EQ(kernel_eval(u), kernel_eval(-u));
}

TEST(KernelEval, IntegratesToOne) { EXPECT_NEAR(simpson(kernel_eval, -1.0, 1.0), 1.0, 1e-10); }

TEST(KernelEval, DerivativeMatchesFiniteDifference) {
  for (double u : {-0.9, -0.3, 0.0, 0.25, 0.8}) {
    const double h = 1e-6;
    EXPECT_NEAR(kernel_derivative(u), (kernel_eval(u + h) - kernel_eval(u - h)) / (2 * h), 1e-6);
  }
}

TEST(BoundaryKernel, FullSupportIsPlainKernel) {
  for (double u = -1.0; u <= 1.0; u += 0.05) EXPECT_NEAR(boundary_kernel_eval(u, 1.0), kernel_eval(u), 1e-14);
}

TEST(BoundaryKernel, TruncatedMomentsForEveryRho) {
  for (int i = 1; i <= 10; ++i) {
    const double rho = 0.1 * i;
    const double m0 = simpson([&](double u) { return boundary_kernel_eval(u, rho); }, -1.0, rho);
    const double m1 = simpson([&](double u) { return u * boundary_kernel_eval(u, rho); }, -1.0, rho);
    EXPECT_NEAR(m0, 1.0, 1e-8) << "rho " << rho;
    EXPECT_NEAR(m1, 0.0, 1e-8) << "rho " << rho;
  }
}

TEST(BoundaryKernel, TruncatedMomentClosedForm) {
  for (double rho : {0.0, 0.3, 0.5, 1.0}) {
    for (int j = 0; j <= 2; ++j) {
      const double q = simpson([&](double u) { return std::pow(u, j) * kernel_eval(u); }, -1.0, rho);
      EXPECT_NEAR(truncated_moment(j, rho), q, 1e-12);
    }
  }
}

TEST(BoundaryKernel, RejectsRhoOutsideUnitInterval) {
  EXPECT_THROW(boundary_coefficients(-0.1), std::domain_error);
  EXPECT_THROW(boundary_coefficients(1.2), std::domain_error);
}

TEST(GridKernel, BandwidthTooLargeForDomain) {
  const auto grid = GridSpec::uniform(2.0, 200);
  EXPECT_THROW(GridKernel({KernelId::triweight, 1.5, BoundaryMode::corrected}, grid), std::exception);
}

TEST(EstimateDensities, SingleObservation) {
  const CurrentStatusSample s({{1.0, 1}});
  const auto grid = GridSpec::uniform(2.0, 2000);
  const auto d = estimate_densities(s, {KernelId::triweight, 0.5, BoundaryMode::corrected}, grid);
  EXPECT_NEAR(d.g(1.0), 2.0 * 35.0 / 32.0, 1e-12);
  EXPECT_NEAR(d.h(1.0), 2.0 * 35.0 / 32.0, 1e-12);
}

TEST(EstimateDensities, AllZeroDeltasGiveZeroSubdensity) {
  std::vector<Observation> obs;
  for (int i = 0; i < 30; ++i) obs.push_back({0.05 + 0.06 * i, 0});
  const auto grid = GridSpec::uniform(2.0, 2000);
  const auto d = estimate_densities(CurrentStatusSample(obs), {KernelId::triweight, 0.4}, grid);
  for (double v : d.h.values) EXPECT_EQ(v, 0.0);
}

TEST(EstimateDensities, EmptySampleThrows) {
  EXPECT_THROW(estimate_densities(CurrentStatusSample{}, {}, GridSpec::uniform(2.0, 10)), std::invalid_argument);
}

TEST(EstimateDensities, UniformConsistency) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<Observation> obs(100000);
  for (auto& o : obs) o = {u(rng), 0};
  const auto grid = GridSpec::for_bandwidth(2.0, 0.3);
  const auto d = estimate_densities(CurrentStatusSample(obs), {KernelId::triweight, 0.3}, grid);
  double sup = 0.0;
  const auto [k0, k1] = window_indices(grid, 0.3, 1.7);
  for (auto k = k0; k <= k1; ++k) sup = std::max(sup, std::abs(d.g[k] - 0.5));
  EXPECT_LT(sup, 0.02);
}

TEST(EstimateDensities, MixtureIdentityIsExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<Observation> a(37), b(61);
  for (auto& o : a) o = {u(rng), u(rng) < 1.0};
  for (auto& o : b) o = {u(rng), u(rng) < 0.7};
  const CurrentStatusSample s1(a), s2(b);
  const auto pooled = CurrentStatusSample::pooled(s1, s2);
  const KernelSpec spec{KernelId::triweight, 0.6};
  const auto grid = GridSpec::for_bandwidth(2.0, 0.6);
  const auto d1 = estimate_densities(s1, spec, grid), d2 = estimate_densities(s2, spec, grid);
  const auto d = estimate_densities(pooled, spec, grid);
  const double al = 37.0 / 98.0, be = 61.0 / 98.0;
  for (std::size_t k = 0; k < grid.count; ++k) {
    EXPECT_NEAR(d.g[k], al * d1.g[k] + be * d2.g[k], 1e-12);
    EXPECT_NEAR(d.h[k], al * d1.h[k] + be * d2.h[k], 1e-12);
  }
}

TEST(Integration, TrapezoidOnGrid) {
  const auto grid = GridSpec::uniform(2.0, 2000);
  GridFunction f(grid);
  for (std::size_t k = 0; k < grid.count; ++k) f[k] = 3.0 * grid.at(k) * grid.at(k);
  EXPECT_NEAR(integrate_grid(f, 0.1, 1.9), 1.9 * 1.9 * 1.9 - 0.001, 1e-5);
  EXPECT_NEAR(integrate_grid(f, 0.1234, 0.1234), 0.0, 1e-15);
  GridFunction one(grid, 1.0);
  EXPECT_NEAR(integrate_grid(one, 0.12345, 1.5), 1.5 - 0.12345, 1e-12);
  const auto F = cumulative(f);
  for (std::size_t k = 1; k < grid.count; ++k) EXPECT_GE(F[k], F[k - 1]);
}

TEST(Grid, StepRule) {
  const auto g = GridSpec::for_bandwidth(2.0, 0.5);
  EXPECT_EQ(g.count, 2001u);
  EXPECT_DOUBLE_EQ(g.end(), 2.0);
  const auto fine = GridSpec::for_bandwidth(2.0, 0.01);
  EXPECT_LE(fine.step, 0.01 / 20.0 + 1e-15);
}

TEST(KernelMoments, TriweightConstants) {
  const auto m = kernel_moments({});
  EXPECT_NEAR(m.int_K2, 350.0 / 429.0, 1e-9);
  EXPECT_NEAR(m.int_u2K, 1.0 / 9.0, 1e-9);
  // 2 int (K*K)^2: exact rational value 303533860/258150321
  EXPECT_NEAR(m.sigma_K2, 1.1758027602839975, 1e-9);
}
