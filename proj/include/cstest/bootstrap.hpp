#pragma once

// Conditional Bernoulli bootstrap: observation times stay fixed, indicators are
// redrawn from the pooled MSLE, and V_N* (or the raw LR*) is recomputed with the
// original g~ estimates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cstest/estimators.hpp"
#include "cstest/kernel.hpp"
#include "cstest/parallel.hpp"
#include "cstest/rng.hpp"
#include "cstest/sample.hpp"
#include "cstest/statistics.hpp"

namespace cstest {

enum class StatisticKind { smoothed_lr, raw_lr };

struct BootstrapPlan {
  std::size_t B = 1000;
  double level = 0.05;
  double tilde_c = 2.0;  // b~_N = tilde_c N^(-1/5)
  StatisticKind kind = StatisticKind::smoothed_lr;
  std::uint64_t seed = 0x5EED5EEDull;

  void validate() const {
    if (B < 1) throw std::invalid_argument("BootstrapPlan: B must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("BootstrapPlan: level must lie in (0, 1)");
    if (!(tilde_c > 0.0)) throw std::invalid_argument("BootstrapPlan: bandwidth constant must be positive");
  }

  double tilde_bandwidth(std::size_t N) const { return tilde_c * std::pow(static_cast<double>(N), -0.2); }

  // 1-based rank ceil(B (1 - level)).
  std::size_t critical_rank() const {
    const double r = std::ceil(static_cast<double>(B) * (1.0 - level) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(r), 1, B);
  }
};

struct BootstrapDistribution {
  std::vector<double> values;  // sorted
  double critical_value = 0.0;

  // (1 + #{V* >= observed}) / (B + 1)
  double p_value(double observed) const {
    const auto it = std::lower_bound(values.begin(), values.end(), observed);
    const auto ge = static_cast<double>(values.end() - it);
    return (1.0 + ge) / (static_cast<double>(values.size()) + 1.0);
  }
};

inline BootstrapDistribution make_distribution(std::vector<double> values, const BootstrapPlan& plan) {
  if (values.empty()) throw std::invalid_argument("bootstrap distribution: no values");
  std::sort(values.begin(), values.end());
  BootstrapDistribution d;
  d.critical_value = values[std::min(plan.critical_rank(), values.size()) - 1];
  d.values = std::move(values);
  return d;
}

// Pooled MSLE with bandwidth b~_N on `grid`.
inline SmoothEstimate fit_resampling_distribution(const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                                                  const BootstrapPlan& plan, const GridSpec& grid,
                                                  BoundaryMode boundary = BoundaryMode::corrected) {
  const std::size_t N = s1.size() + s2.size();
  if (N == 0) throw std::invalid_argument("fit_resampling_distribution: pooled sample is empty");
  const KernelSpec spec{KernelId::triweight, plan.tilde_bandwidth(N), boundary};
  return combined_msle(s1, s2, spec, grid);
}

// delta*_i = 1{U_i < F~(T_i)}, one uniform per time in order.
template <class Rng>
void resample_deltas_into(std::span<const double> probs, Rng& rng, std::span<int> out) {
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = rng.uniform() < probs[i] ? 1 : 0;
}

template <class Rng>
std::vector<int> resample_deltas(const SmoothEstimate& F_tilde, std::span<const double> times, Rng& rng) {
  std::vector<double> p(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) p[i] = std::clamp(F_tilde(times[i]), 0.0, 1.0);
  std::vector<int> out(times.size());
  resample_deltas_into(p, rng, out);
  return out;
}

// Everything fixed across resamples: kernel rows, g~_1, g~_2 and their cusums, and
// the resampling probabilities F~(T_i).
class BootstrapContext {
 public:
  BootstrapContext(const CurrentStatusSample& s1, const CurrentStatusSample& s2, const BootstrapPlan& plan,
                   const TestConfig& config)
      : s1_(s1), s2_(s2), config_(config) {
    if (s1.empty() || s2.empty()) throw std::invalid_argument("bootstrap: empty sample");
    plan.validate();
    config.validate();
    m_ = s1.size();
    n_ = s2.size();
    const std::size_t N = m_ + n_;
    const auto spec = config.kernel(N);
    grid_ = config.grid(N);
    const GridKernel kernel(spec, grid_);
    const auto t1 = s1.times(), t2 = s2.times();
    rows1_ = kernel_rows(kernel, t1);
    rows2_ = kernel_rows(kernel, t2);
    const std::size_t K = grid_.count;
    g1_.assign(K, 0.0);
    g2_.assign(K, 0.0);
    accumulate_rows(rows1_, {}, 1.0 / static_cast<double>(m_), g1_);
    accumulate_rows(rows2_, {}, 1.0 / static_cast<double>(n_), g2_);
    alpha_ = static_cast<double>(m_) / static_cast<double>(N);
    g_.resize(K);
    for (std::size_t k = 0; k < K; ++k) g_[k] = alpha_ * g1_[k] + (1.0 - alpha_) * g2_[k];
    auto cusum = [&](const std::vector<double>& g, std::vector<double>& gf, std::vector<double>& G) {
      gf.resize(K);
      G.resize(K);
      detail::floored_cumulative(g, grid_.step, gf, G);
    };
    cusum(g1_, g1f_, G1_);
    cusum(g2_, g2f_, G2_);
    cusum(g_, gf_, G_);

    const auto F_tilde = fit_resampling_distribution(s1, s2, plan, grid_, config.boundary);
    probs_.resize(N);
    for (std::size_t i = 0; i < m_; ++i) probs_[i] = std::clamp(F_tilde(t1[i]), 0.0, 1.0);
    for (std::size_t i = 0; i < n_; ++i) probs_[m_ + i] = std::clamp(F_tilde(t2[i]), 0.0, 1.0);
  }

  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }
  const GridSpec& grid() const { return grid_; }
  std::span<const double> g1() const { return g1_; }
  std::span<const double> g2() const { return g2_; }
  std::span<const double> resampling_probabilities() const { return probs_; }

  // Per-thread buffers.
  struct Scratch {
    std::vector<int> deltas;
    std::vector<double> h1, h2, h, F1, F2, F, window;
    MsleWorkspace ws;
  };

  // V_N from indicators d1 (sample 1, sorted order) and d2 with the cached g~'s.
  double smoothed_lr(std::span<const int> d1, std::span<const int> d2, Scratch& s) const {
    const std::size_t K = grid_.count;
    s.h1.assign(K, 0.0);
    s.h2.assign(K, 0.0);
    accumulate_rows(rows1_, d1, 1.0 / static_cast<double>(m_), s.h1);
    accumulate_rows(rows2_, d2, 1.0 / static_cast<double>(n_), s.h2);
    s.h.resize(K);
    for (std::size_t k = 0; k < K; ++k) s.h[k] = alpha_ * s.h1[k] + (1.0 - alpha_) * s.h2[k];
    s.F1.resize(K);
    s.F2.resize(K);
    s.F.resize(K);
    msle_into(g1f_, G1_, s.h1, grid_.step, s.ws, s.F1);
    msle_into(g2f_, G2_, s.h2, grid_.step, s.ws, s.F2);
    msle_into(gf_, G_, s.h, grid_.step, s.ws, s.F);
    return v_n_from_arrays(s.F1, s.F2, s.F, g1_, s.h1, g2_, s.h2, grid_, m_, n_, config_.a, config_.b, s.window);
  }

  double raw_lr(std::span<const int> d1, std::span<const int> d2) const {
    return lr_statistic(s1_.with_deltas(d1), s2_.with_deltas(d2), config_);
  }

  double observed(StatisticKind kind) const {
    Scratch s;
    const auto d1 = s1_.deltas(), d2 = s2_.deltas();
    return kind == StatisticKind::smoothed_lr ? smoothed_lr(d1, d2, s) : raw_lr(d1, d2);
  }

  // Draws the indicators of resample r into s.deltas (sample 1 then sample 2).
  void draw(std::uint64_t seed, std::size_t r, Scratch& s) const {
    CounterRng rng(seed, stream_id({0xB007ull, r}));
    s.deltas.resize(m_ + n_);
    resample_deltas_into(probs_, rng, s.deltas);
  }

  std::span<const int> first_part(const Scratch& s) const { return std::span<const int>(s.deltas).first(m_); }
  std::span<const int> second_part(const Scratch& s) const { return std::span<const int>(s.deltas).subspan(m_); }

 private:
  const CurrentStatusSample& s1_;
  const CurrentStatusSample& s2_;
  TestConfig config_;
  std::size_t m_ = 0, n_ = 0;
  double alpha_ = 0.5;
  GridSpec grid_;
  std::vector<KernelRow> rows1_, rows2_;
  std::vector<double> g1_, g2_, g_, g1f_, g2f_, gf_, G1_, G2_, G_;
  std::vector<double> probs_;
};

// One bootstrap statistic from resampled indicators (sample 1 then sample 2).
inline double bootstrap_statistic_once(const BootstrapContext& ctx, std::span<const int> deltas, StatisticKind kind) {
  if (deltas.size() != ctx.m() + ctx.n()) throw std::invalid_argument("bootstrap: indicator count mismatch");
  const auto d1 = deltas.first(ctx.m()), d2 = deltas.subspan(ctx.m());
  if (kind == StatisticKind::raw_lr) return ctx.raw_lr(d1, d2);
  BootstrapContext::Scratch s;
  return ctx.smoothed_lr(d1, d2, s);
}

struct BootstrapRun {
  double slr_observed = 0.0, lr_observed = 0.0;
  BootstrapDistribution slr, lr;
};

// SLR and LR bootstrap distributions from one shared set of B resamples.
inline BootstrapRun bootstrap_both(const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                                   const BootstrapPlan& plan, const TestConfig& config, unsigned threads = 1,
                                   bool with_lr = true) {
  const BootstrapContext ctx(s1, s2, plan, config);
  std::vector<double> slr(plan.B), lr(with_lr ? plan.B : 0);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.B)));
  std::vector<BootstrapContext::Scratch> scratch(workers);
  // Contiguous blocks per worker so each owns one scratch; values depend only on r.
  const std::size_t per = (plan.B + workers - 1) / workers;
  parallel_for(workers, workers, [&](std::size_t w) {
    auto& s = scratch[w];
    for (std::size_t r = w * per; r < std::min(plan.B, (w + 1) * per); ++r) {
      ctx.draw(plan.seed, r, s);
      slr[r] = ctx.smoothed_lr(ctx.first_part(s), ctx.second_part(s), s);
      if (with_lr) lr[r] = ctx.raw_lr(ctx.first_part(s), ctx.second_part(s));
    }
  });
  BootstrapRun run;
  run.slr_observed = ctx.observed(StatisticKind::smoothed_lr);
  run.slr = make_distribution(std::move(slr), plan);
  if (with_lr) {
    run.lr_observed = ctx.observed(StatisticKind::raw_lr);
    run.lr = make_distribution(std::move(lr), plan);
  }
  return run;
}

inline BootstrapDistribution critical_value(const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                                            const BootstrapPlan& plan, const TestConfig& config,
                                            unsigned threads = 1) {
  const BootstrapContext ctx(s1, s2, plan, config);
  std::vector<double> values(plan.B);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.B)));
  const std::size_t per = (plan.B + workers - 1) / workers;
  parallel_for(workers, workers, [&](std::size_t w) {
    BootstrapContext::Scratch s;
    for (std::size_t r = w * per; r < std::min(plan.B, (w + 1) * per); ++r) {
      ctx.draw(plan.seed, r, s);
      values[r] = plan.kind == StatisticKind::smoothed_lr ? ctx.smoothed_lr(ctx.first_part(s), ctx.second_part(s), s)
                                                          : ctx.raw_lr(ctx.first_part(s), ctx.second_part(s));
    }
  });
  return make_distribution(std::move(values), plan);
}

// Observed statistic, bootstrap critical value, p-value and decision (reject if larger than the critical value).
inline TestOutcome bootstrap_test(const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                                  const BootstrapPlan& plan, const TestConfig& config, unsigned threads = 1) {
  const BootstrapContext ctx(s1, s2, plan, config);
  const auto dist = critical_value(s1, s2, plan, config, threads);
  TestOutcome out;
  out.statistic = ctx.observed(plan.kind);
  out.critical_value = dist.critical_value;
  out.p_value = dist.p_value(out.statistic);
  out.reject = out.statistic > dist.critical_value;
  out.n_bootstrap = plan.B;
  if (plan.kind == StatisticKind::smoothed_lr) {
    const std::size_t N = s1.size() + s2.size();
    const auto moments = kernel_moments(config.kernel(N));
    out.centering = v_n_centering(N, config, moments);
    out.pivot = pivot_v_n(out.statistic, N, config, moments);
  }
  return out;
}

}  // namespace cstest
