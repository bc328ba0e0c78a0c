#pragma once

// Weibull current status scenarios: data generation, rejection tallies for the
// four tests, the moment functionals behind crossing alternatives, and the
// H0 diagnostics (expansion residuals, MLE jump counts).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cstest/bootstrap.hpp"
#include "cstest/estimators.hpp"
#include "cstest/kernel.hpp"
#include "cstest/parallel.hpp"
#include "cstest/rng.hpp"
#include "cstest/sample.hpp"
#include "cstest/statistics.hpp"

namespace cstest {

// F(x) = 1 - exp(-lambda theta x^alpha)
struct WeibullParams {
  double lambda = 1.0;
  double alpha = 1.0;
  double theta = 1.0;

  void validate() const {
    if (!(lambda > 0.0 && alpha > 0.0 && theta > 0.0)) throw std::invalid_argument("Weibull parameters must be positive");
  }
  double cdf(double x) const { return x <= 0.0 ? 0.0 : -std::expm1(-lambda * theta * std::pow(x, alpha)); }
  double pdf(double x) const {
    if (x <= 0.0) return 0.0;
    const double r = lambda * theta;
    return alpha * r * std::pow(x, alpha - 1.0) * std::exp(-r * std::pow(x, alpha));
  }
  double quantile(double u) const { return std::pow(-std::log1p(-u) / (lambda * theta), 1.0 / alpha); }
};

template <class Rng>
std::vector<double> sample_weibull(double lambda, double alpha, double theta, std::size_t count, Rng& rng) {
  const WeibullParams p{lambda, alpha, theta};
  p.validate();
  std::vector<double> out(count);
  for (auto& x : out) x = p.quantile(rng.uniform());
  return out;
}

enum class ObservationDensity { uniform02, poly_decreasing };

inline std::string to_string(ObservationDensity g) {
  return g == ObservationDensity::uniform02 ? "uniform02" : "poly_decreasing";
}

inline ObservationDensity parse_observation_density(const std::string& s) {
  if (s == "uniform02") return ObservationDensity::uniform02;
  if (s == "poly_decreasing") return ObservationDensity::poly_decreasing;
  throw std::invalid_argument("unknown observation density '" + s + "'");
}

// Densities on [0, 2]: 1/2, or (2 - t)^3 / 4 with G(t) = 1 - (2 - t)^4 / 16.
inline double observation_pdf(ObservationDensity g, double t) {
  if (t < 0.0 || t > 2.0) return 0.0;
  if (g == ObservationDensity::uniform02) return 0.5;
  const double r = 2.0 - t;
  return 0.25 * r * r * r;
}

inline double observation_pdf_derivative(ObservationDensity g, double t) {
  if (t < 0.0 || t > 2.0 || g == ObservationDensity::uniform02) return 0.0;
  const double r = 2.0 - t;
  return -0.75 * r * r;
}

inline double observation_quantile(ObservationDensity g, double u) {
  if (g == ObservationDensity::uniform02) return 2.0 * u;
  return 2.0 - 2.0 * std::pow(1.0 - u, 0.25);
}

template <class Rng>
std::vector<double> sample_observation(ObservationDensity g, std::size_t count, Rng& rng) {
  std::vector<double> out(count);
  for (auto& t : out) t = observation_quantile(g, rng.uniform());
  return out;
}

enum TestMask : unsigned { kTestSLR = 1, kTestLR = 2, kTestUN = 4, kTestWN = 8, kTestAll = 15 };

struct Scenario {
  std::string name;
  double lambda = 1.6;
  double alpha1 = 0.5, alpha2 = 0.5;
  double theta = 1.0;
  ObservationDensity g1 = ObservationDensity::uniform02, g2 = ObservationDensity::uniform02;
  std::size_t m = 50, n = 50;
  std::size_t R = 500;
  BootstrapPlan plan;
  TestConfig config;
  std::uint64_t master_seed = 20240601;
  unsigned tests = kTestAll;

  WeibullParams first() const { return {lambda, alpha1, 1.0}; }
  WeibullParams second() const { return {lambda, alpha2, theta}; }
  bool null_holds() const { return alpha1 == alpha2 && theta == 1.0; }

  void validate() const {
    first().validate();
    second().validate();
    if (m == 0 || n == 0) throw std::invalid_argument("scenario " + name + ": sample sizes must be positive");
    if (R == 0) throw std::invalid_argument("scenario " + name + ": R must be positive");
    plan.validate();
    config.validate();
  }
};

struct ReplicationSamples {
  CurrentStatusSample first, second;
};

// Data for replication `rep`; a pure function of (master_seed, rep) and the scenario parameters.
inline ReplicationSamples draw_replication(const Scenario& sc, std::size_t rep) {
  auto stream = [&](std::uint64_t tag) { return CounterRng(sc.master_seed, stream_id({rep, tag})); };
  auto make = [](std::vector<double> t, const std::vector<double>& x, SampleLabel label) {
    std::vector<Observation> obs(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) obs[i] = {t[i], x[i] <= t[i] ? 1 : 0};
    return CurrentStatusSample(std::move(obs), label);
  };
  auto rt1 = stream(1), rx1 = stream(2), rt2 = stream(3), rx2 = stream(4);
  const auto t1 = sample_observation(sc.g1, sc.m, rt1);
  const auto x1 = sample_weibull(sc.lambda, sc.alpha1, 1.0, sc.m, rx1);
  const auto t2 = sample_observation(sc.g2, sc.n, rt2);
  const auto x2 = sample_weibull(sc.lambda, sc.alpha2, sc.theta, sc.n, rx2);
  return {make(t1, x1, SampleLabel::first), make(t2, x2, SampleLabel::second)};
}

struct ReplicationOutcome {
  bool slr = false, lr = false, un = false, wn = false;
  double v_n = 0.0, lr_stat = 0.0, u_n = 0.0, w_n = 0.0;
};

inline constexpr double kNormalCritical = 1.96;

inline ReplicationOutcome run_replication(const Scenario& sc, std::size_t rep) {
  const auto data = draw_replication(sc, rep);
  ReplicationOutcome out;
  if (sc.tests & (kTestSLR | kTestLR)) {
    BootstrapPlan plan = sc.plan;
    plan.seed = stream_id({sc.master_seed, rep, 5});
    const auto run = bootstrap_both(data.first, data.second, plan, sc.config, 1, (sc.tests & kTestLR) != 0);
    out.v_n = run.slr_observed;
    out.slr = run.slr_observed > run.slr.critical_value;
    if (sc.tests & kTestLR) {
      out.lr_stat = run.lr_observed;
      out.lr = run.lr_observed > run.lr.critical_value;
    }
  }
  // A degenerate pooled MLE leaves U_N / W_N undefined; such replications count as non-rejections.
  if (sc.tests & kTestUN) {
    try {
      out.u_n = u_n_statistic(data.first, data.second);
      out.un = std::abs(out.u_n) > kNormalCritical;
    } catch (const std::domain_error&) {
      out.u_n = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (sc.tests & kTestWN) {
    try {
      out.w_n = w_n_statistic(data.first, data.second, sc.config);
      out.wn = std::abs(out.w_n) > kNormalCritical;
    } catch (const std::domain_error&) {
      out.w_n = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

struct RejectionRow {
  std::string test;
  double lambda = 0.0, alpha1 = 0.0, alpha2 = 0.0, theta = 0.0;
  ObservationDensity g1 = ObservationDensity::uniform02, g2 = ObservationDensity::uniform02;
  std::size_t m = 0, n = 0, R = 0, B = 0;
  double reject_rate = 0.0;
  double se = 0.0;
};

struct RejectionTable {
  std::vector<RejectionRow> rows;

  const RejectionRow* find(const std::string& test) const {
    for (const auto& r : rows)
      if (r.test == test) return &r;
    return nullptr;
  }
  double rate(const std::string& test) const {
    const auto* r = find(test);
    if (r == nullptr) throw std::out_of_range("no rejection row for " + test);
    return r->reject_rate;
  }
  void append(const RejectionTable& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
};

inline RejectionTable run_scenario(const Scenario& sc, unsigned threads = 1,
                                   const std::function<void(std::size_t)>& progress = {}) {
  sc.validate();
  std::vector<ReplicationOutcome> reps(sc.R);
  std::atomic<std::size_t> done{0};
  parallel_for(sc.R, threads, [&](std::size_t r) {
    reps[r] = run_replication(sc, r);
    const auto d = ++done;
    if (progress) progress(d);
  });
  RejectionTable table;
  auto add = [&](const char* name, unsigned bit, bool ReplicationOutcome::*flag) {
    if (!(sc.tests & bit)) return;
    std::size_t hits = 0;
    for (const auto& o : reps) hits += (o.*flag) ? 1 : 0;
    RejectionRow row{name, sc.lambda, sc.alpha1, sc.alpha2, sc.theta, sc.g1, sc.g2, sc.m, sc.n, sc.R,
                     (bit & (kTestSLR | kTestLR)) ? sc.plan.B : 0};
    row.reject_rate = static_cast<double>(hits) / static_cast<double>(sc.R);
    row.se = std::sqrt(row.reject_rate * (1.0 - row.reject_rate) / static_cast<double>(sc.R));
    table.rows.push_back(row);
  };
  add("SLR", kTestSLR, &ReplicationOutcome::slr);
  add("LR", kTestLR, &ReplicationOutcome::lr);
  add("U_N", kTestUN, &ReplicationOutcome::un);
  add("W_N", kTestWN, &ReplicationOutcome::wn);
  return table;
}

inline std::string format_number(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline void write_csv_header(std::ostream& os) {
  os << "test,lambda,alpha1,alpha2,theta,g1,g2,m,n,R,B,reject_rate,se\n";
}

inline void write_csv(std::ostream& os, const RejectionTable& table, bool header = true) {
  if (header) write_csv_header(os);
  char rate[32], se[32];
  for (const auto& r : table.rows) {
    std::snprintf(rate, sizeof rate, "%.6f", r.reject_rate);
    std::snprintf(se, sizeof se, "%.6f", r.se);
    os << r.test << ',' << format_number(r.lambda) << ',' << format_number(r.alpha1) << ','
       << format_number(r.alpha2) << ',' << format_number(r.theta) << ',' << to_string(r.g1) << ','
       << to_string(r.g2) << ',' << r.m << ',' << r.n << ',' << r.R << ',' << r.B << ',' << rate << ',' << se
       << '\n';
  }
}

// --- scenario files: "[scenario name]" headers followed by "key = value" lines; '#' starts a comment.

inline unsigned parse_test_list(const std::string& list) {
  unsigned mask = 0;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item == "SLR") mask |= kTestSLR;
    else if (item == "LR") mask |= kTestLR;
    else if (item == "U_N") mask |= kTestUN;
    else if (item == "W_N") mask |= kTestWN;
    else if (item == "all") mask |= kTestAll;
    else throw std::invalid_argument("unknown test '" + item + "'");
  }
  if (mask == 0) throw std::invalid_argument("empty test list");
  return mask;
}

inline std::vector<Scenario> parse_scenarios(std::istream& in, const Scenario& defaults) {
  std::vector<Scenario> out;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("scenario file line " + std::to_string(lineno) + ": " + what);
  };
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.rfind("[scenario", 0) != 0) fail("expected [scenario <name>]");
      Scenario sc = defaults;
      sc.name = trim(line.substr(9, line.size() - 10));
      if (sc.name.empty()) fail("scenario without a name");
      out.push_back(sc);
      continue;
    }
    if (out.empty()) fail("key outside a scenario block");
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto& sc = out.back();
    try {
      auto num = [&] {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
      };
      auto count = [&] {
        const double v = num();
        if (v < 0.0 || v != std::floor(v)) throw std::invalid_argument("not a nonnegative integer");
        return static_cast<std::size_t>(v);
      };
      if (key == "lambda") sc.lambda = num();
      else if (key == "alpha1") sc.alpha1 = num();
      else if (key == "alpha2") sc.alpha2 = num();
      else if (key == "alpha") sc.alpha1 = sc.alpha2 = num();
      else if (key == "theta") sc.theta = num();
      else if (key == "g1") sc.g1 = parse_observation_density(value);
      else if (key == "g2") sc.g2 = parse_observation_density(value);
      else if (key == "m") sc.m = count();
      else if (key == "n") sc.n = count();
      else if (key == "R") sc.R = count();
      else if (key == "B") sc.plan.B = count();
      else if (key == "level") sc.plan.level = num();
      else if (key == "tilde_c") sc.plan.tilde_c = num();
      else if (key == "a") sc.config.a = num();
      else if (key == "b") sc.config.b = num();
      else if (key == "M") sc.config.M = num();
      else if (key == "bandwidth_c") sc.config.bandwidth_c = num();
      else if (key == "bandwidth_exponent") sc.config.bandwidth_exponent = num();
      else if (key == "seed") sc.master_seed = static_cast<std::uint64_t>(std::stoull(value));
      else if (key == "tests") sc.tests = parse_test_list(value);
      else fail("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      if (msg.rfind("scenario file line", 0) == 0) throw;
      fail("bad value for '" + key + "': " + msg);
    } catch (const std::out_of_range&) {
      fail("value out of range for '" + key + "'");
    }
    try {
      if (key == "lambda" || key == "alpha1" || key == "alpha2" || key == "alpha" || key == "theta") {
        sc.first().validate();
        sc.second().validate();
      }
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  return out;
}

// --- moment functionals of crossing alternatives

struct CrossingFunctionals {
  double int_diff = 0.0;     // int_a^b (F1 - F2) dG
  double int_sq_diff = 0.0;  // int_a^b (F1^2 - F2^2) dG
  double l2_functional = 0.0;
};

// dG has density `g`; the squared-distance functional uses g1, g2 and the pooled
// F = (alpha g1 F1 + beta g2 F2) / (alpha g1 + beta g2).
inline CrossingFunctionals crossing_functionals(const WeibullParams& p1, const WeibullParams& p2, double a, double b,
                                                const std::function<double(double)>& g = {},
                                                ObservationDensity g1 = ObservationDensity::uniform02,
                                                ObservationDensity g2 = ObservationDensity::uniform02,
                                                double alpha = 0.5) {
  if (!(a < b)) throw std::invalid_argument("crossing_functionals: need a < b");
  p1.validate();
  p2.validate();
  using Q = boost::math::quadrature::gauss_kronrod<double, 61>;
  auto w = [&](double t) { return g ? g(t) : 1.0; };
  CrossingFunctionals out;
  out.int_diff = Q::integrate([&](double t) { return (p1.cdf(t) - p2.cdf(t)) * w(t); }, a, b, 20, 1e-14);
  out.int_sq_diff = Q::integrate(
      [&](double t) {
        const double u = p1.cdf(t), v = p2.cdf(t);
        return (u * u - v * v) * w(t);
      },
      a, b, 20, 1e-14);
  const double beta = 1.0 - alpha;
  out.l2_functional = Q::integrate(
      [&](double t) {
        const double u = p1.cdf(t), v = p2.cdf(t);
        const double d1 = observation_pdf(g1, t), d2 = observation_pdf(g2, t);
        const double F = (alpha * d1 * u + beta * d2 * v) / (alpha * d1 + beta * d2);
        const double q = F * (1.0 - F);
        return ((u - F) * (u - F) * d1 + (v - F) * (v - F) * d2) / q;
      },
      a, b, 20, 1e-14);
  return out;
}

// --- H0 diagnostics

inline PopulationModel population_model(const Scenario& sc) {
  if (!sc.null_holds()) throw std::invalid_argument("diagnostics need an H0 scenario (alpha1 = alpha2, theta = 1)");
  const auto F = sc.first();
  const auto g1 = sc.g1, g2 = sc.g2;
  return {[F](double t) { return F.cdf(t); },
          [F](double t) { return F.pdf(t); },
          [g1](double t) { return observation_pdf(g1, t); },
          [g1](double t) { return observation_pdf_derivative(g1, t); },
          [g2](double t) { return observation_pdf(g2, t); },
          [g2](double t) { return observation_pdf_derivative(g2, t); }};
}

struct DecompositionSummary {
  std::size_t N = 0;
  double bandwidth = 0.0;
  double D_N = 0.0;
  double median_scaled_residual = 0.0;  // median of |residual| N sqrt(b_N)
  double mean_A = 0.0, mean_B = 0.0, mean_C = 0.0;
};

// Residual of the V_N expansion at total sizes Ns (equal split m = n = N/2), `reps` replications each.
inline std::vector<DecompositionSummary> decomposition_sweep(const Scenario& base, const std::vector<std::size_t>& Ns,
                                                             std::size_t reps, unsigned threads = 1) {
  const auto model = population_model(base);
  std::vector<DecompositionSummary> out;
  for (const std::size_t N : Ns) {
    Scenario sc = base;
    sc.m = N / 2;
    sc.n = N - sc.m;
    sc.master_seed = stream_id({base.master_seed, N, 7});
    const auto moments = kernel_moments(sc.config.kernel(N));
    std::vector<DecompositionResult> res(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      const auto data = draw_replication(sc, r);
      res[r] = decompose_v_n(data.first, data.second, model, sc.config, moments);
    });
    DecompositionSummary s;
    s.N = N;
    s.bandwidth = sc.config.bandwidth(N);
    s.D_N = res.empty() ? 0.0 : res.front().D_N;
    std::vector<double> scaled(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      scaled[r] = std::abs(res[r].residual) * static_cast<double>(N) * std::sqrt(s.bandwidth);
      s.mean_A += res[r].A_N / static_cast<double>(reps);
      s.mean_B += res[r].B_N / static_cast<double>(reps);
      s.mean_C += res[r].C_N / static_cast<double>(reps);
    }
    std::sort(scaled.begin(), scaled.end());
    if (reps > 0) {
      s.median_scaled_residual =
          reps % 2 ? scaled[reps / 2] : 0.5 * (scaled[reps / 2 - 1] + scaled[reps / 2]);
    }
    out.push_back(s);
  }
  return out;
}

struct JumpConstantEstimate {
  std::size_t N = 0;
  std::size_t reps = 0;
  double mean_jumps = 0.0;
  double intensity_integral = 0.0;
  double constant = 0.0;     // mean K_N / (N^(1/3) integral)
  double chernoff_ratio = 0.0;  // 4 E Z^2 / constant
};

// Jump counts of the pooled MLE on [a, b]; requires g1 = g2 so the pooled observation density is known.
inline JumpConstantEstimate jump_constant(const Scenario& base, std::size_t N, std::size_t reps, unsigned threads = 1) {
  if (base.g1 != base.g2) throw std::invalid_argument("jump_constant: needs g1 = g2");
  const auto model = population_model(base);
  Scenario sc = base;
  sc.m = N / 2;
  sc.n = N - sc.m;
  sc.master_seed = stream_id({base.master_seed, N, 11});
  std::vector<std::size_t> counts(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    const auto data = draw_replication(sc, r);
    counts[r] = jump_count(mle(CurrentStatusSample::pooled(data.first, data.second)), sc.config.a, sc.config.b);
  });
  JumpConstantEstimate e;
  e.N = N;
  e.reps = reps;
  for (auto c : counts) e.mean_jumps += static_cast<double>(c) / static_cast<double>(reps);
  e.intensity_integral = jump_intensity_integral(model.F, model.f, model.g1, sc.config.a, sc.config.b);
  e.constant = e.mean_jumps / (std::cbrt(static_cast<double>(N)) * e.intensity_integral);
  e.chernoff_ratio = kChernoffMoment / e.constant;
  return e;
}

}  // namespace cstest
