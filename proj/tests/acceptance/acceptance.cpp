// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on stderr.
// Usage: acceptance [criterion ids...]   (default: all)

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cstest/bootstrap.hpp"
#include "cstest/parallel.hpp"
#include "cstest/simulation.hpp"

using namespace cstest;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Verdict()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) { return format_number(v, digits); }

unsigned threads() { return default_threads(); }

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

std::vector<Scenario> load(const std::string& file, std::size_t R, std::size_t B) {
  Scenario def;
  def.R = R;
  def.plan.B = B;
  std::ifstream in(fs::path(CSTEST_SCENARIO_DIR) / file);
  if (!in) throw std::runtime_error("cannot open scenario file " + file);
  auto list = parse_scenarios(in, def);
  for (auto& sc : list) {
    sc.R = R;
    sc.plan.B = B;
  }
  return list;
}

RejectionTable simulate(const Scenario& sc) {
  std::cerr << "  scenario " << sc.name << " (R=" << sc.R << ", B=" << sc.plan.B << ")\n";
  const auto t0 = std::chrono::steady_clock::now();
  auto table = run_scenario(sc, threads());
  std::cerr << "    ";
  for (const auto& r : table.rows) std::cerr << r.test << "=" << fmt(r.reject_rate, 3) << " ";
  std::cerr << "(" << fmt(seconds_since(t0), 3) << " s)\n";
  return table;
}

const Scenario& by_name(const std::vector<Scenario>& list, const std::string& name) {
  for (const auto& sc : list)
    if (sc.name == name) return sc;
  throw std::runtime_error("no scenario " + name);
}

// --- 1

Verdict isotonic_equivalence() {
  std::mt19937_64 rng(1);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    const bool ties = rep % 4 == 0;
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::exponential_distribution<double> x(0.8);
    std::vector<Observation> obs(n);
    for (auto& o : obs) {
      o.t = ties ? std::round(u(rng) * 20.0) / 20.0 : u(rng);
      o.delta = x(rng) <= o.t ? 1 : 0;
    }
    const CurrentStatusSample s(obs);
    const auto fit = mle_fit(s);
    std::vector<double> w, y;
    const auto sorted = s.observations();
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      double events = 0.0;
      while (j < sorted.size() && sorted[j].t == sorted[i].t) events += sorted[j++].delta;
      w.push_back(static_cast<double>(j - i));
      y.push_back(events / static_cast<double>(j - i));
      i = j;
    }
    const auto ref = pava_oracle(w, y);
    if (ref.size() != fit.values.size()) return {false, "size mismatch in sample " + std::to_string(rep)};
    for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::abs(ref[k] - fit.values[k]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5.0, "max |gcm - pava| = " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// --- 2

Verdict ratio_representation() {
  Scenario sc;
  sc.alpha1 = sc.alpha2 = 1.0;
  sc.m = sc.n = 1000;
  sc.master_seed = 2002;
  TestConfig cfg;
  cfg.bandwidth_exponent = 0.25;
  const std::size_t N = sc.m + sc.n;
  const double lo = 0.3, hi = 1.7, tol = 1e-6;
  std::size_t monotone = 0, points = 0, violations = 0, offending = 0;
  for (std::size_t r = 0; r < 200; ++r) {
    const auto d = draw_replication(sc, r);
    const auto fit = fit_two_sample(d.first, d.second, cfg.kernel(N), cfg.grid(N));
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < fit.grid.count; ++k) {
      const double t = fit.grid.at(k);
      if (t >= lo - 1e-12 && t <= hi + 1e-12) idx.push_back(k);
    }
    std::vector<double> ratio;
    for (auto k : idx) ratio.push_back(fit.h[k] / std::max(fit.g[k], kDensityFloor));
    if (!std::is_sorted(ratio.begin(), ratio.end())) continue;
    ++monotone;
    points += idx.size();
    std::size_t bad = 0;
    double worst = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double e = std::abs(fit.F.F[idx[j]] - ratio[j]);
      worst = std::max(worst, e);
      bad += e > tol ? 1 : 0;
    }
    if (bad) {
      ++offending;
      violations += bad;
      std::cerr << "    sample " << r << ": " << bad << " of " << idx.size() << " window points differ, max "
                << fmt(worst) << '\n';
    }
  }
  if (monotone == 0) return {false, "no sample with a nondecreasing ratio on the window"};
  const double frac = static_cast<double>(violations) / static_cast<double>(points);
  return {frac < 0.05, std::to_string(monotone) + " of 200 samples monotone on [0.3,1.7]; " +
                           std::to_string(offending) + " with mismatches; violation fraction " + fmt(frac, 3)};
}

// --- 3

// Nested composite Simpson for 2 int (int K(u+v) K(u) du)^2 dv.
double sigma_k2_simpson(int n) {
  auto K = [](double u) { return kernel_eval(u); };
  auto inner = [&](double v) {
    const double lo = std::max(-1.0, -1.0 - v), hi = std::min(1.0, 1.0 - v);
    if (!(hi > lo)) return 0.0;
    const double h = (hi - lo) / n;
    double s = K(lo + v) * K(lo) + K(hi + v) * K(hi);
    for (int i = 1; i < n; ++i) {
      const double u = lo + i * h;
      s += (i % 2 ? 4.0 : 2.0) * K(u + v) * K(u);
    }
    return s * h / 3.0;
  };
  const double h = 2.0 / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double v = i * h;
    const double c = inner(v);
    s += (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0)) * c * c;
  }
  return 2.0 * 2.0 * s * h / 3.0;  // integrand is even in v
}

Verdict kernel_constants() {
  const auto m = kernel_moments({});
  constexpr double fixture = 1.17580276;  // high-precision quadrature, 9 significant digits
  const double simpson = sigma_k2_simpson(800);
  const bool ok = std::abs(m.int_K2 - 350.0 / 429.0) <= 1e-9 && std::abs(m.int_u2K - 1.0 / 9.0) <= 1e-9 &&
                  std::abs(m.sigma_K2 - fixture) <= 5e-7 && std::abs(simpson - fixture) <= 5e-7;
  return {ok, "int_K2 = " + format_number(m.int_K2, 12) + ", int_u2K = " + format_number(m.int_u2K, 12) +
                  ", sigma_K2 = " + format_number(m.sigma_K2, 9) + " (Simpson " + format_number(simpson, 9) + ")"};
}

// --- 4, 5, 6

Verdict table1_levels() {
  bool ok = true;
  std::ostringstream os;
  for (const auto& sc : load("table1.scenarios", 500, 500)) {
    const auto t = simulate(sc);
    ok = ok && within(t.rate("SLR"), 0.02, 0.08) && within(t.rate("LR"), 0.02, 0.08) &&
         within(t.rate("U_N"), 0.025, 0.10) && within(t.rate("W_N"), 0.025, 0.10);
    os << sc.name << ": " << fmt(t.rate("SLR"), 3) << '/' << fmt(t.rate("LR"), 3) << '/' << fmt(t.rate("U_N"), 3)
       << '/' << fmt(t.rate("W_N"), 3) << "; ";
  }
  return {ok, "SLR/LR/U_N/W_N " + os.str()};
}

Verdict table2_pathology() {
  bool ok = true;
  std::ostringstream os;
  for (const auto& sc : load("table2.scenarios", 500, 500)) {
    const auto t = simulate(sc);
    ok = ok && within(t.rate("SLR"), 0.02, 0.08) && within(t.rate("LR"), 0.02, 0.08) && t.rate("W_N") >= 0.09;
    if (sc.lambda == 1.6 && sc.alpha1 == 0.5) ok = ok && t.rate("U_N") >= 0.20;
    if (sc.lambda == 1.6 && sc.alpha1 == 2.0) ok = ok && t.rate("U_N") >= 0.80;
    os << sc.name << ": " << fmt(t.rate("SLR"), 3) << '/' << fmt(t.rate("LR"), 3) << '/' << fmt(t.rate("U_N"), 3)
       << '/' << fmt(t.rate("W_N"), 3) << "; ";
  }
  return {ok, "SLR/LR/U_N/W_N " + os.str()};
}

Verdict table5_powers() {
  auto sc = by_name(load("table5.scenarios", 500, 500), "lambda1.6_alpha0.5_vs_2.0");
  sc.tests = kTestSLR | kTestLR | kTestUN;
  const auto t = simulate(sc);
  const double slr = t.rate("SLR"), lr = t.rate("LR"), un = t.rate("U_N");
  const bool ok = std::abs(slr - 0.675) <= 0.06 && std::abs(lr - 0.533) <= 0.06 && un <= 0.10;
  return {ok, "SLR = " + fmt(slr, 3) + " (0.675 +- 0.06), LR = " + fmt(lr, 3) + " (0.533 +- 0.06), U_N = " +
                  fmt(un, 3) + " (<= 0.10)"};
}

// --- 7

Verdict crossing_moments() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto mean = crossing_functionals({0.7, 0.5, 1.0}, {0.7, 1.8153, 1.0}, 0.1, 1.9);
  const auto sq = crossing_functionals({0.8, 0.2, 1.0}, {0.8, 0.767, 1.0}, 0.1, 1.9);
  const double secs = seconds_since(t0);
  const bool a = std::abs(mean.int_diff - (-1.87e-6)) <= 5e-7;
  const bool b = std::abs(sq.int_sq_diff - 2.6e-6) <= 5e-7;
  return {a && b && secs < 1.0, std::string("int_diff = ") + format_number(mean.int_diff, 6) +
                                    " (target -1.87e-06: " + (a ? "ok" : "off") + "), int_sq_diff = " +
                                    format_number(sq.int_sq_diff, 6) + " (target 2.6e-06: " + (b ? "ok" : "off") +
                                    "), " + fmt(secs, 2) + " s"};
}

// --- 8

Verdict crossing_powers() {
  const auto list = load("crossing.scenarios", 300, 500);
  auto first = by_name(list, "crossing_mean");
  auto second = by_name(list, "crossing_square");
  first.tests = kTestSLR | kTestUN;
  second.tests = kTestSLR | kTestWN;
  const auto t1 = simulate(first), t2 = simulate(second);
  const bool ok = t1.rate("SLR") >= 0.95 && t1.rate("U_N") <= 0.10 && t2.rate("SLR") >= 0.60 && t2.rate("W_N") <= 0.10;
  return {ok, "pair 1: SLR = " + fmt(t1.rate("SLR"), 3) + ", U_N = " + fmt(t1.rate("U_N"), 3) +
                  "; pair 2: SLR = " + fmt(t2.rate("SLR"), 3) + ", W_N = " + fmt(t2.rate("W_N"), 3)};
}

// --- 9

Verdict pivot_behaviour() {
  Scenario sc;
  sc.alpha1 = sc.alpha2 = 1.0;
  sc.m = sc.n = 2000;
  sc.master_seed = 9009;
  TestConfig cfg;
  cfg.bandwidth_exponent = 0.25;
  const std::size_t N = sc.m + sc.n, R = 300;
  const auto moments = kernel_moments(cfg.kernel(N));
  std::vector<double> piv(R);
  parallel_for(R, threads(), [&](std::size_t r) {
    const auto d = draw_replication(sc, r);
    const auto fit = fit_two_sample(d.first, d.second, cfg.kernel(N), cfg.grid(N));
    piv[r] = pivot_v_n(v_n_statistic(fit, cfg), N, cfg, moments);
  });
  double mean = 0.0, var = 0.0;
  for (double p : piv) mean += p / R;
  for (double p : piv) var += (p - mean) * (p - mean) / (R - 1);

  Scenario other = sc;
  other.g2 = ObservationDensity::poly_decreasing;
  const double bw = cfg.bandwidth(N);
  const double d_same = bias_term_dn(population_model(sc), 0.5, bw, moments, cfg.a, cfg.b);
  const double d_diff = bias_term_dn(population_model(other), 0.5, bw, moments, cfg.a, cfg.b);

  const bool a = std::abs(mean) <= 0.5;
  const bool b = var >= moments.sigma_K2 / 2.0 && var <= 2.0 * moments.sigma_K2;
  const bool c = d_same == 0.0 && d_diff > 0.0;
  return {a && b && c, "mean = " + fmt(mean) + ", variance = " + fmt(var) + " (sigma_K2 = " + fmt(moments.sigma_K2) +
                           "), D_N = " + fmt(d_same) + " (g1 = g2), " + fmt(d_diff) + " (uniform vs poly)"};
}

// --- 10

Verdict decomposition_residuals() {
  const auto base = by_name(load("diagnostics.scenarios", 1, 1), "exponential_uniform");
  const auto rows = decomposition_sweep(base, {200, 800, 3200}, 100, threads());
  bool ok = rows.size() == 3;
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) ok = ok && rows[i].median_scaled_residual < rows[i - 1].median_scaled_residual;
    os << (i ? ", " : "") << "N=" << rows[i].N << ": " << fmt(rows[i].median_scaled_residual);
  }
  return {ok, "median |residual| N sqrt(b_N): " + os.str()};
}

// --- 11

int shell(const std::string& cmd) {
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const auto dir = fs::temp_directory_path() / "cstest_acceptance";
  fs::create_directories(dir);
  const auto sc = dir / "determinism.scenarios";
  std::ofstream(sc) << "[scenario null]\nalpha = 1\nR = 24\nB = 60\n\n"
                       "[scenario shape]\nalpha2 = 2\ng2 = poly_decreasing\nR = 24\nB = 60\n";
  std::string reference;
  for (int t : {1, 2, 4}) {
    const auto out = dir / ("determinism_" + std::to_string(t) + ".csv");
    const std::string cmd = std::string(CSTEST_CLI_PATH) + " simulate --scenarios " + sc.string() +
                            " --seed 77 --threads " + std::to_string(t) + " --out " + out.string() + " 2>/dev/null";
    if (shell(cmd) != 0) return {false, "simulate failed with --threads " + std::to_string(t)};
    const auto text = slurp(out);
    if (t == 1) reference = text;
    else if (text != reference) return {false, "CSV differs between --threads 1 and --threads " + std::to_string(t)};
  }
  const auto lines = std::count(reference.begin(), reference.end(), '\n');
  return {lines == 9, "byte-identical CSV across --threads 1, 2, 4 (" + std::to_string(lines) + " lines)"};
}

// --- 12

Verdict jump_constant_check() {
  const auto base = by_name(load("diagnostics.scenarios", 1, 1), "exponential_uniform");
  const auto e = jump_constant(base, 10000, 200, threads());
  return {within(e.constant, 1.8, 2.4), "c = " + fmt(e.constant) + " (mean jumps " + fmt(e.mean_jumps) +
                                            " over " + std::to_string(e.reps) + " samples), 4EZ^2 / c = " +
                                            fmt(e.chernoff_ratio)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "isotonic oracle equivalence", isotonic_equivalence},
      {2, "ratio representation of the smoothed estimator", ratio_representation},
      {3, "kernel constants", kernel_constants},
      {4, "levels, uniform observation densities, m = n = 50", table1_levels},
      {5, "levels, unequal observation densities, m = n = 50", table2_pathology},
      {6, "powers under different shapes, m = n = 50", table5_powers},
      {7, "crossing moment functionals", crossing_moments},
      {8, "powers under crossing alternatives, m = n = 250", crossing_powers},
      {9, "pivot mean, variance and bias term", pivot_behaviour},
      {10, "expansion residuals shrink with N", decomposition_residuals},
      {11, "determinism across thread counts", determinism},
      {12, "MLE jump-count constant", jump_constant_check},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    std::cerr << "criterion " << c.id << ": " << c.name << '\n';
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << v.detail << " ("
              << fmt(seconds_since(t0), 3) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
