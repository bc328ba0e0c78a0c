// cstest: two-sample tests for current status data.
//
//   cstest test --input data.csv            run SLR / LR / U_N / W_N on user data
//   cstest simulate --scenarios f.scenarios rejection-rate table as CSV
//   cstest diagnose --scenarios f.scenarios expansion residuals and MLE jump counts
//   cstest tables --dir data/scenarios      regenerate every bundled table

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cstest/bootstrap.hpp"
#include "cstest/simulation.hpp"

namespace fs = std::filesystem;
using namespace cstest;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240601;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Reads "sample,t,delta" rows (columns located by header name).
std::pair<CurrentStatusSample, CurrentStatusSample> read_samples(std::istream& in, double M) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw InputError("input is empty: expected header sample,t,delta");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : {"sample", "t", "delta"}) {
    if (!col.count(name)) throw InputError(std::string("missing column '") + name + "' in header (line " +
                                           std::to_string(lineno) + ")");
  }
  const std::size_t cs = col["sample"], ct = col["t"], cd = col["delta"];
  std::vector<Observation> a, b;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    auto where = [&](const std::string& what) {
      return InputError("line " + std::to_string(lineno) + ": " + what);
    };
    if (f.size() != header.size()) throw where("expected " + std::to_string(header.size()) + " fields");
    double t = 0.0;
    try {
      std::size_t pos = 0;
      t = std::stod(f[ct], &pos);
      if (pos != f[ct].size()) throw std::invalid_argument("t");
    } catch (const std::exception&) {
      throw where("column 't' is not a number: '" + f[ct] + "'");
    }
    if (!(t >= 0.0 && t <= M)) throw where("t = " + f[ct] + " outside [0, " + format_number(M) + "]");
    if (f[cd] != "0" && f[cd] != "1") throw where("column 'delta' must be 0 or 1, got '" + f[cd] + "'");
    const int d = f[cd] == "1" ? 1 : 0;
    if (f[cs] == "1") a.push_back({t, d});
    else if (f[cs] == "2") b.push_back({t, d});
    else throw where("column 'sample' must be 1 or 2, got '" + f[cs] + "'");
  }
  if (a.empty()) throw InputError("sample 1 has no observations");
  if (b.empty()) throw InputError("sample 2 has no observations");
  return {CurrentStatusSample(std::move(a), SampleLabel::first), CurrentStatusSample(std::move(b), SampleLabel::second)};
}

void write_curves(const std::string& path, const CurrentStatusSample& s1, const CurrentStatusSample& s2,
                  const TestConfig& config) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  const std::size_t N = s1.size() + s2.size();
  const auto fit = fit_two_sample(s1, s2, config.kernel(N), config.grid(N));
  const auto pooled = CurrentStatusSample::pooled(s1, s2);
  const auto m1 = mle(s1), m2 = mle(s2), m = mle(pooled);
  os << "t,F_hat_1,F_tilde_1,F_hat_2,F_tilde_2,F_hat,F_tilde\n";
  const auto [k0, k1] = window_indices(fit.grid, config.a, config.b);
  char buf[256];
  for (std::size_t k = k0; k <= k1; ++k) {
    const double t = fit.grid.at(k);
    std::snprintf(buf, sizeof buf, "%.6f,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f\n", t, m1(t), fit.F1.F[k], m2(t), fit.F2.F[k],
                  m(t), fit.F.F[k]);
    os << buf;
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

struct CommonOptions {
  std::uint64_t seed = kDefaultSeed;
  std::string preset = "desk";
  std::string out;
  unsigned threads = 0;
  std::size_t replications = 0;
  std::size_t bootstrap = 0;
};

Scenario preset_defaults(const CommonOptions& o) {
  Scenario sc;
  sc.master_seed = o.seed;
  if (o.preset == "full") {
    sc.R = 1000;
    sc.plan.B = 1000;
  } else {
    sc.R = 500;
    sc.plan.B = 500;
  }
  return sc;
}

std::vector<Scenario> load_scenarios(const std::string& path, const CommonOptions& o) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file " + path);
  auto list = parse_scenarios(in, preset_defaults(o));
  for (auto& sc : list) {
    if (o.replications) sc.R = o.replications;
    if (o.bootstrap) sc.plan.B = o.bootstrap;
    sc.validate();
  }
  return list;
}

unsigned threads_of(const CommonOptions& o) { return o.threads ? o.threads : default_threads(); }

void simulate_to(std::ostream& os, const std::vector<Scenario>& list, unsigned threads) {
  write_csv_header(os);
  for (const auto& sc : list) {
    std::cerr << "scenario " << sc.name << ": R=" << sc.R << " B=" << sc.plan.B << '\n';
    const std::size_t step = std::max<std::size_t>(1, sc.R / 10);
    std::mutex mu;
    const auto table = run_scenario(sc, threads, [&](std::size_t done) {
      if (done % step == 0 || done == sc.R) {
        std::lock_guard lock(mu);
        std::cerr << "  " << done << "/" << sc.R << '\n';
      }
    });
    write_csv(os, table, false);
  }
}

template <class Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  fn(os);
}

void add_common(CLI::App* cmd, CommonOptions& o, bool simulation) {
  cmd->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  cmd->add_option("--out", o.out, "Output path (default: standard output)");
  cmd->add_option("--threads", o.threads, "Worker threads (default: CSTEST_THREADS or hardware)");
  if (simulation) {
    cmd->add_option("--preset", o.preset, "desk (R = B = 500) or full (R = B = 1000)")
        ->check(CLI::IsMember({"desk", "full"}))
        ->capture_default_str();
    cmd->add_option("--replications", o.replications, "Override R for every scenario");
  }
  cmd->add_option("--bootstrap", o.bootstrap, "Override the number of bootstrap resamples B");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric two-sample tests for current status data"};
  app.require_subcommand(1);

  CommonOptions test_opts, sim_opts, diag_opts, tab_opts;

  auto* test = app.add_subcommand("test", "Test H0: F1 = F2 on a CSV with columns sample,t,delta");
  std::string input, curves, test_list = "SLR,LR,U_N,W_N";
  double level = 0.05;
  bool exit_on_reject = false;
  TestConfig config;
  test->add_option("--input", input, "CSV file (use - for standard input)")->required();
  test->add_option("--tests", test_list, "Comma separated subset of SLR,LR,U_N,W_N")->capture_default_str();
  test->add_option("--level", level, "Test level")->capture_default_str();
  test->add_option("--a", config.a, "Window start")->capture_default_str();
  test->add_option("--b", config.b, "Window end")->capture_default_str();
  test->add_option("--M", config.M, "Observation range [0, M]")->capture_default_str();
  test->add_option("--curves", curves, "Write t, MLE and MSLE curves per sample to this CSV");
  test->add_flag("--exit-on-reject", exit_on_reject, "Exit with status 2 when any selected test rejects");
  add_common(test, test_opts, false);

  auto* sim = app.add_subcommand("simulate", "Rejection rates for every scenario in a scenario file");
  std::string scenario_path;
  sim->add_option("--scenarios", scenario_path, "Scenario file")->required();
  add_common(sim, sim_opts, true);

  auto* diag = app.add_subcommand("diagnose", "Expansion residuals and MLE jump-count constant for an H0 scenario");
  std::string diag_path, diag_name;
  std::vector<std::size_t> sizes{200, 800, 3200};
  std::size_t diag_reps = 100, jump_n = 10000, jump_reps = 100;
  diag->add_option("--scenarios", diag_path, "Scenario file")->required();
  diag->add_option("--name", diag_name, "Scenario to use (default: first in file)");
  diag->add_option("--sizes", sizes, "Total sample sizes for the residual sweep")->capture_default_str();
  diag->add_option("--reps", diag_reps, "Replications per size")->capture_default_str();
  diag->add_option("--jump-n", jump_n, "Total sample size for the jump-count estimate")->capture_default_str();
  diag->add_option("--jump-reps", jump_reps, "Replications for the jump-count estimate")->capture_default_str();
  add_common(diag, diag_opts, false);

  auto* tables = app.add_subcommand("tables", "Run every *.scenarios file in a directory, one CSV per file");
  std::string dir = "data/scenarios", out_dir = "tables";
  tables->add_option("--dir", dir, "Directory of scenario files")->capture_default_str();
  tables->add_option("--out-dir", out_dir, "Directory for the CSV files")->capture_default_str();
  add_common(tables, tab_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*test) {
      config.validate();
      const unsigned mask = parse_test_list(test_list);
      std::pair<CurrentStatusSample, CurrentStatusSample> samples;
      if (input == "-") {
        samples = read_samples(std::cin, config.M);
      } else {
        std::ifstream in(input);
        if (!in) throw InputError("cannot open " + input);
        samples = read_samples(in, config.M);
      }
      const auto& [s1, s2] = samples;
      bool any_reject = false;
      std::ostringstream report;
      report << "m=" << s1.size() << " n=" << s2.size() << " bandwidth=" << fmt(config.bandwidth(s1.size() + s2.size()))
             << '\n';
      if (mask & (kTestSLR | kTestLR)) {
        BootstrapPlan plan;
        plan.level = level;
        plan.seed = test_opts.seed;
        if (test_opts.bootstrap) plan.B = test_opts.bootstrap;
        plan.validate();
        const auto run = bootstrap_both(s1, s2, plan, config, threads_of(test_opts), (mask & kTestLR) != 0);
        auto line = [&](const char* name, double stat, const BootstrapDistribution& d) {
          const bool reject = stat > d.critical_value;
          any_reject = any_reject || reject;
          report << name << " statistic=" << fmt(stat) << " critical_value=" << fmt(d.critical_value)
                 << " p_value=" << fmt(d.p_value(stat)) << " B=" << d.values.size()
                 << " decision=" << (reject ? "reject" : "fail to reject") << '\n';
        };
        if (mask & kTestSLR) line("SLR", run.slr_observed, run.slr);
        if (mask & kTestLR) line("LR", run.lr_observed, run.lr);
      }
      auto normal_line = [&](const char* name, auto&& compute) {
        try {
          const double z = compute();
          const bool reject = std::abs(z) > kNormalCritical;
          any_reject = any_reject || reject;
          report << name << " statistic=" << fmt(z) << " critical_value=" << fmt(kNormalCritical)
                 << " decision=" << (reject ? "reject" : "fail to reject") << '\n';
        } catch (const std::domain_error& e) {
          report << name << " undefined (" << e.what() << ")\n";
        }
      };
      if (mask & kTestUN) normal_line("U_N", [&] { return u_n_statistic(s1, s2); });
      if (mask & kTestWN) normal_line("W_N", [&] { return w_n_statistic(s1, s2, config); });
      with_output(test_opts.out, [&](std::ostream& os) { os << report.str(); });
      if (!curves.empty()) write_curves(curves, s1, s2, config);
      return exit_on_reject && any_reject ? 2 : 0;
    }

    if (*sim) {
      const auto list = load_scenarios(scenario_path, sim_opts);
      with_output(sim_opts.out, [&](std::ostream& os) { simulate_to(os, list, threads_of(sim_opts)); });
      return 0;
    }

    if (*diag) {
      const auto list = load_scenarios(diag_path, diag_opts);
      if (list.empty()) throw InputError("no scenario in " + diag_path);
      const Scenario* sc = &list.front();
      if (!diag_name.empty()) {
        sc = nullptr;
        for (const auto& s : list)
          if (s.name == diag_name) sc = &s;
        if (sc == nullptr) throw InputError("no scenario named " + diag_name);
      }
      if (!sc->null_holds()) throw InputError("scenario " + sc->name + " is not an H0 scenario");
      const unsigned threads = threads_of(diag_opts);
      const auto sweep = decomposition_sweep(*sc, sizes, diag_reps, threads);
      with_output(diag_opts.out, [&](std::ostream& os) {
        os << "kind,N,reps,bandwidth,D_N,median_scaled_residual,mean_A,mean_B,mean_C,mean_jumps,constant,"
              "chernoff_ratio\n";
        for (const auto& s : sweep) {
          os << "decomposition," << s.N << ',' << diag_reps << ',' << fmt(s.bandwidth) << ',' << fmt(s.D_N) << ','
             << fmt(s.median_scaled_residual) << ',' << fmt(s.mean_A) << ',' << fmt(s.mean_B) << ','
             << fmt(s.mean_C) << ",,,\n";
        }
        if (sc->g1 == sc->g2) {
          const auto j = jump_constant(*sc, jump_n, jump_reps, threads);
          os << "jump_count," << j.N << ',' << j.reps << ",,,,,,," << fmt(j.mean_jumps) << ',' << fmt(j.constant)
             << ',' << fmt(j.chernoff_ratio) << '\n';
        }
      });
      return 0;
    }

    if (*tables) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".scenarios") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      fs::create_directories(out_dir);
      for (const auto& f : files) {
        const auto list = load_scenarios(f.string(), tab_opts);
        const auto out = fs::path(out_dir) / (f.stem().string() + ".csv");
        std::cerr << f.string() << " -> " << out.string() << '\n';
        std::ofstream os(out);
        if (!os) throw std::runtime_error("cannot write " + out.string());
        simulate_to(os, list, threads_of(tab_opts));
      }
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
