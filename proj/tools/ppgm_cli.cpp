#include "ppgm/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

using namespace ppgm;

namespace {

// exit codes
constexpr int kCertified = 0;
constexpr int kUncertified = 1;
constexpr int kInputError = 2;
constexpr int kDiverged = 3;
constexpr int kSolverError = 4;

Experiment load(const std::string& path, const std::string& out_dir) {
  auto cfg = load_config(path);
  apply_env_overrides(cfg);
  if (!out_dir.empty()) cfg.outputs.directory = out_dir;
  return build_experiment(cfg);
}

int cmd_check(const std::string& path) {
  const auto e = load(path, "");
  const auto th = check_experiment(e);
  for (const auto& h : provenance_header(e.config)) std::cout << "# " << h << '\n';
  for (const auto& [k, v] : th.key_values()) std::cout << k << '=' << v << '\n';
  std::cout << "verdict=" << (th.certified() ? "certified" : "uncertified") << '\n';
  return th.certified() ? kCertified : kUncertified;
}

int cmd_run(const std::string& path, const std::string& out_dir) {
  const auto e = load(path, out_dir);
  const auto art = run_experiment(e);
  const auto& r = art.report;
  std::cout << "verdict=" << (art.theory.certified() ? "certified" : "uncertified") << '\n'
            << "iterations=" << r.rows.size() << '\n'
            << "stop_reason=" << r.stop_reason << '\n'
            << "final_residual=" << r.final_residual << '\n';
  for (const auto& f : art.files) std::cout << "wrote " << f << '\n';
  return r.diverged ? kDiverged : 0;
}

int cmd_selftest(int lambert_iters, double lambert_tol) {
  SelftestOptions o;
  if (lambert_iters >= 0) o.lambert.max_iterations = lambert_iters;
  if (lambert_tol > 0) o.lambert.rel_tol = lambert_tol;
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_selftest(o);
  bool ok = true;
  for (const auto& s : res) {
    std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << ": " << s.detail << '\n';
    ok = ok && s.passed;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (ok ? "selftest passed" : "selftest FAILED") << " (" << res.size() << " suites, " << secs << " s)\n";
  return ok ? 0 : 1;
}

int cmd_prox(const CostSpec& spec, double tau, const std::vector<double>& a) {
  const int k = static_cast<int>(a.size());
  if (k < 1 || k > kMaxDim) throw InputError("prox: --a needs 1..3 values");
  const auto ell = build_cost(spec, k);
  Vec av(k);
  for (int i = 0; i < k; ++i) av(i) = a[static_cast<size_t>(i)];
  const Vec p = prox(ell, tau, av);
  std::printf("cost=%s tau=%.17g\n", ell.name().c_str(), tau);
  for (int i = 0; i < k; ++i) std::printf("p[%d]=%.17g\n", i, p(i));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy proximal gradient experiments"};
  app.require_subcommand(1);

  std::string config, out_dir;
  auto* check = app.add_subcommand("check", "evaluate the convergence certificate; exit 0 certified, 1 not, 2 bad input");
  check->add_option("config", config, "experiment config (JSON)")->required();

  auto* run = app.add_subcommand("run", "run the iteration and write artifacts");
  run->add_option("config", config, "experiment config (JSON)")->required();
  run->add_option("-o,--output-dir", out_dir, "override outputs.directory");

  int lambert_iters = -1;
  double lambert_tol = 0.0;
  auto* self = app.add_subcommand("selftest", "oracle self checks");
  self->add_option("--lambert-max-iterations", lambert_iters, "test fixture: Lambert W iteration cap");
  self->add_option("--lambert-tol", lambert_tol, "test fixture: Lambert W relative tolerance");

  CostSpec cost;
  double tau = 1.0;
  std::vector<double> a;
  auto* px = app.add_subcommand("prox", "evaluate prox_{tau l}(a) once");
  px->add_option("--cost", cost.type, "zero|box|l1|entropy|ball")->required();
  px->add_option("--tau", tau, "step size")->required();
  px->add_option("--a", a, "point, comma separated")->delimiter(',')->required();
  px->add_option("--lower", cost.lower, "box lower bounds")->delimiter(',');
  px->add_option("--upper", cost.upper, "box upper bounds")->delimiter(',');
  px->add_option("--gamma", cost.gamma, "l1 weights")->delimiter(',');
  px->add_option("--reference", cost.reference, "entropy reference measure")->delimiter(',');
  px->add_option("--radius", cost.radius, "ball radius");
  px->add_option("--ridge", cost.ridge, "ridge weight");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInputError;
  }

  try {
    if (*check) return cmd_check(config);
    if (*run) return cmd_run(config, out_dir);
    if (*self) return cmd_selftest(lambert_iters, lambert_tol);
    if (*px) return cmd_prox(cost, tau, a);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const DimensionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const InfeasibleError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolverError;
  }
  return kInputError;
}
