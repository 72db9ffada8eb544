#pragma once

#include "ppgm/adjoint.hpp"
#include "ppgm/policy.hpp"
#include "ppgm/problem.hpp"
#include "ppgm/prox.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace ppgm {

/// Uniform node noise eps (1 + |x|) U(-1,1) / sqrt(n) per component, so the
/// injected field error has weighted sup norm at most eps.
struct NoiseSpec {
  double epsilon = 0.0;
  std::uint64_t seed = 1;
};

struct IterationConfig {
  double tau = 0.5;
  int max_iters = 200;
  double stop_tol = 1e-6;
  GridSpec grid;
  NoiseSpec perturbation;
  std::uint64_t seed = 1;
  bool enforce_step_bound = false;
  double tau_max = std::numeric_limits<double>::infinity();
  double divergence_factor = 1e3;
  int cost_paths = 0;  // 0 skips the Monte Carlo cost column
  double cost_dt = 0.01;
  double predicted_c = std::numeric_limits<double>::quiet_NaN();
  bool record_wall_time = false;
  bool final_residual = true;
  LambertOptions lambert;
};

struct IterationRecord {
  int m = 0;
  double delta_sup = 0.0;     // |phi^{m+1} - phi^m|_0
  double lipschitz = 0.0;     // [phi^m]_1
  double center_bound = 0.0;  // sup_t |phi^m_t(0)|
  double residual = 0.0;      // stationarity residual of phi^m
  double cost = std::numeric_limits<double>::quiet_NaN();
  double cost_stderr = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();  // delta(m) / delta(m-1)
  double predicted_c = std::numeric_limits<double>::quiet_NaN();
  double epsilon = 0.0;
  double wall_ms = 0.0;
};

struct IterationReport {
  std::vector<IterationRecord> rows;
  bool converged = false;
  bool diverged = false;
  std::string stop_reason;
  bool tail_contracting = false;  // every ratio of the last 5 iterations < 1
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  PolicyNorms final_norms;

  void write_csv(std::ostream& os, const std::vector<std::string>& header_lines = {}) const;
};

struct PpgmResult {
  PolicyGrid policy;
  IterationReport report;
};

/// phi'(t,x) = prox_{tau l}(phi - tau d_a H^re(t, x, phi, y)) at every node.
PolicyGrid ppgm_step(const ControlProblem& p, const PolicyGrid& policy, const GradientField& field, double tau,
                     const LambertOptions& opts = {});

/// |phi - prox_{tau l}(phi - tau d_a H^re(., ., phi, y))|_0.
double stationarity_residual(const ControlProblem& p, const PolicyGrid& policy, const GradientField& field,
                             double tau, const LambertOptions& opts = {});

/// Adds seeded node noise (see NoiseSpec) to the costate field; returns the
/// realized weighted sup norm of the perturbation through `injected`.
GradientField perturb_field(const GradientField& field, const NoiseSpec& noise, std::uint64_t stream,
                            double* injected = nullptr);

PolicyGrid perturbed_step(const ControlProblem& p, const PolicyGrid& policy, const GradientField& exact_field,
                          double tau, const NoiseSpec& noise, std::uint64_t stream, const LambertOptions& opts = {});

PpgmResult run_ppgm(const ControlProblem& p, const PolicyGrid& phi0, const IterationConfig& cfg);

struct OpenLoopResult {
  std::vector<double> times;
  std::vector<Vec> alpha;
  std::vector<Vec> state;
  std::vector<Vec> costate;
  std::vector<double> delta;  // sup_t |alpha^{m+1} - alpha^m| per iteration
  bool converged = false;
};

/// Proximal gradient on open-loop controls of a deterministic problem, with the
/// state and costate ODEs solved by RK4. alpha0 holds one action per time knot.
OpenLoopResult open_loop_pgm(const ControlProblem& p, const std::vector<Vec>& alpha0, double dt, double tau,
                             int iters, double tol = 0.0, const LambertOptions& opts = {});

/// State and costate of the Pontryagin system for fixed controls on the knots.
void pontryagin_solve(const ControlProblem& p, const std::vector<double>& times, const std::vector<Vec>& alpha,
                      std::vector<Vec>& state, std::vector<Vec>& costate);

/// A base feedback map and its spatial Jacobian.
struct BasePolicy {
  std::function<Vec(double, const Vec&)> value;
  std::function<Mat(double, const Vec&)> jacobian;
};

BasePolicy base_from_grid(const PolicyGrid& policy);

/// Problem in the residual control a~ = a - phi_bar(t,x): b_hat' = b_hat + b_bar phi_bar,
/// f'(t,x,a~) = f(t,x,a~ + phi_bar). l acts on the residual. The constants are
/// copied (or probed) and kappa_bhat is re-probed on `box`.
ControlProblem residual_correction(const ControlProblem& p, const BasePolicy& base, const SampleBox& box,
                                   int probe_samples = 2000);

}  // namespace ppgm
