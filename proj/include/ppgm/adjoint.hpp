#pragma once

#include "ppgm/policy.hpp"
#include "ppgm/problem.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ppgm {

/// Discretization of the policy box and of the backward sweep.
struct GridSpec {
  double radius = 2.0;  // policy box [-R, R]^n
  double dx = 0.01;
  double dt = 2.5e-4;
  double margin = -1.0;  // extra PDE layer beyond the box; < 0 selects min(R, max|b| T)
  bool auto_substep = true;
  bool store_z = false;

  SpaceGrid space(int n) const { return SpaceGrid::cube(n, radius, dx); }
  std::vector<double> times(double horizon) const { return uniform_times(horizon, dt); }
};

/// Costate field y_t(x) on the policy grid, plus the optional z proxy
/// (d_x u) sigma, flattened row-major as n x d.
struct GradientField {
  GridFunction y;
  std::optional<GridFunction> z;
  int substeps = 1;      // max explicit substeps per time step
  double margin = 0.0;   // width of the extra layer actually used

  Vec eval(double t, const Vec& x) const { return y.eval(t, x); }
};

/// Backward explicit upwind sweep of the linear parabolic system
/// d_t u + b(x, phi(x)) . d_x u + 1/2 tr(sigma sigma^T d_xx u) + d_x H(x, phi(x), u, (d_x u) sigma) = 0,
/// u_T = d_x g, on the policy's time knots and an enlarged copy of its box.
GradientField solve_gradient_field(const ControlProblem& p, const PolicyGrid& policy, const GridSpec& spec);

/// Largest explicit-scheme rate sum_j |b_j|/h_j + sum_j (sigma sigma^T)_jj / h_j^2 + |d_x b| + rho
/// over the nodes of the enlarged box at time knot ti.
double cfl_rate(const ControlProblem& p, const PolicyGrid& policy, const SpaceGrid& grid, std::size_t ti);

struct StateEnsemble {
  std::vector<double> times;
  int state_dim = 1;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> states;  // [path][time][component]

  Vec state(std::size_t path, std::size_t ti) const;
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

/// Euler-Maruyama under the feedback policy; path i draws from its own seed
/// stream, so results do not depend on the thread count.
StateEnsemble simulate_state(const ControlProblem& p, const PolicyGrid& policy, std::size_t n_paths, double dt,
                             std::uint64_t seed);

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Left-endpoint quadrature of int e^{-rho t}(f + l) dt + e^{-rho T} g(X_T), averaged over paths.
CostEstimate evaluate_cost(const ControlProblem& p, const PolicyGrid& policy, const StateEnsemble& ensemble);

/// Deterministic Euler trajectory from the initial state under a frozen
/// open-loop action sequence (one action per step).
std::vector<Vec> open_loop_trajectory(const ControlProblem& p, const std::vector<Vec>& actions, double dt);
double open_loop_cost(const ControlProblem& p, const std::vector<Vec>& actions, double dt);

/// Per-time summary of an ensemble: mean and variance of each component.
struct EnsembleSummary {
  std::vector<double> times;
  std::vector<Vec> mean;
  std::vector<Vec> variance;
};
EnsembleSummary summarize(const StateEnsemble& e);

/// 64-bit seed mixer.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ppgm
