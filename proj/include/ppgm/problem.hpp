#pragma once

#include "ppgm/prox.hpp"
#include "ppgm/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ppgm {

enum class ConstantsProvenance { analytic, user, empirical_lower_bound };

std::string to_string(ConstantsProvenance p);

/// Growth, Lipschitz and convexity constants of the standing assumptions on
/// the coefficients (f, l, g, b_hat, b_bar, sigma).
struct AssumptionConstants {
  double c_fx = 0, l_fx = 0;  // |d_x f| bound and Lipschitz constant
  double c_fa = 0, l_fa = 0;  // |d_a f(t,0,0)| bound and Lipschitz constant
  double mu = 0;              // strong convexity of f in a
  double nu = 0;              // strong convexity of l
  double c_g = 0, l_g = 0;
  double c_bhat = 0, c_bbar = 0;
  double l_bhat = 0, l_bbar = 0;
  double kappa_bhat = 0;  // one-sided Lipschitz constant of b_hat
  double c_sigma = 0, l_sigma = 0;
  ConstantsProvenance provenance = ConstantsProvenance::analytic;
  std::vector<std::string> notes;

  /// Throws InputError when mu + nu <= 0 or a constant is negative/non-finite.
  void validate() const;
};

/// Finite-horizon control problem with control-affine drift
/// b(t,x,a) = b_hat(t,x) + b_bar(t,x) a and uncontrolled diffusion sigma(t,x).
/// All derivatives are supplied in closed form by the problem author.
struct ControlProblem {
  double horizon = 1.0;
  double discount = 0.0;
  int state_dim = 1;
  int control_dim = 1;
  int noise_dim = 1;
  Vec initial_state;
  /// Optional finite sample representing a distributional initial state.
  std::vector<Vec> initial_samples;

  std::function<Vec(double, const Vec&)> b_hat;
  std::function<Mat(double, const Vec&)> b_bar;
  std::function<Mat(double, const Vec&)> sigma;
  std::function<double(double, const Vec&, const Vec&)> f;
  std::function<double(const Vec&)> g;
  NonsmoothCost ell;

  /// Jacobian of x -> b_hat(t,x) (n x n).
  std::function<Mat(double, const Vec&)> dx_b_hat;
  /// Jacobian of x -> b_bar(t,x) a for fixed a (n x n).
  std::function<Mat(double, const Vec&, const Vec&)> dx_b_bar_a;
  /// Gradient of x -> <sigma(t,x), z> for fixed z in R^{n x d}.
  std::function<Vec(double, const Vec&, const Mat&)> dx_sigma_z;
  std::function<Vec(double, const Vec&, const Vec&)> dx_f;
  std::function<Vec(double, const Vec&, const Vec&)> da_f;
  std::function<Vec(const Vec&)> dx_g;

  /// Optional full drift b(t,x,a), used only to verify control-affinity.
  std::function<Vec(double, const Vec&, const Vec&)> full_drift;

  /// True when sigma vanishes identically (deterministic dynamics).
  bool deterministic = false;
  /// True when sigma does not depend on x, so d_x <sigma, z> = 0.
  bool constant_sigma = false;

  std::optional<AssumptionConstants> constants;
  std::string family = "custom";

  void validate() const;
};

Vec drift(const ControlProblem& p, double t, const Vec& x, const Vec& a);

/// <b(t,x,a), y> + f(t,x,a) - rho <x, y>.
double hamiltonian_re(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y);

/// hamiltonian_re + <sigma(t,x), z>.
double hamiltonian(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y, const Mat& z);

/// b_bar(t,x)^T y + d_a f(t,x,a).
Vec grad_a_hamiltonian_re(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y);

/// d_x H(t,x,a,y,z): the driver of the adjoint equation.
Vec grad_x_hamiltonian(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y, const Mat& z);

/// Rectangle in (x, a)-space; time ranges over [0, T].
struct SampleBox {
  Vec x_lower, x_upper;
  Vec a_lower, a_upper;

  static SampleBox symmetric(int n, int k, double x_radius, double a_radius);
};

/// Empirical lower bounds on the assumption constants from difference
/// quotients on random sample pairs. nu is taken from the nonsmooth cost, mu is
/// the smallest observed monotonicity quotient.
AssumptionConstants probe_assumption_constants(const ControlProblem& p, const SampleBox& box, int n_samples,
                                               std::uint64_t seed = 0x5eed);

/// Max |b(t,x,a) - b_hat - b_bar a| over random samples; requires full_drift.
double affine_drift_defect(const ControlProblem& p, const SampleBox& box, int n_samples, std::uint64_t seed = 7);

// ---------------------------------------------------------------------------
// Built-in coefficient families.

/// b_hat(x) = A x + amplitude * sin(frequency * x) (componentwise), b_bar = B,
/// sigma constant, f = 1/2 x'Qx + 1/2 a'Ra, g = 1/2 x'Hx. amplitude = 0 gives
/// the linear-quadratic family.
struct LinearSineCoefficients {
  Mat a, b, sigma;
  Mat q, r, h;
  double sine_amplitude = 0.0;
  double sine_frequency = 1.0;
};

ControlProblem make_linear_sine_problem(const LinearSineCoefficients& c, double horizon, double discount,
                                        const Vec& initial_state, NonsmoothCost ell);

/// Closed-form constants of the linear/sine family on the state box
/// [-radius, radius]^n (the quadratic costs have unbounded gradients on R^n).
AssumptionConstants linear_sine_constants(const LinearSineCoefficients& c, double radius, const NonsmoothCost& ell);

/// Scalar drift given by a piecewise-linear table (linear extrapolation),
/// constant b_bar and sigma, quadratic costs.
struct DriftTableCoefficients {
  std::vector<double> knots;
  std::vector<double> values;
  double b = 1.0;
  double sigma = 0.0;
  double q = 1.0, r = 1.0, h = 1.0;
};

ControlProblem make_drift_table_problem(const DriftTableCoefficients& c, double horizon, double discount,
                                        double initial_state, NonsmoothCost ell);

}  // namespace ppgm
