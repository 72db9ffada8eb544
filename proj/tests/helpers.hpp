#pragma once

#include "ppgm/adjoint.hpp"
#include "ppgm/baselines.hpp"
#include "ppgm/policy.hpp"
#include "ppgm/ppgm.hpp"
#include "ppgm/problem.hpp"
#include "ppgm/theory.hpp"

#include <cmath>
#include <random>

namespace testing {

using namespace ppgm;

// scalar LQ: dx = (a x + b u) dt + sigma dW, f = (q x^2 + r u^2)/2, g = h x^2/2
inline LQSpec scalar_lq(double a = -1, double b = 1, double sigma = 0.1, double T = 1, double q = 1, double r = 1,
                        double h = 1) {
  LQSpec s;
  s.a = scalar_mat(a);
  s.b = scalar_mat(b);
  s.q = scalar_mat(q);
  s.r = scalar_mat(r);
  s.h = scalar_mat(h);
  s.sigma = scalar_mat(sigma);
  s.horizon = T;
  return s;
}

inline ControlProblem lq_problem(const LQSpec& s, NonsmoothCost ell = NonsmoothCost::zero(), double rho = 0.0,
                                 double x0 = 1.0) {
  return make_linear_sine_problem(s.coefficients(), s.horizon, rho, make_vec({x0}), std::move(ell));
}

// Scalar problem assembled from lambdas; every derivative written by hand.
struct ScalarSpec {
  std::function<double(double)> bhat = [](double) { return 0.0; };
  std::function<double(double)> dbhat = [](double) { return 0.0; };
  double bbar = 1.0;
  double sigma = 0.0;
  std::function<double(double, double)> f = [](double, double) { return 0.0; };
  std::function<double(double, double)> fx = [](double, double) { return 0.0; };
  std::function<double(double, double)> fa = [](double, double) { return 0.0; };
  std::function<double(double)> g = [](double) { return 0.0; };
  std::function<double(double)> gx = [](double) { return 0.0; };
  double T = 1.0;
  double rho = 0.0;
  double x0 = 1.0;
};

inline ControlProblem scalar_problem(const ScalarSpec& s, NonsmoothCost ell = NonsmoothCost::zero()) {
  ControlProblem p;
  p.horizon = s.T;
  p.discount = s.rho;
  p.initial_state = make_vec({s.x0});
  p.b_hat = [s](double, const Vec& x) { return make_vec({s.bhat(x(0))}); };
  p.dx_b_hat = [s](double, const Vec& x) { return scalar_mat(s.dbhat(x(0))); };
  p.b_bar = [s](double, const Vec&) { return scalar_mat(s.bbar); };
  p.dx_b_bar_a = [](double, const Vec&, const Vec&) { return scalar_mat(0.0); };
  p.sigma = [s](double, const Vec&) { return scalar_mat(s.sigma); };
  p.dx_sigma_z = [](double, const Vec&, const Mat&) { return make_vec({0.0}); };
  p.f = [s](double, const Vec& x, const Vec& a) { return s.f(x(0), a(0)); };
  p.dx_f = [s](double, const Vec& x, const Vec& a) { return make_vec({s.fx(x(0), a(0))}); };
  p.da_f = [s](double, const Vec& x, const Vec& a) { return make_vec({s.fa(x(0), a(0))}); };
  p.g = [s](const Vec& x) { return s.g(x(0)); };
  p.dx_g = [s](const Vec& x) { return make_vec({s.gx(x(0))}); };
  p.deterministic = s.sigma == 0.0;
  p.constant_sigma = true;
  p.ell = std::move(ell);
  return p;
}

inline GridSpec coarse_grid(double radius = 2.0, double dx = 0.05, double dt = 2e-3) {
  GridSpec g;
  g.radius = radius;
  g.dx = dx;
  g.dt = dt;
  return g;
}

inline PolicyGrid zero_policy(const GridSpec& g, double T, int n = 1, int k = 1,
                              NonsmoothCost ell = NonsmoothCost::zero()) {
  return PolicyGrid::constant(g.times(T), g.space(n), Vec::Zero(k), std::move(ell));
}

// Independent RK4 for scalar dP/ds = F(P) run from s = 0 to s = S.
template <class F>
double rk4_scalar(F rhs, double p0, double S, int steps) {
  const double h = S / steps;
  double p = p0;
  for (int i = 0; i < steps; ++i) {
    const double s = i * h;
    const double k1 = rhs(s, p), k2 = rhs(s + h / 2, p + h / 2 * k1), k3 = rhs(s + h / 2, p + h / 2 * k2),
                 k4 = rhs(s + h, p + h * k3);
    p += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return p;
}

// Closed-form Riccati solution of the scalar problem a=-1, b=q=r=h=1 at time t.
inline double riccati_closed_form(double t, double T) {
  const double r2 = std::sqrt(2.0);
  const double p1 = r2 - 1.0, p2 = -1.0 - r2;
  const double C = (2.0 - r2) / (2.0 + r2);
  const double e = C * std::exp(-2.0 * r2 * (T - t));
  return (p1 - p2 * e) / (1.0 - e);
}

inline Vec random_vec(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

// Scalar LQ family used for the certificate sweeps.
struct LQParams {
  double a = -1, b = 1, q = 1, r = 1, h = 1, sigma = 0.1, T = 1, rho = 0, ridge = 0, R = 2;
};

inline LinearSineCoefficients lq_coefficients(const LQParams& p) {
  LinearSineCoefficients c;
  c.a = scalar_mat(p.a);
  c.b = scalar_mat(p.b);
  c.q = scalar_mat(p.q);
  c.r = scalar_mat(p.r);
  c.h = scalar_mat(p.h);
  c.sigma = scalar_mat(p.sigma);
  return c;
}

// theory verdict for phi0 = 0 with tau = 0.9 tau_max
inline TheoryReport lq_theory(const LQParams& p, Calibration cal = {}) {
  const auto ell = NonsmoothCost::zero(p.ridge);
  const auto k = linear_sine_constants(lq_coefficients(p), p.R, ell);
  const TheoryContext ctx{k, p.T, p.rho, cal};
  return evaluate_theory(ctx, PolicyNorms{}, ell, default_anchor(ell, 1), 0.9 * max_step(k));
}

}  // namespace testing
