#include "ppgm/ppgm.hpp"

#include "ppgm/parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

namespace ppgm {

namespace {

void check_layout(const ControlProblem& p, const PolicyGrid& policy, const GradientField& field) {
  if (field.y.times() != policy.values().times() || !(field.y.space() == policy.values().space()) ||
      field.y.components() != p.state_dim)
    throw DimensionError("ppgm step: field and policy grids differ");
  if (policy.control_dim() != p.control_dim) throw DimensionError("ppgm step: policy action dimension differs");
}

GridFunction prox_gradient_map(const ControlProblem& p, const PolicyGrid& policy, const GradientField& field,
                               double tau, const LambertOptions& opts) {
  if (!(tau > 0.0)) throw InputError("step size tau must be > 0");
  check_layout(p, policy, field);
  const GridFunction& v = policy.values();
  GridFunction out(v.times(), v.space(), v.components());
  const size_t nodes = v.space().size();
  const int k = p.control_dim;
  const int n = p.state_dim;
  parallel_for(v.time_count() * nodes, [&](size_t lo, size_t hi) {
    for (size_t idx = lo; idx < hi; ++idx) {
      const size_t ti = idx / nodes, node = idx % nodes;
      const double t = v.times()[ti];
      const Vec x = v.space().node(node);
      const Vec a = Eigen::Map<const Eigen::VectorXd>(v.data(ti, node), k);
      const Vec y = Eigen::Map<const Eigen::VectorXd>(field.y.data(ti, node), n);
      const Vec grad = p.b_bar(t, x).transpose() * y + p.da_f(t, x, a);
      const Vec next = prox(p.ell, tau, a - tau * grad, opts);
      std::copy(next.data(), next.data() + k, out.data(ti, node));
    }
  });
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PolicyGrid ppgm_step(const ControlProblem& p, const PolicyGrid& policy, const GradientField& field, double tau,
                     const LambertOptions& opts) {
  return PolicyGrid(prox_gradient_map(p, policy, field, tau, opts), p.ell);
}

double stationarity_residual(const ControlProblem& p, const PolicyGrid& policy, const GradientField& field,
                             double tau, const LambertOptions& opts) {
  return weighted_sup_distance(policy.values(), prox_gradient_map(p, policy, field, tau, opts));
}

GradientField perturb_field(const GradientField& field, const NoiseSpec& noise, std::uint64_t stream,
                            double* injected) {
  GradientField out = field;
  if (injected) *injected = 0.0;
  if (noise.epsilon == 0.0) return out;
  if (!(noise.epsilon > 0.0)) throw InputError("perturbation epsilon must be >= 0");
  std::mt19937_64 rng(splitmix64(noise.seed ^ splitmix64(stream + 0x51ed)));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GridFunction& y = out.y;
  const int n = y.components();
  const double scale = noise.epsilon / std::sqrt(static_cast<double>(n));
  double worst = 0.0;
  for (size_t ti = 0; ti < y.time_count(); ++ti) {
    for (size_t node = 0; node < y.space().size(); ++node) {
      const double w = 1.0 + y.space().node(node).norm();
      double* d = y.data(ti, node);
      double sq = 0.0;
      for (int c = 0; c < n; ++c) {
        const double e = scale * w * u(rng);
        d[c] += e;
        sq += e * e;
      }
      worst = std::max(worst, std::sqrt(sq) / w);
    }
  }
  if (injected) *injected = worst;
  return out;
}

PolicyGrid perturbed_step(const ControlProblem& p, const PolicyGrid& policy, const GradientField& exact_field,
                          double tau, const NoiseSpec& noise, std::uint64_t stream, const LambertOptions& opts) {
  if (noise.epsilon == 0.0) return ppgm_step(p, policy, exact_field, tau, opts);
  return ppgm_step(p, policy, perturb_field(exact_field, noise, stream), tau, opts);
}

void IterationReport::write_csv(std::ostream& os, const std::vector<std::string>& header_lines) const {
  for (const auto& h : header_lines) os << "# " << h << '\n';
  os << "m,delta_sup,lipschitz,center_bound,residual,cost,cost_stderr,ratio,predicted_c,epsilon_injected,wall_ms\n";
  for (const auto& r : rows) {
    os << r.m << ',' << fmt(r.delta_sup) << ',' << fmt(r.lipschitz) << ',' << fmt(r.center_bound) << ','
       << fmt(r.residual) << ',' << fmt(r.cost) << ',' << fmt(r.cost_stderr) << ',' << fmt(r.ratio) << ','
       << fmt(r.predicted_c) << ',' << fmt(r.epsilon) << ',' << fmt(r.wall_ms) << '\n';
  }
}

PpgmResult run_ppgm(const ControlProblem& p, const PolicyGrid& phi0, const IterationConfig& cfg) {
  p.validate();
  if (!(cfg.tau > 0.0)) throw InputError("step size tau must be > 0");
  if (cfg.enforce_step_bound && cfg.tau > cfg.tau_max * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "step size tau = " << cfg.tau << " exceeds tau_max = " << cfg.tau_max;
    throw InputError(os.str());
  }
  if (cfg.max_iters < 0) throw InputError("max_iters must be >= 0");

  PpgmResult res{phi0, {}};
  IterationReport& rep = res.report;
  PolicyGrid& phi = res.policy;
  const double guard = cfg.divergence_factor * (weighted_sup_norm(phi0.values()) + 1.0);
  const auto start = std::chrono::steady_clock::now();
  double prev = std::numeric_limits<double>::quiet_NaN();

  for (int m = 0; m < cfg.max_iters; ++m) {
    GradientField field;
    try {
      field = solve_gradient_field(p, phi, cfg.grid);
    } catch (const NumericalError& e) {
      rep.diverged = true;
      rep.stop_reason = std::string("field solve failed: ") + e.what();
      break;
    }
    PolicyGrid next = cfg.perturbation.epsilon > 0.0
                          ? perturbed_step(p, phi, field, cfg.tau, cfg.perturbation, static_cast<std::uint64_t>(m),
                                           cfg.lambert)
                          : ppgm_step(p, phi, field, cfg.tau, cfg.lambert);
    IterationRecord r;
    r.m = m;
    r.delta_sup = weighted_sup_distance(next, phi);
    r.lipschitz = lipschitz_seminorm(phi);
    r.center_bound = center_bound(phi);
    r.residual = cfg.perturbation.epsilon > 0.0 ? stationarity_residual(p, phi, field, cfg.tau, cfg.lambert)
                                                : r.delta_sup;
    if (cfg.cost_paths > 0) {
      const auto ens = simulate_state(p, phi, static_cast<size_t>(cfg.cost_paths), cfg.cost_dt, cfg.seed);
      const auto c = evaluate_cost(p, phi, ens);
      r.cost = c.mean;
      r.cost_stderr = c.std_error;
    }
    if (m > 0 && prev > 0.0) r.ratio = r.delta_sup / prev;
    r.predicted_c = cfg.predicted_c;
    r.epsilon = cfg.perturbation.epsilon;
    if (cfg.record_wall_time)
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    rep.rows.push_back(r);
    prev = r.delta_sup;
    phi = std::move(next);

    const double size = weighted_sup_norm(phi.values());
    if (!(size <= guard)) {
      rep.diverged = true;
      std::ostringstream os;
      os << "divergence guard: |phi|_0 = " << size << " exceeds " << guard << " at iteration " << m + 1;
      rep.stop_reason = os.str();
      break;
    }
    if (r.delta_sup < cfg.stop_tol) {
      rep.converged = true;
      rep.stop_reason = "stop_tol reached";
      break;
    }
  }
  if (rep.stop_reason.empty()) rep.stop_reason = "max_iters reached";

  // Tail: the last five defined ratios.
  int counted = 0;
  bool all_below = true;
  for (auto it = rep.rows.rbegin(); it != rep.rows.rend() && counted < 5; ++it) {
    if (std::isnan(it->ratio)) continue;
    ++counted;
    all_below = all_below && it->ratio < 1.0;
  }
  rep.tail_contracting = counted > 0 && all_below;

  if (cfg.final_residual && !rep.diverged) {
    try {
      const auto field = solve_gradient_field(p, phi, cfg.grid);
      rep.final_residual = stationarity_residual(p, phi, field, cfg.tau, cfg.lambert);
    } catch (const NumericalError& e) {
      rep.diverged = true;
      rep.stop_reason = std::string("final field solve failed: ") + e.what();
    }
  }
  rep.final_norms = policy_norms(phi);
  return res;
}

// ---------------------------------------------------------------------------

void pontryagin_solve(const ControlProblem& p, const std::vector<double>& times, const std::vector<Vec>& alpha,
                      std::vector<Vec>& state, std::vector<Vec>& costate) {
  const size_t N = times.size();
  if (alpha.size() != N) throw DimensionError("open-loop: one action per time knot required");
  state.assign(N, Vec());
  costate.assign(N, Vec());
  std::vector<Vec> mid(N - 1);
  auto blowup = [](const Vec& v, double t, const char* what) {
    if (!v.allFinite() || v.norm() > 1e12) {
      std::ostringstream os;
      os << "open-loop: " << what << " ODE blow-up at t = " << t;
      throw NumericalError(os.str());
    }
  };
  auto fwd = [&](double t, const Vec& x, const Vec& a) -> Vec { return drift(p, t, x, a); };
  auto rk4 = [&](double t, const Vec& x, double h, const Vec& a0, const Vec& am, const Vec& a1) -> Vec {
    const Vec k1 = fwd(t, x, a0);
    const Vec k2 = fwd(t + 0.5 * h, x + 0.5 * h * k1, am);
    const Vec k3 = fwd(t + 0.5 * h, x + 0.5 * h * k2, am);
    const Vec k4 = fwd(t + h, x + h * k3, a1);
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };
  state[0] = p.initial_state;
  for (size_t i = 0; i + 1 < N; ++i) {
    const double t = times[i], h = times[i + 1] - t;
    const Vec& a0 = alpha[i];
    const Vec& a1 = alpha[i + 1];
    const Vec am = 0.5 * (a0 + a1);
    // Two half steps so the backward sweep has the state at midpoints.
    mid[i] = rk4(t, state[i], 0.5 * h, a0, 0.75 * a0 + 0.25 * a1, am);
    state[i + 1] = rk4(t + 0.5 * h, mid[i], 0.5 * h, am, 0.25 * a0 + 0.75 * a1, a1);
    blowup(state[i + 1], times[i + 1], "state");
  }
  const Mat z0 = Mat::Zero(p.state_dim, p.noise_dim);
  auto back = [&](double t, const Vec& x, const Vec& a, const Vec& y) -> Vec {
    return -grad_x_hamiltonian(p, t, x, a, y, z0);
  };
  costate[N - 1] = p.dx_g(state[N - 1]);
  for (size_t i = N - 1; i-- > 0;) {
    const double t1 = times[i + 1];
    const double h = -(t1 - times[i]);
    const Vec am = 0.5 * (alpha[i] + alpha[i + 1]);
    const Vec& y = costate[i + 1];
    const Vec k1 = back(t1, state[i + 1], alpha[i + 1], y);
    const Vec k2 = back(t1 + 0.5 * h, mid[i], am, y + 0.5 * h * k1);
    const Vec k3 = back(t1 + 0.5 * h, mid[i], am, y + 0.5 * h * k2);
    const Vec k4 = back(times[i], state[i], alpha[i], y + h * k3);
    costate[i] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    blowup(costate[i], times[i], "costate");
  }
}

OpenLoopResult open_loop_pgm(const ControlProblem& p, const std::vector<Vec>& alpha0, double dt, double tau,
                             int iters, double tol, const LambertOptions& opts) {
  p.validate();
  if (!p.deterministic) throw InputError("open-loop PGM requires sigma = 0");
  if (!p.initial_samples.empty()) throw InputError("open-loop PGM requires a point initial state");
  if (!(tau > 0.0)) throw InputError("step size tau must be > 0");
  OpenLoopResult r;
  r.times = uniform_times(p.horizon, dt);
  if (alpha0.size() != r.times.size()) throw DimensionError("open-loop: alpha0 needs one action per time knot");
  for (const auto& a : alpha0)
    if (!p.ell.feasible(a)) throw InfeasibleError("open-loop: alpha0 is infeasible");
  r.alpha = alpha0;
  for (int m = 0; m < iters; ++m) {
    pontryagin_solve(p, r.times, r.alpha, r.state, r.costate);
    double delta = 0.0;
    for (size_t i = 0; i < r.times.size(); ++i) {
      const Vec g = grad_a_hamiltonian_re(p, r.times[i], r.state[i], r.alpha[i], r.costate[i]);
      const Vec next = prox(p.ell, tau, r.alpha[i] - tau * g, opts);
      delta = std::max(delta, (next - r.alpha[i]).norm());
      r.alpha[i] = next;
    }
    r.delta.push_back(delta);
    if (delta <= tol) {
      r.converged = true;
      break;
    }
  }
  pontryagin_solve(p, r.times, r.alpha, r.state, r.costate);
  return r;
}

BasePolicy base_from_grid(const PolicyGrid& policy) {
  return BasePolicy{[policy](double t, const Vec& x) { return policy.eval(t, x); },
                    [policy](double t, const Vec& x) { return policy.values().jacobian(t, x); }};
}

ControlProblem residual_correction(const ControlProblem& p, const BasePolicy& base, const SampleBox& box,
                                   int probe_samples) {
  p.validate();
  if (!base.value || !base.jacobian) throw InputError("residual correction: base policy needs value and jacobian");
  ControlProblem q = p;
  const ControlProblem o = p;
  const BasePolicy bp = base;
  q.b_hat = [o, bp](double t, const Vec& x) -> Vec { return o.b_hat(t, x) + o.b_bar(t, x) * bp.value(t, x); };
  q.dx_b_hat = [o, bp](double t, const Vec& x) -> Mat {
    const Vec a = bp.value(t, x);
    return o.dx_b_hat(t, x) + o.dx_b_bar_a(t, x, a) + o.b_bar(t, x) * bp.jacobian(t, x);
  };
  q.f = [o, bp](double t, const Vec& x, const Vec& a) { return o.f(t, x, a + bp.value(t, x)); };
  q.dx_f = [o, bp](double t, const Vec& x, const Vec& a) -> Vec {
    const Vec full = a + bp.value(t, x);
    return o.dx_f(t, x, full) + bp.jacobian(t, x).transpose() * o.da_f(t, x, full);
  };
  q.da_f = [o, bp](double t, const Vec& x, const Vec& a) -> Vec { return o.da_f(t, x, a + bp.value(t, x)); };
  if (o.full_drift)
    q.full_drift = [o, bp](double t, const Vec& x, const Vec& a) -> Vec {
      return o.full_drift(t, x, a + bp.value(t, x));
    };
  q.family = p.family + "+residual";
  q.constants.reset();
  AssumptionConstants probed = probe_assumption_constants(q, box, probe_samples);
  probed.notes.push_back("re-probed after residual correction");
  q.constants = probed;
  return q;
}

}  // namespace ppgm
