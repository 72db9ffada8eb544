#include "ppgm/adjoint.hpp"

#include "ppgm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace ppgm {

namespace {

struct ExtendedGrid {
  SpaceGrid grid;
  std::vector<int> pad;                // cells added on each side, per axis
  std::vector<std::ptrdiff_t> inner;   // policy node index, or -1 in the margin
};

ExtendedGrid extend(const SpaceGrid& base, double margin) {
  ExtendedGrid e;
  std::vector<Axis> axes;
  for (const Axis& a : base.axes()) {
    const double h = a.step();
    const int m = margin > 0.0 ? static_cast<int>(std::ceil(margin / h - 1e-9)) : 0;
    e.pad.push_back(m);
    axes.push_back(Axis{a.lower - m * h, a.upper + m * h, a.count + 2 * m});
  }
  e.grid = SpaceGrid(axes);
  e.inner.assign(e.grid.size(), -1);
  for (size_t k = 0; k < e.grid.size(); ++k) {
    size_t idx = 0;
    bool inside = true;
    for (int j = 0; j < base.dim(); ++j) {
      const int i = e.grid.index_along(k, j) - e.pad[j];
      if (i < 0 || i >= base.axis(j).count) {
        inside = false;
        break;
      }
      idx += static_cast<size_t>(i) * base.stride(j);
    }
    if (inside) e.inner[k] = static_cast<std::ptrdiff_t>(idx);
  }
  return e;
}

Vec policy_at(const PolicyGrid& policy, const ExtendedGrid& e, size_t ti, size_t k, const Vec& x) {
  if (e.inner[k] >= 0) return policy.values().value(ti, static_cast<size_t>(e.inner[k]));
  Vec a = policy.values().eval_knot(ti, x);
  if (!policy.cost().feasible(a, 0.0)) a = policy.cost().project_feasible(a);
  return a;
}

// Frozen coefficients of one backward step.
struct StepCoefficients {
  int n = 1, d = 1;
  std::vector<double> b;      // n per node
  std::vector<double> react;  // n x n per node, (d_x b)^T - rho I, row-major
  std::vector<double> src;    // n per node
  std::vector<double> diff;   // n x n per node, 1/2 sigma sigma^T
  std::vector<Mat> sigma;     // only for stochastic problems
  std::vector<Vec> x, a;      // only when d_x <sigma, z> is needed
  double max_rate = 0.0;
};

void compute_coefficients(const ControlProblem& p, const PolicyGrid& policy, const ExtendedGrid& e, size_t ti,
                          StepCoefficients& c) {
  const int n = p.state_dim;
  const size_t N = e.grid.size();
  const double t = policy.values().times()[ti];
  c.n = n;
  c.d = p.noise_dim;
  c.b.assign(N * n, 0.0);
  c.react.assign(N * n * n, 0.0);
  c.src.assign(N * n, 0.0);
  c.diff.assign(N * n * n, 0.0);
  const bool stochastic = !p.deterministic;
  const bool sigma_x = stochastic && !p.constant_sigma;
  if (stochastic) c.sigma.assign(N, Mat());
  if (sigma_x) {
    c.x.assign(N, Vec());
    c.a.assign(N, Vec());
  }
  std::vector<double> rate(N, 0.0);
  parallel_for(N, [&](size_t lo, size_t hi) {
    for (size_t k = lo; k < hi; ++k) {
      const Vec x = e.grid.node(k);
      const Vec a = policy_at(policy, e, ti, k, x);
      const Vec b = p.b_hat(t, x) + p.b_bar(t, x) * a;
      const Mat M = p.dx_b_hat(t, x) + p.dx_b_bar_a(t, x, a);
      const Vec f = p.dx_f(t, x, a);
      double r = 0.0;
      for (int i = 0; i < n; ++i) {
        c.b[k * n + i] = b(i);
        c.src[k * n + i] = f(i);
        r += std::abs(b(i)) / e.grid.axis(i).step();
        for (int j = 0; j < n; ++j) c.react[(k * n + i) * n + j] = M(j, i) - (i == j ? p.discount : 0.0);
      }
      r += M.norm() + p.discount;
      if (stochastic) {
        const Mat s = p.sigma(t, x);
        const Mat S = 0.5 * s * s.transpose();
        c.sigma[k] = s;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) c.diff[(k * n + i) * n + j] = S(i, j);
          const double h = e.grid.axis(i).step();
          r += 2.0 * S(i, i) / (h * h);
        }
      }
      if (sigma_x) {
        c.x[k] = x;
        c.a[k] = a;
      }
      rate[k] = r;
    }
  });
  c.max_rate = *std::max_element(rate.begin(), rate.end());
}

// Neighbour values along axis j with linear ghost extrapolation at the boundary.
inline void neighbours(const std::vector<double>& U, const SpaceGrid& g, size_t k, int j, int n, int comp, double& um,
                       double& u0, double& up) {
  const int i = g.index_along(k, j);
  const size_t s = g.stride(j);
  const int cnt = g.axis(j).count;
  u0 = U[k * n + comp];
  if (i > 0 && i < cnt - 1) {
    um = U[(k - s) * n + comp];
    up = U[(k + s) * n + comp];
  } else if (i == 0) {
    up = U[(k + s) * n + comp];
    um = 2.0 * u0 - up;
  } else {
    um = U[(k - s) * n + comp];
    up = 2.0 * u0 - um;
  }
}

// Central-difference Jacobian J(c, j) = d_j u_c, stored per node as n x n row-major.
void central_gradient(const std::vector<double>& U, const SpaceGrid& g, int n, std::vector<double>& G) {
  G.assign(g.size() * n * n, 0.0);
  for (size_t k = 0; k < g.size(); ++k)
    for (int c = 0; c < n; ++c)
      for (int j = 0; j < n; ++j) {
        double um, u0, up;
        neighbours(U, g, k, j, n, c, um, u0, up);
        G[(k * n + c) * n + j] = (up - um) / (2.0 * g.axis(j).step());
      }
}

Mat jacobian_at(const std::vector<double>& G, size_t k, int n) {
  Mat J(n, n);
  for (int c = 0; c < n; ++c)
    for (int j = 0; j < n; ++j) J(c, j) = G[(k * n + c) * n + j];
  return J;
}

void explicit_substep(const ControlProblem& p, const StepCoefficients& c, const SpaceGrid& g, double t, double dt,
                      const std::vector<double>& U, std::vector<double>& out, std::vector<double>& G) {
  const int n = c.n;
  const size_t N = g.size();
  bool cross = false;
  for (size_t k = 0; k < N && !cross; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && c.diff[(k * n + i) * n + j] != 0.0) cross = true;
  const bool sigma_x = !c.x.empty();
  if (cross || sigma_x) central_gradient(U, g, n, G);
  out.resize(U.size());
  parallel_for(N, [&](size_t lo, size_t hi) {
    for (size_t k = lo; k < hi; ++k) {
      Vec drive(n);
      for (int comp = 0; comp < n; ++comp) {
        double acc = c.src[k * n + comp];
        for (int j = 0; j < n; ++j) acc += c.react[(k * n + comp) * n + j] * U[k * n + j];
        for (int j = 0; j < n; ++j) {
          double um, u0, up;
          neighbours(U, g, k, j, n, comp, um, u0, up);
          const double h = g.axis(j).step();
          const double bj = c.b[k * n + j];
          acc += bj * (bj > 0.0 ? (up - u0) / h : (u0 - um) / h);
          const double Sjj = c.diff[(k * n + j) * n + j];
          if (Sjj != 0.0) acc += Sjj * (up - 2.0 * u0 + um) / (h * h);
        }
        if (cross) {
          for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) {
              if (j == l) continue;
              const double Sjl = c.diff[(k * n + j) * n + l];
              if (Sjl == 0.0) continue;
              // d_j of the central l-derivative field.
              double gm, g0, gp;
              neighbours(G, g, k, j, n * n, comp * n + l, gm, g0, gp);
              acc += Sjl * (gp - gm) / (2.0 * g.axis(j).step());
            }
        }
        drive(comp) = acc;
      }
      if (sigma_x) {
        const Mat z = jacobian_at(G, k, n) * c.sigma[k];
        drive += p.dx_sigma_z(t, c.x[k], z);
      }
      for (int comp = 0; comp < n; ++comp) out[k * n + comp] = U[k * n + comp] + dt * drive(comp);
    }
  });
}

double estimate_margin(const ControlProblem& p, const PolicyGrid& policy) {
  const GridFunction& v = policy.values();
  const SpaceGrid& s = v.space();
  double half = std::numeric_limits<double>::infinity();
  for (const Axis& a : s.axes()) half = std::min(half, 0.5 * (a.upper - a.lower));
  const size_t nt = v.time_count();
  const size_t stride = std::max<size_t>(1, nt / 20);
  double maxb = 0.0;
  for (size_t ti = 0; ti < nt; ti += stride) {
    const double t = v.times()[ti];
    for (size_t k = 0; k < s.size(); ++k) {
      const Vec x = s.node(k);
      maxb = std::max(maxb, drift(p, t, x, v.value(ti, k)).norm());
    }
  }
  const double span = v.times().back() - v.times().front();
  return std::min(half, maxb * span);
}

}  // namespace

double cfl_rate(const ControlProblem& p, const PolicyGrid& policy, const SpaceGrid& grid, size_t ti) {
  ExtendedGrid e;
  e.grid = grid;
  e.inner.assign(grid.size(), -1);
  if (grid == policy.values().space())
    for (size_t k = 0; k < grid.size(); ++k) e.inner[k] = static_cast<std::ptrdiff_t>(k);
  StepCoefficients c;
  compute_coefficients(p, policy, e, ti, c);
  return c.max_rate;
}

GradientField solve_gradient_field(const ControlProblem& p, const PolicyGrid& policy, const GridSpec& spec) {
  p.validate();
  if (policy.state_dim() != p.state_dim || policy.control_dim() != p.control_dim)
    throw DimensionError("gradient field: policy dimensions differ from the problem");
  const GridFunction& pv = policy.values();
  const auto& times = pv.times();
  if (std::abs(times.front()) > 1e-12 || std::abs(times.back() - p.horizon) > 1e-9 * std::max(1.0, p.horizon))
    throw InputError("gradient field: policy time knots must span [0, T]");

  const int n = p.state_dim;
  const int d = p.noise_dim;
  const double margin = spec.margin >= 0.0 ? spec.margin : estimate_margin(p, policy);
  const ExtendedGrid e = extend(pv.space(), margin);
  const SpaceGrid& g = e.grid;
  const size_t N = g.size();

  GradientField out;
  out.margin = margin;
  out.y = GridFunction(times, pv.space(), n);
  const bool want_z = spec.store_z && !p.deterministic;
  if (want_z) out.z = GridFunction(times, pv.space(), n * d);

  std::vector<double> U(N * n), V, G;
  for (size_t k = 0; k < N; ++k) {
    const Vec gx = p.dx_g(g.node(k));
    for (int i = 0; i < n; ++i) U[k * n + i] = gx(i);
  }

  auto store = [&](size_t ti) {
    for (size_t k = 0; k < N; ++k) {
      if (e.inner[k] < 0) continue;
      std::copy(&U[k * n], &U[k * n] + n, out.y.data(ti, static_cast<size_t>(e.inner[k])));
    }
    if (want_z) {
      central_gradient(U, g, n, G);
      const double t = times[ti];
      for (size_t k = 0; k < N; ++k) {
        if (e.inner[k] < 0) continue;
        const Mat z = jacobian_at(G, k, n) * p.sigma(t, g.node(k));
        double* dst = out.z->data(ti, static_cast<size_t>(e.inner[k]));
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) dst[i * d + j] = z(i, j);
      }
    }
  };

  const size_t last = times.size() - 1;
  store(last);
  StepCoefficients c;
  for (size_t ti = last; ti-- > 0;) {
    const double dt = times[ti + 1] - times[ti];
    compute_coefficients(p, policy, e, ti + 1, c);
    const double load = dt * c.max_rate;
    int sub = 1;
    if (load > 1.0) {
      if (!spec.auto_substep) {
        std::ostringstream os;
        os << "gradient field: CFL violated at t = " << times[ti + 1] << " (dt * rate = " << load
           << " > 1); reduce dt or enable auto_substep";
        throw CflError(os.str());
      }
      const double need = std::ceil(load);
      if (need > 1e5) throw CflError("gradient field: CFL substep count exceeds 1e5");
      sub = static_cast<int>(need);
    }
    out.substeps = std::max(out.substeps, sub);
    const double h = dt / sub;
    for (int s = 0; s < sub; ++s) {
      explicit_substep(p, c, g, times[ti + 1], h, U, V, G);
      U.swap(V);
    }
    for (size_t k = 0; k < N; ++k)
      for (int i = 0; i < n; ++i)
        if (!std::isfinite(U[k * n + i])) {
          std::ostringstream os;
          os << "gradient field: non-finite value at t = " << times[ti] << ", x = " << g.node(k).transpose();
          throw NumericalError(os.str());
        }
    store(ti);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Vec StateEnsemble::state(size_t path, size_t ti) const {
  const size_t off = (path * times.size() + ti) * static_cast<size_t>(state_dim);
  return Eigen::Map<const Eigen::VectorXd>(&states[off], state_dim);
}

StateEnsemble simulate_state(const ControlProblem& p, const PolicyGrid& policy, size_t n_paths, double dt,
                             std::uint64_t seed) {
  p.validate();
  if (n_paths < 1) throw InputError("simulate: n_paths must be >= 1");
  StateEnsemble e;
  e.times = uniform_times(p.horizon, dt);
  e.state_dim = p.state_dim;
  e.n_paths = n_paths;
  e.seed = seed;
  const size_t nt = e.times.size();
  const int n = p.state_dim;
  e.states.assign(n_paths * nt * n, 0.0);
  parallel_for(n_paths, [&](size_t lo, size_t hi) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (size_t path = lo; path < hi; ++path) {
      std::mt19937_64 rng(splitmix64(seed ^ splitmix64(path)));
      Vec x = p.initial_samples.empty() ? p.initial_state : p.initial_samples[path % p.initial_samples.size()];
      double* dst = &e.states[path * nt * n];
      std::copy(x.data(), x.data() + n, dst);
      for (size_t i = 0; i + 1 < nt; ++i) {
        const double t = e.times[i];
        const double h = e.times[i + 1] - t;
        const Vec a = policy.eval(t, x);
        Vec next = x + drift(p, t, x, a) * h;
        if (!p.deterministic) {
          Vec dw(p.noise_dim);
          for (int j = 0; j < p.noise_dim; ++j) dw(j) = normal(rng) * std::sqrt(h);
          next += p.sigma(t, x) * dw;
        }
        if (!next.allFinite()) {
          std::ostringstream os;
          os << "simulate: state exploded on path " << path << " at t = " << e.times[i + 1];
          throw NumericalError(os.str());
        }
        x = next;
        std::copy(x.data(), x.data() + n, dst + (i + 1) * n);
      }
    }
  });
  return e;
}

CostEstimate evaluate_cost(const ControlProblem& p, const PolicyGrid& policy, const StateEnsemble& ens) {
  if (ens.state_dim != p.state_dim) throw DimensionError("evaluate_cost: ensemble dimension differs");
  const size_t nt = ens.times.size();
  std::vector<double> cost(ens.n_paths, 0.0);
  parallel_for(ens.n_paths, [&](size_t lo, size_t hi) {
    for (size_t path = lo; path < hi; ++path) {
      double acc = 0.0;
      for (size_t i = 0; i + 1 < nt; ++i) {
        const double t = ens.times[i];
        const Vec x = ens.state(path, i);
        const Vec a = policy.eval(t, x);
        const double l = p.ell.value(a);
        if (!std::isfinite(l)) {
          std::ostringstream os;
          os << "evaluate_cost: infeasible action on path " << path << " at t = " << t;
          throw InfeasibleError(os.str());
        }
        acc += std::exp(-p.discount * t) * (p.f(t, x, a) + l) * (ens.times[i + 1] - t);
      }
      acc += std::exp(-p.discount * ens.times.back()) * p.g(ens.state(path, nt - 1));
      cost[path] = acc;
    }
  });
  CostEstimate out;
  double sum = 0.0;
  for (double c : cost) sum += c;
  out.mean = sum / static_cast<double>(cost.size());
  if (cost.size() > 1) {
    double ss = 0.0;
    for (double c : cost) ss += (c - out.mean) * (c - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(cost.size() - 1) / static_cast<double>(cost.size()));
  }
  return out;
}

std::vector<Vec> open_loop_trajectory(const ControlProblem& p, const std::vector<Vec>& actions, double dt) {
  std::vector<Vec> xs{p.initial_state};
  for (size_t i = 0; i < actions.size(); ++i) {
    const double t = static_cast<double>(i) * dt;
    xs.push_back(xs.back() + drift(p, t, xs.back(), actions[i]) * dt);
  }
  return xs;
}

double open_loop_cost(const ControlProblem& p, const std::vector<Vec>& actions, double dt) {
  const auto xs = open_loop_trajectory(p, actions, dt);
  double acc = 0.0;
  for (size_t i = 0; i < actions.size(); ++i) {
    const double t = static_cast<double>(i) * dt;
    acc += std::exp(-p.discount * t) * (p.f(t, xs[i], actions[i]) + p.ell.value(actions[i])) * dt;
  }
  return acc + std::exp(-p.discount * dt * static_cast<double>(actions.size())) * p.g(xs.back());
}

EnsembleSummary summarize(const StateEnsemble& e) {
  EnsembleSummary s;
  s.times = e.times;
  const double m = static_cast<double>(e.n_paths);
  for (size_t ti = 0; ti < e.times.size(); ++ti) {
    Vec mean = Vec::Zero(e.state_dim), sq = Vec::Zero(e.state_dim);
    for (size_t path = 0; path < e.n_paths; ++path) mean += e.state(path, ti);
    mean /= m;
    for (size_t path = 0; path < e.n_paths; ++path) sq += (e.state(path, ti) - mean).cwiseAbs2();
    s.mean.push_back(mean);
    s.variance.push_back(e.n_paths > 1 ? Vec(sq / (m - 1.0)) : Vec(Vec::Zero(e.state_dim)));
  }
  return s;
}

}  // namespace ppgm
