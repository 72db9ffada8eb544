#include "ppgm/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ppgm {

namespace {

void check_dim(const Vec& v, int n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << ": expected dimension " << n << ", got " << v.size();
    throw DimensionError(os.str());
  }
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("probe: non-finite value of ") + what);
}

void check_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string("probe: non-finite value of ") + what);
}

Mat symmetric_part(const Mat& m) { return 0.5 * (m + m.transpose()); }

double lambda_min_sym(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(symmetric_part(m)));
  return es.eigenvalues().minCoeff();
}

double lambda_max_sym(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(symmetric_part(m)));
  return es.eigenvalues().maxCoeff();
}

// Flattened derivative tensor d sigma_{ij} / d x_l, one row per (i, j).
Eigen::MatrixXd sigma_jacobian(const ControlProblem& p, double t, const Vec& x) {
  Eigen::MatrixXd d(p.state_dim * p.noise_dim, p.state_dim);
  for (int i = 0; i < p.state_dim; ++i) {
    for (int j = 0; j < p.noise_dim; ++j) {
      Mat e = Mat::Zero(p.state_dim, p.noise_dim);
      e(i, j) = 1.0;
      const Vec row = p.dx_sigma_z(t, x, e);
      d.row(i * p.noise_dim + j) = row.transpose();
    }
  }
  return d;
}

Vec uniform_in(const Vec& lo, const Vec& hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) v(i) = lo(i) + (hi(i) - lo(i)) * u(rng);
  return v;
}

}  // namespace

std::string to_string(ConstantsProvenance p) {
  switch (p) {
    case ConstantsProvenance::analytic:
      return "analytic";
    case ConstantsProvenance::user:
      return "user";
    case ConstantsProvenance::empirical_lower_bound:
      return "empirical, lower bound";
  }
  return "unknown";
}

void AssumptionConstants::validate() const {
  const double nonneg[] = {c_fx, l_fx, c_fa, l_fa, nu, c_g, l_g, c_bhat, c_bbar, l_bhat, l_bbar, c_sigma, l_sigma};
  for (double v : nonneg)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("assumption constants must be finite and nonnegative");
  if (!std::isfinite(mu) || !std::isfinite(kappa_bhat)) throw InputError("assumption constants must be finite");
  if (!(mu + nu > 0.0))
    throw InputError("assumption (H.1)(3) violated: mu + nu must be > 0 (running cost strongly convex in the control)");
  if (mu > l_fa * (1.0 + 1e-12) + 1e-12) throw InputError("assumption constants: mu cannot exceed L_fa");
}

void ControlProblem::validate() const {
  if (!(horizon > 0.0)) throw InputError("control problem: horizon must be > 0");
  if (!(discount >= 0.0)) throw InputError("control problem: discount must be >= 0");
  if (state_dim < 1 || control_dim < 1 || noise_dim < 1 || state_dim > kMaxDim || control_dim > kMaxDim ||
      noise_dim > kMaxDim)
    throw DimensionError("control problem: dimensions must lie in [1, 3]");
  check_dim(initial_state, state_dim, "initial state");
  for (const auto& s : initial_samples) check_dim(s, state_dim, "initial sample");
  if (!b_hat || !b_bar || !sigma || !f || !g || !dx_b_hat || !dx_b_bar_a || !dx_sigma_z || !dx_f || !da_f || !dx_g)
    throw InputError("control problem: every coefficient and derivative must be supplied");
  if (auto k = ell.dimension(); k && *k != control_dim)
    throw DimensionError("control problem: nonsmooth cost dimension differs from control_dim");
}

Vec drift(const ControlProblem& p, double t, const Vec& x, const Vec& a) {
  check_dim(x, p.state_dim, "drift state");
  check_dim(a, p.control_dim, "drift action");
  return p.b_hat(t, x) + p.b_bar(t, x) * a;
}

double hamiltonian_re(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y) {
  check_dim(y, p.state_dim, "costate");
  return drift(p, t, x, a).dot(y) + p.f(t, x, a) - p.discount * x.dot(y);
}

double hamiltonian(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y, const Mat& z) {
  if (z.rows() != p.state_dim || z.cols() != p.noise_dim) throw DimensionError("hamiltonian: z must be n x d");
  return hamiltonian_re(p, t, x, a, y) + (p.sigma(t, x).array() * z.array()).sum();
}

Vec grad_a_hamiltonian_re(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y) {
  check_dim(x, p.state_dim, "state");
  check_dim(a, p.control_dim, "action");
  check_dim(y, p.state_dim, "costate");
  return p.b_bar(t, x).transpose() * y + p.da_f(t, x, a);
}

Vec grad_x_hamiltonian(const ControlProblem& p, double t, const Vec& x, const Vec& a, const Vec& y, const Mat& z) {
  check_dim(x, p.state_dim, "state");
  check_dim(a, p.control_dim, "action");
  check_dim(y, p.state_dim, "costate");
  Vec out = p.dx_b_hat(t, x).transpose() * y + p.dx_b_bar_a(t, x, a).transpose() * y - p.discount * y + p.dx_f(t, x, a);
  if (!p.deterministic && !p.constant_sigma) {
    if (z.rows() != p.state_dim || z.cols() != p.noise_dim) throw DimensionError("grad_x_hamiltonian: z must be n x d");
    out += p.dx_sigma_z(t, x, z);
  }
  return out;
}

SampleBox SampleBox::symmetric(int n, int k, double x_radius, double a_radius) {
  return SampleBox{Vec::Constant(n, -x_radius), Vec::Constant(n, x_radius), Vec::Constant(k, -a_radius),
                   Vec::Constant(k, a_radius)};
}

AssumptionConstants probe_assumption_constants(const ControlProblem& p, const SampleBox& box, int n_samples,
                                               std::uint64_t seed) {
  p.validate();
  if (n_samples < 1) throw InputError("probe: n_samples must be >= 1");
  check_dim(box.x_lower, p.state_dim, "probe box");
  check_dim(box.a_lower, p.control_dim, "probe box");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = p.state_dim;
  const int k = p.control_dim;
  const double x_scale = (box.x_upper - box.x_lower).norm();
  const double a_scale = (box.a_upper - box.a_lower).norm();

  AssumptionConstants c;
  c.provenance = ConstantsProvenance::empirical_lower_bound;
  c.nu = p.ell.nu();
  c.mu = std::numeric_limits<double>::infinity();
  c.kappa_bhat = -std::numeric_limits<double>::infinity();
  const Vec x0 = Vec::Zero(n);
  const Vec a0 = Vec::Zero(k);

  for (int s = 0; s < n_samples; ++s) {
    const double t = p.horizon * unit(rng);
    const Vec x = uniform_in(box.x_lower, box.x_upper, rng);
    const Vec a = p.ell.project_feasible(uniform_in(box.a_lower, box.a_upper, rng));
    Vec x2 = uniform_in(box.x_lower, box.x_upper, rng);
    Vec a2 = p.ell.project_feasible(uniform_in(box.a_lower, box.a_upper, rng));
    // Pair types: independent, same state, same action, nearby.
    switch (s % 4) {
      case 1:
        x2 = x;
        break;
      case 2:
        a2 = a;
        break;
      case 3: {
        Vec dx = uniform_in(Vec::Constant(n, -1.0), Vec::Constant(n, 1.0), rng) * (1e-3 * x_scale);
        Vec da = uniform_in(Vec::Constant(k, -1.0), Vec::Constant(k, 1.0), rng) * (1e-3 * a_scale);
        x2 = (x + dx).cwiseMax(box.x_lower).cwiseMin(box.x_upper);
        a2 = p.ell.project_feasible(a + da);
        break;
      }
      default:
        break;
    }
    const double dxn = (x - x2).norm();
    const double dan = (a - a2).norm();
    const double dsum = dxn + dan;

    const Vec fx = p.dx_f(t, x, a), fx2 = p.dx_f(t, x2, a2);
    const Vec fa = p.da_f(t, x, a), fa2 = p.da_f(t, x2, a2);
    const Vec gx = p.dx_g(x), gx2 = p.dx_g(x2);
    const Vec bh = p.b_hat(t, x), bh2 = p.b_hat(t, x2);
    const Mat dbh = p.dx_b_hat(t, x), dbh2 = p.dx_b_hat(t, x2);
    const Mat bb = p.b_bar(t, x), bb2 = p.b_bar(t, x2);
    const Mat dba = p.dx_b_bar_a(t, x, a), dba2 = p.dx_b_bar_a(t, x2, a2);
    const Mat sg = p.sigma(t, x), sg2 = p.sigma(t, x2);
    for (const Mat* m : {&dbh, &dbh2, &bb, &bb2, &dba, &dba2, &sg, &sg2}) check_finite(*m, "coefficient");
    for (const Vec* v : {&fx, &fx2, &fa, &fa2, &gx, &gx2, &bh, &bh2}) check_finite(Mat(*v), "derivative");

    c.c_fx = std::max(c.c_fx, fx.norm());
    c.c_g = std::max(c.c_g, gx.norm());
    c.c_bbar = std::max(c.c_bbar, op_norm(bb));
    c.c_sigma = std::max(c.c_sigma, sg.norm());
    const Vec fa00 = p.da_f(t, x0, a0);
    check_finite(Mat(fa00), "d_a f(t,0,0)");
    c.c_fa = std::max(c.c_fa, fa00.norm());
    const double bhat0 = p.b_hat(t, x0).norm() + op_norm(p.dx_b_hat(t, x0));
    check_finite(bhat0, "b_hat(t,0)");
    c.c_bhat = std::max(c.c_bhat, bhat0);

    if (dsum > 0.0) {
      c.l_fx = std::max(c.l_fx, (fx - fx2).norm() / dsum);
      c.l_fa = std::max(c.l_fa, (fa - fa2).norm() / dsum);
      c.l_bbar = std::max(c.l_bbar, (bb * a - bb2 * a2).norm() / dsum);
      c.l_bbar = std::max(c.l_bbar, op_norm(dba - dba2) / dsum);
    }
    if (dxn > 0.0) {
      c.l_g = std::max(c.l_g, (gx - gx2).norm() / dxn);
      c.l_bhat = std::max(c.l_bhat, op_norm(dbh - dbh2) / dxn);
      c.l_bbar = std::max(c.l_bbar, op_norm(bb - bb2) / dxn);
      c.kappa_bhat = std::max(c.kappa_bhat, (x - x2).dot(bh - bh2) / (dxn * dxn));
      double sigma_diff = (sg - sg2).norm();
      if (!p.deterministic) sigma_diff += (sigma_jacobian(p, t, x) - sigma_jacobian(p, t, x2)).norm();
      c.l_sigma = std::max(c.l_sigma, sigma_diff / dxn);
    }
    if (dan > 0.0) {
      // Monotonicity of a -> d_a f at a fixed (t, x).
      const Vec fa_same_x = p.da_f(t, x, a2);
      c.mu = std::min(c.mu, (fa - fa_same_x).dot(a - a2) / (dan * dan));
    }
  }
  if (!std::isfinite(c.mu)) c.mu = 0.0;
  if (!std::isfinite(c.kappa_bhat)) c.kappa_bhat = 0.0;
  c.notes.push_back("L_bbar is the max of the three Lipschitz quotients of the b_bar condition (conflated constant)");
  c.notes.push_back("mu is the smallest observed monotonicity quotient of d_a f (an upper bound on the true modulus)");
  return c;
}

double affine_drift_defect(const ControlProblem& p, const SampleBox& box, int n_samples, std::uint64_t seed) {
  if (!p.full_drift) throw InputError("affine check: problem has no full drift");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const double t = p.horizon * unit(rng);
    const Vec x = uniform_in(box.x_lower, box.x_upper, rng);
    const Vec a = uniform_in(box.a_lower, box.a_upper, rng);
    worst = std::max(worst, (p.full_drift(t, x, a) - drift(p, t, x, a)).norm());
  }
  return worst;
}

ControlProblem make_linear_sine_problem(const LinearSineCoefficients& c, double horizon, double discount,
                                        const Vec& initial_state, NonsmoothCost ell) {
  const int n = static_cast<int>(c.a.rows());
  const int k = static_cast<int>(c.b.cols());
  const int d = static_cast<int>(c.sigma.cols());
  if (c.a.cols() != n || c.b.rows() != n || c.sigma.rows() != n || c.q.rows() != n || c.q.cols() != n ||
      c.h.rows() != n || c.h.cols() != n || c.r.rows() != k || c.r.cols() != k)
    throw DimensionError("linear family: inconsistent coefficient shapes");

  ControlProblem p;
  p.horizon = horizon;
  p.discount = discount;
  p.state_dim = n;
  p.control_dim = k;
  p.noise_dim = d;
  p.initial_state = initial_state;
  p.ell = std::move(ell);
  p.family = c.sine_amplitude == 0.0 ? "linear" : "affine_sine";
  p.deterministic = c.sigma.isZero(0.0);
  p.constant_sigma = true;

  const Mat A = c.a, B = c.b, S = c.sigma;
  const Mat Q = symmetric_part(c.q), R = symmetric_part(c.r), H = symmetric_part(c.h);
  const double eps = c.sine_amplitude, omega = c.sine_frequency;

  p.b_hat = [A, eps, omega](double, const Vec& x) -> Vec {
    Vec out = A * x;
    if (eps != 0.0) out += eps * (omega * x).array().sin().matrix();
    return out;
  };
  p.dx_b_hat = [A, eps, omega](double, const Vec& x) -> Mat {
    Mat j = A;
    if (eps != 0.0)
      for (Eigen::Index i = 0; i < x.size(); ++i) j(i, i) += eps * omega * std::cos(omega * x(i));
    return j;
  };
  p.b_bar = [B](double, const Vec&) -> Mat { return B; };
  p.dx_b_bar_a = [n](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(n, n); };
  p.sigma = [S](double, const Vec&) -> Mat { return S; };
  p.dx_sigma_z = [n](double, const Vec&, const Mat&) -> Vec { return Vec::Zero(n); };
  p.f = [Q, R](double, const Vec& x, const Vec& a) { return 0.5 * x.dot(Q * x) + 0.5 * a.dot(R * a); };
  p.dx_f = [Q](double, const Vec& x, const Vec&) -> Vec { return Q * x; };
  p.da_f = [R](double, const Vec&, const Vec& a) -> Vec { return R * a; };
  p.g = [H](const Vec& x) { return 0.5 * x.dot(H * x); };
  p.dx_g = [H](const Vec& x) -> Vec { return H * x; };
  p.full_drift = [A, B, eps, omega](double, const Vec& x, const Vec& a) -> Vec {
    Vec out = A * x + B * a;
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) += eps * std::sin(omega * x(i));
    return out;
  };
  p.validate();
  return p;
}

AssumptionConstants linear_sine_constants(const LinearSineCoefficients& c, double radius, const NonsmoothCost& ell) {
  const double n = static_cast<double>(c.a.rows());
  const double x_sup = radius * std::sqrt(n);
  const double eps = std::abs(c.sine_amplitude), omega = std::abs(c.sine_frequency);
  AssumptionConstants k;
  k.provenance = ConstantsProvenance::analytic;
  k.c_fx = op_norm(symmetric_part(c.q)) * x_sup;
  k.l_fx = op_norm(symmetric_part(c.q));
  k.c_fa = 0.0;
  k.l_fa = op_norm(symmetric_part(c.r));
  k.mu = lambda_min_sym(c.r);
  k.nu = ell.nu();
  k.c_g = op_norm(symmetric_part(c.h)) * x_sup;
  k.l_g = op_norm(symmetric_part(c.h));
  k.c_bhat = op_norm(c.a + eps * omega * Mat::Identity(c.a.rows(), c.a.cols()));
  k.c_bbar = op_norm(c.b);
  k.l_bhat = eps * omega * omega;
  k.l_bbar = op_norm(c.b);
  k.kappa_bhat = lambda_max_sym(c.a) + eps * omega;
  k.c_sigma = c.sigma.norm();
  k.l_sigma = 0.0;
  std::ostringstream note;
  note << "quadratic cost gradients bounded on the state box of radius " << radius;
  k.notes.push_back(note.str());
  k.notes.push_back("L_bbar bounds |b_bar a - b_bar a'|, so it equals |B| for constant b_bar");
  return k;
}

ControlProblem make_drift_table_problem(const DriftTableCoefficients& c, double horizon, double discount,
                                        double initial_state, NonsmoothCost ell) {
  if (c.knots.size() < 2 || c.knots.size() != c.values.size())
    throw InputError("drift table: need at least two knots with matching values");
  for (size_t i = 1; i < c.knots.size(); ++i)
    if (!(c.knots[i] > c.knots[i - 1])) throw InputError("drift table: knots must be strictly increasing");

  ControlProblem p;
  p.horizon = horizon;
  p.discount = discount;
  p.state_dim = p.control_dim = p.noise_dim = 1;
  p.initial_state = make_vec({initial_state});
  p.ell = std::move(ell);
  p.family = "table";
  p.deterministic = c.sigma == 0.0;
  p.constant_sigma = true;

  auto segment = [knots = c.knots](double x) {
    auto it = std::upper_bound(knots.begin(), knots.end(), x);
    auto idx = static_cast<size_t>(std::distance(knots.begin(), it));
    return std::clamp<size_t>(idx, 1, knots.size() - 1) - 1;
  };
  auto slope = [knots = c.knots, values = c.values](size_t i) {
    return (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
  };
  p.b_hat = [segment, slope, knots = c.knots, values = c.values](double, const Vec& x) -> Vec {
    const size_t i = segment(x(0));
    return make_vec({values[i] + slope(i) * (x(0) - knots[i])});
  };
  p.dx_b_hat = [segment, slope](double, const Vec& x) -> Mat { return scalar_mat(slope(segment(x(0)))); };
  const double b = c.b, s = c.sigma, q = c.q, r = c.r, h = c.h;
  p.b_bar = [b](double, const Vec&) -> Mat { return scalar_mat(b); };
  p.dx_b_bar_a = [](double, const Vec&, const Vec&) -> Mat { return scalar_mat(0.0); };
  p.sigma = [s](double, const Vec&) -> Mat { return scalar_mat(s); };
  p.dx_sigma_z = [](double, const Vec&, const Mat&) -> Vec { return make_vec({0.0}); };
  p.f = [q, r](double, const Vec& x, const Vec& a) { return 0.5 * (q * x(0) * x(0) + r * a(0) * a(0)); };
  p.dx_f = [q](double, const Vec& x, const Vec&) -> Vec { return make_vec({q * x(0)}); };
  p.da_f = [r](double, const Vec&, const Vec& a) -> Vec { return make_vec({r * a(0)}); };
  p.g = [h](const Vec& x) { return 0.5 * h * x(0) * x(0); };
  p.dx_g = [h](const Vec& x) -> Vec { return make_vec({h * x(0)}); };
  p.validate();
  return p;
}

}  // namespace ppgm
