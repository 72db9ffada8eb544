#include "ppgm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace ppgm {

void LQSpec::validate() const {
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n || h.rows() != n || h.cols() != n ||
      r.rows() != b.cols() || r.cols() != b.cols() || sigma.rows() != n)
    throw DimensionError("LQ spec: inconsistent matrix shapes");
  if (!(horizon > 0.0)) throw InputError("LQ spec: horizon must be > 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(Eigen::MatrixXd(0.5 * (r + r.transpose())));
  if (er.eigenvalues().minCoeff() <= 0.0) throw InputError("LQ spec: R must be positive definite");
  for (const Mat* m : {&q, &h}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(0.5 * (*m + m->transpose())));
    if (es.eigenvalues().minCoeff() < -1e-12) throw InputError("LQ spec: Q and H must be positive semidefinite");
  }
}

LinearSineCoefficients LQSpec::coefficients() const {
  LinearSineCoefficients c;
  c.a = a;
  c.b = b;
  c.sigma = sigma;
  c.q = q;
  c.r = r;
  c.h = h;
  return c;
}

Mat RiccatiTrajectory::at(double t) const {
  if (times.empty()) throw InputError("Riccati trajectory is empty");
  if (t <= times.front()) return p.front();
  if (t >= times.back()) return p.back();
  auto it = std::upper_bound(times.begin(), times.end(), t);
  const size_t i = static_cast<size_t>(std::distance(times.begin(), it)) - 1;
  const double w = (t - times[i]) / (times[i + 1] - times[i]);
  return (1.0 - w) * p[i] + w * p[i + 1];
}

void RiccatiTrajectory::write_csv(std::ostream& os) const {
  if (p.empty()) return;
  const auto n = p.front().rows();
  os << 't';
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) os << ",P" << i + 1 << j + 1;
  os << '\n';
  char buf[40];
  for (size_t k = 0; k < times.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", times[k]);
    os << buf;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", p[k](i, j));
        os << ',' << buf;
      }
    os << '\n';
  }
}

RiccatiTrajectory riccati_solve(const LQSpec& spec, double dt) {
  spec.validate();
  const Mat rinv_bt = spec.r.inverse() * spec.b.transpose();
  const Mat brb = spec.b * rinv_bt;
  // dP/dt as a function of P.
  auto rhs = [&](const Mat& P) -> Mat {
    return -(spec.a.transpose() * P + P * spec.a - P * brb * P + spec.q);
  };
  RiccatiTrajectory out;
  out.times = uniform_times(spec.horizon, dt);
  const size_t N = out.times.size();
  out.p.assign(N, Mat());
  Mat P = 0.5 * (spec.h + spec.h.transpose());
  out.p[N - 1] = P;
  for (size_t i = N - 1; i-- > 0;) {
    const double h = -(out.times[i + 1] - out.times[i]);
    const Mat k1 = rhs(P);
    const Mat k2 = rhs(P + 0.5 * h * k1);
    const Mat k3 = rhs(P + 0.5 * h * k2);
    const Mat k4 = rhs(P + h * k3);
    P = P + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    P = 0.5 * (P + P.transpose());
    if (!P.allFinite() || P.norm() > 1e12) {
      std::ostringstream os;
      os << "Riccati blow-up (finite escape) at t = " << out.times[i];
      throw NumericalError(os.str());
    }
    out.p[i] = P;
  }
  return out;
}

Mat lq_gain(const LQSpec& spec, const RiccatiTrajectory& traj, double t) {
  return spec.r.inverse() * spec.b.transpose() * traj.at(t);
}

PolicyGrid lq_optimal_policy(const LQSpec& spec, const RiccatiTrajectory& traj, std::vector<double> times,
                             SpaceGrid space) {
  const int k = static_cast<int>(spec.b.cols());
  return PolicyGrid::from_function(std::move(times), std::move(space), k, NonsmoothCost::zero(),
                                   [&](double t, const Vec& x) -> Vec { return -(lq_gain(spec, traj, t) * x); });
}

double lq_optimal_cost(const LQSpec& spec, const RiccatiTrajectory& traj, const Vec& x0) {
  double noise = 0.0;
  const Mat ss = spec.sigma * spec.sigma.transpose();
  for (size_t i = 0; i + 1 < traj.times.size(); ++i) {
    const double h = traj.times[i + 1] - traj.times[i];
    noise += 0.5 * h * 0.5 * ((ss * traj.p[i]).trace() + (ss * traj.p[i + 1]).trace());
  }
  return 0.5 * x0.dot(traj.p.front() * x0) + noise;
}

}  // namespace ppgm
