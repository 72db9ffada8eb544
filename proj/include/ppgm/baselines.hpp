#pragma once

#include "ppgm/policy.hpp"
#include "ppgm/problem.hpp"

#include <iosfwd>
#include <vector>

namespace ppgm {

/// Undiscounted linear-quadratic problem dx = (A x + B a) dt + sigma dW,
/// cost int 1/2 (x'Qx + a'Ra) dt + 1/2 x'Hx.
struct LQSpec {
  Mat a, b, q, r, h;
  Mat sigma;
  double horizon = 1.0;

  void validate() const;
  LinearSineCoefficients coefficients() const;
};

struct RiccatiTrajectory {
  std::vector<double> times;
  std::vector<Mat> p;

  /// Linear interpolation between stored knots.
  Mat at(double t) const;
  void write_csv(std::ostream& os) const;
};

/// Backward RK4 for -dP/dt = A'P + PA - P B R^{-1} B' P + Q, P(T) = H.
RiccatiTrajectory riccati_solve(const LQSpec& spec, double dt);

/// Feedback gain K(t) = R^{-1} B' P(t), so phi*(t, x) = -K(t) x.
Mat lq_gain(const LQSpec& spec, const RiccatiTrajectory& traj, double t);

PolicyGrid lq_optimal_policy(const LQSpec& spec, const RiccatiTrajectory& traj, std::vector<double> times,
                             SpaceGrid space);

/// 1/2 x0' P(0) x0 + 1/2 int tr(sigma sigma' P) dt.
double lq_optimal_cost(const LQSpec& spec, const RiccatiTrajectory& traj, const Vec& x0);

}  // namespace ppgm
