#include "helpers.hpp"

#include <doctest.h>

#include <sstream>

using namespace ppgm;
using namespace testing;

TEST_CASE("zero state costs give a zero Riccati solution") {
  const auto s = scalar_lq(0.7, 1, 0.1, 1, 0, 1, 0);
  const auto traj = riccati_solve(s, 0.01);
  for (const auto& P : traj.p) CHECK(P(0, 0) == 0.0);
  const auto g = coarse_grid(1.0, 0.1, 0.05);
  const auto phi = lq_optimal_policy(s, traj, g.times(1.0), g.space(1));
  for (double v : phi.values().raw()) CHECK(v == 0.0);
}

TEST_CASE("P' = P^2 from P(T) = 1 has P(t) = 1 / (1 + T - t)") {
  for (double T : {0.5, 1.0, 3.0}) {
    const auto s = scalar_lq(0, 1, 0, T, 0, 1, 1);
    const auto traj = riccati_solve(s, 0.01);
    CHECK(traj.times.front() == 0.0);
    CHECK(traj.times.back() == doctest::Approx(T));
    for (std::size_t i = 0; i < traj.times.size(); i += 7)
      CHECK(traj.p[i](0, 0) == doctest::Approx(1.0 / (1.0 + T - traj.times[i])).epsilon(1e-9));
    CHECK(lq_gain(s, traj, 0.0)(0, 0) == doctest::Approx(1.0 / (1.0 + T)).epsilon(1e-9));
    const auto g = coarse_grid(1.0, 0.1, 0.01);
    const auto phi = lq_optimal_policy(s, traj, g.times(T), g.space(1));
    CHECK(phi.eval(0.0, make_vec({1.0}))(0) == doctest::Approx(-1.0 / (1.0 + T)).epsilon(1e-9));
  }
}

TEST_CASE("RK4 error shrinks at fourth order") {
  const double exact = riccati_closed_form(0.0, 1.0);
  const auto s = scalar_lq();
  double prev = 0.0;
  for (double dt : {0.1, 0.05, 0.025}) {
    const double err = std::abs(riccati_solve(s, dt).p.front()(0, 0) - exact);
    if (prev > 0.0) {
      MESSAGE("dt=", dt, " ratio=", prev / err);
      CHECK(prev / err > 12.0);
      CHECK(prev / err < 20.0);
    }
    prev = err;
  }
  // and the dt vs dt/2 gap itself is tiny
  const double d = std::abs(riccati_solve(s, 0.01).p.front()(0, 0) - riccati_solve(s, 0.005).p.front()(0, 0));
  CHECK(d < 1e-9);
}

TEST_CASE("closed form and matrix Riccati agree") {
  const auto traj = riccati_solve(scalar_lq(), 1e-3);
  for (double t : {0.0, 0.3, 0.77, 1.0}) CHECK(traj.at(t)(0, 0) == doctest::Approx(riccati_closed_form(t, 1.0)).epsilon(1e-9));
  // a 2D problem with decoupled blocks reduces to two scalar problems
  LQSpec s;
  s.a = Mat::Identity(2, 2) * -1.0;
  s.b = Mat::Identity(2, 2);
  s.q = s.r = s.h = Mat::Identity(2, 2);
  s.sigma = Mat::Identity(2, 2) * 0.1;
  const auto t2 = riccati_solve(s, 1e-3);
  const Mat P = t2.at(0.0);
  CHECK(P(0, 0) == doctest::Approx(riccati_closed_form(0.0, 1.0)).epsilon(1e-9));
  CHECK(P(1, 1) == doctest::Approx(P(0, 0)));
  CHECK(std::abs(P(0, 1)) < 1e-15);
}

TEST_CASE("policy seminorm is the largest gain on the grid") {
  const auto s = scalar_lq();
  const auto traj = riccati_solve(s, 1e-3);
  const auto g = coarse_grid(2.0, 0.1, 0.01);
  const auto phi = lq_optimal_policy(s, traj, g.times(1.0), g.space(1));
  double kmax = 0.0;
  for (double t : g.times(1.0)) kmax = std::max(kmax, std::abs(lq_gain(s, traj, t)(0, 0)));
  CHECK(lipschitz_seminorm(phi) == doctest::Approx(kmax).epsilon(1e-12));
}

TEST_CASE("optimal cost formula") {
  // deterministic: cost = P(0) x0^2 / 2
  const auto s0 = scalar_lq(-1, 1, 0.0);
  const auto t0 = riccati_solve(s0, 1e-3);
  CHECK(lq_optimal_cost(s0, t0, make_vec({2.0})) == doctest::Approx(2.0 * riccati_closed_form(0.0, 1.0)).epsilon(1e-9));
  // noise adds sigma^2/2 int P dt; trapezoid over the closed form as oracle
  const auto s = scalar_lq(-1, 1, 0.3);
  const auto t1 = riccati_solve(s, 1e-3);
  double integral = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i)
    integral += 0.5 * (riccati_closed_form(double(i) / n, 1.0) + riccati_closed_form(double(i + 1) / n, 1.0)) / n;
  const double expect = 0.5 * riccati_closed_form(0.0, 1.0) + 0.5 * 0.09 * integral;
  CHECK(lq_optimal_cost(s, t1, make_vec({1.0})) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("Riccati policy is a fixed point up to the field error") {
  const auto s = scalar_lq(-1, 1, 0.1);
  const auto p = lq_problem(s);
  const auto traj = riccati_solve(s, 1e-4);
  for (double f : {1.0, 0.5}) {
    const auto g = coarse_grid(2.0, 0.05 * f, 2e-3 * f);
    const auto phi = lq_optimal_policy(s, traj, g.times(1.0), g.space(1));
    const auto field = solve_gradient_field(p, phi, g);
    double err = 0.0;
    for (std::size_t ti = 0; ti < field.y.time_count(); ++ti) {
      const double P = traj.at(field.y.times()[ti])(0, 0);
      for (std::size_t k = 0; k < field.y.space().size(); ++k)
        err = std::max(err, std::abs(field.y.data(ti, k)[0] - P * field.y.space().node(k)(0)));
    }
    const double tau = 0.5;
    const double res = stationarity_residual(p, phi, field, tau);
    MESSAGE("grid factor ", f, " field error ", err, " residual ", res);
    CHECK(res > 0.0);
    CHECK(res <= 10 * tau * err);
    CHECK(res < 5e-3);
  }
}

TEST_CASE("Riccati policy beats nearby policies on common random numbers") {
  const auto s = scalar_lq(-1, 1, 0.3);
  const auto p = lq_problem(s);
  const auto traj = riccati_solve(s, 1e-3);
  const auto g = coarse_grid(3.0, 0.05, 1e-2);
  const auto opt = lq_optimal_policy(s, traj, g.times(1.0), g.space(1));
  const std::size_t M = 4000;
  const double dt = 1e-2;
  const auto base = evaluate_cost(p, opt, simulate_state(p, opt, M, dt, 99));
  for (double amp : {-0.3, -0.1, 0.1, 0.3}) {
    auto bumped = opt;
    for (std::size_t ti = 0; ti < bumped.values().time_count(); ++ti)
      for (std::size_t k = 0; k < bumped.values().space().size(); ++k) {
        const double x = bumped.values().space().node(k)(0);
        bumped.mutable_values().data(ti, k)[0] += amp * std::exp(-x * x);
      }
    const auto c = evaluate_cost(p, bumped, simulate_state(p, bumped, M, dt, 99));
    CHECK(base.mean <= c.mean + 2 * c.std_error);
  }
}

TEST_CASE("trajectory csv") {
  const auto traj = riccati_solve(scalar_lq(), 0.25);
  std::ostringstream os;
  traj.write_csv(os);
  const auto text = os.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}

TEST_CASE("LQ validation") {
  CHECK_THROWS_AS(riccati_solve(scalar_lq(-1, 1, 0.1, 1, 1, 0, 1), 0.01), InputError);
  CHECK_THROWS_AS(riccati_solve(scalar_lq(-1, 1, 0.1, 1, -1, 1, 1), 0.01), InputError);
  CHECK_THROWS_AS(riccati_solve(scalar_lq(-1, 1, 0.1, 1, 1, 1, -1), 0.01), InputError);
  CHECK_THROWS_AS(riccati_solve(scalar_lq(), 0.0), InputError);
  auto s = scalar_lq();
  s.b = Mat::Ones(2, 1);
  CHECK_THROWS(riccati_solve(s, 0.01));
}
