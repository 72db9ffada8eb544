#include "helpers.hpp"

#include <doctest.h>

using namespace ppgm;
using namespace testing;

namespace {

// 2D affine-sine problem with a state-dependent diffusion, written out by hand
ControlProblem varying_sigma_problem() {
  ControlProblem p;
  p.state_dim = 2;
  p.control_dim = 1;
  p.noise_dim = 2;
  p.horizon = 1.0;
  p.discount = 0.4;
  p.initial_state = Vec::Zero(2);
  p.b_hat = [](double t, const Vec& x) { return make_vec({-x(0) + std::sin(x(1)), 0.5 * x(0) * x(1) + t}); };
  p.dx_b_hat = [](double, const Vec& x) {
    Mat m(2, 2);
    m << -1.0, std::cos(x(1)), 0.5 * x(1), 0.5 * x(0);
    return m;
  };
  p.b_bar = [](double, const Vec& x) {
    Mat m(2, 1);
    m << 1.0 + 0.1 * x(1), 0.5;
    return m;
  };
  p.dx_b_bar_a = [](double, const Vec&, const Vec& a) {
    Mat m = Mat::Zero(2, 2);
    m(0, 1) = 0.1 * a(0);
    return m;
  };
  p.sigma = [](double, const Vec& x) {
    Mat m(2, 2);
    m << 0.2 + 0.1 * std::sin(x(0)), 0.0, 0.05 * x(1), 0.3;
    return m;
  };
  p.dx_sigma_z = [](double, const Vec& x, const Mat& z) {
    return make_vec({0.1 * std::cos(x(0)) * z(0, 0), 0.05 * z(1, 0)});
  };
  p.f = [](double, const Vec& x, const Vec& a) { return 0.5 * x.squaredNorm() + 0.5 * a(0) * a(0) + x(0) * a(0) * 0.1; };
  p.dx_f = [](double, const Vec& x, const Vec& a) { return Vec(x + make_vec({0.1 * a(0), 0.0})); };
  p.da_f = [](double, const Vec& x, const Vec& a) { return make_vec({a(0) + 0.1 * x(0)}); };
  p.g = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
  p.dx_g = [](const Vec& x) { return x; };
  return p;
}

}  // namespace

TEST_CASE("drift examples") {
  auto p = lq_problem(scalar_lq());
  CHECK(drift(p, 0, make_vec({1.0}), make_vec({0.0}))(0) == -1.0);
  CHECK(drift(p, 0, make_vec({1.0}), make_vec({1.0}))(0) == 0.0);

  LinearSineCoefficients c;
  c.a = scalar_mat(0.0);
  c.b = (Mat(1, 2) << 1.0, 2.0).finished();
  c.sigma = scalar_mat(0.0);
  c.q = scalar_mat(1.0);
  c.r = Mat::Identity(2, 2);
  c.h = scalar_mat(1.0);
  c.sine_amplitude = 1.0;
  auto ps = make_linear_sine_problem(c, 1.0, 0.0, make_vec({0.0}), NonsmoothCost::zero());
  CHECK(drift(ps, 0, make_vec({0.0}), make_vec({1.0, 1.0}))(0) == 3.0);
  CHECK(drift(ps, 0, make_vec({0.5}), make_vec({0.0, 0.0}))(0) == doctest::Approx(std::sin(0.5)));
  CHECK_THROWS_AS(drift(ps, 0, make_vec({0.0}), make_vec({1.0})), DimensionError);
}

TEST_CASE("hamiltonian_re examples") {
  ScalarSpec zero;
  auto p0 = scalar_problem(zero);
  CHECK(hamiltonian_re(p0, 0.3, make_vec({2.0}), make_vec({-1.0}), make_vec({0.0})) == 0.0);

  auto p = lq_problem(scalar_lq(-1, 1, 0.1, 1, 1, 1, 1));
  CHECK(hamiltonian_re(p, 0, make_vec({1.0}), make_vec({1.0}), make_vec({2.0})) == 1.0);
  auto p1 = lq_problem(scalar_lq(), NonsmoothCost::zero(), 1.0);
  CHECK(hamiltonian_re(p1, 0, make_vec({1.0}), make_vec({1.0}), make_vec({2.0})) == -1.0);
}

TEST_CASE("grad_a_hamiltonian_re examples") {
  auto p = lq_problem(scalar_lq(-1, 1, 0.0, 1, 0.0, 1, 0));
  CHECK(grad_a_hamiltonian_re(p, 0, make_vec({0.7}), make_vec({0.0}), make_vec({3.0}))(0) == 3.0);
  CHECK(grad_a_hamiltonian_re(p, 0, make_vec({-0.2}), make_vec({2.0}), make_vec({0.0}))(0) == 2.0);
}

TEST_CASE("grad_x_hamiltonian examples") {
  ScalarSpec zero;
  zero.bbar = 0.0;
  auto p0 = scalar_problem(zero);
  CHECK(grad_x_hamiltonian(p0, 0, make_vec({1.0}), make_vec({1.0}), make_vec({1.0}), Mat::Zero(1, 1))(0) == 0.0);

  // kappa y - rho y + d_x f with kappa = -1, rho = 0.5, y = 2, d_x f = 1
  auto p = lq_problem(scalar_lq(-1, 1, 0.0, 1, 1, 1, 1), NonsmoothCost::zero(), 0.5);
  CHECK(grad_x_hamiltonian(p, 0, make_vec({1.0}), make_vec({0.0}), make_vec({2.0}), Mat::Zero(1, 1))(0) == -2.0);
}

TEST_CASE("Hamiltonian gradients agree with central differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  const double h = 1e-5;
  auto check = [&](const ControlProblem& p) {
    for (int s = 0; s < 100; ++s) {
      const double t = ut(rng);
      const Vec x = random_vec(rng, p.state_dim, -2, 2), a = random_vec(rng, p.control_dim, -2, 2),
                y = random_vec(rng, p.state_dim, -2, 2);
      Mat z(p.state_dim, p.noise_dim);
      for (int i = 0; i < z.size(); ++i) z(i) = random_vec(rng, 1, -1, 1)(0);
      const Vec ga = grad_a_hamiltonian_re(p, t, x, a, y);
      for (int i = 0; i < p.control_dim; ++i) {
        Vec ap = a, am = a;
        ap(i) += h;
        am(i) -= h;
        const double fd = (hamiltonian_re(p, t, x, ap, y) - hamiltonian_re(p, t, x, am, y)) / (2 * h);
        CHECK(std::abs(fd - ga(i)) <= 1e-6 * std::max(1.0, std::abs(ga(i))));
      }
      const Vec gx = grad_x_hamiltonian(p, t, x, a, y, z);
      for (int i = 0; i < p.state_dim; ++i) {
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const double fd = (hamiltonian(p, t, xp, a, y, z) - hamiltonian(p, t, xm, a, y, z)) / (2 * h);
        CHECK(std::abs(fd - gx(i)) <= 1e-5 * std::max(1.0, std::abs(gx(i))));
      }
    }
  };
  check(varying_sigma_problem());

  LinearSineCoefficients c;
  c.a = (Mat(2, 2) << -1.0, 0.5, 0.0, -2.0).finished();
  c.b = (Mat(2, 2) << 1.0, 0.0, 0.3, 1.0).finished();
  c.sigma = (Mat(2, 1) << 0.1, 0.2).finished();
  c.q = (Mat(2, 2) << 2.0, 0.5, 0.5, 1.0).finished();
  c.r = (Mat(2, 2) << 1.0, 0.2, 0.2, 0.5).finished();
  c.h = Mat::Identity(2, 2);
  c.sine_amplitude = 0.5;
  c.sine_frequency = 3.0;
  check(make_linear_sine_problem(c, 1.0, 0.2, Vec::Zero(2), NonsmoothCost::zero()));
}

TEST_CASE("drift is exactly affine in the action") {
  const auto p = varying_sigma_problem();
  std::mt19937_64 rng(4);
  for (int s = 0; s < 200; ++s) {
    const Vec x = random_vec(rng, 2, -2, 2), a = random_vec(rng, 1, -3, 3), b = random_vec(rng, 1, -3, 3);
    const double lam = random_vec(rng, 1, -1, 2)(0);
    const Vec lhs = drift(p, 0.2, x, lam * a + (1 - lam) * b);
    const Vec rhs = lam * drift(p, 0.2, x, a) + (1 - lam) * drift(p, 0.2, x, b);
    CHECK((lhs - rhs).norm() <= 1e-12 * (1 + rhs.norm()));
  }
}

TEST_CASE("a -> grad_a H^re is L_fa-Lipschitz and mu-monotone") {
  LinearSineCoefficients c;
  c.a = Mat::Identity(2, 2) * -1;
  c.b = Mat::Identity(2, 2);
  c.sigma = Mat::Zero(2, 2);
  c.q = Mat::Identity(2, 2);
  c.r = (Mat(2, 2) << 2.0, 0.5, 0.5, 1.0).finished();
  c.h = Mat::Identity(2, 2);
  auto p = make_linear_sine_problem(c, 1.0, 0.0, Vec::Zero(2), NonsmoothCost::zero());
  const auto k = linear_sine_constants(c, 2.0, NonsmoothCost::zero());
  std::mt19937_64 rng(8);
  for (int s = 0; s < 300; ++s) {
    const Vec x = random_vec(rng, 2, -2, 2), y = random_vec(rng, 2, -3, 3);
    const Vec a = random_vec(rng, 2, -3, 3), b = random_vec(rng, 2, -3, 3);
    const Vec d = grad_a_hamiltonian_re(p, 0, x, a, y) - grad_a_hamiltonian_re(p, 0, x, b, y);
    CHECK(d.norm() <= k.l_fa * (a - b).norm() * (1 + 1e-12));
    CHECK(d.dot(a - b) >= k.mu * (a - b).squaredNorm() * (1 - 1e-12));
  }
}

TEST_CASE("probed constants of the scalar LQ problem") {
  auto p = lq_problem(scalar_lq(-1, 1, 0.1));
  const auto k = probe_assumption_constants(p, SampleBox::symmetric(1, 1, 2.0, 2.0), 2000);
  CHECK(k.provenance == ConstantsProvenance::empirical_lower_bound);
  CHECK(k.mu == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(k.l_fa == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(k.kappa_bhat == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(k.c_sigma == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(k.l_sigma == 0.0);
  CHECK(k.l_fx == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(k.c_fx <= 2.0 + 1e-12);
  CHECK(k.c_fx > 1.8);
}

TEST_CASE("analytic constants of the linear family") {
  const auto s = scalar_lq(-1, 1, 0.1);
  const auto k = linear_sine_constants(s.coefficients(), 2.0, NonsmoothCost::zero());
  CHECK(k.provenance == ConstantsProvenance::analytic);
  CHECK(k.mu == 1.0);
  CHECK(k.l_fa == 1.0);
  CHECK(k.kappa_bhat == -1.0);
  CHECK(k.c_fx == 2.0);
  CHECK(k.l_fx == 1.0);
  CHECK(k.c_g == 2.0);
  CHECK(k.l_g == 1.0);
  CHECK(k.c_bbar == 1.0);
  CHECK(k.l_bbar == 1.0);
  CHECK(k.c_sigma == doctest::Approx(0.1));
  CHECK(k.nu == 0.0);
  // probing on the same box never exceeds the analytic values
  const auto probed = probe_assumption_constants(lq_problem(s), SampleBox::symmetric(1, 1, 2.0, 2.0), 1000);
  CHECK(probed.c_fx <= k.c_fx + 1e-12);
  CHECK(probed.c_g <= k.c_g + 1e-12);
  CHECK(probed.kappa_bhat <= k.kappa_bhat + 1e-12);
}

TEST_CASE("constants validation") {
  AssumptionConstants k;
  k.l_fa = 1.0;
  try {
    k.validate();
    FAIL("expected an exception");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("(H.1)(3)") != std::string::npos);
  }
  k.nu = 0.5;
  CHECK_NOTHROW(k.validate());
  k.mu = 2.0;  // mu > L_fa
  CHECK_THROWS_AS(k.validate(), InputError);
  k.mu = 0.5;
  k.c_fx = -1;
  CHECK_THROWS_AS(k.validate(), InputError);
}

TEST_CASE("control-affinity defect detects a non-affine full drift") {
  auto p = lq_problem(scalar_lq());
  const auto box = SampleBox::symmetric(1, 1, 2.0, 2.0);
  CHECK(affine_drift_defect(p, box, 200) < 1e-12);
  p.full_drift = [](double, const Vec& x, const Vec& a) { return make_vec({-x(0) + a(0) + 0.1 * a(0) * a(0)}); };
  CHECK(affine_drift_defect(p, box, 200) > 0.01);
}

TEST_CASE("drift table problem interpolates and extrapolates linearly") {
  DriftTableCoefficients t;
  t.knots = {-1.0, 0.0, 1.0};
  t.values = {1.0, 0.0, -2.0};
  auto p = make_drift_table_problem(t, 1.0, 0.0, 0.5, NonsmoothCost::zero());
  CHECK(p.b_hat(0, make_vec({0.5}))(0) == doctest::Approx(-1.0));
  CHECK(p.b_hat(0, make_vec({-0.5}))(0) == doctest::Approx(0.5));
  CHECK(p.b_hat(0, make_vec({2.0}))(0) == doctest::Approx(-4.0));
  CHECK(p.dx_b_hat(0, make_vec({0.5}))(0, 0) == doctest::Approx(-2.0));
  const auto k = probe_assumption_constants(p, SampleBox::symmetric(1, 1, 2.0, 2.0), 2000);
  CHECK(k.kappa_bhat <= -1.0 + 1e-9);
  CHECK(k.kappa_bhat >= -2.0);
}

TEST_CASE("problem validation") {
  auto p = lq_problem(scalar_lq());
  CHECK_NOTHROW(p.validate());
  p.horizon = 0;
  CHECK_THROWS_AS(p.validate(), InputError);
  p = lq_problem(scalar_lq());
  p.da_f = nullptr;
  CHECK_THROWS_AS(p.validate(), InputError);
  p = lq_problem(scalar_lq());
  p.initial_state = make_vec({1.0, 2.0});
  CHECK_THROWS_AS(p.validate(), DimensionError);
}
