#include "helpers.hpp"

#include <doctest.h>

#include "ppgm/prox.hpp"

using namespace ppgm;
using testing::random_vec;

namespace {

double bisect_omega() {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::exp(mid) < 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<NonsmoothCost> variants(int k) {
  std::vector<NonsmoothCost> v{NonsmoothCost::zero(), NonsmoothCost::zero(0.7),
                               NonsmoothCost::box(Vec::Constant(k, -1.0), Vec::Constant(k, 0.5)),
                               NonsmoothCost::weighted_l1(Vec::LinSpaced(k, 0.2, 1.0)),
                               NonsmoothCost::weighted_l1(Vec::Constant(k, 0.5), 1.5)};
  if (k >= 2) v.push_back(NonsmoothCost::relative_entropy(Vec::LinSpaced(k, 1.0, 2.0) / Vec::LinSpaced(k, 1.0, 2.0).sum()));
  v.push_back(NonsmoothCost::convex_set([](const Vec& a) { return a.norm() <= 1 ? a : Vec(a / a.norm()); }, "ball"));
  return v;
}

}  // namespace

TEST_CASE("prox of the zero cost is the identity") {
  const Vec a = make_vec({0.3, -2.0});
  CHECK((prox(NonsmoothCost::zero(), 0.7, a) - a).norm() == 0.0);
}

TEST_CASE("box prox is the orthogonal projection") {
  const auto box = NonsmoothCost::box(make_vec({-1.0}), make_vec({1.0}));
  CHECK(prox(box, 0.3, make_vec({2.0}))(0) == 1.0);
  CHECK(prox(box, 0.3, make_vec({-0.4}))(0) == -0.4);
}

TEST_CASE("weighted l1 prox is soft thresholding") {
  const Vec p = prox(NonsmoothCost::weighted_l1(make_vec({1.0, 1.0})), 0.5, make_vec({2.0, 0.3}));
  CHECK(p(0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(p(1) == 0.0);
}

TEST_CASE("entropy prox of a symmetric point is the simplex midpoint") {
  const auto ent = NonsmoothCost::relative_entropy(make_vec({0.5, 0.5}));
  for (double c : {-3.0, 0.0, 0.4, 25.0}) {
    const Vec p = prox(ent, 0.8, make_vec({c, c}));
    CHECK(p(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("Lambert W special values") {
  CHECK(lambert_w(0.0) == 0.0);
  CHECK(lambert_w(std::exp(1.0)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(lambert_w(1.0) - bisect_omega()) < 1e-14);
  CHECK(std::abs(lambert_w(1.0) - 0.567143290409784) < 1e-14);
  CHECK_THROWS_AS(lambert_w(-0.1), InputError);
}

TEST_CASE("Lambert W log-space branch agrees with the direct branch") {
  for (double z : {-5.0, 0.0, 3.0, 50.0, 690.0}) {
    const double w = lambert_w_exp(z);
    CHECK(w + std::log(w) == doctest::Approx(z).epsilon(1e-13));
    CHECK(w == doctest::Approx(lambert_w(std::exp(z))).epsilon(1e-13));
  }
  const double big = lambert_w_exp(5000.0);
  CHECK(std::isfinite(big));
  CHECK(big + std::log(big) == doctest::Approx(5000.0).epsilon(1e-14));
}

TEST_CASE("entropy multiplier solves its defining equation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 1.0), ut(0.05, 3.0);
  for (int s = 0; s < 200; ++s) {
    const int k = 2 + s % 2;
    Vec ref(k);
    for (int i = 0; i < k; ++i) ref(i) = u(rng);
    ref /= ref.sum();
    const double tau = ut(rng);
    const Vec a = random_vec(rng, k, -5, 5);
    const double lam = entropy_prox_multiplier(ref, tau, a);
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += tau * lambert_w_exp(std::log(ref(i) / tau) + (lam + a(i)) / tau - 1.0);
    CHECK(std::abs(total - 1.0) < 1e-10);
  }
}

TEST_CASE("entropy multiplier in the symmetric case") {
  // 2 W(e^{lambda-1}/2) = 1  =>  W = 1/2  =>  e^{lambda-1}/2 = e^{1/2}/2  =>  lambda = 3/2
  const double lam = entropy_prox_multiplier(make_vec({0.5, 0.5}), 1.0, make_vec({0.0, 0.0}));
  CHECK(lam == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("entropy prox stays in the open simplex, even for huge arguments") {
  std::mt19937_64 rng(5);
  const auto ent = NonsmoothCost::relative_entropy(make_vec({0.2, 0.3, 0.5}));
  for (int s = 0; s < 300; ++s) {
    const double scale = s < 150 ? 3.0 : 2000.0;
    const Vec a = random_vec(rng, 3, -scale, scale);
    const Vec p = prox(ent, 0.05 + (s % 7) * 0.3, a);
    // beyond ~700 tau apart the small weights underflow in double precision
    if (s < 150) CHECK(p.minCoeff() > 0.0);
    else CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-10);
  }
}

TEST_CASE("prox contraction factor") {
  CHECK(prox_contraction_factor(NonsmoothCost::zero(), 3.0) == 1.0);
  CHECK(prox_contraction_factor(NonsmoothCost::zero(1.0), 1.0) == 0.5);
  CHECK(prox_contraction_factor(NonsmoothCost::relative_entropy(make_vec({0.5, 0.5})), 1.0) == 0.5);
}

TEST_CASE("prox is firmly nonexpansive and contracts by 1/(1 + tau nu)") {
  std::mt19937_64 rng(3);
  for (int k = 1; k <= 3; ++k)
    for (const auto& ell : variants(k)) {
      double worst = 0.0;
      for (int s = 0; s < 300; ++s) {
        const double tau = 0.05 + 0.01 * (s % 200);
        const Vec a = random_vec(rng, k, -3, 3), b = random_vec(rng, k, -3, 3);
        const Vec pa = prox(ell, tau, a), pb = prox(ell, tau, b);
        // firm nonexpansiveness: |pa - pb|^2 <= <pa - pb, a - b>
        CHECK((pa - pb).squaredNorm() <= (pa - pb).dot(a - b) + 1e-9);
        worst = std::max(worst, (pa - pb).norm() / (a - b).norm() - prox_contraction_factor(ell, tau));
      }
      INFO(ell.name());
      CHECK(worst <= 1e-9);
    }
}

TEST_CASE("optimality certificate: a - prox(a) lies in tau times the subdifferential") {
  std::mt19937_64 rng(9);
  const auto l1 = NonsmoothCost::weighted_l1(make_vec({0.3, 0.8}));
  const auto box = NonsmoothCost::box(make_vec({-1.0, 0.0}), make_vec({0.5, 2.0}));
  for (int s = 0; s < 500; ++s) {
    const double tau = 0.1 + 0.005 * s;
    const Vec a = random_vec(rng, 2, -3, 3);
    for (const auto* ell : {&l1, &box}) {
      const Vec p = prox(*ell, tau, a);
      const Vec z = (a - p) / tau;
      // componentwise check against the known subdifferential
      for (int i = 0; i < 2; ++i) {
        if (ell == &l1) {
          const double g = i == 0 ? 0.3 : 0.8;
          if (p(i) != 0.0) CHECK(z(i) == doctest::Approx(g * (p(i) > 0 ? 1 : -1)).epsilon(1e-12));
          else CHECK(std::abs(z(i)) <= g + 1e-12);
        } else {
          const double lo = i == 0 ? -1.0 : 0.0, hi = i == 0 ? 0.5 : 2.0;
          if (p(i) > lo && p(i) < hi) CHECK(std::abs(z(i)) < 1e-12);
          if (p(i) == lo) CHECK(z(i) <= 1e-12);
          if (p(i) == hi) CHECK(z(i) >= -1e-12);
        }
      }
      CHECK(is_subgradient(*ell, p, z, 1e-9));
    }
  }
}

TEST_CASE("prox matches dense grid search for k = 1") {
  std::mt19937_64 rng(17);
  for (const auto& ell : variants(1)) {
    for (int s = 0; s < 30; ++s) {
      const double tau = 0.1 + 0.06 * s;
      const Vec a = random_vec(rng, 1, -3, 3);
      double best = 0, best_v = std::numeric_limits<double>::infinity();
      for (int i = -6000; i <= 6000; ++i) {
        const double p = i * 1e-3;
        const double v = 0.5 * (p - a(0)) * (p - a(0)) + tau * ell.value(make_vec({p}));
        if (v < best_v) best_v = v, best = p;
      }
      INFO(ell.name(), " a=", a(0), " tau=", tau);
      CHECK(std::abs(prox(ell, tau, a)(0) - best) <= 1e-3);
    }
  }
}

TEST_CASE("project_simplex") {
  const Vec p = project_simplex(make_vec({0.2, 0.2, 5.0}));
  CHECK(p(2) == doctest::Approx(1.0));
  CHECK(p(0) == 0.0);
  const Vec q = project_simplex(make_vec({0.5, 0.5}));
  CHECK(q(0) == doctest::Approx(0.5));
  std::mt19937_64 rng(1);
  for (int s = 0; s < 100; ++s) {
    const Vec r = project_simplex(random_vec(rng, 3, -2, 2));
    CHECK(r.minCoeff() >= 0.0);
    CHECK(r.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cost values, feasibility and dimension checks") {
  const auto box = NonsmoothCost::box(make_vec({-1.0}), make_vec({1.0}));
  CHECK(box.value(make_vec({0.2})) == 0.0);
  CHECK(std::isinf(box.value(make_vec({1.2}))));
  CHECK(box.feasible(make_vec({1.0})));
  CHECK_FALSE(box.feasible(make_vec({1.1})));
  const auto ent = NonsmoothCost::relative_entropy(make_vec({0.5, 0.5}));
  CHECK(ent.value(make_vec({0.5, 0.5})) == doctest::Approx(0.0));
  CHECK(ent.value(make_vec({1.0, 0.0})) == doctest::Approx(std::log(2.0)));
  CHECK(std::isinf(ent.value(make_vec({0.7, 0.7}))));
  CHECK(ent.nu() == 1.0);
  CHECK(NonsmoothCost::zero(2.5).nu() == 2.5);
  CHECK_THROWS(prox(ent, 1.0, make_vec({1.0})));
  CHECK_THROWS(prox(box, 0.0, make_vec({1.0})));
  CHECK_THROWS(NonsmoothCost::relative_entropy(make_vec({0.4, 0.4})));
  CHECK_THROWS(NonsmoothCost::box(make_vec({1.0}), make_vec({0.0})));
}

TEST_CASE("subgradient predicate") {
  const auto l1 = NonsmoothCost::weighted_l1(make_vec({1.0}));
  CHECK(is_subgradient(l1, make_vec({0.0}), make_vec({0.5})));
  CHECK_FALSE(is_subgradient(l1, make_vec({0.0}), make_vec({1.5})));
  CHECK(is_subgradient(l1, make_vec({2.0}), make_vec({1.0})));
  const auto ent = NonsmoothCost::relative_entropy(make_vec({0.5, 0.5}));
  // gradient at the uniform point is (1, 1), equivalent to zero modulo the ones direction
  CHECK(is_subgradient(ent, make_vec({0.5, 0.5}), make_vec({0.0, 0.0})));
  CHECK(is_subgradient(ent, make_vec({0.5, 0.5}), make_vec({3.0, 3.0})));
  CHECK_FALSE(is_subgradient(ent, make_vec({0.5, 0.5}), make_vec({1.0, 0.0})));
}
