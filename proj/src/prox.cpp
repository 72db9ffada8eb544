#include "ppgm/prox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace ppgm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_dim(const Vec& a, Eigen::Index k, const char* what) {
  if (a.size() != k) {
    std::ostringstream os;
    os << what << ": expected dimension " << k << ", got " << a.size();
    throw DimensionError(os.str());
  }
}

double soft_threshold(double x, double t) { return std::copysign(std::max(std::abs(x) - t, 0.0), x); }

Vec prox_base(const NonsmoothCost::Variant& v, double tau, const Vec& a, const LambertOptions& opts) {
  return std::visit(
      Overloaded{
          [&](const ZeroCost&) -> Vec { return a; },
          [&](const BoxIndicator& b) -> Vec {
            require_dim(a, b.lower.size(), "box prox");
            return a.cwiseMax(b.lower).cwiseMin(b.upper);
          },
          [&](const ConvexSetIndicator& c) -> Vec { return c.project(a); },
          [&](const WeightedL1& l1) -> Vec {
            require_dim(a, l1.gamma.size(), "l1 prox");
            Vec p(a.size());
            for (Eigen::Index i = 0; i < a.size(); ++i) p(i) = soft_threshold(a(i), tau * l1.gamma(i));
            return p;
          },
          [&](const RelativeEntropySimplex& e) -> Vec {
            require_dim(a, e.reference.size(), "entropy prox");
            const double lambda = entropy_prox_multiplier(e.reference, tau, a, opts);
            Vec p(a.size());
            for (Eigen::Index i = 0; i < a.size(); ++i) {
              const double z = std::log(e.reference(i) / tau) + (lambda + a(i)) / tau - 1.0;
              p(i) = tau * lambert_w_exp(z, opts);
            }
            return p;
          },
      },
      v);
}

// Initial guess ln(1+x) (1 - ln(1 + ln(1+x)) / (2 + ln(1+x))), a few percent
// accurate on [0, inf).
double lambert_initial_guess(double x) {
  const double l = std::log1p(x);
  return l * (1.0 - std::log1p(l) / (2.0 + l));
}

}  // namespace

NonsmoothCost::NonsmoothCost(Variant v, double ridge) : variant_(std::move(v)), ridge_(ridge) {
  if (!(ridge_ >= 0.0) || !std::isfinite(ridge_)) throw InputError("nonsmooth cost: ridge must be finite and >= 0");
  std::visit(Overloaded{
                 [](const ZeroCost&) {},
                 [](const BoxIndicator& b) {
                   if (b.lower.size() != b.upper.size() || b.lower.size() == 0)
                     throw InputError("box indicator: lower/upper dimension mismatch");
                   for (Eigen::Index i = 0; i < b.lower.size(); ++i)
                     if (!(b.lower(i) <= b.upper(i))) throw InputError("box indicator: empty box (lower > upper)");
                 },
                 [](const ConvexSetIndicator& c) {
                   if (!c.project) throw InputError("convex set indicator: missing projection");
                 },
                 [](const WeightedL1& l1) {
                   if (l1.gamma.size() == 0) throw InputError("weighted l1: empty weights");
                   for (Eigen::Index i = 0; i < l1.gamma.size(); ++i)
                     if (!(l1.gamma(i) >= 0.0) || !std::isfinite(l1.gamma(i)))
                       throw InputError("weighted l1: weights must be finite and nonnegative");
                 },
                 [](const RelativeEntropySimplex& e) {
                   if (e.reference.size() < 2) throw InputError("relative entropy: need at least two actions");
                   for (Eigen::Index i = 0; i < e.reference.size(); ++i)
                     if (!(e.reference(i) > 0.0)) throw InputError("relative entropy: reference weights must be > 0");
                   if (std::abs(e.reference.sum() - 1.0) > 1e-12)
                     throw InputError("relative entropy: reference weights must sum to 1");
                 },
             },
             variant_);
}

double NonsmoothCost::nu() const {
  double base = 0.0;
  if (const auto* e = std::get_if<RelativeEntropySimplex>(&variant_)) {
    // s log s is (min u)-strongly convex on [0, 1/min u]; divided by max u.
    base = e->reference.minCoeff() / e->reference.maxCoeff();
  }
  return base + ridge_;
}

double NonsmoothCost::value(const Vec& a) const {
  const double ridge_term = 0.5 * ridge_ * a.squaredNorm();
  const double base = std::visit(
      Overloaded{
          [&](const ZeroCost&) { return 0.0; },
          [&](const BoxIndicator&) { return feasible(a) ? 0.0 : kInf; },
          [&](const ConvexSetIndicator&) { return feasible(a) ? 0.0 : kInf; },
          [&](const WeightedL1& l1) {
            require_dim(a, l1.gamma.size(), "l1 value");
            return l1.gamma.dot(a.cwiseAbs());
          },
          [&](const RelativeEntropySimplex& e) {
            if (!feasible(a)) return kInf;
            double s = 0.0;
            for (Eigen::Index i = 0; i < a.size(); ++i)
              if (a(i) > 0.0) s += a(i) * std::log(a(i) / e.reference(i));
            return s;
          },
      },
      variant_);
  return base + ridge_term;
}

bool NonsmoothCost::feasible(const Vec& a, double tol) const {
  if (!a.allFinite()) return false;
  return std::visit(Overloaded{
                        [&](const ZeroCost&) { return true; },
                        [&](const BoxIndicator& b) {
                          if (a.size() != b.lower.size()) return false;
                          for (Eigen::Index i = 0; i < a.size(); ++i)
                            if (a(i) < b.lower(i) - tol || a(i) > b.upper(i) + tol) return false;
                          return true;
                        },
                        [&](const ConvexSetIndicator& c) { return (c.project(a) - a).norm() <= tol; },
                        [&](const WeightedL1& l1) { return a.size() == l1.gamma.size(); },
                        [&](const RelativeEntropySimplex& e) {
                          if (a.size() != e.reference.size()) return false;
                          if (a.minCoeff() < -tol) return false;
                          return std::abs(a.sum() - 1.0) <= tol;
                        },
                    },
                    variant_);
}

Vec NonsmoothCost::project_feasible(const Vec& a) const {
  return std::visit(Overloaded{
                        [&](const ZeroCost&) -> Vec { return a; },
                        [&](const BoxIndicator& b) -> Vec { return a.cwiseMax(b.lower).cwiseMin(b.upper); },
                        [&](const ConvexSetIndicator& c) -> Vec { return c.project(a); },
                        [&](const WeightedL1&) -> Vec { return a; },
                        [&](const RelativeEntropySimplex&) -> Vec { return project_simplex(a); },
                    },
                    variant_);
}

std::optional<int> NonsmoothCost::dimension() const {
  return std::visit(Overloaded{
                        [](const ZeroCost&) -> std::optional<int> { return std::nullopt; },
                        [](const BoxIndicator& b) -> std::optional<int> { return static_cast<int>(b.lower.size()); },
                        [](const ConvexSetIndicator&) -> std::optional<int> { return std::nullopt; },
                        [](const WeightedL1& l) -> std::optional<int> { return static_cast<int>(l.gamma.size()); },
                        [](const RelativeEntropySimplex& e) -> std::optional<int> {
                          return static_cast<int>(e.reference.size());
                        },
                    },
                    variant_);
}

std::string NonsmoothCost::name() const {
  return std::visit(Overloaded{
                        [](const ZeroCost&) -> std::string { return "zero"; },
                        [](const BoxIndicator&) -> std::string { return "box"; },
                        [](const ConvexSetIndicator& c) -> std::string { return c.name; },
                        [](const WeightedL1&) -> std::string { return "weighted_l1"; },
                        [](const RelativeEntropySimplex&) -> std::string { return "relative_entropy"; },
                    },
                    variant_);
}

double lambert_w(double x, const LambertOptions& opts) {
  if (!(x >= 0.0)) throw InputError("lambert_w: argument must be >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;
  if (x > 1e300) return lambert_w_exp(std::log(x), opts);
  double w = lambert_initial_guess(x);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    w -= step;
    if (std::abs(step) <= opts.rel_tol * std::abs(w)) break;
  }
  return w;
}

double lambert_w_exp(double z, const LambertOptions& opts) {
  if (std::isnan(z)) throw NumericalError("lambert_w_exp: NaN argument");
  if (z <= 700.0) return lambert_w(std::exp(z), opts);
  // Solve w + log w = z with Halley's method; w0 = z - log z is already close.
  double w = z - std::log(z);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double h = w + std::log(w) - z;
    const double dh = 1.0 + 1.0 / w;
    const double d2h = -1.0 / (w * w);
    const double step = h / (dh - 0.5 * h * d2h / dh);
    w -= step;
    if (std::abs(step) <= opts.rel_tol * w) break;
  }
  return w;
}

double entropy_prox_multiplier(const Vec& reference, double tau, const Vec& a, const LambertOptions& opts) {
  if (!(tau > 0.0)) throw InputError("entropy prox: tau must be > 0");
  require_dim(a, reference.size(), "entropy prox multiplier");
  const Eigen::Index k = a.size();
  std::vector<double> log_u_over_tau(static_cast<size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) log_u_over_tau[static_cast<size_t>(i)] = std::log(reference(i) / tau);

  // Total mass and its derivative d/dlambda sum tau W = sum W/(1+W).
  auto mass = [&](double lambda, double* slope) {
    double s = 0.0, ds = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double z = log_u_over_tau[static_cast<size_t>(i)] + (lambda + a(i)) / tau - 1.0;
      const double w = lambert_w_exp(z, opts);
      s += tau * w;
      ds += w / (1.0 + w);
    }
    if (slope) *slope = ds;
    return s;
  };

  // Start where the largest component alone would carry unit mass.
  const Eigen::Index imax = [&] {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < k; ++i)
      if (a(i) + tau * log_u_over_tau[static_cast<size_t>(i)] > a(best) + tau * log_u_over_tau[static_cast<size_t>(best)])
        best = i;
    return best;
  }();
  // tau W(e^z) = 1  <=>  z = 1/tau + log(1/tau)
  const double z_unit = 1.0 / tau - std::log(tau);
  double lambda = tau * (z_unit - log_u_over_tau[static_cast<size_t>(imax)] + 1.0) - a(imax);

  double lo = lambda, hi = lambda;
  double step = std::max(1.0, tau);
  int expansions = 0;
  while (mass(lo, nullptr) > 1.0) {
    lo -= step;
    step *= 2.0;
    if (++expansions > 2000 || !std::isfinite(lo)) throw NumericalError("entropy prox: lower bracket expansion failed");
  }
  step = std::max(1.0, tau);
  while (mass(hi, nullptr) < 1.0) {
    hi += step;
    step *= 2.0;
    if (++expansions > 4000 || !std::isfinite(hi)) throw NumericalError("entropy prox: upper bracket expansion failed");
  }

  lambda = std::clamp(lambda, lo, hi);
  double residual = kInf;
  for (int it = 0; it < 200; ++it) {
    double slope = 0.0;
    residual = mass(lambda, &slope) - 1.0;
    if (std::abs(residual) <= 1e-15) break;
    if (residual < 0.0)
      lo = lambda;
    else
      hi = lambda;
    double next = lambda - residual / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == lambda || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lambda))) {
      lambda = next;
      residual = mass(lambda, nullptr) - 1.0;
      break;
    }
    lambda = next;
  }
  if (!(std::abs(residual) <= 1e-10)) {
    std::ostringstream os;
    os << "entropy prox: multiplier did not converge (residual " << residual << ", tau " << tau << ")";
    throw NumericalError(os.str());
  }
  return lambda;
}

Vec prox(const NonsmoothCost& cost, double tau, const Vec& a, const LambertOptions& opts) {
  if (!(tau > 0.0)) throw InputError("prox: tau must be > 0");
  if (!a.allFinite()) throw NumericalError("prox: non-finite argument");
  if (cost.ridge() == 0.0) return prox_base(cost.variant(), tau, a, opts);
  const double shrink = 1.0 / (1.0 + tau * cost.ridge());
  return prox_base(cost.variant(), tau * shrink, a * shrink, opts);
}

double prox_contraction_factor(const NonsmoothCost& cost, double tau) {
  if (!(tau > 0.0)) throw InputError("prox_contraction_factor: tau must be > 0");
  return 1.0 / (1.0 + tau * cost.nu());
}

Vec project_simplex(const Vec& a) {
  const Eigen::Index k = a.size();
  std::vector<double> sorted(a.data(), a.data() + k);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    cumulative += sorted[static_cast<size_t>(j)];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (sorted[static_cast<size_t>(j)] - candidate > 0.0) theta = candidate;
  }
  return (a.array() - theta).cwiseMax(0.0).matrix();
}

bool is_subgradient(const NonsmoothCost& cost, const Vec& a0, const Vec& z, double tol) {
  if (!cost.feasible(a0, tol) || a0.size() != z.size()) return false;
  const Vec zb = z - cost.ridge() * a0;
  return std::visit(
      Overloaded{
          [&](const ZeroCost&) { return zb.norm() <= tol; },
          [&](const BoxIndicator& b) {
            for (Eigen::Index i = 0; i < a0.size(); ++i) {
              const bool at_lower = a0(i) <= b.lower(i) + tol;
              const bool at_upper = a0(i) >= b.upper(i) - tol;
              if (zb(i) > tol && !at_upper) return false;
              if (zb(i) < -tol && !at_lower) return false;
            }
            return true;
          },
          [&](const ConvexSetIndicator& c) { return (c.project(a0 + zb) - a0).norm() <= tol; },
          [&](const WeightedL1& l1) {
            for (Eigen::Index i = 0; i < a0.size(); ++i) {
              if (std::abs(a0(i)) <= tol) {
                if (std::abs(zb(i)) > l1.gamma(i) + tol) return false;
              } else if (std::abs(zb(i) - std::copysign(l1.gamma(i), a0(i))) > tol) {
                return false;
              }
            }
            return true;
          },
          [&](const RelativeEntropySimplex& e) {
            if (a0.minCoeff() <= 0.0) return false;
            Vec g(a0.size());
            for (Eigen::Index i = 0; i < a0.size(); ++i) g(i) = std::log(a0(i) / e.reference(i)) + 1.0;
            // Normal cone of the affine hull is spanned by the ones vector.
            const Vec diff = zb - g;
            return (diff.array() - diff.mean()).matrix().norm() <= tol;
          },
      },
      cost.variant());
}

}  // namespace ppgm
