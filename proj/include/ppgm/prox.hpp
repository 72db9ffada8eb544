#pragma once

#include "ppgm/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace ppgm {

struct ZeroCost {};

/// Indicator of the rectangle [lower, upper] (entries may be infinite).
struct BoxIndicator {
  Vec lower;
  Vec upper;
};

/// Indicator of a user-supplied closed convex set, given by its orthogonal
/// projection.
struct ConvexSetIndicator {
  std::function<Vec(const Vec&)> project;
  std::string name = "convex_set";
};

/// l(a) = sum_i gamma_i |a_i|.
struct WeightedL1 {
  Vec gamma;
};

/// Relative entropy sum_i a_i log(a_i / u_i) on the probability simplex,
/// +infinity off the simplex.
struct RelativeEntropySimplex {
  Vec reference;
};

/// The nonsmooth running cost l plus an optional ridge term (ridge/2)|a|^2,
/// which adds `ridge` to the strong convexity modulus.
class NonsmoothCost {
 public:
  using Variant = std::variant<ZeroCost, BoxIndicator, ConvexSetIndicator, WeightedL1, RelativeEntropySimplex>;

  NonsmoothCost() = default;
  explicit NonsmoothCost(Variant v, double ridge = 0.0);

  static NonsmoothCost zero(double ridge = 0.0) { return NonsmoothCost(ZeroCost{}, ridge); }
  static NonsmoothCost box(Vec lower, Vec upper, double ridge = 0.0) {
    return NonsmoothCost(BoxIndicator{std::move(lower), std::move(upper)}, ridge);
  }
  static NonsmoothCost convex_set(std::function<Vec(const Vec&)> project, std::string name = "convex_set") {
    return NonsmoothCost(ConvexSetIndicator{std::move(project), std::move(name)});
  }
  static NonsmoothCost weighted_l1(Vec gamma, double ridge = 0.0) {
    return NonsmoothCost(WeightedL1{std::move(gamma)}, ridge);
  }
  static NonsmoothCost relative_entropy(Vec reference, double ridge = 0.0) {
    return NonsmoothCost(RelativeEntropySimplex{std::move(reference)}, ridge);
  }

  const Variant& variant() const { return variant_; }
  double ridge() const { return ridge_; }

  /// Strong convexity modulus nu of l.
  double nu() const;

  /// l(a); +infinity outside the effective domain.
  double value(const Vec& a) const;

  bool feasible(const Vec& a, double tol = 1e-9) const;

  /// Orthogonal projection onto the effective domain (identity when A = R^k).
  Vec project_feasible(const Vec& a) const;

  /// Control dimension fixed by the variant parameters, if any.
  std::optional<int> dimension() const;

  std::string name() const;

 private:
  Variant variant_ = ZeroCost{};
  double ridge_ = 0.0;
};

struct LambertOptions {
  double rel_tol = 1e-15;
  int max_iterations = 32;
};

/// Principal branch W(x) for x >= 0 by Halley iteration.
double lambert_w(double x, const LambertOptions& opts = {});

/// W(exp(z)), evaluated in log space for large z.
double lambert_w_exp(double z, const LambertOptions& opts = {});

/// Multiplier lambda solving sum_i tau W((u_i/tau) exp((lambda + a_i)/tau - 1)) = 1.
double entropy_prox_multiplier(const Vec& reference, double tau, const Vec& a, const LambertOptions& opts = {});

/// prox_{tau l}(a) = argmin_p 1/2|p - a|^2 + tau l(p).
Vec prox(const NonsmoothCost& cost, double tau, const Vec& a, const LambertOptions& opts = {});

/// Lipschitz constant 1/(1 + tau nu) of prox_{tau l}.
double prox_contraction_factor(const NonsmoothCost& cost, double tau);

/// Euclidean projection onto the probability simplex.
Vec project_simplex(const Vec& a);

/// True if z lies in the convex subdifferential of l at a0 (tolerance tol).
bool is_subgradient(const NonsmoothCost& cost, const Vec& a0, const Vec& z, double tol = 1e-9);

}  // namespace ppgm
