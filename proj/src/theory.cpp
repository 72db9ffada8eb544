#include "ppgm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <limits>
#include <sstream>

namespace ppgm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pos(double x) { return x > 0.0 ? x : 0.0; }

// Product that treats 0 * inf as 0: a vanishing constant switches a term off
// even when another factor has overflowed.
double prod(std::initializer_list<double> xs) {
  double r = 1.0;
  for (double x : xs) {
    if (x == 0.0) return 0.0;
    r *= x;
  }
  return r;
}

double harmonic(const AssumptionConstants& k) {
  const double s = k.mu + k.l_fa;
  return s > 0.0 ? k.mu * k.l_fa / s : 0.0;
}

double mu0_of(const AssumptionConstants& k) {
  const double m = 0.25 * (harmonic(k) + k.nu);
  if (!(m > 0.0))
    throw InputError("assumption (H.1)(3) violated: mu0 = (mu L_fa / (mu + L_fa) + nu) / 4 must be > 0");
  return m;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string vec_str(const Vec& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v(i));
  return s + "]";
}

}  // namespace

Calibration calibrate_generic_constant(const std::string& mode, double value) {
  if (mode == "unit") return Calibration{"unit", 1.0};
  if (mode == "conservative") {
    if (!(value > 0.0) || !std::isfinite(value))
      throw InputError("calibration: conservative value must be finite and > 0");
    return Calibration{"conservative", value};
  }
  throw InputError("calibration: unknown mode '" + mode + "' (expected unit or conservative)");
}

double expm1_ratio(double a, double T) {
  if (std::abs(a) < 1e-6) {
    const double x = a * T;
    return T * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0);
  }
  return std::expm1(a * T) / a;
}

double compute_C_Y(const TheoryContext& ctx) {
  const auto& k = ctx.k;
  const double C = ctx.c();
  return prod({C, k.c_g + k.c_fx * ctx.horizon, std::exp(pos(k.kappa_bhat - ctx.discount + C) * ctx.horizon)});
}

double compute_alpha(const TheoryContext& ctx) {
  const auto& k = ctx.k;
  return k.kappa_bhat - ctx.discount + k.l_bbar + k.l_sigma * k.l_sigma;
}

double compute_L_Y(double M, const TheoryContext& ctx) {
  if (!(M >= 0.0)) throw InputError("L_Y: Lipschitz level must be >= 0");
  const auto& k = ctx.k;
  const double C = ctx.c(), T = ctx.horizon;
  const double a = compute_alpha(ctx);
  const double E = expm1_ratio(a, T);
  const double ea = std::exp(pos(a) * T);
  const double e1 = std::exp(pos(2.0 * k.l_bbar * M + 2.0 * k.kappa_bhat + C) * T);
  const double growth = std::exp(pos(k.kappa_bhat - ctx.discount + C) * T);
  const double term1 = prod({k.l_g, e1, ea});
  const double inner = prod({prod({1.0 + k.l_bbar * M, k.c_g + k.c_fx * T, growth}) + prod({k.l_fx, 1.0 + M}), E}) +
                       prod({std::sqrt(T), prod({ea, k.c_g}) + prod({k.c_fx, E})});
  return prod({C, term1 + prod({inner, e1})});
}

LipschitzCertificate compute_lipschitz_certificate(const TheoryContext& ctx, double phi0_lipschitz) {
  const auto& k = ctx.k;
  const double C = ctx.c(), T = ctx.horizon;
  const double a = compute_alpha(ctx);
  const double E = expm1_ratio(a, T);
  const double ea = std::exp(pos(a) * T);
  const double sT = std::sqrt(T);
  const double CY = compute_C_Y(ctx);

  LipschitzCertificate r;
  r.A1 = prod({k.c_bbar, C,
               prod({k.l_g + sT * k.c_g, ea}) + prod({E, prod({k.c_g + k.c_fx * T, ea}) + k.l_fx + sT * k.c_fx})});
  r.A2 = prod({k.c_bbar, C, E, prod({k.c_g + k.c_fx * T, ea, k.l_bbar}) + k.l_fx});
  r.mu0 = mu0_of(k);
  const double lead = 2.0 * T * k.l_bbar;
  r.K = std::max(prod({lead, phi0_lipschitz}), (prod({lead, r.A1}) + prod({lead, prod({k.l_bbar, CY}) + k.l_fa})) / r.mu0 + 1.0);
  const double X = std::exp((2.0 * k.kappa_bhat + C) * T + r.K);
  r.lhs1 = prod({lead, r.A1, X});
  r.lhs2 = prod({r.A2, X + 1.0});
  r.ok = r.lhs1 <= r.mu0 && r.lhs2 <= r.mu0;
  r.L_phi0 = phi0_lipschitz + (prod({k.l_bbar, CY}) + k.l_fa + prod({r.A1, X + 1.0})) / r.mu0;
  return r;
}

double m_alpha_beta(double T, double alpha, double beta) {
  if (!(T > 0.0)) throw InputError("m_alpha_beta: T must be > 0");
  if (std::isinf(beta) && beta > 0.0) return kInf;
  auto g = [&](double s) { return std::exp(2.0 * alpha * s) * expm1_ratio(beta, s); };
  double best = std::max(g(0.0), g(T));
  double s_star = std::numeric_limits<double>::quiet_NaN();
  if (std::abs(beta) < 1e-12) {
    if (alpha < 0.0) s_star = -1.0 / (2.0 * alpha);
  } else if (alpha != 0.0) {
    const double ratio = 2.0 * alpha / (2.0 * alpha + beta);
    if (ratio > 0.0 && std::isfinite(ratio)) s_star = std::log(ratio) / beta;
  }
  if (std::isfinite(s_star) && s_star > 0.0 && s_star < T) best = std::max(best, g(s_star));
  return best;
}

Anchor default_anchor(const NonsmoothCost& ell, int control_dim) {
  Anchor an;
  an.a0 = Vec::Zero(control_dim);
  an.z_a0 = Vec::Zero(control_dim);
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, BoxIndicator>) {
          for (int i = 0; i < control_dim; ++i) {
            const double lo = v.lower(i), hi = v.upper(i);
            if (std::isfinite(lo) && std::isfinite(hi))
              an.a0(i) = 0.5 * (lo + hi);
            else
              an.a0(i) = std::clamp(0.0, lo, hi);
          }
        } else if constexpr (std::is_same_v<T, ConvexSetIndicator>) {
          an.a0 = v.project(Vec::Zero(control_dim));
        } else if constexpr (std::is_same_v<T, RelativeEntropySimplex>) {
          an.a0 = Vec::Constant(control_dim, 1.0 / control_dim);
          Vec g(control_dim);
          for (int i = 0; i < control_dim; ++i) g(i) = std::log(an.a0(i) / v.reference(i)) + 1.0;
          an.z_a0 = g - Vec::Constant(control_dim, g.mean());
        }
      },
      ell.variant());
  an.z_a0 += ell.ridge() * an.a0;
  return an;
}

double compute_center_bound(const TheoryContext& ctx, double phi0_center, const NonsmoothCost& ell,
                            const Anchor& anchor) {
  if (!ell.feasible(anchor.a0)) throw InfeasibleError("center bound: anchor a0 lies outside the domain of l");
  if (!is_subgradient(ell, anchor.a0, anchor.z_a0, 1e-8))
    throw InfeasibleError("center bound: z_a0 is not a subgradient of l at a0");
  const auto& k = ctx.k;
  const double CY = compute_C_Y(ctx);
  const double mn = k.mu + k.nu;
  if (!(mn > 0.0)) throw InputError("assumption (H.1)(3) violated: mu + nu must be > 0");
  const double a0 = anchor.a0.norm();
  const double inner = prod({k.c_bbar, CY}) / mn + 2.0 * (k.c_fa + k.l_fa * a0 + anchor.z_a0.norm()) / mn + a0;
  return phi0_center + 2.0 * inner + 4.0 * prod({CY, k.c_bbar}) / (harmonic(k) + k.nu);
}

ContractionCertificate compute_contraction_certificate(const TheoryContext& ctx, double L_phi0, double C_phi0,
                                                       double lipschitz_tilde) {
  const auto& k = ctx.k;
  const double C = ctx.c(), T = ctx.horizon;
  const double Lt = lipschitz_tilde < 0.0 ? L_phi0 : lipschitz_tilde;
  const double a = compute_alpha(ctx);
  const double E = expm1_ratio(a, T);
  const double CY = compute_C_Y(ctx);
  ContractionCertificate r;
  r.beta = 2.0 * k.kappa_bhat + prod({2.0 * k.l_bbar, std::max(L_phi0, Lt)}) + C;
  r.m_ab = m_alpha_beta(T, a, r.beta);
  const double sigma_term = prod({k.c_sigma, compute_L_Y(Lt, ctx)});
  r.B = prod({k.c_bbar * k.c_bbar, prod({k.l_g, std::sqrt(r.m_ab)}) + prod({E, prod({CY + k.l_fx, 1.0 + L_phi0}) + sigma_term})});
  const double eb = std::exp(T * pos(r.beta));
  const double penalty = prod({C, 1.0 + T + prod({T, k.c_bbar, C_phi0}), eb, T * eb + 1.0, r.B});
  r.frak_D = 0.5 * (harmonic(k) + k.nu) - penalty;
  r.ok = r.frak_D > 0.0;
  return r;
}

double max_step(const AssumptionConstants& k) {
  const double s = k.mu + k.l_fa;
  const double a = s > 0.0 ? 2.0 / s : kInf;
  const double b = k.nu > 0.0 ? 1.0 / k.nu : kInf;
  return std::min(a, b);
}

double predicted_rate(double frak_D, double tau) {
  const double c = 1.0 - tau * frak_D;
  return frak_D > 0.0 ? std::max(0.0, c) : c;
}

double z_sup_bound(const PolicyNorms& norms, const TheoryContext& ctx) {
  return prod({ctx.k.c_sigma, compute_L_Y(norms.lipschitz, ctx)});
}

TheoryReport evaluate_theory(const TheoryContext& ctx, const PolicyNorms& phi0, const NonsmoothCost& ell,
                             const Anchor& anchor, double tau) {
  ctx.k.validate();
  if (!(ctx.horizon > 0.0)) throw InputError("theory: horizon must be > 0");
  if (!(ctx.c() > 0.0)) throw InputError("theory: calibration constant must be > 0");
  TheoryReport r;
  r.cal = ctx.cal;
  r.provenance = ctx.k.provenance;
  r.phi0 = phi0;
  r.anchor = anchor;
  r.tau = tau;
  r.tau_max = max_step(ctx.k);
  r.C_Y = compute_C_Y(ctx);
  r.alpha = compute_alpha(ctx);
  const auto lip = compute_lipschitz_certificate(ctx, phi0.lipschitz);
  r.A1 = lip.A1;
  r.A2 = lip.A2;
  r.mu0 = lip.mu0;
  r.K = lip.K;
  r.L_phi0 = lip.L_phi0;
  r.lhs_lipschitz_1 = lip.lhs1;
  r.lhs_lipschitz_2 = lip.lhs2;
  r.condition_lipschitz_ok = lip.ok;
  r.L_Y_at_L = compute_L_Y(r.L_phi0, ctx);
  r.C_phi0 = compute_center_bound(ctx, phi0.center_bound, ell, anchor);
  const auto con = compute_contraction_certificate(ctx, r.L_phi0, r.C_phi0);
  r.beta = con.beta;
  r.m_alpha_beta = con.m_ab;
  r.B_phi0 = con.B;
  r.frak_D = con.frak_D;
  r.condition_contraction_ok = con.ok;
  r.predicted_c = predicted_rate(r.frak_D, tau);
  r.C_Z = z_sup_bound(phi0, ctx);
  r.extrapolated = ctx.k.mu < 0.0;
  return r;
}

std::vector<std::pair<std::string, std::string>> TheoryReport::key_values() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::vector<std::pair<std::string, std::string>> kv = {
      {"calibration", cal.mode},
      {"C_cal", num(cal.value)},
      {"constants_provenance", to_string(provenance)},
      {"phi0_weighted_sup", num(phi0.weighted_sup)},
      {"phi0_lipschitz", num(phi0.lipschitz)},
      {"phi0_center_bound", num(phi0.center_bound)},
      {"anchor_a0", vec_str(anchor.a0)},
      {"anchor_z_a0", vec_str(anchor.z_a0)},
      {"tau", num(tau)},
      {"tau_max", num(tau_max)},
      {"C_Y", num(C_Y)},
      {"alpha", num(alpha)},
      {"L_Y_at_L_phi0", num(L_Y_at_L)},
      {"C_Z", num(C_Z)},
      {"A1", num(A1)},
      {"A2", num(A2)},
      {"mu0", num(mu0)},
      {"K", num(K)},
      {"lipschitz_condition_lhs1", num(lhs_lipschitz_1)},
      {"lipschitz_condition_lhs2", num(lhs_lipschitz_2)},
      {"L_phi0", num(L_phi0)},
      {"C_phi0", num(C_phi0)},
      {"beta", num(beta)},
      {"m_alpha_beta", num(m_alpha_beta)},
      {"B_phi0", num(B_phi0)},
      {"frak_D", num(frak_D)},
      {"predicted_c", num(predicted_c)},
      {"condition_lipschitz_ok", b(condition_lipschitz_ok)},
      {"condition_contraction_ok", b(condition_contraction_ok)},
      {"certified", b(certified())},
      {"rate_bound", certified() ? "certified" : "vacuous"},
      {"extrapolated", b(extrapolated)},
  };
  return kv;
}

}  // namespace ppgm
