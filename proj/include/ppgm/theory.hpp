#pragma once

#include "ppgm/policy.hpp"
#include "ppgm/problem.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ppgm {

/// The unnamed absolute constant C of the estimates, made explicit.
struct Calibration {
  std::string mode = "unit";  // unit | conservative
  double value = 1.0;
};

/// mode "unit" gives 1; "conservative" returns `value` (must be > 0).
Calibration calibrate_generic_constant(const std::string& mode, double value = 1.0);

struct TheoryContext {
  AssumptionConstants k;
  double horizon = 1.0;
  double discount = 0.0;
  Calibration cal;

  double c() const { return cal.value; }
};

/// (e^{a T} - 1) / a, with its series near a = 0.
double expm1_ratio(double a, double T);

double compute_C_Y(const TheoryContext& ctx);
/// kappa - rho + L_bbar + L_sigma^2.
double compute_alpha(const TheoryContext& ctx);
double compute_L_Y(double M, const TheoryContext& ctx);

struct LipschitzCertificate {
  double A1 = 0, A2 = 0, mu0 = 0, K = 0, L_phi0 = 0;
  double lhs1 = 0, lhs2 = 0;  // left sides of the two inequalities, each compared with mu0
  bool ok = false;
};

LipschitzCertificate compute_lipschitz_certificate(const TheoryContext& ctx, double phi0_lipschitz);

/// sup over s in [0,T] of e^{2 alpha s} (e^{beta s} - 1) / beta.
double m_alpha_beta(double T, double alpha, double beta);

struct Anchor {
  Vec a0;
  Vec z_a0;
};

/// Interior point with zero subgradient for indicators, the origin for L1,
/// the uniform point for relative entropy.
Anchor default_anchor(const NonsmoothCost& ell, int control_dim);

/// Bound on sup_m sup_t |phi^m_t(0)|. Throws InfeasibleError if a0 is not in A
/// or z_a0 is not a subgradient of l at a0.
double compute_center_bound(const TheoryContext& ctx, double phi0_center, const NonsmoothCost& ell,
                            const Anchor& anchor);

struct ContractionCertificate {
  double beta = 0, m_ab = 0, B = 0, frak_D = 0;
  bool ok = false;
};

/// lipschitz_tilde defaults to L_phi0 (exact iterates); the approximate-gradient
/// version uses max(L_phi0, L~) in beta and L~ in the sigma term.
ContractionCertificate compute_contraction_certificate(const TheoryContext& ctx, double L_phi0, double C_phi0,
                                                       double lipschitz_tilde = -1.0);

/// min(2 / (mu + L_fa), 1 / nu) with 1/0 = inf.
double max_step(const AssumptionConstants& k);

/// 1 - tau D; clamped at 0 when D > 0, reported unclamped (>= 1) otherwise.
double predicted_rate(double frak_D, double tau);

/// C_Z = C_sigma L_Y([phi]_1).
double z_sup_bound(const PolicyNorms& norms, const TheoryContext& ctx);

struct TheoryReport {
  Calibration cal;
  ConstantsProvenance provenance = ConstantsProvenance::analytic;
  PolicyNorms phi0;
  Anchor anchor;
  double tau = 0.0;
  double tau_max = 0.0;
  double C_Y = 0, alpha = 0, L_Y_at_L = 0;
  double A1 = 0, A2 = 0, mu0 = 0, K = 0, L_phi0 = 0, C_phi0 = 0;
  double lhs_lipschitz_1 = 0, lhs_lipschitz_2 = 0;
  double beta = 0, m_alpha_beta = 0, B_phi0 = 0, frak_D = 0, predicted_c = 1.0;
  double C_Z = 0;
  bool condition_lipschitz_ok = false;
  bool condition_contraction_ok = false;
  bool extrapolated = false;  // mu < 0: outside the strongly convex setting

  bool certified() const { return condition_lipschitz_ok && condition_contraction_ok; }
  std::vector<std::pair<std::string, std::string>> key_values() const;
};

TheoryReport evaluate_theory(const TheoryContext& ctx, const PolicyNorms& phi0, const NonsmoothCost& ell,
                             const Anchor& anchor, double tau);

}  // namespace ppgm
