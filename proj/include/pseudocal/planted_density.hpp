#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pseudocal/csp_core.hpp"
#include "pseudocal/fourier_poly.hpp"

namespace pseudocal {

// Variables hit an odd number of times by the slots of the gamma part.
VarMask derived_vars(const ScopeSpace& space, const BasisIndex& idx);

// Exact planted coefficient via the per-scope factorization.
Surd mu_star_coeff(const Predicate& pred, const ScopeSpace& space, const BasisIndex& idx);

// sqrt(pq)^{|gamma_bar & beta|} p^{|gamma_bar \ beta|} when beta lies inside
// gamma_bar, else 0. Used as the coefficient envelope everywhere.
Surd coefficient_bound(const ScopeSpace& space, const BasisIndex& idx);

constexpr std::size_t kDefaultTermBudget = std::size_t{1} << 21;

// Low-degree part of the planted density at the given caps.
MixedPoly<Surd> build_pseudo_density(const Predicate& pred, SpacePtr space, const Caps& caps,
                                     std::size_t max_terms = kDefaultTermBudget);

struct ConditionalCoeff {
  Surd exact;
  Surd bound;
};

ConditionalCoeff mu_conditional_coeff(const Predicate& pred, SpacePtr space, const RestrictedInstance& fix,
                                      const BasisIndex& idx);

// Density of the planted law on (x_V, I_U) relative to the null law.
Rational pi_U(const Predicate& pred, const ScopeSpace& space, const RestrictedInstance& fix, const Assignment& x);
// Same, as a polynomial in x alone.
MixedPoly<Surd> pi_U_poly(const Predicate& pred, SpacePtr space, const RestrictedInstance& fix);

struct RestrictionDecomposition {
  Caps outer, inner;  // (d_x, d_I - |U|) and (d_x, d_I - 2|U|)
  MixedPoly<Surd> restricted;  // R_U of the low-degree density
  MixedPoly<Surd> main;        // pi_U times the inner projection of the conditioned density
  MixedPoly<Surd> h;
  bool identity_holds = false;
  bool h_vanishes_low = false;
  bool h_within_bound = false;
  std::vector<BasisIndex> bound_violations;
};

RestrictionDecomposition decompose_restriction(const Predicate& pred, SpacePtr space, const RestrictedInstance& fix,
                                               const Caps& d);

struct DecayParams {
  double n = 0;
  int k = 3;
  int t = 3;
  double Delta = 1;
  double C = 1;
  double delta_cbd = 0.1;
  int b_cbd = 0;
  int d_x = 1;
  int d_I = 1;
  double nu = 0.1, nu_x = 0.2, nu_y = 0.1, rho = 0.1, eps_exp = 0.0;
};

// Caps (C n^{t-2} / Delta^2)^{(1-nu)/k} for nu = nu_x and nu = nu_y, floored.
DecayParams regime_caps(double n, int k, int t, double Delta, double C, double nu_x, double nu_y);

double epsilon_decay(const DecayParams& dp, int s_x, int s_I);

struct DecayRow {
  int s_x = 0, s_I = 0;
  double epsilon = 0;
  bool bound_satisfied = false;
};

struct RapidDecayReport {
  bool delta_range_ok = false;
  bool nu_order_ok = false;
  bool degree_range_ok = false;
  bool caps_ok = false;
  std::vector<std::string> violations;

  bool clause1 = false;
  double clause1_max = 0;
  bool clause2 = false;
  double clause2_sum = 0;
  bool clause3 = false;
  // Feasible interval of nu for clause 3; the bound is tightest at nu_fit.
  double nu_low = 0, nu_high = 1, nu_fit = 0;

  std::vector<DecayRow> grid;

  bool preconditions_ok() const { return delta_range_ok && nu_order_ok && degree_range_ok && caps_ok; }
};

struct RapidDecayOptions {
  double tolerance = 0.1;
  double c_exponent = 1.0;
  bool strict = false;  // throw out-of-regime on any failed precondition
};

RapidDecayReport check_rapid_decay(const DecayParams& dp, const RapidDecayOptions& opt = {});

double hypercontractive_tail(int k, double tau);

std::string decay_csv(const RapidDecayReport& rep);

}  // namespace pseudocal
