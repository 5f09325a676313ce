#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pseudocal/cbd.hpp"
#include "pseudocal/csp_core.hpp"
#include "pseudocal/exact_oracle.hpp"
#include "pseudocal/fourier_poly.hpp"
#include "pseudocal/planted_density.hpp"

namespace pseudocal {

// The low-degree planted density with the instance fixed, as a polynomial in x.
// Only gamma supported on included scopes survives: on an included scope the
// beta sum gives p + sqrt(pq) sqrt(pq)/p = 1, on an absent one p - p = 0.
template <class S>
struct InstancePoly {
  int n = 0;
  std::map<VarMask, S> coeff;

  S at(VarMask alpha) const {
    auto it = coeff.find(alpha);
    return it == coeff.end() ? S(0) : it->second;
  }
  S constant() const { return at(0); }
  S eval(VarMask x) const {
    S v(0);
    for (const auto& [a, c] : coeff) v += parity_sign(a & x) < 0 ? S(-c) : c;
    return v;
  }
};

constexpr std::size_t kInstancePolyBudget = 5'000'000;

InstancePoly<double> instance_poly_float(const Instance& inst, const Predicate& pred, const Caps& d,
                                         std::size_t max_terms = kInstancePolyBudget);
InstancePoly<Rational> instance_poly_exact(const Instance& inst, const Predicate& pred, const Caps& d,
                                           std::size_t max_terms = kInstancePolyBudget);

// mu_*(x, I) = prod over included scopes of eta(b_S o x_S).
Rational exact_mu_star(const Instance& inst, const Predicate& pred, const Assignment& x);

// G(y,b) = E_x[mu_bar F] by pairing the expansion of F with that of mu_bar.
double objective_estimate(const Instance& inst, const Predicate& pred, const Caps& d);
Rational objective_estimate_exact(const Instance& inst, const Predicate& pred, const Caps& d);

struct LhsEvent {
  long constraints = 0;
  double target = 0;   // Delta n
  double c = 0;        // (1 - eta) Delta n
  double mass = 0;     // E_x[mu_bar]
  double G = 0;
  double lhs = 0;      // E_x[mu_bar (c - F)]
  bool count_ok = false;
  bool lhs_ok = false;
  bool degenerate = false;  // eta == 0
  bool event() const { return count_ok && lhs_ok; }
};

LhsEvent lhs_event_check(const Instance& inst, const Predicate& pred, const Caps& d, double eta);

// H(x) = E_{I~D}[mu_bar(x, I)], exact and coefficient-wise.
InstancePoly<Rational> avg_over_distribution(const DistributionTable& dist, const Predicate& pred, const Caps& d);

struct NegativeFraction {
  std::uint64_t points = 0;
  std::uint64_t below = 0;  // x with H(x) < -tau
  Rational min_value;
  double fraction() const { return points ? static_cast<double>(below) / static_cast<double>(points) : 0.0; }
};

// Exhaustive over x in {-1,1}^n, n <= 20.
NegativeFraction negative_fraction(const InstancePoly<Rational>& h, const Rational& tau);

struct NonnegBound {
  double value = 0;
  double nu = 0;
  bool vacuous = false;  // eps(s,1) >= 1 for some s
};

// sum_{s=1}^{d_x} exp(-(s/2e) eps(s,1)^{-(2-2nu)/s})
NonnegBound nonneg_probability_bound(const DecayParams& dp, double nu);
// nu taken from the rapid-decay fit; throws out-of-regime if clause 3 is infeasible.
NonnegBound nonneg_probability_bound(const DecayParams& dp, const RapidDecayOptions& opt = {});

struct LocalDistribution {
  VarMask vars = 0;
  std::vector<double> mass;  // indexed by the compressed z mask on vars
  double min_mass = 0;
};

struct MomentReport {
  double density_mass = 0;  // moment at alpha = {}
  std::map<VarMask, double> moments;
  std::vector<LocalDistribution> locals;
  double min_mass = 0;
};

// Pseudo-moments E_x[chi_alpha mu_bar] for |alpha| <= cap and signed local
// distributions on every variable set of size 1..cap (or on `subsets` if given).
MomentReport local_moments(const Instance& inst, const Predicate& pred, const Caps& d, int subset_cap,
                           const std::vector<VarMask>& subsets = {});

// (1 - w) D(p) + w times the instance marginal of the planted law.
DistributionTable planted_tilted_table(const TinyUniverse& u, const Rational& w);

struct FactorTables {
  Rational c;
  InstanceSet A;
  std::vector<std::map<InstanceCode, Rational>> p;  // p_i(I), missing entries are 0
  std::vector<std::vector<Rational>> q;             // q_i(x) indexed by VarMask
};

struct IdentityMismatch {
  InstanceCode instance = 0;
  VarMask x = 0;
  Rational lhs, rhs;
};

struct FactorPart {
  std::size_t factor = 0;
  Rational weight;  // E_{D(p)}[p_i 1_A]
  std::size_t parts = 0;
  Rational min_h;   // min over parts and x of H_{ij}(x)
  bool partition_ok = false;
};

struct FactorizationReport {
  bool identity_holds = false;
  std::vector<IdentityMismatch> mismatches;
  // E over x and D(p) of 1_A mu_bar (c - F), and of 1_A mu_bar sum_i p_i q_i.
  Rational lhs, rhs;
  Rational lambda;  // -lhs when lhs < 0, else 0
  bool reassembled = false;  // rhs rebuilt from the CBD parts of every factor
  std::vector<FactorPart> factors;
};

struct PipelineParams {
  Caps d{2, 2};
  Rational delta{1, 2};
  int t_param = 1;
  Rational theta;  // 0 selects exp(-n)
};

FactorizationReport factorization_check(SpacePtr space, const Predicate& pred, const FactorTables& tables,
                                        const PipelineParams& params);

struct ObjectiveMoments {
  Rational mean, second;
  Rational expected_constraints;  // p M
  Rational variance() const { return second - mean * mean; }
};

// Exact E[G] and E[G^2] over D(p) on a tabulated space.
ObjectiveMoments exact_objective_moments(SpacePtr space, const Predicate& pred, const Caps& d);

struct ConcentrationConfig {
  int n = 40;
  int k = 3;
  double Delta = 5;
  std::string pred = "xor";
  Caps d{2, 2};
  double eta = 0.3;
  int trials = 200;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 reads PSEUDOCAL_THREADS, defaulting to 1
};

struct TrialRow {
  int trial = 0;
  long constraints = 0;
  double G = 0;
  double lhs = 0;
  bool event = false;
};

struct ConcentrationSummary {
  std::vector<TrialRow> rows;
  double target = 0;
  double mean_G = 0, sd_G = 0, se_G = 0;
  double pr_event = 0;
  bool mean_within_3se = false;
  double mean_constraints = 0;
};

Predicate predicate_by_name(const std::string& name, int k);
int worker_count(int requested);
ConcentrationSummary run_concentration(const ConcentrationConfig& cfg);
std::string concentration_csv(const ConcentrationSummary& s);
nlohmann::json concentration_json(const ConcentrationConfig& cfg, const ConcentrationSummary& s);

}  // namespace pseudocal
