#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pseudocal/csp_core.hpp"
#include "pseudocal/fourier_poly.hpp"

namespace pseudocal {

// Small universe on which every planted and null probability is enumerated
// exactly. Points are (x, code): x is a VarMask (bit i set iff x_i = -1) and
// code packs one local state per scope, base 2^(k+1), lowest scope first.
// A local state is the negation mask of b_S with bit k set when S is included.
class TinyUniverse {
 public:
  static constexpr int kMaxVars = 8;
  static constexpr std::size_t kMaxScopes = 6;

  TinyUniverse(SpacePtr space, Predicate pred);

  const SpacePtr& space() const { return space_; }
  const Predicate& pred() const { return pred_; }
  int n() const { return space_->n(); }
  int k() const { return space_->k(); }
  std::size_t scopes() const { return space_->size(); }
  std::uint32_t local_states() const { return 1u << (k() + 1); }
  std::uint64_t instance_count(std::size_t num_scopes) const;

  // Probability of a local state under the planted law given x, and under the null law.
  const Rational& planted_local(std::size_t s, std::uint32_t state, VarMask x) const;
  const Rational& null_local(std::uint32_t state) const { return null_[state]; }
  LocalMask local_x(std::size_t s, VarMask x) const;

  std::uint32_t state_of(std::uint64_t code, std::size_t pos) const {
    return static_cast<std::uint32_t>((code >> (pos * (k() + 1))) & (local_states() - 1));
  }
  std::uint64_t code_of(const Instance& inst) const;
  Instance instance_of(std::uint64_t code) const;

  Rational planted_prob(VarMask x, std::uint64_t code) const;
  Rational null_prob(VarMask x, std::uint64_t code) const;
  // Pr_planted / Pr_{null x uniform}, i.e. the planted density at a point.
  Rational density(VarMask x, std::uint64_t code) const;

  void for_each_point(const std::function<void(VarMask, std::uint64_t)>& fn) const;

 private:
  SpacePtr space_;
  Predicate pred_;
  std::vector<Rational> null_;
  // planted_[s][xs][state] with xs the LocalMask of x on scope s
  std::vector<std::vector<Rational>> planted_;
};

// Lazy view of the planted joint law; nothing is materialized.
struct PlantedTable {
  const TinyUniverse* u;
  Rational prob(VarMask x, std::uint64_t code) const { return u->planted_prob(x, code); }
  Rational density(VarMask x, std::uint64_t code) const { return u->density(x, code); }
};

PlantedTable exact_planted_table(const TinyUniverse& u);

// E_planted[chi_alpha phi_beta psi_gamma] by summing over x, scope by scope.
Surd exact_fourier(const TinyUniverse& u, const BasisIndex& idx);

// Planted density conditioned on the instance coordinates of the scopes in U,
// as a function of all of x and the remaining instance coordinates. The rest
// code packs the scopes outside U in increasing order.
class ConditionalTable {
 public:
  ConditionalTable(const TinyUniverse& u, RestrictedInstance fix);

  const std::vector<std::uint32_t>& fixed() const { return fixed_; }
  const std::vector<std::uint32_t>& rest() const { return rest_; }
  const RestrictedInstance& fix() const { return fix_; }
  VarMask fixed_vars() const { return fixed_vars_; }
  std::uint64_t rest_count() const { return u_->instance_count(rest_.size()); }

  Rational value(VarMask x, std::uint64_t rest_code) const;
  // Full instance code combining the fixed part with a rest code.
  std::uint64_t merge(std::uint64_t rest_code) const;
  // Coefficient of the table in the mixed basis, by direct projection.
  Surd fourier(const BasisIndex& idx) const;

 private:
  Rational fixed_marginal(VarMask x) const;

  const TinyUniverse* u_;
  std::vector<std::uint32_t> fixed_, rest_;
  RestrictedInstance fix_;
  std::vector<std::uint32_t> fixed_states_;
  VarMask fixed_vars_ = 0;
};

ConditionalTable exact_conditional(const TinyUniverse& u, const RestrictedInstance& fix);

// All coefficients of the conditioned density within the caps, by averaging
// the per-scope conditional expectations over x.
MixedPoly<Surd> exact_conditional_poly(const TinyUniverse& u, const RestrictedInstance& fix, const Caps& caps);

}  // namespace pseudocal
