#include "pseudocal/exact_oracle.hpp"

#include <algorithm>

namespace pseudocal {

namespace {

Rational pow2_inv(int e) { return Rational(1, 1) / rational_pow(Rational(2), e); }

}  // namespace

TinyUniverse::TinyUniverse(SpacePtr space, Predicate pred) : space_(std::move(space)), pred_(std::move(pred)) {
  if (pred_.k != space_->k()) throw Error(ErrorKind::invalid_input, "predicate arity differs from scope arity");
  if (n() > kMaxVars || scopes() > kMaxScopes)
    throw Error(ErrorKind::resource_limit, "tiny universe limited to n <= 8 and at most 6 scopes (got n=" +
                                               std::to_string(n()) + ", M=" + std::to_string(scopes()) + ")");
  // joint size 2^n * 2^((k+1)M), enforced before any enumeration
  if (n() + static_cast<int>(scopes()) * (k() + 1) > 30)
    throw Error(ErrorKind::resource_limit, "joint enumeration exceeds 2^30 states (2^" +
                                               std::to_string(n() + scopes() * (k() + 1)) + ")");
  std::uint32_t states = local_states();
  LocalMask top = LocalMask{1} << k();
  Rational q = space_->q(), p = space_->p();
  Rational unif = pow2_inv(k());
  null_.resize(states);
  for (std::uint32_t st = 0; st < states; ++st) null_[st] = (st & top) ? p * unif : q * unif;
  planted_.assign(std::size_t{1} << k(), std::vector<Rational>(states));
  for (LocalMask xs = 0; xs < (LocalMask{1} << k()); ++xs)
    for (std::uint32_t st = 0; st < states; ++st)
      planted_[xs][st] = (st & top) ? p * pred_.weight[(st & (top - 1)) ^ xs] : q * unif;
}

std::uint64_t TinyUniverse::instance_count(std::size_t num_scopes) const {
  return std::uint64_t{1} << (num_scopes * (k() + 1));
}

LocalMask TinyUniverse::local_x(std::size_t s, VarMask x) const {
  const auto& sc = space_->scope(s);
  LocalMask m = 0;
  for (int j = 0; j < k(); ++j)
    if (x >> sc[j] & 1u) m |= LocalMask{1} << j;
  return m;
}

const Rational& TinyUniverse::planted_local(std::size_t s, std::uint32_t state, VarMask x) const {
  return planted_[local_x(s, x)][state];
}

std::uint64_t TinyUniverse::code_of(const Instance& inst) const {
  std::uint64_t code = 0;
  for (std::size_t s = 0; s < scopes(); ++s) {
    std::uint64_t st = inst.negation_mask(s) | (inst.included(s) ? (1u << k()) : 0u);
    code |= st << (s * (k() + 1));
  }
  return code;
}

Instance TinyUniverse::instance_of(std::uint64_t code) const {
  Instance inst = empty_instance(space_);
  for (std::size_t s = 0; s < scopes(); ++s) {
    auto st = state_of(code, s);
    inst.y[s] = (st >> k() & 1u) ? -1 : 1;
    for (int j = 0; j < k(); ++j) inst.b[s * k() + j] = (st >> j & 1u) ? -1 : 1;
  }
  return inst;
}

Rational TinyUniverse::planted_prob(VarMask x, std::uint64_t code) const {
  Rational r = pow2_inv(n());
  for (std::size_t s = 0; s < scopes() && sgn(r) != 0; ++s) r *= planted_local(s, state_of(code, s), x);
  return r;
}

Rational TinyUniverse::null_prob(VarMask, std::uint64_t code) const {
  Rational r = pow2_inv(n());
  for (std::size_t s = 0; s < scopes(); ++s) r *= null_local(state_of(code, s));
  return r;
}

Rational TinyUniverse::density(VarMask x, std::uint64_t code) const {
  Rational den = null_prob(x, code);
  if (sgn(den) == 0) throw Error(ErrorKind::undefined_conditional, "null law has zero mass at this point");
  return planted_prob(x, code) / den;
}

void TinyUniverse::for_each_point(const std::function<void(VarMask, std::uint64_t)>& fn) const {
  std::uint64_t codes = instance_count(scopes());
  for (VarMask x = 0; x < (VarMask{1} << n()); ++x)
    for (std::uint64_t c = 0; c < codes; ++c) fn(x, c);
}

PlantedTable exact_planted_table(const TinyUniverse& u) { return PlantedTable{&u}; }

namespace {

// Values of phi^beta(y) chi_T(b) at one local state.
Surd local_basis(const BasisValues<Surd>& bv, int k, std::uint8_t beta, LocalMask T, std::uint32_t state) {
  LocalMask neg = state & ((LocalMask{1} << k) - 1);
  Surd v = parity_sign(T & neg) < 0 ? Surd(-1) : Surd(1);
  if (beta) v *= bv.phi((state >> k & 1u) ? -1 : 1);
  return v;
}

// E over the planted local law of one scope given x.
Surd local_expectation(const TinyUniverse& u, const BasisValues<Surd>& bv, std::size_t s, const ScopeTerm& st,
                       VarMask x) {
  Rational incl(0), absent(0);
  int k = u.k();
  for (std::uint32_t state = 0; state < u.local_states(); ++state) {
    LocalMask neg = state & ((LocalMask{1} << k) - 1);
    Rational w = u.planted_local(s, state, x);
    if (parity_sign(st.tmask & neg) < 0) w = -w;
    if (state >> k & 1u)
      incl += w;
    else
      absent += w;
  }
  if (!st.beta) return Surd(incl + absent);
  return Surd(incl) * bv.phi(-1) + Surd(absent) * bv.phi(1);
}

}  // namespace

Surd exact_fourier(const TinyUniverse& u, const BasisIndex& idx) {
  for (const auto& st : idx.terms)
    if (st.scope >= u.scopes()) throw Error(ErrorKind::invalid_index, "scope id out of range");
  if (idx.alpha >> u.n()) throw Error(ErrorKind::invalid_index, "alpha outside [n]");
  auto bv = BasisValues<Surd>::make(u.space()->p());
  Surd total(0);
  for (VarMask x = 0; x < (VarMask{1} << u.n()); ++x) {
    Surd v = parity_sign(idx.alpha & x) < 0 ? Surd(-1) : Surd(1);
    for (const auto& st : idx.terms) {
      v *= local_expectation(u, bv, st.scope, st, x);
      if (v.is_zero()) break;
    }
    total += v;
  }
  return total * Surd(pow2_inv(u.n()));
}

ConditionalTable::ConditionalTable(const TinyUniverse& u, RestrictedInstance fix) : u_(&u), fix_(std::move(fix)) {
  fix_.validate(*u.space());
  fixed_ = fix_.scopes;
  int k = u.k();
  for (std::size_t i = 0; i < fixed_.size(); ++i) {
    std::uint32_t st = 0;
    for (int j = 0; j < k; ++j)
      if (fix_.b[i * k + j] < 0) st |= 1u << j;
    if (fix_.y[i] < 0) st |= 1u << k;
    fixed_states_.push_back(st);
    fixed_vars_ |= u.space()->var_mask(fixed_[i]);
  }
  for (std::uint32_t s = 0; s < u.scopes(); ++s)
    if (!std::binary_search(fixed_.begin(), fixed_.end(), s)) rest_.push_back(s);
  Rational mass(0);
  for (VarMask x = 0; x < (VarMask{1} << u.n()); ++x) {
    Rational r = pow2_inv(u.n());
    for (std::size_t i = 0; i < fixed_.size(); ++i) r *= u.planted_local(fixed_[i], fixed_states_[i], x);
    mass += r;
  }
  if (sgn(mass) == 0) throw Error(ErrorKind::undefined_conditional, "conditioning event has zero planted mass");
}

std::uint64_t ConditionalTable::merge(std::uint64_t rest_code) const {
  int w = u_->k() + 1;
  std::uint64_t code = 0;
  for (std::size_t i = 0; i < fixed_.size(); ++i) code |= std::uint64_t{fixed_states_[i]} << (fixed_[i] * w);
  for (std::size_t i = 0; i < rest_.size(); ++i) code |= std::uint64_t{u_->state_of(rest_code, i)} << (rest_[i] * w);
  return code;
}

Rational ConditionalTable::fixed_marginal(VarMask x) const {
  Rational total(0);
  for (VarMask xp = 0; xp < (VarMask{1} << u_->n()); ++xp) {
    if ((xp & fixed_vars_) != (x & fixed_vars_)) continue;
    Rational r = pow2_inv(u_->n());
    for (std::size_t i = 0; i < fixed_.size(); ++i) r *= u_->planted_local(fixed_[i], fixed_states_[i], xp);
    total += r;
  }
  return total;
}

Rational ConditionalTable::value(VarMask x, std::uint64_t rest_code) const {
  int n = u_->n();
  int nv = popcount(fixed_vars_);
  Rational marg = fixed_marginal(x);
  Rational cond;
  if (sgn(marg) > 0) {
    cond = u_->planted_prob(x, merge(rest_code)) / marg;
  } else {
    // the fixed values are impossible at this x_V; condition on x_V alone
    Rational joint(0);
    int w = u_->k() + 1;
    std::uint64_t base = 0;
    for (std::size_t i = 0; i < rest_.size(); ++i) base |= std::uint64_t{u_->state_of(rest_code, i)} << (rest_[i] * w);
    std::uint64_t combos = u_->instance_count(fixed_.size());
    for (std::uint64_t c = 0; c < combos; ++c) {
      std::uint64_t code = base;
      for (std::size_t i = 0; i < fixed_.size(); ++i) code |= std::uint64_t{u_->state_of(c, i)} << (fixed_[i] * w);
      joint += u_->planted_prob(x, code);
    }
    cond = joint / pow2_inv(nv);
  }
  Rational null = pow2_inv(n - nv);
  for (std::size_t i = 0; i < rest_.size(); ++i) null *= u_->null_local(u_->state_of(rest_code, i));
  return cond / null;
}

Surd ConditionalTable::fourier(const BasisIndex& idx) const {
  std::vector<const ScopeTerm*> at_pos(rest_.size(), nullptr);
  for (const auto& st : idx.terms) {
    auto it = std::lower_bound(rest_.begin(), rest_.end(), st.scope);
    if (it == rest_.end() || *it != st.scope) throw Error(ErrorKind::invalid_index, "index touches a conditioned scope");
    at_pos[it - rest_.begin()] = &st;
  }
  auto bv = BasisValues<Surd>::make(u_->space()->p());
  int k = u_->k();
  Surd total(0);
  for (VarMask x = 0; x < (VarMask{1} << u_->n()); ++x) {
    int chi = parity_sign(idx.alpha & x);
    for (std::uint64_t rc = 0; rc < rest_count(); ++rc) {
      Rational w = value(x, rc);
      if (sgn(w) == 0) continue;
      for (std::size_t i = 0; i < rest_.size(); ++i) w *= u_->null_local(u_->state_of(rc, i));
      Surd v(chi < 0 ? Rational(-w) : w);
      for (std::size_t i = 0; i < rest_.size(); ++i)
        if (at_pos[i]) v *= local_basis(bv, k, at_pos[i]->beta, at_pos[i]->tmask, u_->state_of(rc, i));
      total += v;
    }
  }
  return total * Surd(pow2_inv(u_->n()));
}

ConditionalTable exact_conditional(const TinyUniverse& u, const RestrictedInstance& fix) {
  return ConditionalTable(u, fix);
}

MixedPoly<Surd> exact_conditional_poly(const TinyUniverse& u, const RestrictedInstance& fix, const Caps& caps) {
  ConditionalTable table(u, fix);  // validates the conditioning event
  const auto& rest = table.rest();
  auto bv = BasisValues<Surd>::make(u.space()->p());
  int n = u.n(), k = u.k();
  std::size_t xs = std::size_t{1} << n;
  std::uint32_t locals = 1u << (k + 1);  // (beta, T) pairs, beta in bit k
  // e[pos][local][x] = E[phi^beta psi_T | x] for the scope at pos
  std::vector<std::vector<std::vector<Surd>>> e(rest.size(), std::vector<std::vector<Surd>>(locals, std::vector<Surd>(xs)));
  for (std::size_t pos = 0; pos < rest.size(); ++pos)
    for (std::uint32_t l = 1; l < locals; ++l) {
      ScopeTerm st{rest[pos], static_cast<std::uint8_t>(l >> k & 1u), l & ((1u << k) - 1)};
      for (VarMask x = 0; x < xs; ++x) e[pos][l][x] = local_expectation(u, bv, rest[pos], st, x);
    }
  std::vector<VarMask> alphas;
  for (VarMask a = 0; a < xs; ++a)
    if (popcount(a) <= caps.dx) alphas.push_back(a);

  MixedPoly<Surd> out(u.space(), caps);
  Surd scale(pow2_inv(n));
  std::vector<ScopeTerm> terms;
  std::vector<Surd> prod(xs, Surd(1));
  auto emit = [&]() {
    for (VarMask a : alphas) {
      Surd total(0);
      for (VarMask x = 0; x < xs; ++x) {
        if (prod[x].is_zero()) continue;
        if (parity_sign(a & x) < 0)
          total -= prod[x];
        else
          total += prod[x];
      }
      out.add(BasisIndex::make(a, terms), total * scale);
    }
  };
  auto rec = [&](auto&& self, std::size_t pos, int nbeta, int ngamma) -> void {
    if (pos == rest.size()) {
      emit();
      return;
    }
    self(self, pos + 1, nbeta, ngamma);
    std::vector<Surd> saved = prod;
    for (std::uint32_t l = 1; l < locals; ++l) {
      int b = l >> k & 1u;
      int g = (l & ((1u << k) - 1)) ? 1 : 0;
      if (nbeta + b > caps.dI || ngamma + g > caps.dI) continue;
      for (VarMask x = 0; x < xs; ++x) prod[x] = saved[x] * e[pos][l][x];
      terms.push_back({rest[pos], static_cast<std::uint8_t>(b), l & ((1u << k) - 1)});
      self(self, pos + 1, nbeta + b, ngamma + g);
      terms.pop_back();
    }
    prod = std::move(saved);
  };
  rec(rec, 0, 0, 0);
  return out;
}

}  // namespace pseudocal
