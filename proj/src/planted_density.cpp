#include "pseudocal/planted_density.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pseudocal/exact_oracle.hpp"

namespace pseudocal {

VarMask derived_vars(const ScopeSpace& space, const BasisIndex& idx) {
  VarMask m = 0;
  for (const auto& st : idx.terms) {
    const auto& sc = space.scope(st.scope);
    for (int j = 0; j < space.k(); ++j)
      if (st.tmask >> j & 1u) m ^= VarMask{1} << sc[j];
  }
  return m;
}

namespace {

void check_index(const ScopeSpace& space, const BasisIndex& idx) {
  if (space.n() < 64 && (idx.alpha >> space.n())) throw Error(ErrorKind::invalid_index, "alpha outside [n]");
  for (const auto& st : idx.terms) {
    if (st.scope >= space.size()) throw Error(ErrorKind::invalid_index, "scope id out of range");
    if (st.tmask >> space.k()) throw Error(ErrorKind::invalid_index, "slot outside [k]");
  }
}

}  // namespace

Surd mu_star_coeff(const Predicate& pred, const ScopeSpace& space, const BasisIndex& idx) {
  check_index(space, idx);
  if (!idx.beta_within_gamma()) return Surd(0);
  if (derived_vars(space, idx) != idx.alpha) return Surd(0);
  auto bv = BasisValues<Surd>::make(space.p());
  Surd c(1);
  for (const auto& st : idx.terms) {
    if (popcount(st.tmask) < pred.t) return Surd(0);
    const Rational& e = pred.eta_hat[st.tmask];
    if (sgn(e) == 0) return Surd(0);
    if (st.beta)
      c *= -bv.sqrt_pq * Surd(e);
    else
      c *= Surd(space.p() * e);
  }
  return c;
}

Surd coefficient_bound(const ScopeSpace& space, const BasisIndex& idx) {
  if (!idx.beta_within_gamma()) return Surd(0);
  Rational p = space.p(), pq = space.p() * space.q();
  Surd root = Surd::sqrt_of(pq);
  Surd c(1);
  for (const auto& st : idx.terms) c *= st.beta ? root : Surd(p);
  return c;
}

MixedPoly<Surd> build_pseudo_density(const Predicate& pred, SpacePtr space, const Caps& caps, std::size_t max_terms) {
  if (pred.k != space->k()) throw Error(ErrorKind::invalid_input, "predicate arity differs from scope arity");
  if (caps.dx < 0 || caps.dI < 0) throw Error(ErrorKind::degree_underflow, "negative degree cap");
  auto bv = BasisValues<Surd>::make(space->p());
  std::vector<LocalMask> live;
  for (LocalMask T = 1; T < pred.table_size(); ++T)
    if (sgn(pred.eta_hat[T]) != 0 && popcount(T) >= pred.t) live.push_back(T);
  Surd p_s(space->p());
  MixedPoly<Surd> out(space, caps);
  std::vector<ScopeTerm> terms;
  std::size_t emitted = 0;
  auto rec = [&](auto&& self, std::size_t pos, VarMask alpha, const Surd& c) -> void {
    if (static_cast<int>(terms.size()) == caps.dI || pos == space->size()) {
      if (popcount(alpha) > caps.dx) return;
      if (++emitted > max_terms) throw Error(ErrorKind::resource_limit, "pseudo-density exceeds the term budget");
      out.add(BasisIndex{alpha, terms}, c);
      return;
    }
    self(self, pos + 1, alpha, c);
    const auto& sc = space->scope(pos);
    for (LocalMask T : live) {
      VarMask a = alpha;
      for (int j = 0; j < space->k(); ++j)
        if (T >> j & 1u) a ^= VarMask{1} << sc[j];
      Surd e(pred.eta_hat[T]);
      for (std::uint8_t beta = 0; beta <= 1; ++beta) {
        if (beta && caps.dI == 0) continue;
        terms.push_back({static_cast<std::uint32_t>(pos), beta, T});
        self(self, pos + 1, a, c * (beta ? -bv.sqrt_pq * e : p_s * e));
        terms.pop_back();
      }
    }
  };
  rec(rec, 0, 0, Surd(1));
  return out;
}

ConditionalCoeff mu_conditional_coeff(const Predicate& pred, SpacePtr space, const RestrictedInstance& fix,
                                      const BasisIndex& idx) {
  check_index(*space, idx);
  for (const auto& st : idx.terms)
    if (fix.position(st.scope)) throw Error(ErrorKind::invalid_index, "index touches a conditioned scope");
  TinyUniverse u(space, pred);
  auto table = exact_conditional(u, fix);
  return {table.fourier(idx), coefficient_bound(*space, idx)};
}

Rational pi_U(const Predicate& pred, const ScopeSpace& space, const RestrictedInstance& fix, const Assignment& x) {
  fix.validate(space);
  int k = space.k();
  Rational r(1);
  for (std::size_t i = 0; i < fix.scopes.size(); ++i) {
    if (fix.y[i] > 0) continue;
    const auto& sc = space.scope(fix.scopes[i]);
    LocalMask z = 0;
    for (int j = 0; j < k; ++j)
      if (fix.b[i * k + j] * x[sc[j]] < 0) z |= LocalMask{1} << j;
    r *= pred.eta[z];
  }
  return r;
}

MixedPoly<Surd> pi_U_poly(const Predicate& pred, SpacePtr space, const RestrictedInstance& fix) {
  fix.validate(*space);
  int k = space->k();
  MixedPoly<Surd> acc(space);
  acc.add(BasisIndex{}, Surd(1));
  for (std::size_t i = 0; i < fix.scopes.size(); ++i) {
    if (fix.y[i] > 0) continue;
    const auto& sc = space->scope(fix.scopes[i]);
    LocalMask neg = 0;
    for (int j = 0; j < k; ++j)
      if (fix.b[i * k + j] < 0) neg |= LocalMask{1} << j;
    MixedPoly<Surd> factor(space);
    for (LocalMask T = 0; T < pred.table_size(); ++T) {
      if (sgn(pred.eta_hat[T]) == 0) continue;
      VarMask a = 0;
      for (int j = 0; j < k; ++j)
        if (T >> j & 1u) a |= VarMask{1} << sc[j];
      Rational c = pred.eta_hat[T];
      if (parity_sign(T & neg) < 0) c = -c;
      factor.add(BasisIndex{a, {}}, Surd(c));
    }
    acc = multiply(acc, factor);
  }
  return acc;
}

RestrictionDecomposition decompose_restriction(const Predicate& pred, SpacePtr space, const RestrictedInstance& fix,
                                               const Caps& d) {
  fix.validate(*space);
  int u = static_cast<int>(fix.scopes.size());
  RestrictionDecomposition out;
  out.outer = {d.dx, d.dI - u};
  out.inner = {d.dx, d.dI - 2 * u};
  if (out.inner.dI < 0) throw Error(ErrorKind::degree_underflow, "d_I - 2|U| is negative");
  TinyUniverse universe(space, pred);

  auto full = build_pseudo_density(pred, space, Caps{space->n(), static_cast<int>(space->size())});
  auto low = project_ld(full, d);
  auto r_full = restrict_poly(full, fix);
  out.restricted = restrict_poly(low, fix);

  auto conditioned = exact_conditional_poly(universe, fix, out.inner);
  out.main = multiply(pi_U_poly(pred, space, fix), conditioned);
  out.h = (project_ld(r_full, out.outer) - project_ld(r_full, out.inner)) +
          (out.restricted - project_ld(out.restricted, out.outer));
  out.identity_holds = out.restricted == out.main + out.h;

  out.h_vanishes_low = true;
  out.h_within_bound = true;
  Surd scale = Surd(rational_pow(Rational(2), u));
  for (const auto& [idx, c] : out.h.terms()) {
    if (idx.gamma_scopes() <= out.inner.dI) out.h_vanishes_low = false;
    if (c.abs() > scale * coefficient_bound(*space, idx)) {
      out.h_within_bound = false;
      out.bound_violations.push_back(idx);
    }
  }
  return out;
}

DecayParams regime_caps(double n, int k, int t, double Delta, double C, double nu_x, double nu_y) {
  DecayParams dp;
  dp.n = n;
  dp.k = k;
  dp.t = t;
  dp.Delta = Delta;
  dp.C = C;
  dp.nu_x = nu_x;
  dp.nu_y = nu_y;
  double base = C * std::pow(n, t - 2) / (Delta * Delta);
  dp.d_x = static_cast<int>(std::floor(std::pow(base, (1 - nu_x) / k)));
  dp.d_I = static_cast<int>(std::floor(std::pow(base, (1 - nu_y) / k)));
  return dp;
}

double epsilon_decay(const DecayParams& dp, int s_x, int s_I) {
  if (s_x < 0 || s_I < 0) throw Error(ErrorKind::invalid_input, "negative degree");
  int s = std::max((s_x + dp.k - 1) / dp.k, s_I);
  if (s == 0) return 1.0;
  double v = std::pow(dp.C * dp.Delta, s) * std::pow(s / dp.n, 0.5 * (dp.t - 2) * s);
  if (s_x > 0) v *= std::pow(static_cast<double>(s) / s_x, 0.5 * s_x);
  return v;
}

RapidDecayReport check_rapid_decay(const DecayParams& dp, const RapidDecayOptions& opt) {
  RapidDecayReport rep;
  double n = dp.n;
  rep.delta_range_ok = dp.Delta > 1 && dp.Delta < std::pow(n, 0.5 * (dp.t - 2) - dp.eps_exp);
  if (!rep.delta_range_ok) rep.violations.push_back("Delta outside (1, n^((t-2)/2 - eps))");
  rep.nu_order_ok = dp.nu_x > dp.nu_y && dp.nu_y > 0;
  if (!rep.nu_order_ok) rep.violations.push_back("need nu_x > nu_y > 0");
  rep.caps_ok = dp.d_x >= 1 && dp.d_I >= 1 && dp.delta_cbd > 0 && dp.b_cbd >= 0;
  if (!rep.caps_ok) rep.violations.push_back("caps, delta and b must be positive");
  rep.degree_range_ok = dp.t > 2 && dp.d_x <= dp.rho * (dp.d_I - 2 * dp.b_cbd) && dp.b_cbd <= dp.rho * dp.d_I &&
                        dp.d_I <= std::pow(n * std::pow(dp.Delta, -2.0 / (dp.t - 2)), dp.nu / (dp.nu + dp.rho));
  if (!rep.degree_range_ok) rep.violations.push_back("degree caps outside the admissible range");
  if (opt.strict && !rep.preconditions_ok()) {
    std::string msg;
    for (const auto& v : rep.violations) msg += (msg.empty() ? "" : "; ") + v;
    throw Error(ErrorKind::out_of_regime, msg);
  }

  rep.clause1 = true;
  for (int sx = 0; sx <= dp.d_x; ++sx)
    for (int si = 0; si <= dp.d_I; ++si) {
      if (sx == 0 && si == 0) continue;
      double e = epsilon_decay(dp, sx, si);
      rep.clause1_max = std::max(rep.clause1_max, e);
      if (!(e < opt.tolerance)) rep.clause1 = false;
    }
  for (int sx = 1; sx <= dp.d_x; ++sx) rep.clause2_sum += std::pow(epsilon_decay(dp, sx, 1), opt.c_exponent);
  rep.clause2 = rep.clause2_sum < opt.tolerance;

  // clause 3: 2^b eps(s_x,u) <= eps(s_x,1)^(1-nu); each grid point bounds nu on one side
  double lo = -INFINITY, hi = 1.0;
  bool feasible = true;
  int u_min = std::max(1, dp.d_I - 2 * dp.b_cbd);
  for (int sx = 0; sx <= dp.d_x; ++sx) {
    double l1 = std::log(epsilon_decay(dp, sx, 1));
    for (int u = u_min; u <= dp.d_I; ++u) {
      double lu = dp.b_cbd * std::log(2.0) + std::log(epsilon_decay(dp, sx, u));
      if (l1 < 0) {
        lo = std::max(lo, 1 - lu / l1);
      } else if (l1 > 0) {
        hi = std::min(hi, 1 - lu / l1);
      } else if (lu > 0) {
        feasible = false;
      }
    }
  }
  rep.nu_low = lo;
  rep.nu_high = hi;
  rep.nu_fit = std::max(lo, 0.0);
  rep.clause3 = feasible && rep.nu_fit < hi && rep.nu_fit < 1.0;

  for (int sx = 0; sx <= dp.d_x; ++sx)
    for (int si = 0; si <= dp.d_I; ++si) {
      DecayRow row{sx, si, epsilon_decay(dp, sx, si), true};
      if (!(sx == 0 && si == 0)) row.bound_satisfied = row.epsilon < opt.tolerance;
      if (si >= u_min && si >= 1) {
        double lhs = std::pow(2.0, dp.b_cbd) * row.epsilon;
        double rhs = std::pow(epsilon_decay(dp, sx, 1), 1 - rep.nu_fit);
        row.bound_satisfied = row.bound_satisfied && lhs <= rhs * (1 + 1e-12);
      }
      rep.grid.push_back(row);
    }
  return rep;
}

double hypercontractive_tail(int k, double tau) {
  if (k < 1) throw Error(ErrorKind::invalid_input, "degree must be positive");
  double threshold = std::pow(std::sqrt(2 * M_E), k);
  if (tau < threshold * (1 - 1e-12))
    throw Error(ErrorKind::out_of_regime, "tau below sqrt(2e)^k; the tail bound is not asserted");
  return std::exp(-(k / (2 * M_E)) * std::pow(tau, 2.0 / k));
}

std::string decay_csv(const RapidDecayReport& rep) {
  std::ostringstream os;
  os << "s_x,s_I,epsilon,bound_satisfied\n";
  char buf[64];
  for (const auto& r : rep.grid) {
    std::snprintf(buf, sizeof buf, "%.17g", r.epsilon);
    os << r.s_x << ',' << r.s_I << ',' << buf << ',' << (r.bound_satisfied ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace pseudocal
