#include "pseudocal/refutation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace pseudocal {

namespace {

template <class S>
S from_rational(const Rational& q) {
  if constexpr (std::is_same_v<S, double>)
    return rational_to_double(q);
  else
    return q;
}

template <class S>
InstancePoly<S> build_instance_poly(const Instance& inst, const Predicate& pred, const Caps& d, std::size_t max_terms) {
  const auto& space = *inst.space;
  if (pred.k != space.k()) throw Error(ErrorKind::invalid_input, "predicate arity differs from scope arity");
  if (d.dx < 0 || d.dI < 0) throw Error(ErrorKind::degree_underflow, "negative degree cap");
  int k = space.k();
  struct Local {
    VarMask alpha;
    S c;
  };
  std::vector<std::vector<Local>> per;
  for (std::size_t s = 0; s < space.size(); ++s) {
    if (!inst.included(s)) continue;
    std::vector<Local> opts;
    LocalMask neg = inst.negation_mask(s);
    const auto& sc = space.scope(s);
    for (LocalMask T = 1; T < pred.table_size(); ++T) {
      if (sgn(pred.eta_hat[T]) == 0) continue;
      VarMask a = 0;
      for (int j = 0; j < k; ++j)
        if (T >> j & 1u) a |= VarMask{1} << sc[j];
      S c = from_rational<S>(pred.eta_hat[T]);
      if (parity_sign(T & neg) < 0) c = -c;
      opts.push_back({a, c});
    }
    per.push_back(std::move(opts));
  }
  InstancePoly<S> out;
  out.n = space.n();
  std::size_t nodes = 0;
  int depth = 0;
  auto rec = [&](auto&& self, std::size_t pos, VarMask alpha, const S& c) -> void {
    if (++nodes > max_terms) throw Error(ErrorKind::resource_limit, "instance polynomial exceeds the term budget");
    if (popcount(alpha) <= d.dx) {
      auto [it, fresh] = out.coeff.try_emplace(alpha, c);
      if (!fresh) it->second += c;
    }
    if (depth == d.dI) return;
    for (std::size_t s = pos; s < per.size(); ++s)
      for (const auto& o : per[s]) {
        ++depth;
        self(self, s + 1, alpha ^ o.alpha, c * o.c);
        --depth;
      }
  };
  rec(rec, 0, 0, S(1));
  for (auto it = out.coeff.begin(); it != out.coeff.end();)
    it = it->second == S(0) ? out.coeff.erase(it) : std::next(it);
  return out;
}

template <class S>
S pair_objective(const Instance& inst, const Predicate& pred, const InstancePoly<S>& mu) {
  const auto& space = *inst.space;
  int k = space.k();
  S g(0);
  for (std::size_t s = 0; s < space.size(); ++s) {
    if (!inst.included(s)) continue;
    LocalMask neg = inst.negation_mask(s);
    const auto& sc = space.scope(s);
    for (LocalMask T = 0; T < pred.table_size(); ++T) {
      if (sgn(pred.value_hat[T]) == 0) continue;
      VarMask a = 0;
      for (int j = 0; j < k; ++j)
        if (T >> j & 1u) a |= VarMask{1} << sc[j];
      S c = from_rational<S>(pred.value_hat[T]) * mu.at(a);
      g += parity_sign(T & neg) < 0 ? S(-c) : c;
    }
  }
  return g;
}

Assignment assignment_of_mask(VarMask x, int n) {
  Assignment a(n);
  for (int i = 0; i < n; ++i) a[i] = (x >> i & 1u) ? -1 : 1;
  return a;
}

}  // namespace

InstancePoly<double> instance_poly_float(const Instance& inst, const Predicate& pred, const Caps& d,
                                         std::size_t max_terms) {
  return build_instance_poly<double>(inst, pred, d, max_terms);
}

InstancePoly<Rational> instance_poly_exact(const Instance& inst, const Predicate& pred, const Caps& d,
                                           std::size_t max_terms) {
  return build_instance_poly<Rational>(inst, pred, d, max_terms);
}

Rational exact_mu_star(const Instance& inst, const Predicate& pred, const Assignment& x) {
  Rational r(1);
  for (std::size_t s = 0; s < inst.space->size() && sgn(r) != 0; ++s)
    if (inst.included(s)) r *= pred.eta[inst.literal_mask(s, x)];
  return r;
}

double objective_estimate(const Instance& inst, const Predicate& pred, const Caps& d) {
  return pair_objective(inst, pred, instance_poly_float(inst, pred, d));
}

Rational objective_estimate_exact(const Instance& inst, const Predicate& pred, const Caps& d) {
  return pair_objective(inst, pred, instance_poly_exact(inst, pred, d));
}

LhsEvent lhs_event_check(const Instance& inst, const Predicate& pred, const Caps& d, double eta) {
  if (eta < 0 || eta > 1) throw Error(ErrorKind::invalid_config, "eta outside [0,1]");
  LhsEvent ev;
  auto mu = instance_poly_float(inst, pred, d);
  ev.constraints = static_cast<long>(inst.constraint_count());
  ev.target = rational_to_double(inst.space->delta()) * inst.space->n();
  ev.c = (1 - eta) * ev.target;
  ev.mass = mu.constant();
  ev.G = pair_objective(inst, pred, mu);
  ev.lhs = ev.c * ev.mass - ev.G;
  ev.degenerate = eta == 0;
  ev.count_ok = std::abs(ev.constraints - ev.target) <= eta / 2 * ev.target;
  ev.lhs_ok = ev.lhs <= -eta / 2 * ev.target;
  return ev;
}

InstancePoly<Rational> avg_over_distribution(const DistributionTable& dist, const Predicate& pred, const Caps& d) {
  InstancePoly<Rational> h;
  h.n = dist.space()->n();
  for (const auto& [code, m] : dist.mass()) {
    auto mu = instance_poly_exact(dist.instance_of(code), pred, d);
    for (const auto& [a, c] : mu.coeff) h.coeff[a] += m * c;
  }
  for (auto it = h.coeff.begin(); it != h.coeff.end();) it = sgn(it->second) == 0 ? h.coeff.erase(it) : std::next(it);
  return h;
}

NegativeFraction negative_fraction(const InstancePoly<Rational>& h, const Rational& tau) {
  if (h.n > 20) throw Error(ErrorKind::resource_limit, "exhaustive x enumeration limited to n <= 20");
  NegativeFraction nf;
  nf.points = std::uint64_t{1} << h.n;
  bool first = true;
  for (VarMask x = 0; x < nf.points; ++x) {
    Rational v = h.eval(x);
    if (v < -tau) ++nf.below;
    if (first || v < nf.min_value) nf.min_value = v;
    first = false;
  }
  return nf;
}

NonnegBound nonneg_probability_bound(const DecayParams& dp, double nu) {
  NonnegBound out;
  out.nu = nu;
  for (int s = 1; s <= dp.d_x; ++s) {
    double e = epsilon_decay(dp, s, 1);
    if (e >= 1) out.vacuous = true;
    out.value += std::exp(-(s / (2 * M_E)) * std::pow(e, -(2 - 2 * nu) / s));
  }
  return out;
}

NonnegBound nonneg_probability_bound(const DecayParams& dp, const RapidDecayOptions& opt) {
  auto rep = check_rapid_decay(dp, opt);
  if (!rep.clause3) throw Error(ErrorKind::out_of_regime, "no nu satisfies the third decay clause");
  return nonneg_probability_bound(dp, rep.nu_fit);
}

MomentReport local_moments(const Instance& inst, const Predicate& pred, const Caps& d, int subset_cap,
                           const std::vector<VarMask>& subsets) {
  if (subset_cap < 0) throw Error(ErrorKind::invalid_input, "negative subset cap");
  int n = inst.space->n();
  auto mu = instance_poly_float(inst, pred, d);
  MomentReport rep;
  rep.density_mass = mu.constant();
  for (const auto& [a, c] : mu.coeff)
    if (popcount(a) <= subset_cap) rep.moments[a] = c;

  std::vector<VarMask> sets = subsets;
  if (sets.empty()) {
    // all variable sets of size 1..cap, in lexicographic order of their sorted indices
    std::vector<int> idx;
    auto rec = [&](auto&& self, int start) -> void {
      if (!idx.empty()) {
        VarMask m = 0;
        for (int i : idx) m |= VarMask{1} << i;
        sets.push_back(m);
        if (sets.size() > 2'000'000) throw Error(ErrorKind::resource_limit, "too many variable sets");
      }
      if (static_cast<int>(idx.size()) == subset_cap) return;
      for (int i = start; i < n; ++i) {
        idx.push_back(i);
        self(self, i + 1);
        idx.pop_back();
      }
    };
    rec(rec, 0);
  }
  rep.min_mass = INFINITY;
  for (VarMask t : sets) {
    LocalDistribution ld;
    ld.vars = t;
    std::vector<int> vars;
    for (int i = 0; i < n; ++i)
      if (t >> i & 1u) vars.push_back(i);
    std::size_t size = std::size_t{1} << vars.size();
    ld.mass.assign(size, 0.0);
    double scale = 1.0 / static_cast<double>(size);
    // signed mass of x_T = z is 2^{-|T|} sum_{alpha in T} c_alpha chi_alpha(z)
    for (std::size_t sub = 0; sub < size; ++sub) {
      VarMask a = 0;
      for (std::size_t i = 0; i < vars.size(); ++i)
        if (sub >> i & 1u) a |= VarMask{1} << vars[i];
      double c = mu.at(a);
      if (c == 0) continue;
      for (std::size_t z = 0; z < size; ++z) ld.mass[z] += (popcount(z & sub) & 1 ? -c : c) * scale;
    }
    ld.min_mass = *std::min_element(ld.mass.begin(), ld.mass.end());
    rep.min_mass = std::min(rep.min_mass, ld.min_mass);
    rep.locals.push_back(std::move(ld));
  }
  if (rep.locals.empty()) rep.min_mass = 0;
  return rep;
}

DistributionTable planted_tilted_table(const TinyUniverse& u, const Rational& w) {
  auto bg = background_table(u.space());
  DistributionTable planted(u.space());
  std::uint64_t codes = u.instance_count(u.scopes());
  std::vector<Rational> marg(codes, Rational(0));
  for (VarMask x = 0; x < (VarMask{1} << u.n()); ++x)
    for (std::uint64_t c = 0; c < codes; ++c) marg[c] += u.planted_prob(x, c);
  for (std::uint64_t c = 0; c < codes; ++c) planted.set(c, marg[c]);
  return mixture(bg, planted, w);
}

FactorizationReport factorization_check(SpacePtr space, const Predicate& pred, const FactorTables& tables,
                                        const PipelineParams& params) {
  int n = space->n();
  if (n > 16) throw Error(ErrorKind::resource_limit, "factorization check limited to n <= 16");
  std::size_t xs = std::size_t{1} << n;
  if (tables.p.size() != tables.q.size() || tables.p.empty())
    throw Error(ErrorKind::invalid_factorization, "need matching nonempty p and q factor lists");
  for (const auto& pi : tables.p)
    for (const auto& [c, v] : pi)
      if (sgn(v) < 0) throw Error(ErrorKind::invalid_factorization, "negative p entry at instance " + std::to_string(c));
  for (std::size_t i = 0; i < tables.q.size(); ++i) {
    if (tables.q[i].size() != xs) throw Error(ErrorKind::invalid_factorization, "q table has the wrong size");
    for (std::size_t x = 0; x < xs; ++x)
      if (sgn(tables.q[i][x]) < 0)
        throw Error(ErrorKind::invalid_factorization,
                    "negative q entry in factor " + std::to_string(i) + " at x " + std::to_string(x));
  }
  DistributionTable shell(space);
  auto p_at = [&](std::size_t i, InstanceCode c) {
    auto it = tables.p[i].find(c);
    return it == tables.p[i].end() ? Rational(0) : it->second;
  };
  Rational theta = sgn(params.theta) > 0 ? params.theta : default_threshold(n);
  Rational x_weight = Rational(1) / Rational(static_cast<unsigned long>(xs));

  FactorizationReport rep;
  rep.identity_holds = true;
  rep.lhs = 0;
  rep.rhs = 0;
  std::map<InstanceCode, std::vector<Rational>> mu_values;
  for (auto code : tables.A) {
    auto inst = shell.instance_of(code);
    auto mu = instance_poly_exact(inst, pred, params.d);
    auto& vals = mu_values[code];
    vals.resize(xs);
    Rational bg = shell.background(code);
    for (VarMask x = 0; x < xs; ++x) {
      vals[x] = mu.eval(x);
      Rational lhs = tables.c - objective(inst, pred, assignment_of_mask(x, n));
      Rational rhs(0);
      for (std::size_t i = 0; i < tables.p.size(); ++i) rhs += p_at(i, code) * tables.q[i][x];
      if (lhs != rhs) {
        rep.identity_holds = false;
        if (rep.mismatches.size() < 100) rep.mismatches.push_back({code, x, lhs, rhs});
      }
      rep.lhs += bg * x_weight * vals[x] * lhs;
      rep.rhs += bg * x_weight * vals[x] * rhs;
    }
  }
  rep.lambda = sgn(rep.lhs) < 0 ? Rational(-rep.lhs) : Rational(0);

  // each p_i as a density relative to D(p) on A, split into CBD parts
  Rational rebuilt(0);
  for (std::size_t i = 0; i < tables.p.size(); ++i) {
    FactorPart fp;
    fp.factor = i;
    fp.weight = 0;
    for (auto code : tables.A) fp.weight += shell.background(code) * p_at(i, code);
    if (sgn(fp.weight) == 0) {
      fp.partition_ok = true;
      rep.factors.push_back(fp);
      continue;
    }
    DistributionTable di(space);
    for (auto code : tables.A) di.set(code, shell.background(code) * p_at(i, code) / fp.weight);
    auto part = decompose(di, params.delta, params.t_param, theta);
    fp.partition_ok = verify_partition(part, di).ok();
    fp.parts = part.parts.size();
    std::vector<const InstanceSet*> pieces;
    for (const auto& pt : part.parts) pieces.push_back(&pt.instances);
    pieces.push_back(&part.B);
    pieces.push_back(&part.C);
    bool first = true;
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      Rational m = mass_of(di, *pieces[j]);
      if (sgn(m) == 0) continue;
      auto h = avg_over_distribution(conditional(di, *pieces[j]), pred, params.d);
      Rational avg(0);
      for (VarMask x = 0; x < xs; ++x) {
        Rational hv = h.eval(x);
        avg += x_weight * tables.q[i][x] * hv;
        if (j < part.parts.size() && (first || hv < fp.min_h)) {
          fp.min_h = hv;
          first = false;
        }
      }
      rebuilt += fp.weight * m * avg;
    }
    rep.factors.push_back(fp);
  }
  rep.reassembled = rebuilt == rep.rhs;
  return rep;
}

ObjectiveMoments exact_objective_moments(SpacePtr space, const Predicate& pred, const Caps& d) {
  auto table = background_table(space);
  ObjectiveMoments m;
  m.mean = 0;
  m.second = 0;
  for (const auto& [code, w] : table.mass()) {
    Rational g = objective_estimate_exact(table.instance_of(code), pred, d);
    m.mean += w * g;
    m.second += w * g * g;
  }
  m.expected_constraints = space->p() * Rational(static_cast<unsigned long>(space->size()));
  return m;
}

Predicate predicate_by_name(const std::string& name, int k) {
  if (name == "xor") return make_xor_predicate(k);
  if (name == "sat") return make_sat_predicate(k);
  throw Error(ErrorKind::invalid_config, "unknown predicate '" + name + "'");
}

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PSEUDOCAL_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

ConcentrationSummary run_concentration(const ConcentrationConfig& cfg) {
  if (cfg.trials < 1) throw Error(ErrorKind::invalid_config, "trials must be at least 1");
  auto pred = predicate_by_name(cfg.pred, cfg.k);
  Rational p = ScopeSpace::p_for_delta(cfg.n, cfg.k, rational_from_double(cfg.Delta));
  auto space = std::make_shared<const ScopeSpace>(ScopeSpace::full(cfg.n, cfg.k, p));
  ConcentrationSummary s;
  s.rows.resize(cfg.trials);
  CounterRng base(cfg.seed);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int t; (t = next++) < cfg.trials;) {
      auto rng = base.split(static_cast<std::uint64_t>(t));
      auto inst = sample_null(space, rng);
      auto ev = lhs_event_check(inst, pred, cfg.d, cfg.eta);
      s.rows[t] = {t, ev.constraints, ev.G, ev.lhs, ev.event()};
    }
  };
  int workers = std::min(worker_count(cfg.threads), cfg.trials);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  s.target = rational_to_double(space->delta()) * cfg.n;
  double sum = 0, sq = 0, events = 0, cons = 0;
  for (const auto& r : s.rows) {
    sum += r.G;
    events += r.event;
    cons += r.constraints;
  }
  s.mean_G = sum / cfg.trials;
  for (const auto& r : s.rows) sq += (r.G - s.mean_G) * (r.G - s.mean_G);
  s.sd_G = cfg.trials > 1 ? std::sqrt(sq / (cfg.trials - 1)) : 0.0;
  s.se_G = s.sd_G / std::sqrt(static_cast<double>(cfg.trials));
  s.pr_event = events / cfg.trials;
  s.mean_constraints = cons / cfg.trials;
  s.mean_within_3se = std::abs(s.mean_G - s.target) <= 3 * s.se_G;
  return s;
}

std::string concentration_csv(const ConcentrationSummary& s) {
  std::ostringstream os;
  os.precision(17);
  os << "trial,constraints,G,lhs,event\n";
  for (const auto& r : s.rows) os << r.trial << ',' << r.constraints << ',' << r.G << ',' << r.lhs << ',' << r.event << '\n';
  return os.str();
}

nlohmann::json concentration_json(const ConcentrationConfig& cfg, const ConcentrationSummary& s) {
  return {{"n", cfg.n},
          {"k", cfg.k},
          {"Delta", cfg.Delta},
          {"pred", cfg.pred},
          {"d_x", cfg.d.dx},
          {"d_I", cfg.d.dI},
          {"eta", cfg.eta},
          {"trials", cfg.trials},
          {"seed", cfg.seed},
          {"c", (1 - cfg.eta) * s.target},
          {"target", s.target},
          {"mean_G", s.mean_G},
          {"sd_G", s.sd_G},
          {"se_G", s.se_G},
          {"mean_within_3se", s.mean_within_3se},
          {"pr_event", s.pr_event},
          {"mean_constraints", s.mean_constraints}};
}

}  // namespace pseudocal
