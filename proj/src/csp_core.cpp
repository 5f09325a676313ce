#include "pseudocal/csp_core.hpp"

#include <algorithm>
#include <set>

namespace pseudocal {

namespace {

std::vector<Rational> density_from_hat(int k, const std::vector<Rational>& eta_hat) {
  std::size_t size = std::size_t{1} << k;
  std::vector<Rational> eta(size, Rational(0));
  for (LocalMask z = 0; z < size; ++z)
    for (LocalMask T = 0; T < size; ++T)
      if (sgn(eta_hat[T]) != 0) eta[z] += parity_sign(T & z) * eta_hat[T];
  return eta;
}

void check_density(int k, const std::vector<Rational>& eta_hat, const std::vector<Rational>& eta) {
  if (eta_hat.size() != (std::size_t{1} << k)) throw Error(ErrorKind::invalid_input, "eta_hat must have 2^k entries");
  if (eta_hat[0] != 1) throw Error(ErrorKind::invalid_density, "eta_hat of the empty set must be 1");
  for (const auto& v : eta)
    if (sgn(v) < 0) throw Error(ErrorKind::invalid_density, "reconstructed density is negative somewhere");
}

// Marginal of the planted law on the slots in W, compressed to |W| bits.
std::vector<Rational> local_marginal(const Predicate& pred, const std::vector<Rational>& weight, LocalMask W) {
  std::vector<int> slots;
  for (int j = 0; j < pred.k; ++j)
    if (W >> j & 1u) slots.push_back(j);
  std::vector<Rational> marg(std::size_t{1} << slots.size(), Rational(0));
  for (LocalMask z = 0; z < pred.table_size(); ++z) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (z >> slots[i] & 1u) idx |= std::size_t{1} << i;
    marg[idx] += weight[z];
  }
  return marg;
}

}  // namespace

Predicate make_predicate(int k, int t, std::vector<std::uint8_t> truth_table, std::vector<Rational> eta_hat) {
  if (k < 1 || k > 16) throw Error(ErrorKind::invalid_arity, "arity must be in [1,16]");
  std::size_t size = std::size_t{1} << k;
  if (truth_table.size() != size) throw Error(ErrorKind::invalid_input, "truth table must have 2^k entries");
  for (auto v : truth_table)
    if (v > 1) throw Error(ErrorKind::invalid_input, "truth table entries must be 0 or 1");
  for (auto& v : eta_hat) v.canonicalize();
  Predicate pred;
  pred.k = k;
  pred.t = t;
  pred.truth_table = std::move(truth_table);
  pred.eta_hat = std::move(eta_hat);
  pred.eta = density_from_hat(k, pred.eta_hat);
  check_density(k, pred.eta_hat, pred.eta);
  for (LocalMask z = 0; z < size; ++z)
    if (sgn(pred.eta[z]) > 0 && pred.truth_table[z] == 0)
      throw Error(ErrorKind::invalid_density, "planted law puts mass on an unsatisfying point");
  if (t < 1 || t > k + 1) throw Error(ErrorKind::invalid_input, "uniformity level t must be in [1,k+1]");
  for (LocalMask T = 1; T < size; ++T)
    if (popcount(T) <= t - 1 && sgn(pred.eta_hat[T]) != 0)
      throw Error(ErrorKind::invalid_density, "eta_hat nonzero below the declared uniformity level");
  pred.weight.resize(size);
  pred.value_hat.assign(size, Rational(0));
  Rational scale(1, static_cast<unsigned long>(size));
  for (LocalMask z = 0; z < size; ++z) pred.weight[z] = pred.eta[z] * scale;
  for (LocalMask T = 0; T < size; ++T) {
    for (LocalMask z = 0; z < size; ++z)
      if (pred.truth_table[z]) pred.value_hat[T] += parity_sign(T & z);
    pred.value_hat[T] *= scale;
  }
  return pred;
}

Predicate make_xor_predicate(int k) {
  if (k < 2) throw Error(ErrorKind::invalid_arity, "xor predicate needs k >= 2");
  std::size_t size = std::size_t{1} << k;
  std::vector<std::uint8_t> table(size);
  for (LocalMask z = 0; z < size; ++z) table[z] = parity_sign(z) < 0 ? 1 : 0;
  std::vector<Rational> hat(size, Rational(0));
  hat[0] = 1;
  hat[size - 1] = -1;
  return make_predicate(k, k, std::move(table), std::move(hat));
}

Predicate make_sat_predicate(int k) {
  if (k < 2) throw Error(ErrorKind::invalid_arity, "sat predicate needs k >= 2");
  std::size_t size = std::size_t{1} << k;
  std::vector<std::uint8_t> table(size);
  for (LocalMask z = 0; z < size; ++z) table[z] = z != 0 ? 1 : 0;
  std::vector<Rational> hat(size, Rational(0));
  hat[0] = 1;
  hat[size - 1] = -1;
  return make_predicate(k, k, std::move(table), std::move(hat));
}

Predicate make_uniform_predicate(int k) {
  std::size_t size = std::size_t{1} << k;
  std::vector<Rational> hat(size, Rational(0));
  hat[0] = 1;
  return make_predicate(k, k + 1, std::vector<std::uint8_t>(size, 1), std::move(hat));
}

UniformityReport verify_twise_uniform(const Predicate& pred) {
  auto eta = density_from_hat(pred.k, pred.eta_hat);
  check_density(pred.k, pred.eta_hat, eta);
  std::vector<Rational> weight(eta.size());
  Rational scale(1, static_cast<unsigned long>(eta.size()));
  for (std::size_t z = 0; z < eta.size(); ++z) weight[z] = eta[z] * scale;

  UniformityReport rep;
  rep.max_uniform_level = pred.k;
  for (int w = 1; w <= pred.k && !rep.has_witness; ++w) {
    for (LocalMask W = 1; W < pred.table_size(); ++W) {
      if (popcount(W) != w) continue;
      auto marg = local_marginal(pred, weight, W);
      Rational uniform(1, static_cast<unsigned long>(marg.size()));
      bool ok = std::all_of(marg.begin(), marg.end(), [&](const Rational& v) { return v == uniform; });
      if (!ok) {
        rep.max_uniform_level = w - 1;
        rep.has_witness = true;
        rep.witness_subset = W;
        rep.witness_marginal = std::move(marg);
        break;
      }
    }
  }
  return rep;
}

mpz_class ScopeSpace::full_count(int n, int k) {
  mpz_class c = 1;
  for (int i = 0; i < k; ++i) c *= n - i;
  return c;
}

ScopeSpace::ScopeSpace(int n, int k, std::vector<Scope> scopes, const Rational& p, bool full)
    : n_(n), k_(k), scopes_(std::move(scopes)), p_(p), full_(full) {
  p_.canonicalize();
  masks_.reserve(scopes_.size());
  for (const auto& s : scopes_) {
    VarMask m = 0;
    for (int i : s) m |= VarMask{1} << i;
    masks_.push_back(m);
  }
}

ScopeSpace ScopeSpace::full(int n, int k, const Rational& p) {
  if (k < 1 || n < k) throw Error(ErrorKind::invalid_arity, "need 1 <= k <= n");
  if (n > 64) throw Error(ErrorKind::resource_limit, "at most 64 variables are supported");
  if (sgn(p) < 0 || p > 1) throw Error(ErrorKind::invalid_input, "p must lie in [0,1]");
  if (full_count(n, k) > 50'000'000) throw Error(ErrorKind::resource_limit, "full scope space too large");
  std::vector<Scope> scopes;
  Scope cur(k);
  std::vector<char> used(n, 0);
  auto rec = [&](auto&& self, int pos) -> void {
    if (pos == k) {
      scopes.push_back(cur);
      return;
    }
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      used[i] = 1;
      cur[pos] = i;
      self(self, pos + 1);
      used[i] = 0;
    }
  };
  rec(rec, 0);
  return ScopeSpace(n, k, std::move(scopes), p, true);
}

ScopeSpace ScopeSpace::restricted(int n, int k, std::vector<Scope> scopes, const Rational& p) {
  if (k < 1 || n < k) throw Error(ErrorKind::invalid_arity, "need 1 <= k <= n");
  if (n > 64) throw Error(ErrorKind::resource_limit, "at most 64 variables are supported");
  if (sgn(p) < 0 || p > 1) throw Error(ErrorKind::invalid_input, "p must lie in [0,1]");
  for (const auto& s : scopes) {
    if (static_cast<int>(s.size()) != k) throw Error(ErrorKind::invalid_input, "scope of wrong arity");
    std::set<int> seen;
    for (int i : s) {
      if (i < 0 || i >= n) throw Error(ErrorKind::invalid_input, "scope index out of range");
      if (!seen.insert(i).second) throw Error(ErrorKind::invalid_input, "scope repeats a variable");
    }
  }
  std::sort(scopes.begin(), scopes.end());
  if (std::adjacent_find(scopes.begin(), scopes.end()) != scopes.end())
    throw Error(ErrorKind::invalid_input, "duplicate scope");
  bool full = mpz_class(scopes.size()) == full_count(n, k);
  return ScopeSpace(n, k, std::move(scopes), p, full);
}

Rational ScopeSpace::p_for_delta(int n, int k, const Rational& delta) {
  Rational p = delta * n / Rational(full_count(n, k));
  p.canonicalize();
  if (p > 1) throw Error(ErrorKind::invalid_input, "delta too large for this n and k");
  return p;
}

Rational ScopeSpace::delta() const {
  Rational d = p_ * Rational(full_count(n_, k_)) / n_;
  d.canonicalize();
  return d;
}

std::optional<std::size_t> ScopeSpace::find(const Scope& s) const {
  auto it = std::lower_bound(scopes_.begin(), scopes_.end(), s);
  if (it == scopes_.end() || *it != s) return std::nullopt;
  return static_cast<std::size_t>(it - scopes_.begin());
}

std::size_t Instance::constraint_count() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), std::int8_t{-1}));
}

LocalMask Instance::literal_mask(std::size_t s, const Assignment& x) const {
  const auto& sc = space->scope(s);
  int k = space->k();
  LocalMask m = 0;
  for (int j = 0; j < k; ++j)
    if (b[s * k + j] * x[sc[j]] < 0) m |= LocalMask{1} << j;
  return m;
}

LocalMask Instance::negation_mask(std::size_t s) const {
  int k = space->k();
  LocalMask m = 0;
  for (int j = 0; j < k; ++j)
    if (b[s * k + j] < 0) m |= LocalMask{1} << j;
  return m;
}

void Instance::validate() const {
  if (!space) throw Error(ErrorKind::invalid_input, "instance without a scope space");
  if (y.size() != space->size()) throw Error(ErrorKind::invalid_input, "y has the wrong length");
  if (b.size() != space->size() * static_cast<std::size_t>(space->k()))
    throw Error(ErrorKind::invalid_input, "b has the wrong length");
  for (auto v : y)
    if (v != 1 && v != -1) throw Error(ErrorKind::invalid_input, "y entries must be +-1");
  for (auto v : b)
    if (v != 1 && v != -1) throw Error(ErrorKind::invalid_input, "b entries must be +-1");
}

Instance empty_instance(SpacePtr space) {
  Instance inst;
  inst.y.assign(space->size(), 1);
  inst.b.assign(space->size() * space->k(), 1);
  inst.space = std::move(space);
  return inst;
}

Instance sample_null(SpacePtr space, CounterRng& rng) {
  Instance inst = empty_instance(space);
  double p = space->p().get_d();
  int k = space->k();
  for (std::size_t s = 0; s < space->size(); ++s) {
    inst.y[s] = rng.bernoulli(p) ? -1 : 1;
    for (int j = 0; j < k; ++j) inst.b[s * k + j] = static_cast<std::int8_t>(rng.sign());
  }
  return inst;
}

LocalMask sample_local(const Predicate& pred, CounterRng& rng) {
  double u = rng.uniform(), acc = 0.0;
  LocalMask last = 0;
  for (LocalMask z = 0; z < pred.table_size(); ++z) {
    if (sgn(pred.weight[z]) == 0) continue;
    acc += pred.weight[z].get_d();
    last = z;
    if (u < acc) return z;
  }
  return last;
}

std::pair<Assignment, Instance> sample_planted(SpacePtr space, const Predicate& pred, CounterRng& rng) {
  if (pred.k != space->k()) throw Error(ErrorKind::invalid_input, "predicate arity differs from scope arity");
  Assignment x(space->n());
  for (auto& v : x) v = static_cast<std::int8_t>(rng.sign());
  Instance inst = empty_instance(space);
  double p = space->p().get_d();
  int k = space->k();
  for (std::size_t s = 0; s < space->size(); ++s) {
    const auto& sc = space->scope(s);
    if (rng.bernoulli(p)) {
      inst.y[s] = -1;
      LocalMask z = sample_local(pred, rng);
      for (int j = 0; j < k; ++j) inst.b[s * k + j] = static_cast<std::int8_t>(((z >> j & 1u) ? -1 : 1) * x[sc[j]]);
    } else {
      for (int j = 0; j < k; ++j) inst.b[s * k + j] = static_cast<std::int8_t>(rng.sign());
    }
  }
  return {std::move(x), std::move(inst)};
}

long objective(const Instance& inst, const Predicate& pred, const Assignment& x) {
  if (static_cast<int>(x.size()) != inst.space->n()) throw Error(ErrorKind::invalid_input, "assignment length mismatch");
  if (pred.k != inst.space->k()) throw Error(ErrorKind::invalid_input, "predicate arity mismatch");
  long total = 0;
  for (std::size_t s = 0; s < inst.space->size(); ++s)
    if (inst.included(s)) total += pred.value(inst.literal_mask(s, x));
  return total;
}

Assignment assignment_from_code(std::uint64_t code, int n) {
  Assignment x(n);
  for (int i = 0; i < n; ++i) x[i] = (code >> (n - 1 - i) & 1u) ? -1 : 1;
  return x;
}

VarMask assignment_mask(const Assignment& x) {
  VarMask m = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < 0) m |= VarMask{1} << i;
  return m;
}

OptResult opt_brute(const Instance& inst, const Predicate& pred) {
  int n = inst.space->n();
  if (n > kMaxBruteVars) throw Error(ErrorKind::resource_limit, "brute force limited to 24 variables");
  if (pred.k != inst.space->k()) throw Error(ErrorKind::invalid_input, "predicate arity mismatch");
  struct Clause {
    std::vector<int> vars;
    LocalMask neg;
  };
  std::vector<Clause> clauses;
  for (std::size_t s = 0; s < inst.space->size(); ++s)
    if (inst.included(s)) clauses.push_back({inst.space->scope(s), inst.negation_mask(s)});
  OptResult best{-1, {}};
  std::uint64_t best_code = 0;
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << n); ++code) {
    long val = 0;
    for (const auto& c : clauses) {
      LocalMask z = c.neg;
      for (std::size_t j = 0; j < c.vars.size(); ++j)
        if (code >> (n - 1 - c.vars[j]) & 1u) z ^= LocalMask{1} << j;
      val += pred.value(z);
    }
    if (val > best.value) {
      best.value = val;
      best_code = code;
    }
  }
  best.x = assignment_from_code(best_code, n);
  return best;
}

nlohmann::json instance_to_json(const Instance& inst) {
  nlohmann::json j;
  j["n"] = inst.space->n();
  j["k"] = inst.space->k();
  j["p"] = inst.space->p().get_str();
  j["scopes"] = inst.space->scopes();
  j["y"] = inst.y;
  auto b = nlohmann::json::array();
  int k = inst.space->k();
  for (std::size_t s = 0; s < inst.space->size(); ++s)
    b.push_back(std::vector<int>(inst.b.begin() + s * k, inst.b.begin() + (s + 1) * k));
  j["b"] = b;
  return j;
}

Instance instance_from_json(const nlohmann::json& j, const Rational& p) {
  try {
    int n = j.at("n").get<int>(), k = j.at("k").get<int>();
    Rational prob = j.contains("p") ? parse_rational(j["p"].get<std::string>()) : p;
    auto scopes = j.at("scopes").get<std::vector<Scope>>();
    auto ys = j.at("y").get<std::vector<int>>();
    auto bs = j.at("b").get<std::vector<std::vector<int>>>();
    if (ys.size() != scopes.size() || bs.size() != scopes.size())
      throw Error(ErrorKind::invalid_input, "scopes, y and b must have equal length");
    // keep the per-scope data aligned with the canonical scope order
    std::vector<std::size_t> order(scopes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b2) { return scopes[a] < scopes[b2]; });
    auto space = std::make_shared<const ScopeSpace>(ScopeSpace::restricted(n, k, scopes, prob));
    Instance inst = empty_instance(space);
    for (std::size_t r = 0; r < order.size(); ++r) {
      std::size_t i = order[r];
      inst.y[r] = static_cast<std::int8_t>(ys[i]);
      if (static_cast<int>(bs[i].size()) != k) throw Error(ErrorKind::invalid_input, "b row of wrong arity");
      for (int jj = 0; jj < k; ++jj) inst.b[r * k + jj] = static_cast<std::int8_t>(bs[i][jj]);
    }
    inst.validate();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse_error, e.what());
  }
}

nlohmann::json predicate_to_json(const Predicate& pred) {
  nlohmann::json j;
  j["k"] = pred.k;
  j["t"] = pred.t;
  j["truth_table"] = pred.truth_table;
  auto eta = nlohmann::json::array();
  for (const auto& v : pred.eta_hat) eta.push_back(v.get_str());
  j["eta"] = eta;
  return j;
}

Predicate predicate_from_json(const nlohmann::json& j) {
  try {
    int k = j.at("k").get<int>(), t = j.at("t").get<int>();
    auto table = j.at("truth_table").get<std::vector<std::uint8_t>>();
    std::vector<Rational> hat;
    for (const auto& v : j.at("eta")) hat.push_back(v.is_string() ? parse_rational(v.get<std::string>()) : Rational(v.get<long>()));
    return make_predicate(k, t, std::move(table), std::move(hat));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse_error, e.what());
  }
}

}  // namespace pseudocal
