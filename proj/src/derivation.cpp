#include "pseudocal/derivation.hpp"

#include <boost/dynamic_bitset.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pseudocal {

bool derives(const ScopeSpace& space, const Gamma& gamma, VarMask alpha) {
  VarMask odd = 0;
  for (const auto& st : gamma) {
    if (st.scope >= space.size()) throw Error(ErrorKind::invalid_index, "scope id out of range");
    const auto& sc = space.scope(st.scope);
    for (int j = 0; j < space.k(); ++j)
      if (st.tmask >> j & 1u) odd ^= VarMask{1} << sc[j];
  }
  return odd == alpha;
}

namespace {

void check_query(const DerivationQuery& q) {
  if (!q.space) throw Error(ErrorKind::invalid_input, "query without a scope space");
  if (q.l_max < 0) throw Error(ErrorKind::invalid_input, "negative l_max");
  if (static_cast<long>(q.l_max) * q.space->k() > kMaxDerivationSlots)
    throw Error(ErrorKind::resource_limit, "l_max * k exceeds the enumeration guard");
  if (!q.allowed.empty() && q.allowed.size() != q.space->size())
    throw Error(ErrorKind::invalid_input, "allowed mask does not match the scope space");
}

// Visits every gamma over the query's scopes with gamma |- alpha.
template <class Fn>
void walk_derivations(const DerivationQuery& q, Fn&& emit) {
  check_query(q);
  const auto& space = *q.space;
  int k = space.k();
  std::vector<LocalMask> slots;
  for (LocalMask T = 1; T < (LocalMask{1} << k); ++T)
    if (popcount(T) >= q.r_min) slots.push_back(T);
  std::vector<VarMask> scope_masks(space.size());
  Gamma gamma;
  std::size_t nodes = 0;
  auto rec = [&](auto&& self, std::size_t pos, VarMask odd) -> void {
    if (++nodes > kDerivationNodeBudget) throw Error(ErrorKind::resource_limit, "derivation enumeration budget exceeded");
    int left = q.l_max - static_cast<int>(gamma.size());
    if (popcount(odd ^ q.alpha) > left * k) return;
    if (odd == q.alpha) emit(gamma);
    if (left == 0) return;
    for (std::size_t s = pos; s < space.size(); ++s) {
      if (!q.allowed.empty() && !q.allowed[s]) continue;
      const auto& sc = space.scope(s);
      for (LocalMask T : slots) {
        VarMask a = odd;
        for (int j = 0; j < k; ++j)
          if (T >> j & 1u) a ^= VarMask{1} << sc[j];
        gamma.push_back({static_cast<std::uint32_t>(s), 0, T});
        self(self, s + 1, a);
        gamma.pop_back();
      }
    }
  };
  rec(rec, 0, 0);
}

double safe_pow(double base, double e) {
  if (base == 0.0) return e == 0.0 ? 1.0 : 0.0;
  return std::pow(base, e);
}

double binom(int n, int r) {
  if (r < 0 || r > n) return 0;
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0));
}

std::string alpha_str(VarMask a) {
  std::string s;
  for (int i = 0; i < 64; ++i)
    if (a >> i & 1u) s += (s.empty() ? "" : " ") + std::to_string(i);
  return s;
}

}  // namespace

std::vector<Derivation> enumerate_derivations(const DerivationQuery& q) {
  std::vector<Derivation> out;
  walk_derivations(q, [&](const Gamma& g) {
    out.push_back({g, static_cast<int>(g.size()), std::uint64_t{1} << g.size()});
  });
  return out;
}

std::vector<DerivationCount> count_by_size(const DerivationQuery& q) {
  std::vector<DerivationCount> out(q.l_max + 1);
  walk_derivations(q, [&](const Gamma& g) {
    auto& c = out[g.size()];
    ++c.gammas;
    c.pairs += std::uint64_t{1} << g.size();
  });
  return out;
}

double count_bound(double n, int k, int t, int alpha_size, int l, double C, double regime) {
  if (n <= 0 || k < 1 || l < 0 || alpha_size < 0) throw Error(ErrorKind::invalid_input, "bad count-bound arguments");
  if (l > regime * n / k) throw Error(ErrorKind::out_of_regime, "l exceeds c*n/k");
  double half = (static_cast<double>(t) * l + alpha_size) / 2;
  return std::pow(C, l) * std::pow(n, k * l - half) * safe_pow(l, half - l);
}

CountTable count_table(SpacePtr space, int t, int alpha_max, int l_max, double C) {
  CountTable table;
  table.n = space->n();
  table.k = space->k();
  table.t = t;
  int n = space->n();
  for (VarMask alpha = 0; alpha < (VarMask{1} << n); ++alpha) {
    if (popcount(alpha) > alpha_max) continue;
    DerivationQuery q{space, alpha, l_max, t, {}};
    auto counts = count_by_size(q);
    for (int l = 0; l <= l_max; ++l) {
      CountRow row{alpha, l, counts[l].pairs, counts[l].gammas,
                   count_bound(n, space->k(), t, popcount(alpha), l, C)};
      table.rows.push_back(row);
      if (l >= 1 && row.brute_count > 0) {
        double base = count_bound(n, space->k(), t, popcount(alpha), l, 1.0);
        table.fitted_C = std::max(table.fitted_C, std::pow(row.brute_count / base, 1.0 / l));
      }
    }
  }
  return table;
}

std::string count_csv(const CountTable& table) {
  std::ostringstream os;
  os << "alpha,l,brute_count,bound,C_fitted\n";
  os.precision(17);
  for (const auto& r : table.rows)
    os << '"' << alpha_str(r.alpha) << "\"," << r.l << ',' << r.brute_count << ',' << r.bound << ','
       << table.fitted_C << '\n';
  return os.str();
}

WeightedSum weighted_sum(SpacePtr space, const Predicate& pred, VarMask alpha, int s, int l, double C) {
  if (s < 0 || l < s) throw Error(ErrorKind::invalid_input, "need 0 <= s <= l");
  DerivationQuery q{space, alpha, l, pred.t, {}};
  auto counts = count_by_size(q);
  WeightedSum out;
  out.sum = 0;
  for (int r = s; r <= l; ++r) out.sum += rational_pow(space->p(), r) * Rational(static_cast<unsigned long>(counts[r].pairs));
  double n = space->n();
  double delta = rational_to_double(space->delta());
  out.bound = safe_pow(C * delta, s) * safe_pow(s / n, 0.5 * (pred.t - 2) * s + 0.5 * popcount(alpha));
  out.holds = rational_to_double(out.sum) <= out.bound;
  return out;
}

LevelL2 level_l2(SpacePtr space, const Predicate& pred, VarMask alpha, int l, double C) {
  if (pred.k != space->k()) throw Error(ErrorKind::invalid_input, "predicate arity differs from scope arity");
  DerivationQuery q{space, alpha, l, pred.t, {}};
  LevelL2 out;
  out.value = 0;
  // Summing beta out: p^2 eta^2 + pq eta^2 = p eta^2 per scope.
  walk_derivations(q, [&](const Gamma& g) {
    Rational c(1);
    for (const auto& st : g) c *= space->p() * pred.eta_hat[st.tmask] * pred.eta_hat[st.tmask];
    out.value += c;
  });
  int n = space->n();
  int a = popcount(alpha);
  int s = (a + space->k() - 1) / space->k();
  double delta = rational_to_double(space->delta());
  out.bound = std::pow(C * delta, s) * std::pow(binom(n, s), -0.5 * (pred.t - 2)) * std::pow(binom(n, a), -0.5);
  out.holds = rational_to_double(out.value) <= out.bound;
  return out;
}

std::vector<std::vector<std::size_t>> xor_derivations_f2(const Instance& inst, const Predicate& pred, VarMask alpha) {
  const auto& space = *inst.space;
  if (pred.k != space.k() || pred.t != pred.k) throw Error(ErrorKind::invalid_input, "F2 route needs a k-XOR predicate");
  for (LocalMask T = 1; T + 1 < pred.table_size(); ++T)
    if (sgn(pred.eta_hat[T]) != 0) throw Error(ErrorKind::invalid_input, "F2 route needs a k-XOR predicate");
  std::vector<std::size_t> cols;
  for (std::size_t s = 0; s < space.size(); ++s)
    if (inst.included(s)) cols.push_back(s);
  std::size_t m = cols.size();
  using Bits = boost::dynamic_bitset<>;

  // Row echelon basis keyed by pivot (lowest set variable), each with the
  // combination of columns producing it.
  std::vector<std::pair<VarMask, Bits>> basis;
  std::vector<Bits> null;
  auto reduce = [&](VarMask v, Bits combo) {
    for (const auto& [bv, bc] : basis)
      if (v & (bv & (~bv + 1))) {
        v ^= bv;
        combo ^= bc;
      }
    return std::pair{v, combo};
  };
  for (std::size_t c = 0; c < m; ++c) {
    Bits e(m);
    e.set(c);
    auto [v, combo] = reduce(space.var_mask(cols[c]), e);
    if (v == 0) {
      null.push_back(combo);
      if (null.size() > static_cast<std::size_t>(kMaxNullspaceDim))
        throw Error(ErrorKind::resource_limit, "nullspace dimension exceeds the enumeration guard");
    } else {
      // keep the basis fully reduced on pivots so one pass suffices
      VarMask pivot = v & (~v + 1);
      for (auto& [bv, bc] : basis)
        if (bv & pivot) {
          bv ^= v;
          bc ^= combo;
        }
      basis.emplace_back(v, combo);
    }
  }
  auto [rest, particular] = reduce(alpha, Bits(m));
  std::vector<std::vector<std::size_t>> out;
  if (rest != 0) return out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << null.size()); ++mask) {
    Bits combo = particular;
    for (std::size_t i = 0; i < null.size(); ++i)
      if (mask >> i & 1u) combo ^= null[i];
    std::vector<std::size_t> pick;
    for (std::size_t c = 0; c < m; ++c)
      if (combo.test(c)) pick.push_back(cols[c]);
    out.push_back(std::move(pick));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pseudocal
