#include "pseudocal/cbd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pseudocal {

DistributionTable::DistributionTable(SpacePtr space) : space_(std::move(space)) {
  if (!space_) throw Error(ErrorKind::invalid_input, "distribution without a scope space");
  if (scopes() * (k() + 1) > static_cast<std::size_t>(kMaxCodeBits))
    throw Error(ErrorKind::resource_limit, "instance space too large to tabulate");
  if (sgn(space_->p()) <= 0 || space_->p() >= 1)
    throw Error(ErrorKind::invalid_input, "background density needs 0 < p < 1");
}

Rational DistributionTable::prob(InstanceCode code) const {
  auto it = mass_.find(code);
  return it == mass_.end() ? Rational(0) : it->second;
}

void DistributionTable::set(InstanceCode code, const Rational& m) {
  if (code >= instance_count()) throw Error(ErrorKind::invalid_input, "instance code out of range");
  if (sgn(m) < 0) throw Error(ErrorKind::invalid_density, "negative mass");
  if (sgn(m) == 0)
    mass_.erase(code);
  else {
    mass_[code] = m;
    mass_[code].canonicalize();
  }
}

void DistributionTable::validate() const {
  Rational total(0);
  for (const auto& [c, m] : mass_) {
    if (sgn(m) < 0) throw Error(ErrorKind::invalid_density, "negative mass");
    if (c >= instance_count()) throw Error(ErrorKind::invalid_density, "instance code out of range");
    total += m;
  }
  if (total != 1) throw Error(ErrorKind::invalid_density, "masses sum to " + rational_str(total));
}

Rational DistributionTable::background_local(std::uint32_t state) const {
  Rational r = (state >> k() & 1u) ? space_->p() : space_->q();
  return r / Rational(local_states() / 2);
}

Rational DistributionTable::background(InstanceCode code) const {
  Rational r(1);
  for (std::size_t s = 0; s < scopes(); ++s) r *= background_local(state(code, s));
  return r;
}

InstanceCode DistributionTable::code_of(const Instance& inst) const {
  if (inst.space->scopes() != space_->scopes()) throw Error(ErrorKind::invalid_input, "instance over another space");
  InstanceCode code = 0;
  for (std::size_t s = 0; s < scopes(); ++s) {
    std::uint64_t st = inst.negation_mask(s) | (inst.included(s) ? 1u << k() : 0u);
    code |= st << (s * (k() + 1));
  }
  return code;
}

Instance DistributionTable::instance_of(InstanceCode code) const {
  Instance inst = empty_instance(space_);
  for (std::size_t s = 0; s < scopes(); ++s) {
    auto st = state(code, s);
    inst.y[s] = (st >> k() & 1u) ? -1 : 1;
    for (int j = 0; j < k(); ++j) inst.b[s * k() + j] = (st >> j & 1u) ? -1 : 1;
  }
  return inst;
}

InstanceSet DistributionTable::all_instances() const {
  InstanceSet a(instance_count());
  for (InstanceCode c = 0; c < a.size(); ++c) a[c] = c;
  return a;
}

DistributionTable background_table(SpacePtr space) {
  DistributionTable d(std::move(space));
  for (InstanceCode c = 0; c < d.instance_count(); ++c) d.set(c, d.background(c));
  return d;
}

DistributionTable point_mass(SpacePtr space, InstanceCode code) {
  DistributionTable d(std::move(space));
  d.set(code, Rational(1));
  return d;
}

DistributionTable mixture(const DistributionTable& a, const DistributionTable& b, const Rational& w) {
  if (a.space()->scopes() != b.space()->scopes() || a.space()->p() != b.space()->p())
    throw Error(ErrorKind::invalid_input, "mixture of tables over different spaces");
  if (sgn(w) < 0 || w > 1) throw Error(ErrorKind::invalid_input, "mixture weight outside [0,1]");
  DistributionTable d(a.space());
  std::map<InstanceCode, Rational> acc;
  for (const auto& [c, m] : a.mass()) acc[c] += (1 - w) * m;
  for (const auto& [c, m] : b.mass()) acc[c] += w * m;
  for (const auto& [c, m] : acc) d.set(c, m);
  return d;
}

namespace {

bool contains(const InstanceSet& a, InstanceCode c) { return std::binary_search(a.begin(), a.end(), c); }

std::string set_summary(const InstanceSet& a) { return std::to_string(a.size()); }

}  // namespace

Rational mass_of(const DistributionTable& d, const InstanceSet& a) {
  Rational r(0);
  for (const auto& [c, m] : d.mass())
    if (contains(a, c)) r += m;
  return r;
}

Rational background_mass(const DistributionTable& d, const InstanceSet& a) {
  // D(p) depends only on the number of included scopes
  std::vector<Rational> by_count(d.scopes() + 1);
  Rational unit = Rational(1) / Rational(static_cast<unsigned long>(d.local_states() / 2));
  for (std::size_t i = 0; i <= d.scopes(); ++i)
    by_count[i] = rational_pow(d.space()->p() * unit, i) * rational_pow(d.space()->q() * unit, d.scopes() - i);
  std::vector<std::uint64_t> hist(d.scopes() + 1, 0);
  for (auto c : a) {
    int inc = 0;
    for (std::size_t s = 0; s < d.scopes(); ++s) inc += d.state(c, s) >> d.k() & 1u;
    ++hist[inc];
  }
  Rational r(0);
  for (std::size_t i = 0; i <= d.scopes(); ++i) r += by_count[i] * Rational(static_cast<unsigned long>(hist[i]));
  return r;
}

DistributionTable conditional(const DistributionTable& d, const InstanceSet& a) {
  Rational total = mass_of(d, a);
  if (sgn(total) == 0) throw Error(ErrorKind::undefined_conditional, "conditioning on a set of zero mass");
  DistributionTable out(d.space());
  for (const auto& [c, m] : d.mass())
    if (contains(a, c)) out.set(c, m / total);
  return out;
}

DistributionTable random_table(SpacePtr space, CounterRng& rng, std::size_t support_size, const Rational& tilt) {
  DistributionTable spike(space);
  std::map<InstanceCode, unsigned long> w;
  unsigned long total = 0;
  for (std::size_t i = 0; i < support_size; ++i) {
    InstanceCode c = rng.below(spike.instance_count());
    unsigned long x = 1 + rng.below(9);
    w[c] += x;
    total += x;
  }
  for (const auto& [c, x] : w) spike.set(c, Rational(x, total));
  if (tilt == 1) return spike;
  return mixture(background_table(space), spike, tilt);
}

bool below_power(const Rational& a, const Rational& b, const Rational& delta) {
  if (sgn(delta) < 0) throw Error(ErrorKind::invalid_input, "delta must be nonnegative");
  if (delta >= 1) return a <= 1;
  mpz_class u = delta.get_num(), w = delta.get_den();
  long wl = w.get_si(), ul = u.get_si();
  return rational_pow(a, wl) <= rational_pow(b, wl - ul);
}

namespace {

struct Marginal {
  std::vector<std::uint32_t> scopes;
  std::map<std::vector<std::uint32_t>, Rational> mass;
};

Marginal marginal(const DistributionTable& d, std::uint64_t block) {
  Marginal m;
  for (std::uint32_t s = 0; s < d.scopes(); ++s)
    if (block >> s & 1u) m.scopes.push_back(s);
  std::vector<std::uint32_t> key(m.scopes.size());
  for (const auto& [c, p] : d.mass()) {
    for (std::size_t i = 0; i < m.scopes.size(); ++i) key[i] = d.state(c, m.scopes[i]);
    m.mass[key] += p;
  }
  return m;
}

Rational background_of(const DistributionTable& d, const std::vector<std::uint32_t>& states) {
  Rational r(1);
  for (auto st : states) r *= d.background_local(st);
  return r;
}

// Blocks in canonical order: by size, then by mask.
std::vector<std::uint64_t> blocks(std::size_t m, int max_block, std::uint64_t excluded) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t v = 1; v < (std::uint64_t{1} << m); ++v)
    if (!(v & excluded) && (max_block < 0 || popcount(v) <= max_block)) out.push_back(v);
  std::stable_sort(out.begin(), out.end(), [](auto a, auto b) { return popcount(a) < popcount(b); });
  return out;
}

std::uint64_t fixed_scopes(const DistributionTable& d, std::vector<std::uint32_t>* states) {
  std::uint64_t fixed = 0;
  if (d.mass().empty()) return 0;
  auto first = d.mass().begin()->first;
  for (std::uint32_t s = 0; s < d.scopes(); ++s) {
    bool same = std::all_of(d.mass().begin(), d.mass().end(),
                            [&](const auto& e) { return d.state(e.first, s) == d.state(first, s); });
    if (same) {
      fixed |= std::uint64_t{1} << s;
      if (states) states->push_back(d.state(first, s));
    }
  }
  return fixed;
}

}  // namespace

BlockCheck is_blockwise_dense(const DistributionTable& d, const Rational& delta, int max_block, std::uint64_t excluded) {
  BlockCheck out;
  int free_scopes = 0;
  for (std::size_t s = 0; s < d.scopes(); ++s) free_scopes += !(excluded >> s & 1u);
  out.partial = max_block >= 0 && max_block < free_scopes;
  for (auto v : blocks(d.scopes(), max_block, excluded)) {
    auto m = marginal(d, v);
    for (const auto& [states, mass] : m.mass) {
      Rational bg = background_of(d, states);
      if (!below_power(mass, bg, delta)) {
        out.dense = false;
        out.witness = BlockWitness{m.scopes, states, mass, bg};
        return out;
      }
    }
  }
  return out;
}

CbdCheck is_cbd(const DistributionTable& d, int max_block_size, const Rational& delta, int max_block) {
  CbdCheck out;
  out.off_block = is_blockwise_dense(d, delta, max_block);
  if (out.off_block.dense) {
    out.ok = true;
    return out;
  }
  std::vector<std::uint32_t> states;
  auto fixed = fixed_scopes(d, &states);
  for (std::uint32_t s = 0; s < d.scopes(); ++s)
    if (fixed >> s & 1u) out.block.push_back(s);
  out.fixed_states = states;
  if (static_cast<int>(out.block.size()) > max_block_size) return out;
  out.off_block = is_blockwise_dense(d, delta, max_block, fixed);
  out.ok = out.off_block.dense;
  return out;
}

Rational default_threshold(int n) { return rational_from_double(std::exp(-static_cast<double>(n))); }

TruncateResult truncate(const DistributionTable& d, const InstanceSet& a, int t_param, const Rational& theta) {
  if (t_param < 0) throw Error(ErrorKind::invalid_input, "negative truncation parameter");
  if (sgn(theta) <= 0) throw Error(ErrorKind::invalid_input, "threshold must be positive");
  TruncateResult out;
  Rational r = rational_pow(Rational(static_cast<long>(d.local_states() / 2)) / d.space()->p(), t_param);

  // D-mass and D(p)-mass of the current set, updated per removal
  std::vector<std::pair<InstanceCode, Rational>> support;
  for (const auto& [c, m] : d.mass())
    if (contains(a, c)) support.emplace_back(c, m);
  Rational mass(0);
  for (const auto& e : support) mass += e.second;
  Rational bg = background_mass(d, a);
  Rational bg_start = bg;
  std::vector<InstanceCode> removed;

  while (true) {
    if (mass <= theta) {
      out.stopped_by_threshold = true;
      break;
    }
    // maximizer of D(I)/D(p)(I) among the remaining support, lowest code on ties
    std::size_t best = support.size();
    Rational best_ratio;
    for (std::size_t i = 0; i < support.size(); ++i) {
      Rational ratio = support[i].second / d.background(support[i].first);
      if (best == support.size() || ratio > best_ratio) {
        best = i;
        best_ratio = ratio;
      }
    }
    if (best == support.size()) break;
    auto [code, m] = support[best];
    Rational bgi = d.background(code);
    // Pr_{D|A}[I] >= r Pr_{D(p)|A}[I]
    if (m * bg < r * bgi * mass) break;
    TruncateStep step;
    step.removed = code;
    step.background_fraction = bgi / bg;
    step.mass_fraction = m / mass;
    step.tradeoff_ok = step.mass_fraction >= step.background_fraction * r;
    out.steps.push_back(step);
    removed.push_back(code);
    mass -= m;
    bg -= bgi;
    support.erase(support.begin() + static_cast<long>(best));
  }

  std::sort(removed.begin(), removed.end());
  out.removed = removed;
  std::set_difference(a.begin(), a.end(), removed.begin(), removed.end(), std::back_inserter(out.kept));

  double ln = std::log(1.0 / rational_to_double(theta));
  out.certified_constant = static_cast<long>(std::ceil(std::max(ln, 0.0))) + 1;
  Rational unit = rational_pow(d.space()->p() / Rational(static_cast<long>(d.local_states() / 2)), t_param);
  out.certified_bound_ok = bg >= (1 - Rational(out.certified_constant) * unit) * bg_start;
  out.n_bound_ok = bg >= (1 - Rational(d.space()->n()) * unit) * bg_start;
  return out;
}

namespace {

std::string states_str(const std::vector<std::uint32_t>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
  return "[" + s + "]";
}

struct Choice {
  std::uint64_t block = 0;
  std::vector<std::uint32_t> scopes, states;
  Rational mass;
};

// Violations of Pr_D[I_V = I'_V] > D(p)^(1-delta) over all blocks V.
std::vector<Choice> violations(const DistributionTable& d, const Rational& delta) {
  std::vector<Choice> out;
  for (auto v : blocks(d.scopes(), -1, 0)) {
    auto m = marginal(d, v);
    for (const auto& [states, mass] : m.mass)
      if (!below_power(mass, background_of(d, states), delta)) out.push_back({v, m.scopes, states, mass});
  }
  return out;
}

}  // namespace

CbdPartition decompose(const DistributionTable& d, const Rational& delta, int t_param, const Rational& theta) {
  d.validate();
  CbdPartition out;
  out.delta = delta;
  out.t_param = t_param;
  out.p = d.space()->p();
  out.theta = theta;
  Rational unit = d.space()->p() / Rational(static_cast<long>(d.local_states() / 2));
  Rational small = rational_pow(unit, t_param);

  InstanceSet a = d.all_instances();
  auto log = [&](const std::string& action, const InstanceSet& s, const Rational& dm, const Rational& bm) {
    std::ostringstream os;
    os << "call=" << out.calls << " size=" << set_summary(s) << " mass=" << rational_str(dm)
       << " background=" << rational_str(bm) << " action=" << action;
    out.trace.push_back(os.str());
  };
  auto certify = [&](const CbdPart& part) {
    auto cond = conditional(d, part.instances);
    auto check = is_cbd(cond, static_cast<int>(part.block.size()), delta);
    if (!check.ok || check.block != part.block)
      throw Error(ErrorKind::internal_error, "emitted part fails the CBD certificate");
  };

  while (true) {
    ++out.calls;
    if (a.empty()) break;
    Rational dm = mass_of(d, a);
    Rational bm = background_mass(d, a);
    // 1. blockwise-dense conditional: emit
    if (sgn(dm) > 0 && is_blockwise_dense(conditional(d, a), delta).dense) {
      log("dense", a, dm, bm);
      CbdPart part{a, {}, {}, true};
      certify(part);
      out.parts.push_back(std::move(part));
      break;
    }
    // 2. negligible background mass: into B
    if (bm <= small) {
      log("background-small", a, dm, bm);
      out.B.insert(out.B.end(), a.begin(), a.end());
      break;
    }
    // 3. truncate; tiny remaining mass goes to C
    auto tr = truncate(d, a, t_param, theta);
    out.B.insert(out.B.end(), tr.removed.begin(), tr.removed.end());
    Rational kept_mass = mass_of(d, tr.kept);
    if (kept_mass <= theta) {
      log("truncate-removed=" + std::to_string(tr.removed.size()) + " mass-small", tr.kept, kept_mass, bm);
      out.C.insert(out.C.end(), tr.kept.begin(), tr.kept.end());
      break;
    }
    // 4. largest violating block, then heaviest restriction, then canonical order
    auto cond = conditional(d, tr.kept);
    auto viol = violations(cond, delta);
    if (viol.empty()) {
      log("truncate-removed=" + std::to_string(tr.removed.size()) + " dense", tr.kept, kept_mass, bm);
      CbdPart part{tr.kept, {}, {}, true};
      certify(part);
      out.parts.push_back(std::move(part));
      break;
    }
    const Choice* best = &viol.front();
    for (const auto& c : viol) {
      int cs = popcount(c.block), bs = popcount(best->block);
      if (cs > bs || (cs == bs && c.mass > best->mass)) best = &c;
    }
    bool maximal = std::none_of(viol.begin(), viol.end(), [&](const Choice& c) {
      return c.block != best->block && (c.block & best->block) == best->block;
    });
    InstanceSet a0, a1;
    for (auto c : tr.kept) {
      bool match = true;
      for (std::size_t i = 0; i < best->scopes.size() && match; ++i)
        match = d.state(c, best->scopes[i]) == best->states[i];
      (match ? a0 : a1).push_back(c);
    }
    log("truncate-removed=" + std::to_string(tr.removed.size()) + " split block=" + states_str(best->scopes) +
            " fixed=" + states_str(best->states),
        tr.kept, kept_mass, bm);
    CbdPart part{a0, best->scopes, best->states, maximal};
    certify(part);
    out.parts.push_back(std::move(part));
    a = std::move(a1);
  }
  std::sort(out.B.begin(), out.B.end());
  std::sort(out.C.begin(), out.C.end());
  return out;
}

PartitionReport verify_partition(const CbdPartition& part, const DistributionTable& d) {
  PartitionReport rep;
  // ownership: -1 unowned, i for part i, -2 for B, -3 for C
  std::vector<long> owner(d.instance_count(), -1);
  rep.partition_ok = true;
  auto claim = [&](const InstanceSet& s, long who, const std::string& name) {
    for (auto c : s) {
      if (c >= owner.size()) {
        rep.partition_ok = false;
        rep.failures.push_back("instance " + std::to_string(c) + " out of range in " + name);
        continue;
      }
      if (owner[c] != -1) {
        rep.partition_ok = false;
        rep.failures.push_back("instance " + std::to_string(c) + " in " + name + " and in owner " +
                               std::to_string(owner[c]));
      }
      owner[c] = who;
    }
  };
  for (std::size_t i = 0; i < part.parts.size(); ++i)
    claim(part.parts[i].instances, static_cast<long>(i), "part " + std::to_string(i));
  claim(part.B, -2, "B");
  claim(part.C, -3, "C");
  for (std::size_t c = 0; c < owner.size(); ++c)
    if (owner[c] == -1) {
      rep.partition_ok = false;
      rep.failures.push_back("instance " + std::to_string(c) + " not covered");
    }

  rep.parts_cbd = true;
  rep.block_sizes_ok = true;
  Rational size_limit = 2 * Rational(part.t_param) / part.delta;
  Rational total(0);
  for (std::size_t i = 0; i < part.parts.size(); ++i) {
    const auto& pt = part.parts[i];
    Rational m = mass_of(d, pt.instances);
    total += m;
    if (sgn(m) == 0) {
      rep.parts_cbd = false;
      rep.failures.push_back("part " + std::to_string(i) + " has zero mass");
      continue;
    }
    auto check = is_cbd(conditional(d, pt.instances), static_cast<int>(pt.block.size()), part.delta);
    if (!check.ok || check.block != pt.block) {
      rep.parts_cbd = false;
      rep.failures.push_back("part " + std::to_string(i) + " is not CBD with its block");
    }
    if (Rational(static_cast<long>(pt.block.size())) > size_limit) {
      rep.block_sizes_ok = false;
      rep.failures.push_back("part " + std::to_string(i) + " block size " + std::to_string(pt.block.size()) +
                             " exceeds (2/delta)t = " + rational_str(size_limit));
    }
  }
  int n = d.space()->n(), k = d.k();
  Rational unit = d.space()->p() / Rational(static_cast<long>(d.local_states() / 2));
  rep.b_background = background_mass(d, part.B);
  rep.b_limit = rational_pow(Rational(n), k + 1) * rational_pow(unit, part.t_param);
  rep.b_bound_ok = rep.b_background <= rep.b_limit;
  if (!rep.b_bound_ok) rep.failures.push_back("background mass of B above n^(k+1) (p/2^k)^t");
  rep.c_mass = mass_of(d, part.C);
  rep.c_limit = Rational(static_cast<long>(part.calls)) * part.theta;
  rep.c_bound_ok = rep.c_mass <= rep.c_limit;
  if (!rep.c_bound_ok) rep.failures.push_back("mass of C above calls * theta");
  total += mass_of(d, part.B) + rep.c_mass;
  rep.mass_accounting_ok = total == 1;
  if (!rep.mass_accounting_ok) rep.failures.push_back("masses sum to " + rational_str(total));
  return rep;
}

nlohmann::json partition_to_json(const CbdPartition& part, const DistributionTable& d, const PartitionReport& rep) {
  using nlohmann::json;
  json j;
  j["delta"] = rational_str(part.delta);
  j["t"] = part.t_param;
  j["p"] = rational_str(part.p);
  j["theta"] = rational_str(part.theta);
  j["calls"] = part.calls;
  json parts = json::array();
  for (const auto& pt : part.parts) {
    json block = json::array();
    for (std::size_t i = 0; i < pt.block.size(); ++i) {
      auto st = pt.fixed_states[i];
      json b = json::array();
      for (int jj = 0; jj < d.k(); ++jj) b.push_back((st >> jj & 1u) ? -1 : 1);
      block.push_back({{"scope", d.space()->scope(pt.block[i])}, {"y", (st >> d.k() & 1u) ? -1 : 1}, {"b", b}});
    }
    parts.push_back({{"block", block},
                     {"instances", pt.instances},
                     {"mass", rational_str(mass_of(d, pt.instances))},
                     {"maximal", pt.maximal}});
  }
  j["parts"] = parts;
  j["B"] = part.B;
  j["C"] = part.C;
  j["trace"] = part.trace;
  j["report"] = {{"partition_ok", rep.partition_ok},
                 {"parts_cbd", rep.parts_cbd},
                 {"block_sizes_ok", rep.block_sizes_ok},
                 {"b_bound_ok", rep.b_bound_ok},
                 {"c_bound_ok", rep.c_bound_ok},
                 {"mass_accounting_ok", rep.mass_accounting_ok},
                 {"b_background", rational_str(rep.b_background)},
                 {"b_limit", rational_str(rep.b_limit)},
                 {"c_mass", rational_str(rep.c_mass)},
                 {"c_limit", rational_str(rep.c_limit)},
                 {"failures", rep.failures}};
  return j;
}

}  // namespace pseudocal
