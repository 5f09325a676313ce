#include "pseudocal/fourier_poly.hpp"

#include <algorithm>
#include <sstream>

namespace pseudocal {

BasisIndex BasisIndex::make(VarMask alpha, std::vector<ScopeTerm> terms) {
  std::erase_if(terms, [](const ScopeTerm& st) { return st.beta == 0 && st.tmask == 0; });
  std::sort(terms.begin(), terms.end());
  for (std::size_t i = 1; i < terms.size(); ++i)
    if (terms[i].scope == terms[i - 1].scope) throw Error(ErrorKind::invalid_index, "scope repeated in a basis index");
  BasisIndex idx;
  idx.alpha = alpha;
  idx.terms = std::move(terms);
  return idx;
}

int BasisIndex::beta_size() const {
  int c = 0;
  for (const auto& st : terms) c += st.beta;
  return c;
}

int BasisIndex::gamma_scopes() const {
  int c = 0;
  for (const auto& st : terms) c += st.tmask != 0;
  return c;
}

int BasisIndex::min_arity() const {
  int r = 0;
  for (const auto& st : terms)
    if (st.tmask) r = r == 0 ? popcount(st.tmask) : std::min(r, popcount(st.tmask));
  return r;
}

bool BasisIndex::beta_within_gamma() const {
  return std::all_of(terms.begin(), terms.end(), [](const ScopeTerm& st) { return !st.beta || st.tmask; });
}

const ScopeTerm* BasisIndex::find(std::uint32_t scope) const {
  auto it = std::lower_bound(terms.begin(), terms.end(), scope,
                             [](const ScopeTerm& st, std::uint32_t s) { return st.scope < s; });
  return it != terms.end() && it->scope == scope ? &*it : nullptr;
}

RestrictedInstance RestrictedInstance::from_instance(const Instance& inst, std::vector<std::uint32_t> scopes) {
  std::sort(scopes.begin(), scopes.end());
  RestrictedInstance r;
  int k = inst.space->k();
  for (auto s : scopes) {
    if (s >= inst.space->size()) throw Error(ErrorKind::invalid_restriction, "scope id out of range");
    r.y.push_back(inst.y[s]);
    for (int j = 0; j < k; ++j) r.b.push_back(inst.neg(s, j));
  }
  r.scopes = std::move(scopes);
  return r;
}

void RestrictedInstance::validate(const ScopeSpace& space) const {
  if (y.size() != scopes.size() || b.size() != scopes.size() * static_cast<std::size_t>(space.k()))
    throw Error(ErrorKind::invalid_restriction, "fixed values do not match the fixed scope set");
  if (!std::is_sorted(scopes.begin(), scopes.end()) ||
      std::adjacent_find(scopes.begin(), scopes.end()) != scopes.end())
    throw Error(ErrorKind::invalid_restriction, "fixed scope set must be sorted and distinct");
  for (auto s : scopes)
    if (s >= space.size()) throw Error(ErrorKind::invalid_restriction, "scope id out of range");
  for (auto v : y)
    if (v != 1 && v != -1) throw Error(ErrorKind::invalid_restriction, "y entries must be +-1");
  for (auto v : b)
    if (v != 1 && v != -1) throw Error(ErrorKind::invalid_restriction, "b entries must be +-1");
}

std::optional<std::size_t> RestrictedInstance::position(std::uint32_t scope) const {
  auto it = std::lower_bound(scopes.begin(), scopes.end(), scope);
  if (it == scopes.end() || *it != scope) return std::nullopt;
  return static_cast<std::size_t>(it - scopes.begin());
}

MixedPoly<double> to_float(const MixedPoly<Surd>& f) {
  MixedPoly<double> r(f.space(), f.caps());
  for (const auto& [idx, c] : f.terms()) r.add(idx, c.to_double());
  return r;
}

std::string index_to_json_line(const ScopeSpace& space, const BasisIndex& idx, const nlohmann::json& c) {
  nlohmann::json j;
  auto alpha = nlohmann::json::array();
  for (int i = 0; i < space.n(); ++i)
    if (idx.alpha >> i & 1u) alpha.push_back(i);
  auto beta = nlohmann::json::array();
  auto gamma = nlohmann::json::array();
  for (const auto& st : idx.terms) {
    const auto& sc = space.scope(st.scope);
    if (st.beta) beta.push_back(sc);
    for (int jj = 0; jj < space.k(); ++jj)
      if (st.tmask >> jj & 1u) gamma.push_back(nlohmann::json::array({sc, jj}));
  }
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["gamma"] = gamma;
  j["c"] = c;
  return j.dump();
}

BasisIndex index_from_json(const ScopeSpace& space, const nlohmann::json& j) {
  try {
    VarMask alpha = 0;
    for (const auto& v : j.at("alpha")) {
      int i = v.get<int>();
      if (i < 0 || i >= space.n()) throw Error(ErrorKind::invalid_index, "alpha index out of range");
      alpha |= VarMask{1} << i;
    }
    std::map<std::uint32_t, ScopeTerm> per;
    auto scope_id = [&](const nlohmann::json& s) {
      auto id = space.find(s.get<Scope>());
      if (!id) throw Error(ErrorKind::invalid_index, "scope not in the space");
      return static_cast<std::uint32_t>(*id);
    };
    for (const auto& s : j.at("beta")) {
      auto id = scope_id(s);
      per[id].scope = id;
      per[id].beta = 1;
    }
    for (const auto& g : j.at("gamma")) {
      auto id = scope_id(g.at(0));
      int slot = g.at(1).get<int>();
      if (slot < 0 || slot >= space.k()) throw Error(ErrorKind::invalid_index, "slot out of range");
      per[id].scope = id;
      per[id].tmask |= LocalMask{1} << slot;
    }
    std::vector<ScopeTerm> terms;
    for (auto& [id, st] : per) terms.push_back(st);
    return BasisIndex::make(alpha, std::move(terms));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse_error, e.what());
  }
}

std::string dump_jsonl(const MixedPoly<Surd>& f) {
  std::ostringstream os;
  for (const auto& [idx, c] : f.terms()) os << index_to_json_line(*f.space(), idx, c.str()) << '\n';
  return os.str();
}

std::string dump_jsonl(const MixedPoly<double>& f) {
  std::ostringstream os;
  for (const auto& [idx, c] : f.terms()) os << index_to_json_line(*f.space(), idx, c) << '\n';
  return os.str();
}

MixedPoly<Surd> parse_jsonl_exact(SpacePtr space, const std::string& text) {
  MixedPoly<Surd> f(space);
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse_error, e.what());
    }
    if (!j.at("c").is_string()) throw Error(ErrorKind::mode_mismatch, "float coefficient in an exact stream");
    f.add(index_from_json(*space, j), Surd::parse(j["c"].get<std::string>()));
  }
  return f;
}

}  // namespace pseudocal
