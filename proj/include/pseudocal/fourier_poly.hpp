#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pseudocal/csp_core.hpp"

namespace pseudocal {

// Per-scope part of a basis index: phi^beta(y_S) times prod_{j in T} b_{S,j}.
struct ScopeTerm {
  std::uint32_t scope = 0;
  std::uint8_t beta = 0;
  LocalMask tmask = 0;
  auto operator<=>(const ScopeTerm&) const = default;
};

// chi_alpha(x) phi_beta(y) psi_gamma(b) with the per-scope parts sorted by scope.
struct BasisIndex {
  VarMask alpha = 0;
  std::vector<ScopeTerm> terms;

  static BasisIndex make(VarMask alpha, std::vector<ScopeTerm> terms);

  int alpha_size() const { return popcount(alpha); }
  int beta_size() const;
  int gamma_scopes() const;
  // Number of scopes touched by beta or gamma.
  int support_size() const { return static_cast<int>(terms.size()); }
  // Minimum |T_S| over scopes with T_S nonempty (0 if none).
  int min_arity() const;
  bool beta_within_gamma() const;
  const ScopeTerm* find(std::uint32_t scope) const;

  auto operator<=>(const BasisIndex&) const = default;
  bool operator==(const BasisIndex&) const = default;
};

struct Caps {
  int dx = 0;
  int dI = 0;
  bool admits(const BasisIndex& idx) const {
    return idx.alpha_size() <= dx && idx.beta_size() <= dI && idx.gamma_scopes() <= dI;
  }
};

// Values of the p-biased character and the constant in phi^2 = 1 + slope*phi.
template <class S>
struct BasisValues {
  S phi_minus{}, phi_plus{}, slope{}, sqrt_pq{};
  bool singular = true;

  static BasisValues make(const Rational& p) {
    BasisValues v;
    Rational q = 1 - p;
    if (sgn(p) <= 0 || sgn(q) <= 0) return v;
    v.singular = false;
    Rational pq = p * q;
    v.sqrt_pq = ScalarTraits<S>::sqrt_rational(pq);
    v.phi_minus = -v.sqrt_pq * ScalarTraits<S>::from_rational(1 / p);
    v.phi_plus = v.sqrt_pq * ScalarTraits<S>::from_rational(1 / q);
    v.slope = v.sqrt_pq * ScalarTraits<S>::from_rational((p - q) / pq);
    return v;
  }

  S phi(int y) const {
    if (singular) throw Error(ErrorKind::singular_basis, "p in {0,1} leaves the y-character undefined");
    return y < 0 ? phi_minus : phi_plus;
  }
};

// Fixed values of the instance coordinates on a scope set U.
struct RestrictedInstance {
  std::vector<std::uint32_t> scopes;  // sorted
  std::vector<std::int8_t> y;
  std::vector<std::int8_t> b;  // k entries per scope

  static RestrictedInstance from_instance(const Instance& inst, std::vector<std::uint32_t> scopes);
  void validate(const ScopeSpace& space) const;
  std::optional<std::size_t> position(std::uint32_t scope) const;
};

template <class S>
S scope_factor(const BasisValues<S>& bv, const ScopeTerm& st, int y, LocalMask neg) {
  S v = parity_sign(st.tmask & neg) < 0 ? S(-1) : S(1);
  if (st.beta) v *= bv.phi(y);
  return v;
}

template <class S>
class MixedPoly {
 public:
  using Map = std::map<BasisIndex, S>;

  MixedPoly() = default;
  explicit MixedPoly(SpacePtr space, std::optional<Caps> caps = std::nullopt)
      : space_(std::move(space)), caps_(caps) {}

  const SpacePtr& space() const { return space_; }
  const std::optional<Caps>& caps() const { return caps_; }
  void set_caps(std::optional<Caps> c) { caps_ = c; }
  const Map& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  static constexpr const char* mode() { return ScalarTraits<S>::mode; }

  void add(const BasisIndex& idx, const S& c) {
    if (ScalarTraits<S>::is_zero(c)) return;
    auto [it, inserted] = terms_.try_emplace(idx, c);
    if (!inserted) {
      it->second += c;
      if (ScalarTraits<S>::is_zero(it->second)) terms_.erase(it);
    }
  }

  S coeff(const BasisIndex& idx) const {
    auto it = terms_.find(idx);
    return it == terms_.end() ? S(0) : it->second;
  }

  MixedPoly& operator+=(const MixedPoly& o) {
    for (const auto& [idx, c] : o.terms_) add(idx, c);
    return *this;
  }
  MixedPoly& operator-=(const MixedPoly& o) {
    for (const auto& [idx, c] : o.terms_) add(idx, -c);
    return *this;
  }
  friend MixedPoly operator+(MixedPoly a, const MixedPoly& b) { return a += b; }
  friend MixedPoly operator-(MixedPoly a, const MixedPoly& b) { return a -= b; }
  friend bool operator==(const MixedPoly& a, const MixedPoly& b) { return a.terms_ == b.terms_; }

  MixedPoly scaled(const S& s) const {
    MixedPoly r(space_, caps_);
    for (const auto& [idx, c] : terms_) r.add(idx, c * s);
    return r;
  }

 private:
  SpacePtr space_;
  std::optional<Caps> caps_;
  Map terms_;
};

template <class S>
S basis_eval(const BasisValues<S>& bv, const BasisIndex& idx, const Instance& inst, const Assignment& x) {
  S v = parity_sign(idx.alpha & assignment_mask(x)) < 0 ? S(-1) : S(1);
  for (const auto& st : idx.terms) v *= scope_factor(bv, st, inst.y[st.scope], inst.negation_mask(st.scope));
  return v;
}

template <class S>
S eval(const MixedPoly<S>& f, const Instance& inst, const Assignment& x) {
  auto bv = BasisValues<S>::make(f.space()->p());
  S total(0);
  for (const auto& [idx, c] : f.terms()) total += c * basis_eval(bv, idx, inst, x);
  return total;
}

template <class S>
MixedPoly<S> project_ld(const MixedPoly<S>& f, const Caps& caps) {
  if (caps.dx < 0 || caps.dI < 0) throw Error(ErrorKind::degree_underflow, "negative degree cap");
  MixedPoly<S> r(f.space(), caps);
  for (const auto& [idx, c] : f.terms())
    if (caps.admits(idx)) r.add(idx, c);
  return r;
}

// Fix the instance coordinates on U; coefficients outside U absorb the fixed
// characters of the U-part of each basis element.
template <class S>
MixedPoly<S> restrict_poly(const MixedPoly<S>& f, const RestrictedInstance& fix) {
  fix.validate(*f.space());
  auto bv = BasisValues<S>::make(f.space()->p());
  int k = f.space()->k();
  MixedPoly<S> r(f.space(), f.caps());
  for (const auto& [idx, c] : f.terms()) {
    S factor(1);
    BasisIndex rest;
    rest.alpha = idx.alpha;
    for (const auto& st : idx.terms) {
      auto pos = fix.position(st.scope);
      if (!pos) {
        rest.terms.push_back(st);
        continue;
      }
      LocalMask neg = 0;
      for (int j = 0; j < k; ++j)
        if (fix.b[*pos * k + j] < 0) neg |= LocalMask{1} << j;
      factor *= scope_factor(bv, st, fix.y[*pos], neg);
    }
    r.add(rest, c * factor);
  }
  return r;
}

template <class S>
MixedPoly<S> multiply(const MixedPoly<S>& f, const MixedPoly<S>& g, std::size_t max_terms = std::size_t{1} << 22) {
  if (f.space() != g.space() && (f.space()->scopes() != g.space()->scopes() || f.space()->p() != g.space()->p()))
    throw Error(ErrorKind::invalid_input, "polynomials over different scope spaces");
  auto bv = BasisValues<S>::make(f.space()->p());
  MixedPoly<S> r(f.space());
  std::vector<ScopeTerm> merged;
  std::vector<std::size_t> doubled;
  for (const auto& [fi, fc] : f.terms()) {
    for (const auto& [gi, gc] : g.terms()) {
      merged.clear();
      doubled.clear();
      auto a = fi.terms.begin(), b = gi.terms.begin();
      while (a != fi.terms.end() || b != gi.terms.end()) {
        if (b == gi.terms.end() || (a != fi.terms.end() && a->scope < b->scope)) {
          merged.push_back(*a++);
        } else if (a == fi.terms.end() || b->scope < a->scope) {
          merged.push_back(*b++);
        } else {
          ScopeTerm st{a->scope, static_cast<std::uint8_t>(a->beta | b->beta), a->tmask ^ b->tmask};
          if (a->beta && b->beta) doubled.push_back(merged.size());
          merged.push_back(st);
          ++a;
          ++b;
        }
      }
      S base = fc * gc;
      VarMask alpha = fi.alpha ^ gi.alpha;
      // phi^2 = 1 + slope*phi on every scope where both factors carry phi
      std::size_t combos = std::size_t{1} << doubled.size();
      for (std::size_t mask = 0; mask < combos; ++mask) {
        S c = base;
        std::vector<ScopeTerm> terms = merged;
        for (std::size_t i = 0; i < doubled.size(); ++i) {
          if (mask >> i & 1u) {
            c *= bv.slope;
          } else {
            terms[doubled[i]].beta = 0;
          }
        }
        r.add(BasisIndex::make(alpha, std::move(terms)), c);
      }
      if (r.size() > max_terms) throw Error(ErrorKind::resource_limit, "product exceeds the term budget");
    }
  }
  return r;
}

template <class S>
S l2_norm_sq(const MixedPoly<S>& f, const std::function<bool(const BasisIndex&)>& keep = {}) {
  S total(0);
  for (const auto& [idx, c] : f.terms())
    if (!keep || keep(idx)) total += c * c;
  return total;
}

MixedPoly<double> to_float(const MixedPoly<Surd>& f);

// One JSON object per line; exact coefficients are strings, float ones numbers.
std::string index_to_json_line(const ScopeSpace& space, const BasisIndex& idx, const nlohmann::json& c);
BasisIndex index_from_json(const ScopeSpace& space, const nlohmann::json& j);
std::string dump_jsonl(const MixedPoly<Surd>& f);
std::string dump_jsonl(const MixedPoly<double>& f);
MixedPoly<Surd> parse_jsonl_exact(SpacePtr space, const std::string& text);

}  // namespace pseudocal
