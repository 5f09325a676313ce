#pragma once

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pseudocal/rng.hpp"
#include "pseudocal/scalar.hpp"

namespace pseudocal {

// Points of {-1,1}^k are encoded as masks: bit j set iff z_j = -1.
// Subsets T of the k slots are encoded the same way.
using LocalMask = std::uint32_t;
// Variable subsets of [n] (n <= 64), bit i set iff i is in the set.
using VarMask = std::uint64_t;

inline int parity_sign(std::uint64_t m) { return (__builtin_popcountll(m) & 1) ? -1 : 1; }
inline int popcount(std::uint64_t m) { return __builtin_popcountll(m); }

struct Predicate {
  int k = 0;
  int t = 0;
  std::vector<std::uint8_t> truth_table;  // indexed by LocalMask of z
  std::vector<Rational> eta_hat;          // indexed by LocalMask of T

  // Derived at construction.
  std::vector<Rational> eta;        // density of the planted local law, by z
  std::vector<Rational> weight;     // planted local law itself: eta / 2^k
  std::vector<Rational> value_hat;  // Fourier coefficients of the truth table

  int value(LocalMask z) const { return truth_table[z]; }
  std::size_t table_size() const { return std::size_t{1} << k; }
};

// Validates every invariant and fills the derived fields.
Predicate make_predicate(int k, int t, std::vector<std::uint8_t> truth_table, std::vector<Rational> eta_hat);
Predicate make_xor_predicate(int k);
// OR of literals; the literal b_j x_j is true when it equals -1.
Predicate make_sat_predicate(int k);
// Trivial predicate with the uniform planted law (used for edge cases).
Predicate make_uniform_predicate(int k);

struct UniformityReport {
  int max_uniform_level = 0;
  bool has_witness = false;
  LocalMask witness_subset = 0;
  std::vector<Rational> witness_marginal;  // indexed by mask restricted to witness_subset, compressed
};

UniformityReport verify_twise_uniform(const Predicate& pred);

using Scope = std::vector<int>;

class ScopeSpace {
 public:
  static ScopeSpace full(int n, int k, const Rational& p);
  static ScopeSpace restricted(int n, int k, std::vector<Scope> scopes, const Rational& p);
  // Inclusion probability chosen so that the expected number of constraints is delta*n.
  static Rational p_for_delta(int n, int k, const Rational& delta);

  int n() const { return n_; }
  int k() const { return k_; }
  std::size_t size() const { return scopes_.size(); }
  const Scope& scope(std::size_t s) const { return scopes_[s]; }
  const std::vector<Scope>& scopes() const { return scopes_; }
  VarMask var_mask(std::size_t s) const { return masks_[s]; }
  const Rational& p() const { return p_; }
  Rational q() const { return 1 - p_; }
  Rational delta() const;
  bool is_full() const { return full_; }
  std::optional<std::size_t> find(const Scope& s) const;

  // n!/(n-k)!
  static mpz_class full_count(int n, int k);

 private:
  ScopeSpace(int n, int k, std::vector<Scope> scopes, const Rational& p, bool full);

  int n_ = 0, k_ = 0;
  std::vector<Scope> scopes_;
  std::vector<VarMask> masks_;
  Rational p_;
  bool full_ = false;
};

using SpacePtr = std::shared_ptr<const ScopeSpace>;

using Assignment = std::vector<std::int8_t>;

struct Instance {
  SpacePtr space;
  std::vector<std::int8_t> y;  // -1 included, +1 absent
  std::vector<std::int8_t> b;  // k entries per scope

  std::size_t constraint_count() const;
  bool included(std::size_t s) const { return y[s] < 0; }
  std::int8_t neg(std::size_t s, int j) const { return b[s * space->k() + j]; }
  // LocalMask of b_S o x_S.
  LocalMask literal_mask(std::size_t s, const Assignment& x) const;
  // LocalMask of b_S alone.
  LocalMask negation_mask(std::size_t s) const;
  void validate() const;
};

Instance empty_instance(SpacePtr space);
Instance sample_null(SpacePtr space, CounterRng& rng);
std::pair<Assignment, Instance> sample_planted(SpacePtr space, const Predicate& pred, CounterRng& rng);
LocalMask sample_local(const Predicate& pred, CounterRng& rng);

long objective(const Instance& inst, const Predicate& pred, const Assignment& x);

struct OptResult {
  long value = 0;
  Assignment x;
};

constexpr int kMaxBruteVars = 24;
OptResult opt_brute(const Instance& inst, const Predicate& pred);

// Assignment from an enumeration code: x_i = -1 iff bit (n-1-i) is set, so
// code order is lexicographic with +1 before -1.
Assignment assignment_from_code(std::uint64_t code, int n);
VarMask assignment_mask(const Assignment& x);

nlohmann::json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j, const Rational& p);
nlohmann::json predicate_to_json(const Predicate& pred);
Predicate predicate_from_json(const nlohmann::json& j);

}  // namespace pseudocal
