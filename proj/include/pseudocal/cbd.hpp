#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pseudocal/csp_core.hpp"

namespace pseudocal {

// Instances over a small scope space, coded one local state per scope in base
// 2^(k+1), lowest scope first. A local state is the negation mask of b_S with
// bit k set when S is included.
using InstanceCode = std::uint64_t;
using InstanceSet = std::vector<InstanceCode>;  // sorted, distinct

constexpr int kMaxCodeBits = 24;

class DistributionTable {
 public:
  DistributionTable() = default;
  explicit DistributionTable(SpacePtr space);

  const SpacePtr& space() const { return space_; }
  int k() const { return space_->k(); }
  std::size_t scopes() const { return space_->size(); }
  std::uint32_t local_states() const { return 1u << (k() + 1); }
  std::uint64_t instance_count() const { return std::uint64_t{1} << (scopes() * (k() + 1)); }
  std::uint32_t state(InstanceCode code, std::size_t pos) const {
    return static_cast<std::uint32_t>((code >> (pos * (k() + 1))) & (local_states() - 1));
  }

  const std::map<InstanceCode, Rational>& mass() const { return mass_; }
  Rational prob(InstanceCode code) const;
  void set(InstanceCode code, const Rational& m);
  // Throws invalid_density unless masses are nonnegative and sum to exactly 1.
  void validate() const;

  // Probability of one instance, and of one local state, under the background law D(p).
  Rational background(InstanceCode code) const;
  Rational background_local(std::uint32_t state) const;

  InstanceCode code_of(const Instance& inst) const;
  Instance instance_of(InstanceCode code) const;
  InstanceSet all_instances() const;

 private:
  SpacePtr space_;
  std::map<InstanceCode, Rational> mass_;
};

DistributionTable background_table(SpacePtr space);
DistributionTable point_mass(SpacePtr space, InstanceCode code);
// (1-w) a + w b
DistributionTable mixture(const DistributionTable& a, const DistributionTable& b, const Rational& w);
// D conditioned on the set A; throws undefined_conditional on zero mass.
DistributionTable conditional(const DistributionTable& d, const InstanceSet& a);
// Random table: support_size random instances with random integer weights,
// mixed with D(p) at weight 1 - tilt.
DistributionTable random_table(SpacePtr space, CounterRng& rng, std::size_t support_size, const Rational& tilt);

Rational mass_of(const DistributionTable& d, const InstanceSet& a);
Rational background_mass(const DistributionTable& d, const InstanceSet& a);

// a <= b^(1-delta) decided exactly for rational delta = u/w in [0,1).
bool below_power(const Rational& a, const Rational& b, const Rational& delta);

struct BlockWitness {
  std::vector<std::uint32_t> scopes;
  std::vector<std::uint32_t> states;
  Rational mass, background;
};

struct BlockCheck {
  bool dense = true;
  bool partial = false;  // only blocks up to max_block were examined
  std::optional<BlockWitness> witness;
};

// Every block V (disjoint from `excluded`, |V| <= max_block, -1 for all) and
// every I'_V with Pr_D[I_V = I'_V] > Pr_{D(p)}[I_V = I'_V]^(1-delta) is a
// violation; the witness is the first in canonical order.
BlockCheck is_blockwise_dense(const DistributionTable& d, const Rational& delta, int max_block = -1,
                              std::uint64_t excluded = 0);

struct CbdCheck {
  bool ok = false;
  std::vector<std::uint32_t> block;
  std::vector<std::uint32_t> fixed_states;
  BlockCheck off_block;
};

// The block is taken as the set of scopes constant on the support of D.
CbdCheck is_cbd(const DistributionTable& d, int max_block_size, const Rational& delta, int max_block = -1);

struct TruncateStep {
  InstanceCode removed = 0;
  Rational background_fraction;  // eta_i
  Rational mass_fraction;        // share of D(A_i) removed
  bool tradeoff_ok = false;      // mass_fraction >= eta_i (2^k/p)^t
};

struct TruncateResult {
  InstanceSet kept, removed;
  std::vector<TruncateStep> steps;
  bool stopped_by_threshold = false;
  long certified_constant = 0;  // L = ceil(ln(1/theta)) + 1
  bool certified_bound_ok = false;  // Pr_{D(p)}[A'] >= (1 - L (p/2^k)^t) Pr_{D(p)}[A]
  bool n_bound_ok = false;          // the same with L replaced by n
};

// exp(-n) as a rational, the default small-mass threshold.
Rational default_threshold(int n);

TruncateResult truncate(const DistributionTable& d, const InstanceSet& a, int t_param, const Rational& theta);

struct CbdPart {
  InstanceSet instances;
  std::vector<std::uint32_t> block;
  std::vector<std::uint32_t> fixed_states;
  bool maximal = true;  // no strict superset of the block admits a violation
};

struct CbdPartition {
  std::vector<CbdPart> parts;
  InstanceSet B, C;
  Rational delta;
  int t_param = 0;
  Rational p, theta;
  std::size_t calls = 0;
  std::vector<std::string> trace;
};

CbdPartition decompose(const DistributionTable& d, const Rational& delta, int t_param, const Rational& theta);

struct PartitionReport {
  bool partition_ok = false;
  bool parts_cbd = false;
  bool block_sizes_ok = false;
  bool b_bound_ok = false;
  bool c_bound_ok = false;
  bool mass_accounting_ok = false;
  Rational b_background, b_limit, c_mass, c_limit;
  std::vector<std::string> failures;
  bool ok() const {
    return partition_ok && parts_cbd && block_sizes_ok && b_bound_ok && c_bound_ok && mass_accounting_ok;
  }
};

PartitionReport verify_partition(const CbdPartition& part, const DistributionTable& d);

nlohmann::json partition_to_json(const CbdPartition& part, const DistributionTable& d, const PartitionReport& rep);

}  // namespace pseudocal
