#pragma once

#include <string>
#include <vector>

#include "pseudocal/csp_core.hpp"
#include "pseudocal/fourier_poly.hpp"

namespace pseudocal {

// A set of (scope, slot) pairs; each term carries the slots used on one scope.
// beta is always 0 here.
using Gamma = std::vector<ScopeTerm>;

// c_i = number of (S, j) in gamma with S_j = i; gamma derives alpha iff the
// odd c_i are exactly alpha.
bool derives(const ScopeSpace& space, const Gamma& gamma, VarMask alpha);

constexpr int kMaxDerivationSlots = 40;
constexpr std::size_t kDerivationNodeBudget = 20'000'000;

struct DerivationQuery {
  SpacePtr space;
  VarMask alpha = 0;
  int l_max = 0;
  int r_min = 1;
  // Restricts gamma to these scopes when nonempty (indexed by scope id).
  std::vector<bool> allowed;
};

struct Derivation {
  Gamma gamma;
  int scopes = 0;             // |gamma_bar|
  std::uint64_t beta_count = 1;  // 2^{|gamma_bar|}
};

std::vector<Derivation> enumerate_derivations(const DerivationQuery& q);

// N_l(alpha) as (beta, gamma) pairs, plus the number of gamma alone.
struct DerivationCount {
  std::uint64_t pairs = 0;
  std::uint64_t gammas = 0;
};
std::vector<DerivationCount> count_by_size(const DerivationQuery& q);

constexpr double kCountRegime = 2.0;

// C^l n^{kl - (tl+|alpha|)/2} l^{(tl+|alpha|)/2 - l}; requires l <= regime*n/k.
double count_bound(double n, int k, int t, int alpha_size, int l, double C = 1.0, double regime = kCountRegime);

struct CountRow {
  VarMask alpha = 0;
  int l = 0;
  std::uint64_t brute_count = 0;
  std::uint64_t gamma_count = 0;
  double bound = 0;
};

struct CountTable {
  int n = 0, k = 0, t = 0;
  std::vector<CountRow> rows;
  // Smallest C for which count_bound dominates every row with l >= 1.
  double fitted_C = 0;
};

// Rows for every alpha with |alpha| <= alpha_max and every l in [0, l_max].
CountTable count_table(SpacePtr space, int t, int alpha_max, int l_max, double C);
std::string count_csv(const CountTable& table);

struct WeightedSum {
  Rational sum;
  double bound = 0;
  bool holds = false;
};

// sum_{r=s}^{l} p^r N_r(alpha) against (C Delta)^s (s/n)^{((t-2)/2) s + |alpha|/2}.
WeightedSum weighted_sum(SpacePtr space, const Predicate& pred, VarMask alpha, int s, int l, double C);

struct LevelL2 {
  Rational value;
  double bound = 0;
  bool holds = false;
};

// sum over beta, gamma with |gamma_bar| <= l of the squared planted coefficients
// at alpha, against (C Delta)^s binom(n,s)^{-(t-2)/2} binom(n,|alpha|)^{-1/2},
// s = ceil(|alpha|/k).
LevelL2 level_l2(SpacePtr space, const Predicate& pred, VarMask alpha, int l, double C);

constexpr int kMaxNullspaceDim = 20;

// Subsets of included constraints (scope ids, ascending) whose index sets sum
// to alpha over F2.
std::vector<std::vector<std::size_t>> xor_derivations_f2(const Instance& inst, const Predicate& pred, VarMask alpha);

}  // namespace pseudocal
