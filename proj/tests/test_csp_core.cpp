#include <cmath>

#include "doctest.h"
#include "oracle.hpp"
#include "pseudocal/csp_core.hpp"

using namespace pseudocal;

namespace {

LocalMask mask_of(std::initializer_list<int> z) {
  LocalMask m = 0;
  int j = 0;
  for (int v : z) {
    if (v < 0) m |= LocalMask{1} << j;
    ++j;
  }
  return m;
}

SpacePtr full(int n, int k, Rational p) { return std::make_shared<const ScopeSpace>(ScopeSpace::full(n, k, p)); }

}  // namespace

TEST_CASE("xor predicate coefficients and values") {
  auto x = make_xor_predicate(3);
  CHECK(x.t == 3);
  CHECK(x.eta_hat[0] == 1);
  CHECK(x.eta_hat[7] == -1);
  for (LocalMask T = 1; T < 7; ++T) CHECK(x.eta_hat[T] == 0);
  CHECK(x.value(mask_of({-1, 1, 1})) == 1);
  CHECK(x.value(mask_of({-1, -1, 1})) == 0);
  CHECK_THROWS_AS(make_xor_predicate(1), Error);
}

TEST_CASE("xor planted law has uniform pair marginals") {
  auto x = make_xor_predicate(3);
  // the four satisfying points, counted on each coordinate pair
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      int counts[4] = {0, 0, 0, 0};
      for (LocalMask z = 0; z < 8; ++z)
        if (x.value(z)) ++counts[(z >> a & 1u) | ((z >> b & 1u) << 1)];
      for (int c : counts) CHECK(c == 1);
    }
  auto rep = verify_twise_uniform(x);
  CHECK(rep.max_uniform_level == 2);
  CHECK(rep.has_witness);
  CHECK(rep.witness_subset == 7);
  CHECK(verify_twise_uniform(make_xor_predicate(2)).max_uniform_level == 1);
  CHECK(verify_twise_uniform(make_uniform_predicate(3)).max_uniform_level == 3);
}

TEST_CASE("sat predicate under the -1-is-true literal convention") {
  auto s = make_sat_predicate(3);
  CHECK(s.value(mask_of({1, 1, 1})) == 0);
  CHECK(s.value(mask_of({-1, -1, -1})) == 1);
  CHECK(s.value(mask_of({1, -1, 1})) == 1);
  CHECK(s.eta_hat == make_xor_predicate(3).eta_hat);
  for (LocalMask z = 0; z < 8; ++z)
    if (sgn(s.eta[z]) != 0) CHECK(s.value(z) == 1);
}

TEST_CASE("malformed predicates are rejected") {
  std::vector<std::uint8_t> table(8, 1);
  std::vector<Rational> signed_hat(8, Rational(0));
  signed_hat[0] = 1;
  signed_hat[1] = 2;  // eta = 1 +- 2 goes negative
  CHECK_THROWS_AS(make_predicate(3, 1, table, signed_hat), Error);
  std::vector<Rational> unnormalized(8, Rational(0));
  unnormalized[0] = 2;
  CHECK_THROWS_AS(make_predicate(3, 3, table, unnormalized), Error);
  std::vector<Rational> xor_hat(8, Rational(0));
  xor_hat[0] = 1;
  xor_hat[7] = -1;
  std::vector<std::uint8_t> wrong(8, 0);
  wrong[0] = 1;
  CHECK_THROWS_AS(make_predicate(3, 3, wrong, xor_hat), Error);  // support outside P^{-1}(1)
  CHECK_THROWS_AS(make_predicate(3, 4, std::vector<std::uint8_t>(8, 1), xor_hat), Error);  // claims too much uniformity
  CHECK_THROWS_AS(make_predicate(3, 3, std::vector<std::uint8_t>(7, 1), xor_hat), Error);
}

TEST_CASE("uniformity level matches the vanishing low coefficients on random predicates") {
  CounterRng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    // mixtures of point masses give arbitrary densities on {-1,1}^3
    std::vector<Rational> w(8, Rational(0));
    for (int i = 0; i < 3; ++i) w[rng.below(8)] += 1;
    std::vector<Rational> hat(8);
    for (LocalMask T = 0; T < 8; ++T) {
      Rational c(0);
      for (LocalMask z = 0; z < 8; ++z) c += w[z] * parity_sign(T & z);
      hat[T] = c / 3;
    }
    std::vector<std::uint8_t> table(8);
    for (LocalMask z = 0; z < 8; ++z) table[z] = sgn(w[z]) > 0;
    auto pred = make_predicate(3, 1, table, hat);
    auto rep = verify_twise_uniform(pred);
    for (LocalMask T = 1; T < 8; ++T)
      if (popcount(T) <= rep.max_uniform_level) CHECK(pred.eta_hat[T] == 0);
    if (rep.has_witness) {
      bool some_nonzero = false;
      for (LocalMask T = 1; T < 8; ++T)
        if (popcount(T) == rep.max_uniform_level + 1 && pred.eta_hat[T] != 0) some_nonzero = true;
      CHECK(some_nonzero);
    }
  }
}

TEST_CASE("scope spaces") {
  auto sp = full(4, 3, Rational(1, 3));
  CHECK(sp->size() == 24);
  CHECK(sp->is_full());
  CHECK(sp->delta() == Rational(2));
  CHECK(std::is_sorted(sp->scopes().begin(), sp->scopes().end()));
  CHECK(ScopeSpace::p_for_delta(40, 3, Rational(5)) == Rational(5, 1482));
  CHECK_THROWS_AS(ScopeSpace::restricted(4, 3, {{0, 1, 1}}, Rational(1, 2)), Error);
  CHECK_THROWS_AS(ScopeSpace::restricted(4, 3, {{0, 1, 2}, {0, 1, 2}}, Rational(1, 2)), Error);
  CHECK_THROWS_AS(ScopeSpace::restricted(4, 3, {{0, 1, 7}}, Rational(1, 2)), Error);
  auto r = ScopeSpace::restricted(4, 3, {{2, 1, 0}, {0, 1, 2}}, Rational(1, 2));
  CHECK(r.scope(0) == Scope{0, 1, 2});
  CHECK(r.find({2, 1, 0}).value() == 1);
}

TEST_CASE("null sampler extremes and mean") {
  auto one = full(5, 3, Rational(1));
  CounterRng rng(1);
  CHECK(sample_null(one, rng).constraint_count() == one->size());
  auto zero = full(5, 3, Rational(0));
  CHECK(sample_null(zero, rng).constraint_count() == 0);

  auto sp = full(8, 3, ScopeSpace::p_for_delta(8, 3, Rational(2)));
  double pm = rational_to_double(sp->p()) * sp->size();
  double sum = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto r = CounterRng(5).split(t);
    sum += sample_null(sp, r).constraint_count();
  }
  double mean = sum / trials;
  double sigma = std::sqrt(pm * (1 - rational_to_double(sp->p())) / trials);
  CHECK(std::abs(mean - pm) <= 3 * sigma);
  CHECK(pm == doctest::Approx(16.0));
}

TEST_CASE("null sampler is reproducible under a seed") {
  auto sp = full(6, 3, Rational(1, 4));
  CounterRng a(99), b(99);
  auto i1 = sample_null(sp, a), i2 = sample_null(sp, b);
  CHECK(i1.y == i2.y);
  CHECK(i1.b == i2.b);
}

TEST_CASE("planted draws are satisfied by the planted assignment") {
  auto pred = make_xor_predicate(3);
  auto sat = make_sat_predicate(3);
  auto sp = full(6, 3, Rational(1, 5));
  for (int t = 0; t < 200; ++t) {
    auto rng = CounterRng(3).split(t);
    auto [x, inst] = sample_planted(sp, t % 2 ? pred : sat, rng);
    CHECK(objective(inst, t % 2 ? pred : sat, x) == static_cast<long>(inst.constraint_count()));
    if (t < 20) CHECK(opt_brute(inst, t % 2 ? pred : sat).value == static_cast<long>(inst.constraint_count()));
  }
  auto single = oracle::space(3, 3, {{0, 1, 2}}, Rational(1));
  for (int t = 0; t < 20; ++t) {
    auto rng = CounterRng(4).split(t);
    auto [x, inst] = sample_planted(single, pred, rng);
    int prod = 1;
    for (int j = 0; j < 3; ++j) prod *= inst.b[j] * x[j];
    CHECK(prod == -1);
  }
}

TEST_CASE("planted local law is the p-mixture of the predicate law and uniform") {
  auto pred = make_xor_predicate(3);
  auto sp = oracle::space(3, 3, {{0, 1, 2}}, Rational(1, 3));
  const int draws = 100000;
  std::vector<int> counts(16, 0);
  for (int t = 0; t < draws; ++t) {
    auto rng = CounterRng(17).split(t);
    auto [x, inst] = sample_planted(sp, pred, rng);
    counts[inst.literal_mask(0, x) | (inst.included(0) ? 8u : 0u)]++;
  }
  for (LocalMask z = 0; z < 8; ++z) {
    double inc = rational_to_double(sp->p() * pred.weight[z]);
    double abs = rational_to_double(sp->q()) / 8;
    for (auto [cell, prob] : {std::pair{z | 8u, inc}, std::pair{z, abs}}) {
      double sd = std::sqrt(prob * (1 - prob) / draws);
      CHECK(std::abs(counts[cell] / double(draws) - prob) <= 3 * sd + 1e-12);
    }
  }
}

TEST_CASE("objective and brute-force optimum") {
  auto sat = make_sat_predicate(3);
  auto sp = oracle::space(3, 3, {{0, 1, 2}}, Rational(1, 2));
  auto inst = empty_instance(sp);
  CHECK(objective(inst, sat, Assignment{1, 1, 1}) == 0);
  auto empty = opt_brute(inst, sat);
  CHECK(empty.value == 0);
  CHECK(empty.x == Assignment{1, 1, 1});
  inst.y[0] = -1;
  // b = (1,1,1): the literals equal x, true only where x_j = -1
  CHECK(objective(inst, sat, Assignment{1, 1, 1}) == 0);
  CHECK(objective(inst, sat, Assignment{-1, 1, 1}) == 1);
  CHECK_THROWS_AS(objective(inst, sat, Assignment{1, 1}), Error);

  // two orderings of one variable set with opposite parities cannot both hold
  auto xr = make_xor_predicate(3);
  auto pair = oracle::space(3, 3, {{0, 1, 2}, {1, 0, 2}}, Rational(1, 2));
  auto contra = empty_instance(pair);
  contra.y = {-1, -1};
  contra.b = {1, 1, 1, -1, 1, 1};
  CHECK(opt_brute(contra, xr).value == 1);
}

TEST_CASE("brute-force argmax attains the optimum") {
  auto pred = make_sat_predicate(3);
  auto sp = full(6, 3, Rational(1, 10));
  for (int t = 0; t < 10; ++t) {
    auto rng = CounterRng(8).split(t);
    auto inst = sample_null(sp, rng);
    auto best = opt_brute(inst, pred);
    CHECK(objective(inst, pred, best.x) == best.value);
  }
  auto big = full(25, 2, Rational(0));
  CHECK_THROWS_AS(opt_brute(empty_instance(big), make_xor_predicate(2)), Error);
}

TEST_CASE("instance and predicate json round trip") {
  auto pred = make_xor_predicate(3);
  auto sp = full(4, 3, Rational(1, 3));
  CounterRng rng(2);
  auto inst = sample_null(sp, rng);
  auto back = instance_from_json(instance_to_json(inst), Rational(0));
  CHECK(back.space->scopes() == sp->scopes());
  CHECK(back.space->p() == sp->p());
  CHECK(back.y == inst.y);
  CHECK(back.b == inst.b);
  auto pb = predicate_from_json(predicate_to_json(pred));
  CHECK(pb.eta_hat == pred.eta_hat);
  CHECK(pb.truth_table == pred.truth_table);
  CHECK_THROWS_AS(instance_from_json(nlohmann::json{{"n", 3}}, Rational(1, 2)), Error);
}
