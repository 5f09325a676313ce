#include "doctest.h"
#include "oracle.hpp"
#include "pseudocal/cbd.hpp"

using namespace pseudocal;

namespace {

SpacePtr three_scopes(Rational p) { return oracle::space(4, 3, {{0, 1, 2}, {1, 2, 3}, {3, 0, 1}}, p); }

SpacePtr small_pairs(Rational p) { return oracle::space(3, 2, {{0, 1}, {1, 2}, {2, 0}}, p); }

// Instances whose state at scope s equals st.
InstanceSet with_state(const DistributionTable& d, std::size_t s, std::uint32_t st) {
  InstanceSet out;
  for (auto c : d.all_instances())
    if (d.state(c, s) == st) out.push_back(c);
  return out;
}

// Independent recomputation of a witness: marginal mass and background of the restricted event.
bool witness_violates(const DistributionTable& d, const BlockWitness& w, const Rational& delta) {
  Rational mass(0);
  for (const auto& [c, m] : d.mass()) {
    bool match = true;
    for (std::size_t i = 0; i < w.scopes.size(); ++i) match = match && d.state(c, w.scopes[i]) == w.states[i];
    if (match) mass += m;
  }
  Rational bg(1);
  for (auto st : w.states) bg *= d.background_local(st);
  CHECK(mass == w.mass);
  CHECK(bg == w.background);
  double lhs = rational_to_double(mass), rhs = std::pow(rational_to_double(bg), 1 - rational_to_double(delta));
  return lhs > rhs;
}

}  // namespace

TEST_CASE("tables, mixtures and conditionals") {
  auto sp = small_pairs(Rational(1, 3));
  auto bg = background_table(sp);
  CHECK_NOTHROW(bg.validate());
  CHECK(bg.mass().size() == bg.instance_count());
  CHECK(mass_of(bg, bg.all_instances()) == 1);
  // one scope: included with prob p, any of 4 negations
  CHECK(bg.background_local(0b100) == Rational(1, 12));
  CHECK(bg.background_local(0b011) == Rational(1, 6));

  auto pm = point_mass(sp, 5);
  CHECK(pm.prob(5) == 1);
  CHECK(pm.prob(4) == 0);
  auto mix = mixture(bg, pm, Rational(1, 4));
  CHECK(mix.prob(5) == Rational(3, 4) * bg.background(5) + Rational(1, 4));
  CHECK_NOTHROW(mix.validate());
  CHECK_THROWS_AS(mixture(bg, pm, Rational(2)), Error);

  auto a = with_state(bg, 0, 0b101);
  auto cond = conditional(bg, a);
  CHECK(mass_of(cond, a) == 1);
  CHECK(cond.prob(a.front()) == bg.prob(a.front()) / background_mass(bg, a));
  CHECK_THROWS_AS(conditional(pm, InstanceSet{4}), Error);

  DistributionTable bad(sp);
  bad.set(1, Rational(1, 2));
  CHECK_THROWS_AS(bad.validate(), Error);

  CounterRng rng(3);
  auto inst = sample_null(sp, rng);
  CHECK(bg.instance_of(bg.code_of(inst)).y == inst.y);
  CHECK(bg.instance_of(bg.code_of(inst)).b == inst.b);
}

TEST_CASE("below power is exact at the boundary") {
  CHECK(below_power(Rational(1, 4), Rational(1, 16), Rational(1, 2)));
  CHECK_FALSE(below_power(Rational(1, 4) + Rational(1, 1000000), Rational(1, 16), Rational(1, 2)));
  CHECK(below_power(Rational(1, 8), Rational(1, 8), Rational(0)));
  CHECK_FALSE(below_power(Rational(1, 7), Rational(1, 8), Rational(0)));
  CHECK(below_power(Rational(1), Rational(1, 1000), Rational(1)));
  CHECK(below_power(Rational(2, 3), Rational(4, 9), Rational(1, 2)));
  CHECK_FALSE(below_power(Rational(2, 3) + Rational(1, 1000000), Rational(4, 9), Rational(1, 2)));
  CHECK_THROWS_AS(below_power(Rational(1), Rational(1), Rational(-1)), Error);
}

TEST_CASE("background law is blockwise dense") {
  auto sp = small_pairs(Rational(1, 3));
  auto bg = background_table(sp);
  CHECK(is_blockwise_dense(bg, Rational(0)).dense);
  CHECK(is_blockwise_dense(bg, Rational(1, 10)).dense);
  auto cbd = is_cbd(bg, 0, Rational(1, 10));
  CHECK(cbd.ok);
  CHECK(cbd.block.empty());
}

TEST_CASE("a point mass is not dense and its witness checks out") {
  auto sp = small_pairs(Rational(1, 3));
  auto pm = point_mass(sp, 0b100'010'001);
  auto check = is_blockwise_dense(pm, Rational(1, 10));
  CHECK_FALSE(check.dense);
  REQUIRE(check.witness.has_value());
  CHECK(witness_violates(pm, *check.witness, Rational(1, 10)));
  CHECK(check.witness->scopes == std::vector<std::uint32_t>{0});

  auto half = mixture(background_table(sp), pm, Rational(1, 2));
  auto hc = is_blockwise_dense(half, Rational(1, 10));
  CHECK_FALSE(hc.dense);
  REQUIRE(hc.witness.has_value());
  CHECK(witness_violates(half, *hc.witness, Rational(1, 10)));

  // a point mass fixes every scope, so it is CBD with the whole space as block
  auto all = is_cbd(pm, 3, Rational(1, 10));
  CHECK(all.ok);
  CHECK(all.block.size() == 3);
  CHECK_FALSE(is_cbd(pm, 2, Rational(1, 10)).ok);

  auto partial = is_blockwise_dense(half, Rational(1, 10), 1);
  CHECK(partial.witness.has_value());
}

TEST_CASE("conditioning on one scope gives a one-scope block") {
  auto sp = three_scopes(Rational(1, 3));
  auto bg = background_table(sp);
  auto a = with_state(bg, 1, 0b1010);
  auto cond = conditional(bg, a);
  auto check = is_cbd(cond, 1, Rational(1, 10));
  CHECK(check.ok);
  CHECK(check.block == std::vector<std::uint32_t>{1});
  CHECK(check.fixed_states == std::vector<std::uint32_t>{0b1010});
  CHECK_FALSE(is_cbd(cond, 0, Rational(1, 10)).ok);
  CHECK_FALSE(is_blockwise_dense(cond, Rational(1, 10)).dense);
}

TEST_CASE("truncation") {
  auto sp = small_pairs(Rational(1, 3));
  auto bg = background_table(sp);
  auto none = truncate(bg, bg.all_instances(), 1, default_threshold(3));
  CHECK(none.removed.empty());
  CHECK(none.kept == bg.all_instances());
  CHECK(none.certified_bound_ok);

  auto spike = mixture(bg, point_mass(sp, 7), Rational(1, 2));
  auto tr = truncate(spike, spike.all_instances(), 1, default_threshold(3));
  REQUIRE_FALSE(tr.removed.empty());
  CHECK(tr.removed.front() == 7);
  for (const auto& st : tr.steps) CHECK(st.tradeoff_ok);
  CHECK(tr.certified_bound_ok);
  CHECK(tr.certified_constant == 4);
  CHECK(tr.kept.size() + tr.removed.size() == bg.instance_count());

  // all mass on removed instances drives the remainder under the threshold
  auto pm = point_mass(sp, 7);
  auto gone = truncate(pm, pm.all_instances(), 1, default_threshold(3));
  CHECK(gone.removed == InstanceSet{7});
  CHECK(gone.stopped_by_threshold);

  CHECK_THROWS_AS(truncate(bg, bg.all_instances(), -1, Rational(1, 2)), Error);
  CHECK_THROWS_AS(truncate(bg, bg.all_instances(), 1, Rational(0)), Error);
}

TEST_CASE("decompose the background law and a conditioned law") {
  auto sp = three_scopes(Rational(1, 3));
  auto bg = background_table(sp);
  auto part = decompose(bg, Rational(1, 10), 2, default_threshold(4));
  REQUIRE(part.parts.size() == 1);
  CHECK(part.parts[0].block.empty());
  CHECK(part.parts[0].instances.size() == bg.instance_count());
  CHECK(part.B.empty());
  CHECK(part.C.empty());
  CHECK(verify_partition(part, bg).ok());

  auto a = with_state(bg, 2, 0b1000);
  auto cond = conditional(bg, a);
  auto split = decompose(cond, Rational(1, 10), 2, default_threshold(4));
  auto rep = verify_partition(split, cond);
  CHECK(rep.ok());
  // every block through the fixed scope violates, so the maximal choice is the whole space
  REQUIRE(split.parts.size() >= 1);
  for (const auto& pt : split.parts) {
    CHECK(pt.block == std::vector<std::uint32_t>{0, 1, 2});
    CHECK(pt.fixed_states[2] == 0b1000);
    CHECK(pt.maximal);
  }
  // one instance per part; the light tail of the support ends in B and C
  std::size_t tail = 0;
  for (auto c : split.B) tail += std::binary_search(a.begin(), a.end(), c);
  for (auto c : split.C) tail += std::binary_search(a.begin(), a.end(), c);
  CHECK(split.parts.size() + tail == a.size());
  CHECK(split.parts[0].fixed_states == std::vector<std::uint32_t>{0, 0, 0b1000});
  auto j = partition_to_json(split, cond, rep);
  CHECK(j["parts"].size() == split.parts.size());
}

TEST_CASE("decompose on fuzzed tables passes verification") {
  auto sp = three_scopes(Rational(1, 3));
  CounterRng rng(2024);
  const Rational tilts[] = {Rational(1), Rational(9, 10), Rational(1, 2), Rational(1, 10)};
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t support = 1 + rng.below(trial % 2 == 0 ? 2 : 40);
    auto d = random_table(sp, rng, support, tilts[trial % 4]);
    for (auto [delta, t] : {std::pair{Rational(1, 2), 1}, std::pair{Rational(1, 2), 2}}) {
      auto part = decompose(d, delta, t, default_threshold(4));
      auto rep = verify_partition(part, d);
      INFO("trial " << trial << " failures " << (rep.failures.empty() ? "" : rep.failures.front()));
      CHECK(rep.ok());
      for (const auto& pt : part.parts) CHECK(pt.maximal);
      ++checked;
    }
  }
  CHECK(checked == 80);
}

TEST_CASE("verification catches a corrupted partition") {
  auto sp = small_pairs(Rational(1, 3));
  auto d = mixture(background_table(sp), point_mass(sp, 9), Rational(1, 2));
  auto part = decompose(d, Rational(1, 2), 1, default_threshold(3));
  REQUIRE(verify_partition(part, d).ok());

  auto dropped = part;
  REQUIRE_FALSE(dropped.parts.empty());
  dropped.parts[0].instances.pop_back();
  CHECK_FALSE(verify_partition(dropped, d).partition_ok);

  auto doubled = part;
  doubled.C.push_back(doubled.parts[0].instances.front());
  CHECK_FALSE(verify_partition(doubled, d).partition_ok);

  auto wrong_block = part;
  wrong_block.parts[0].block = {0};
  wrong_block.parts[0].fixed_states = {0};
  CHECK_FALSE(verify_partition(wrong_block, d).parts_cbd);
}
