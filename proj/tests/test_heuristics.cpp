#include "doctest.h"

#include "bds/heuristics.hpp"
#include "sim_oracle.hpp"
#include "test_util.hpp"

using namespace bds;
using bds::testutil::make_instance;
using bds::testutil::random_instance;

TEST_CASE("[heuristics] single job is immediate for both constructors") {
  const Instance inst = make_instance(1, {{2.0}, {1.0}});
  CHECK(greedy_sequence(inst).order == std::vector<int>{0});
  CHECK(neh_sequence(inst).order == std::vector<int>{0});
}

TEST_CASE("[heuristics] greedy picks the cheaper first job") {
  // Two jobs on one machine: appending job 1 first gives partial makespan 2
  // versus 5, so greedy starts with job 1; both orders end at 7.
  const Instance inst = make_instance(1, {{5.0, 2.0}});
  const Sequence seq = greedy_sequence(inst);
  CHECK(seq.order == std::vector<int>{1, 0});
  CHECK(makespan(inst, seq) == doctest::Approx(7.0));
}

TEST_CASE("[heuristics] neh enumerates both orders of two jobs") {
  // Totals 9 vs 4: starts from job 0, tries job 1 in both positions, keeps
  // the better. With one machine per stage NEH on two jobs equals the oracle.
  const Instance inst = make_instance(1, {{5.0, 1.0}, {4.0, 3.0}});
  const Sequence seq = neh_sequence(inst);
  const OracleResult oracle = brute_force_optimal(inst);
  CHECK(makespan(inst, seq) == doctest::Approx(oracle.best_makespan));
}

TEST_CASE("[heuristics] constructors always emit valid permutations") {
  Rng rng(71);
  for (int trial = 0; trial < 25; ++trial) {
    const int jobs = 1 + rng.uniform_int(9);
    const Instance inst = random_instance(jobs, 1 + rng.uniform_int(3),
                                          1 + rng.uniform_int(3), 300 + trial);
    CHECK(greedy_sequence(inst).is_permutation_of(jobs));
    CHECK(neh_sequence(inst).is_permutation_of(jobs));
  }
}

TEST_CASE("[heuristics] determinism of both constructors") {
  const Instance inst = random_instance(12, 3, 2, 123);
  CHECK(greedy_sequence(inst) == greedy_sequence(inst));
  CHECK(neh_sequence(inst) == neh_sequence(inst));
}

TEST_CASE("[heuristics] brute force: trivial case and guard") {
  const Instance single = make_instance(1, {{2.0}});
  const OracleResult r = brute_force_optimal(single);
  CHECK(r.best_seq.order == std::vector<int>{0});
  CHECK(r.evaluated == 1);
  CHECK(r.best_makespan == doctest::Approx(2.0));

  const Instance big = random_instance(10, 2, 1, 5);
  CHECK_THROWS_AS(brute_force_optimal(big), std::invalid_argument);
}

TEST_CASE("[heuristics] brute force on the two-stage fixture") {
  const Instance inst = make_instance(1, {{3.0, 1.0, 2.0}, {2.0, 4.0, 1.0}});
  const OracleResult r = brute_force_optimal(inst);
  CHECK(r.evaluated == 6);
  CHECK(r.best_makespan <= 10.0 + 1e-12);
  CHECK(r.best_makespan == doctest::Approx(makespan(inst, r.best_seq)));
  CHECK(r.best_makespan >= makespan_lower_bound(inst) - 1e-12);
  // Independent event-driven enumeration agrees exactly.
  CHECK(r.best_makespan ==
        doctest::Approx(testoracle::sim_exhaustive_best(inst)).epsilon(1e-12));
}

TEST_CASE("[heuristics] heuristics never beat the exhaustive optimum") {
  Rng rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    const int jobs = 2 + rng.uniform_int(6);
    const Instance inst = random_instance(jobs, 1 + rng.uniform_int(3),
                                          1 + rng.uniform_int(2), 800 + trial);
    const OracleResult oracle = brute_force_optimal(inst);
    CHECK(makespan(inst, greedy_sequence(inst)) >=
          oracle.best_makespan - 1e-9);
    CHECK(makespan(inst, neh_sequence(inst)) >= oracle.best_makespan - 1e-9);
  }
}

TEST_CASE("[heuristics] neh beats greedy on average at twenty jobs") {
  double greedy_total = 0.0, neh_total = 0.0;
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    const Instance inst = random_instance(20, 5, 2, 4000 + trial);
    greedy_total += makespan(inst, greedy_sequence(inst));
    neh_total += makespan(inst, neh_sequence(inst));
  }
  CHECK(neh_total / trials < greedy_total / trials);
}
