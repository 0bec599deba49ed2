#pragma once

#include "bds/engine.hpp"

namespace bds {

struct OracleResult {
  Sequence best_seq;
  double best_makespan = 0.0;
  long evaluated = 0;
};

/// Appends, at each step, the unscheduled job minimizing the resulting
/// partial makespan (ties by lowest job index).
Sequence greedy_sequence(const Instance& inst);

/// Orders jobs by descending total processing time, then inserts each at the
/// makespan-minimizing position of the partial sequence (ties by earliest
/// position).
Sequence neh_sequence(const Instance& inst);

/// Exact minimum over all permutations. Refuses more than `max_jobs` jobs.
OracleResult brute_force_optimal(const Instance& inst, int max_jobs = 9);

}  // namespace bds
