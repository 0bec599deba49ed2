#include "bds/heuristics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace bds {

Sequence greedy_sequence(const Instance& inst) {
  const int N = inst.n_jobs;
  std::vector<int> remaining(static_cast<std::size_t>(N));
  std::iota(remaining.begin(), remaining.end(), 0);
  Sequence seq;
  seq.order.reserve(static_cast<std::size_t>(N));
  while (!remaining.empty()) {
    int best_job = -1;
    double best_cost = 0.0;
    seq.order.push_back(-1);
    for (int job : remaining) {
      seq.order.back() = job;
      const double cost = partial_makespan(inst, seq);
      if (best_job < 0 || cost < best_cost) {
        best_job = job;
        best_cost = cost;
      }
    }
    seq.order.back() = best_job;
    remaining.erase(std::find(remaining.begin(), remaining.end(), best_job));
  }
  return seq;
}

Sequence neh_sequence(const Instance& inst) {
  const int N = inst.n_jobs;
  std::vector<int> by_total(static_cast<std::size_t>(N));
  std::iota(by_total.begin(), by_total.end(), 0);
  std::sort(by_total.begin(), by_total.end(), [&](int a, int b) {
    const double ta = inst.op_times.col(a).sum();
    const double tb = inst.op_times.col(b).sum();
    return ta != tb ? ta > tb : a < b;
  });

  Sequence seq;
  seq.order.reserve(static_cast<std::size_t>(N));
  for (int job : by_total) {
    int best_pos = 0;
    double best_cost = 0.0;
    const int len = seq.size();
    for (int pos = 0; pos <= len; ++pos) {
      Sequence candidate = seq;
      candidate.order.insert(candidate.order.begin() + pos, job);
      const double cost = partial_makespan(inst, candidate);
      if (pos == 0 || cost < best_cost) {
        best_pos = pos;
        best_cost = cost;
      }
    }
    seq.order.insert(seq.order.begin() + best_pos, job);
  }
  return seq;
}

OracleResult brute_force_optimal(const Instance& inst, int max_jobs) {
  if (inst.n_jobs > max_jobs) {
    std::ostringstream msg;
    msg << "brute_force_optimal: refusing " << inst.n_jobs << " jobs (limit "
        << max_jobs << ")";
    throw std::invalid_argument(msg.str());
  }
  Sequence perm = Sequence::identity(inst.n_jobs);
  OracleResult result;
  do {
    const double cost = makespan(inst, perm);
    if (result.evaluated == 0 || cost < result.best_makespan) {
      result.best_makespan = cost;
      result.best_seq = perm;
    }
    ++result.evaluated;
  } while (std::next_permutation(perm.order.begin(), perm.order.end()));
  return result;
}

}  // namespace bds
