#pragma once

#include "bds/engine.hpp"

namespace bds::testoracle {

/// Independent discrete-event simulation of the same dispatch policy the
/// engine decodes: per-stage FIFO queues ordered by (arrival, sequence
/// position), jobs started the moment a machine is idle, machines picked by
/// earliest idle-since (ties by index). Written against the engine as a
/// second opinion; shares no code with it.
struct SimResult {
  Matrix start;  // n_stages x n_jobs
  double makespan = 0.0;
};

SimResult simulate(const Instance& inst, const Sequence& seq);

double sim_makespan(const Instance& inst, const Sequence& seq);

/// Exact optimum by exhausting every permutation through the simulator.
double sim_exhaustive_best(const Instance& inst);

}  // namespace bds::testoracle
