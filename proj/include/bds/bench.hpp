#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bds/bilevel.hpp"

namespace bds {

struct BenchRow {
  std::string dataset;
  std::string algorithm;
  int jobs = 0;
  double makespan = 0.0;
  double time_s = 0.0;
  std::uint64_t seed = 0;
};

struct SweepRow {
  int jobs = 0;
  int beta = 0;
  double makespan = 0.0;
  double time_s = 0.0;
  bool skipped = false;
};

/// Trained models as loaded from a checkpoint directory.
struct Models {
  QNet qnet;
  GpnModel gpn;
};

Models load_models(const std::string& checkpoint_dir);
void save_models(const Models& models, const CoTrainConfig& cfg,
                 const LoopStats& stats, double final_makespan,
                 const std::string& checkpoint_dir);

struct BenchOptions {
  SolveConfig solve;
  std::uint64_t seed = 0;
  bool parallel = false;
};

/// One row per (instance, algorithm). Learned algorithms require models;
/// heuristics run regardless. Every schedule is revalidated before its row is
/// emitted. Wall time covers the solve call only.
std::vector<BenchRow> run_benchmark(const std::vector<Instance>& instances,
                                    const std::vector<std::string>& algorithms,
                                    const Models* models,
                                    const BenchOptions& options);

std::string bench_csv(const std::vector<BenchRow>& rows);

/// Rows for each (instance, beta); betas larger than the job count are
/// skipped. The footer of the CSV names the best beta per job count.
std::vector<SweepRow> sweep_beta(const std::vector<Instance>& instances,
                                 const std::vector<int>& betas,
                                 const Models& models, int loops);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Produces the sequence for a named algorithm: greedy, neh, ddqn, gpn, bds.
Sequence run_algorithm(const std::string& name, const Instance& inst,
                       const Models* models, const SolveConfig& solve_cfg);

bool algorithm_needs_models(const std::string& name);

}  // namespace bds
