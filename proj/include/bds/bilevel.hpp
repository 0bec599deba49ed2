#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bds/lower_gpn.hpp"
#include "bds/upper_ddqn.hpp"

namespace bds {

enum class AcceptRule { IfImproved };

struct CoTrainConfig {
  int beta = 50;
  int loops = 2;
  double gamma_u = 0.8;
  double gamma_l = 0.99;  // carried in the manifest; the window episodes are
                          // single-reward, so no discounting applies today
  int epochs_upper = 500;
  int epochs_lower = 500;
  int batch_size = 200;
  std::uint64_t seed = 1;
  AcceptRule accept = AcceptRule::IfImproved;
  double tolerance = 1e-9;
  int hidden = 64;
  double lr_upper = 1e-3;
  double lr_lower = 1e-3;
  int feedback_episodes = 4;  // refined sequences replayed to the upper level
  int upper_steps_per_episode = 0;  // 0: one train step per transition
  RewardMode reward_mode = RewardMode::FullMakespan;
};

struct LoopStat {
  int loop = 0;
  double probe_makespan = 0.0;  // solve on the probe instance after the loop
  double best_makespan = 0.0;   // running minimum of probe_makespan
  int accepts = 0;
  int rejects = 0;
  double upper_seconds = 0.0;
  double lower_seconds = 0.0;
};

struct LoopStats {
  std::vector<LoopStat> loops;
};

/// Consecutive non-overlapping windows of size beta, left to right; the last
/// window may be shorter. Each window carries the frontier of its prefix.
std::vector<Window> sample_windows(const Instance& inst, const Sequence& seq,
                                   int beta);

struct MergeResult {
  Sequence seq;
  bool accepted = false;
  double makespan_before = 0.0;
  double makespan_after = 0.0;
};

/// The accept-if-improved core: splices `proposed` into the window slot and
/// keeps it only if the full-sequence makespan strictly improves beyond the
/// tolerance.
MergeResult merge_if_improved(const Instance& inst, const Sequence& seq,
                              const Window& window,
                              const std::vector<int>& proposed,
                              double tolerance = 1e-9);

/// Decodes a proposed order for the window and applies merge_if_improved.
MergeResult refine_and_merge(const Instance& inst, const Sequence& seq,
                             const Window& window, const GpnModel& gpn,
                             DecodeMode mode, Rng* rng, double tolerance = 1e-9);

struct CoTrainResult {
  QNet qnet;
  GpnModel gpn;
  LoopStats stats;
};

CoTrainResult co_train(const InstanceSampler& sampler,
                       const CoTrainConfig& cfg);

struct SolveConfig {
  int beta = 50;
  int loops = 2;
  double tolerance = 1e-9;
};

struct SolveStats {
  double rollout_makespan = 0.0;
  std::vector<double> series;  // makespan after each merge attempt
  int accepts = 0;
  int rejects = 0;
};

/// Greedy upper rollout followed by `loops` passes of sliding-window greedy
/// refinement with accept-if-improved, then a full decode.
Schedule solve(const Instance& inst, const QNet& qnet, const GpnModel& gpn,
               const SolveConfig& cfg, SolveStats* stats = nullptr);

Sequence solve_sequence(const Instance& inst, const QNet& qnet,
                        const GpnModel& gpn, const SolveConfig& cfg,
                        SolveStats* stats = nullptr);

std::string run_manifest_json(const CoTrainConfig& cfg, const LoopStats& stats,
                              double final_makespan);

}  // namespace bds
