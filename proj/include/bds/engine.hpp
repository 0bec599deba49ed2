#pragma once

#include <string>
#include <vector>

#include "bds/instance.hpp"
#include "bds/types.hpp"

namespace bds {

/// A job priority sequence. Full sequences are permutations of
/// {0..n_jobs-1}; prefixes are duplicate-free subsets in priority order.
struct Sequence {
  std::vector<int> order;

  Sequence() = default;
  explicit Sequence(std::vector<int> jobs) : order(std::move(jobs)) {}

  int size() const { return static_cast<int>(order.size()); }
  bool operator==(const Sequence& other) const { return order == other.order; }

  static Sequence identity(int n_jobs);
  bool is_permutation_of(int n_jobs) const;
  bool is_duplicate_free(int n_jobs) const;
};

/// A decoded schedule. `start` carries stage-level start times, `machine_start`
/// the start on the assigned machine (equal by construction when produced by
/// decode_schedule, but validated independently), `machine_of` the assignment.
struct Schedule {
  Matrix start;          // n_stages x n_jobs
  Matrix machine_start;  // n_stages x n_jobs
  IntMatrix machine_of;  // n_stages x n_jobs
  double makespan = 0.0;
  double stage_wait_total = 0.0;
  double machine_wait_total = 0.0;
  int critical_job = -1;

  double end(int stage, int job, const Instance& inst) const {
    return start(stage, job) + inst.op_times(stage, job);
  }
};

/// Machine availability per stage after scheduling a prefix, plus the prefix
/// makespan. This is the scheduling frontier consumed by the learned policies.
struct Frontier {
  std::vector<std::vector<double>> machine_free;  // [stage][machine]
  double partial_makespan = 0.0;
};

/// List-scheduling decoder: the first stage dispatches jobs in sequence
/// order; later stages dispatch in order of arrival from the previous stage
/// (ties by sequence position); every dispatched job takes the machine with
/// the earliest availability (ties by lowest machine index).
Schedule decode_schedule(const Instance& inst, const Sequence& seq);

double makespan(const Instance& inst, const Sequence& seq);

/// Makespan of scheduling only the prefix jobs; 0 for an empty prefix.
double partial_makespan(const Instance& inst, const Sequence& prefix);

/// Frontier after scheduling a (possibly empty) prefix.
Frontier decode_frontier(const Instance& inst, const Sequence& prefix);

/// Incremental prefix scheduler: grows a prefix one job at a time and keeps
/// the decoded state (dispatch lists, machine availability, makespan) exactly
/// equal to a fresh decode of the same prefix. Appending re-dispatches only
/// the suffixes whose arrival order actually changed.
class PrefixScheduler {
 public:
  explicit PrefixScheduler(const Instance& inst);

  void append(int job);
  void reset();

  int size() const { return static_cast<int>(prefix_.size()); }
  const std::vector<int>& prefix() const { return prefix_; }
  double partial_makespan() const;
  /// Machine availability per stage, identical to decode_frontier of the
  /// current prefix.
  const std::vector<std::vector<double>>& machine_free() const {
    return frontier_;
  }

 private:
  struct Slot {
    double arrival;
    int seqpos;
    int job;
    double start;
    int machine;
    double completion;
  };

  const Instance* inst_;
  std::vector<int> prefix_;
  std::vector<int> seqpos_of_;
  std::vector<std::vector<Slot>> dispatch_;  // per stage, arrival-sorted
  // avail_[i][p] is the machine availability before dispatching position p.
  std::vector<std::vector<std::vector<double>>> avail_;
  std::vector<std::vector<double>> frontier_;

  void redispatch(int stage, int from,
                  std::vector<std::pair<int, double>>& changed);
};

enum class ConstraintFamily {
  StageAssignment,   // one machine per (stage, job), valid indices
  StagePrecedence,   // next stage starts after the previous one ends
  MachineOverlap,    // per-machine intervals are pairwise disjoint
  MachineStageLink,  // machine-level start equals stage-level start
  Domain,            // finite, non-negative times
};

std::string to_string(ConstraintFamily family);

struct ScheduleViolation {
  ConstraintFamily family;
  int stage = -1;
  int job = -1;
  int other_job = -1;
  int machine = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<ScheduleViolation> violations;
  /// Reported per-stage tardiness reciprocals: sum of stage start times plus
  /// assigned processing time, per stage (a monitored quantity, not a
  /// pass/fail constraint).
  std::vector<double> stage_tardiness;
  bool empty() const { return violations.empty(); }
};

struct ValidatorConfig {
  std::vector<double> xi;  // per-stage slack bound for unassigned pairs
  double tolerance = 1e-9;

  static ValidatorConfig defaults(const Instance& inst);
};

ValidationReport validate_schedule(const Instance& inst, const Schedule& sched,
                                   const ValidatorConfig& cfg);

/// max(longest job, most loaded stage). Every feasible schedule is at least
/// this long.
double makespan_lower_bound(const Instance& inst);

std::string schedule_to_json(const Schedule& sched, const Instance& inst);
std::string schedule_to_gantt_csv(const Schedule& sched, const Instance& inst);

}  // namespace bds
