#include "bds/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace bds {

Sequence Sequence::identity(int n_jobs) {
  std::vector<int> order(static_cast<std::size_t>(n_jobs));
  std::iota(order.begin(), order.end(), 0);
  return Sequence(std::move(order));
}

bool Sequence::is_duplicate_free(int n_jobs) const {
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n_jobs), 0);
  for (int j : order) {
    if (j < 0 || j >= n_jobs) return false;
    if (seen[static_cast<std::size_t>(j)]) return false;
    seen[static_cast<std::size_t>(j)] = 1;
  }
  return true;
}

bool Sequence::is_permutation_of(int n_jobs) const {
  return size() == n_jobs && is_duplicate_free(n_jobs);
}

namespace {

/// Shared decoding core over an arbitrary duplicate-free job subset.
/// Positions index into `jobs`; matrices are n_stages x subset size.
struct DecodeCore {
  std::vector<int> jobs;
  Matrix start;                               // stage x position
  IntMatrix machine_of;                       // stage x position
  std::vector<std::vector<double>> machine_free;  // [stage][machine]
  std::vector<std::vector<int>> dispatch;     // [stage] positions in order
  double makespan = 0.0;
  int critical_pos = -1;
};

DecodeCore decode_core(const Instance& inst, const std::vector<int>& jobs) {
  const int k = static_cast<int>(jobs.size());
  const int S = inst.n_stages;
  DecodeCore core;
  core.jobs = jobs;
  core.start = Matrix::Zero(S, std::max(k, 1));
  core.machine_of = IntMatrix::Constant(S, std::max(k, 1), -1);
  core.machine_free.resize(static_cast<std::size_t>(S));
  for (int i = 0; i < S; ++i)
    core.machine_free[static_cast<std::size_t>(i)]
        .assign(static_cast<std::size_t>(inst.machines_per_stage[static_cast<std::size_t>(i)]), 0.0);
  core.dispatch.resize(static_cast<std::size_t>(S));
  if (k == 0) return core;

  std::vector<double> arrival(static_cast<std::size_t>(k), 0.0);
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);

  for (int i = 0; i < S; ++i) {
    if (i > 0) {
      // Later stages serve jobs as they arrive from the previous stage,
      // sequence position breaking ties.
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double aa = arrival[static_cast<std::size_t>(a)];
        const double ab = arrival[static_cast<std::size_t>(b)];
        return aa != ab ? aa < ab : a < b;
      });
    }
    auto& avail = core.machine_free[static_cast<std::size_t>(i)];
    for (int pos : order) {
      int best = 0;
      for (int m = 1; m < static_cast<int>(avail.size()); ++m)
        if (avail[static_cast<std::size_t>(m)] < avail[static_cast<std::size_t>(best)])
          best = m;
      const double s =
          std::max(arrival[static_cast<std::size_t>(pos)], avail[static_cast<std::size_t>(best)]);
      core.start(i, pos) = s;
      core.machine_of(i, pos) = best;
      avail[static_cast<std::size_t>(best)] =
          s + inst.op_times(i, jobs[static_cast<std::size_t>(pos)]);
      core.dispatch[static_cast<std::size_t>(i)].push_back(pos);
    }
    for (int pos = 0; pos < k; ++pos)
      arrival[static_cast<std::size_t>(pos)] =
          core.start(i, pos) + inst.op_times(i, jobs[static_cast<std::size_t>(pos)]);
  }

  core.critical_pos = 0;
  for (int pos = 1; pos < k; ++pos)
    if (arrival[static_cast<std::size_t>(pos)] >
        arrival[static_cast<std::size_t>(core.critical_pos)])
      core.critical_pos = pos;
  core.makespan = arrival[static_cast<std::size_t>(core.critical_pos)];
  return core;
}

void check_instance(const Instance& inst) {
  const InstanceReport report = validate_instance(inst);
  if (!report.empty())
    throw std::invalid_argument("invalid instance: " +
                                report.issues.front().message);
}

}  // namespace

Schedule decode_schedule(const Instance& inst, const Sequence& seq) {
  check_instance(inst);
  if (!seq.is_permutation_of(inst.n_jobs))
    throw std::invalid_argument(
        "decode_schedule: sequence is not a permutation of the jobs");
  const DecodeCore core = decode_core(inst, seq.order);
  const int S = inst.n_stages;
  const int N = inst.n_jobs;

  Schedule sched;
  sched.start.resize(S, N);
  sched.machine_start.resize(S, N);
  sched.machine_of.resize(S, N);
  for (int pos = 0; pos < N; ++pos) {
    const int job = seq.order[static_cast<std::size_t>(pos)];
    for (int i = 0; i < S; ++i) {
      sched.start(i, job) = core.start(i, pos);
      sched.machine_start(i, job) = core.start(i, pos);
      sched.machine_of(i, job) = core.machine_of(i, pos);
    }
  }
  sched.makespan = core.makespan;
  sched.critical_job = seq.order[static_cast<std::size_t>(core.critical_pos)];

  // Wait breakdown along the critical job's timeline. In every idle gap the
  // job either sits behind earlier-dispatched jobs that have not started yet
  // (stage wait) or is at the head of the queue with all machines busy
  // (machine wait).
  const int cp = core.critical_pos;
  double stage_wait = 0.0, machine_wait = 0.0;
  for (int i = 0; i < S; ++i) {
    const double ready =
        i == 0 ? 0.0
               : core.start(i - 1, cp) +
                     inst.op_times(i - 1, sched.critical_job);
    const double gap = core.start(i, cp) - ready;
    if (gap <= 0.0) continue;
    const auto& disp = core.dispatch[static_cast<std::size_t>(i)];
    const auto it = std::find(disp.begin(), disp.end(), cp);
    double queue_clear = ready;
    if (it != disp.begin()) {
      const int prev_pos = *(it - 1);
      queue_clear = std::max(ready, core.start(i, prev_pos));
    }
    const double sw = std::min(gap, queue_clear - ready);
    stage_wait += sw;
    machine_wait += gap - sw;
  }
  sched.stage_wait_total = stage_wait;
  sched.machine_wait_total = machine_wait;
  return sched;
}

double makespan(const Instance& inst, const Sequence& seq) {
  if (!seq.is_permutation_of(inst.n_jobs))
    throw std::invalid_argument(
        "makespan: sequence is not a permutation of the jobs");
  return decode_core(inst, seq.order).makespan;
}

double partial_makespan(const Instance& inst, const Sequence& prefix) {
  if (!prefix.is_duplicate_free(inst.n_jobs))
    throw std::invalid_argument(
        "partial_makespan: prefix has duplicates or bad job ids");
  if (prefix.order.empty()) return 0.0;
  return decode_core(inst, prefix.order).makespan;
}

Frontier decode_frontier(const Instance& inst, const Sequence& prefix) {
  if (!prefix.is_duplicate_free(inst.n_jobs))
    throw std::invalid_argument(
        "decode_frontier: prefix has duplicates or bad job ids");
  DecodeCore core = decode_core(inst, prefix.order);
  Frontier f;
  f.machine_free = std::move(core.machine_free);
  f.partial_makespan = prefix.order.empty() ? 0.0 : core.makespan;
  return f;
}

PrefixScheduler::PrefixScheduler(const Instance& inst) : inst_(&inst) {
  check_instance(inst);
  dispatch_.resize(static_cast<std::size_t>(inst.n_stages));
  avail_.resize(static_cast<std::size_t>(inst.n_stages));
  frontier_.resize(static_cast<std::size_t>(inst.n_stages));
  reset();
}

void PrefixScheduler::reset() {
  prefix_.clear();
  seqpos_of_.assign(static_cast<std::size_t>(inst_->n_jobs), -1);
  for (int i = 0; i < inst_->n_stages; ++i) {
    const auto machines = static_cast<std::size_t>(
        inst_->machines_per_stage[static_cast<std::size_t>(i)]);
    dispatch_[static_cast<std::size_t>(i)].clear();
    avail_[static_cast<std::size_t>(i)]
        .assign(1, std::vector<double>(machines, 0.0));
    frontier_[static_cast<std::size_t>(i)].assign(machines, 0.0);
  }
}

double PrefixScheduler::partial_makespan() const {
  const auto& last = dispatch_.back();
  double best = 0.0;
  for (const Slot& s : last) best = std::max(best, s.completion);
  return best;
}

void PrefixScheduler::redispatch(int stage, int from,
                                 std::vector<std::pair<int, double>>& changed) {
  auto& disp = dispatch_[static_cast<std::size_t>(stage)];
  auto& snapshots = avail_[static_cast<std::size_t>(stage)];
  const int len = static_cast<int>(disp.size());
  snapshots.resize(static_cast<std::size_t>(len) + 1);
  std::vector<double> avail = snapshots[static_cast<std::size_t>(from)];
  for (int p = from; p < len; ++p) {
    Slot& slot = disp[static_cast<std::size_t>(p)];
    int best = 0;
    for (int m = 1; m < static_cast<int>(avail.size()); ++m)
      if (avail[static_cast<std::size_t>(m)] < avail[static_cast<std::size_t>(best)])
        best = m;
    const double start = std::max(slot.arrival, avail[static_cast<std::size_t>(best)]);
    const double completion = start + inst_->op_times(stage, slot.job);
    if (completion != slot.completion || slot.machine < 0)
      changed.emplace_back(slot.job, completion);
    slot.start = start;
    slot.machine = best;
    slot.completion = completion;
    avail[static_cast<std::size_t>(best)] = completion;
    snapshots[static_cast<std::size_t>(p) + 1] = avail;
  }
  frontier_[static_cast<std::size_t>(stage)] = avail;
}

void PrefixScheduler::append(int job) {
  if (job < 0 || job >= inst_->n_jobs)
    throw std::invalid_argument("PrefixScheduler::append: job out of range");
  for (int j : prefix_)
    if (j == job)
      throw std::invalid_argument("PrefixScheduler::append: duplicate job");
  const int seqpos = static_cast<int>(prefix_.size());
  prefix_.push_back(job);
  seqpos_of_[static_cast<std::size_t>(job)] = seqpos;

  // Stage 0 dispatches in sequence order: the new job lands at the end.
  std::vector<std::pair<int, double>> changed;
  {
    auto& disp = dispatch_[0];
    disp.push_back({0.0, seqpos, job, 0.0, -1, 0.0});
    redispatch(0, static_cast<int>(disp.size()) - 1, changed);
  }

  for (int stage = 1; stage < inst_->n_stages && !changed.empty(); ++stage) {
    auto& disp = dispatch_[static_cast<std::size_t>(stage)];
    int first_affected = static_cast<int>(disp.size());
    for (const auto& [cjob, arrival] : changed) {
      // Remove a stale entry for this job, if present.
      for (int p = 0; p < static_cast<int>(disp.size()); ++p) {
        if (disp[static_cast<std::size_t>(p)].job == cjob) {
          first_affected = std::min(first_affected, p);
          disp.erase(disp.begin() + p);
          break;
        }
      }
      Slot slot{arrival, seqpos_of_[static_cast<std::size_t>(cjob)], cjob,
                0.0, -1, 0.0};
      auto it = std::lower_bound(
          disp.begin(), disp.end(), slot, [](const Slot& a, const Slot& b) {
            if (a.arrival != b.arrival) return a.arrival < b.arrival;
            return a.seqpos < b.seqpos;
          });
      const int pos = static_cast<int>(it - disp.begin());
      disp.insert(it, slot);
      first_affected = std::min(first_affected, pos);
    }
    changed.clear();
    redispatch(stage, first_affected, changed);
  }
}

std::string to_string(ConstraintFamily family) {
  switch (family) {
    case ConstraintFamily::StageAssignment: return "stage-assignment";
    case ConstraintFamily::StagePrecedence: return "stage-precedence";
    case ConstraintFamily::MachineOverlap: return "machine-overlap";
    case ConstraintFamily::MachineStageLink: return "machine-stage-link";
    case ConstraintFamily::Domain: return "domain";
  }
  return "unknown";
}

ValidatorConfig ValidatorConfig::defaults(const Instance& inst) {
  ValidatorConfig cfg;
  const double horizon = 10.0 * inst.op_times.sum();
  cfg.xi.assign(static_cast<std::size_t>(inst.n_stages), horizon);
  cfg.tolerance = 1e-9;
  return cfg;
}

ValidationReport validate_schedule(const Instance& inst, const Schedule& sched,
                                   const ValidatorConfig& cfg) {
  ValidationReport report;
  const int S = inst.n_stages;
  const int N = inst.n_jobs;
  const double tol = cfg.tolerance;
  auto violation = [&](ConstraintFamily family, int stage, int job,
                       int other_job, int machine, const std::string& msg) {
    report.violations.push_back({family, stage, job, other_job, machine, msg});
  };

  if (sched.start.rows() != S || sched.start.cols() != N ||
      sched.machine_of.rows() != S || sched.machine_of.cols() != N ||
      sched.machine_start.rows() != S || sched.machine_start.cols() != N) {
    violation(ConstraintFamily::Domain, -1, -1, -1, -1,
              "schedule dimensions do not match the instance");
    return report;
  }

  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < N; ++j) {
      const double u = sched.start(i, j);
      const double vtime = sched.machine_start(i, j);
      if (!std::isfinite(u) || u < -tol || !std::isfinite(vtime)) {
        violation(ConstraintFamily::Domain, i, j, -1, -1,
                  "start times must be finite and non-negative");
      }
      const int m = sched.machine_of(i, j);
      if (m < 0 || m >= inst.machines_per_stage[static_cast<std::size_t>(i)]) {
        violation(ConstraintFamily::StageAssignment, i, j, -1, m,
                  "job must be assigned exactly one valid machine per stage");
        continue;
      }
      if (std::abs(vtime - u) > tol) {
        violation(ConstraintFamily::MachineStageLink, i, j, -1, m,
                  "machine-level start must equal stage-level start");
      }
    }
  }

  for (int j = 0; j < N; ++j) {
    for (int i = 0; i + 1 < S; ++i) {
      const double end_i = sched.start(i, j) + inst.op_times(i, j);
      if (sched.start(i + 1, j) < end_i - tol) {
        violation(ConstraintFamily::StagePrecedence, i + 1, j, -1, -1,
                  "stage start precedes completion of the previous stage");
      }
    }
  }

  for (int i = 0; i < S; ++i) {
    const int M = inst.machines_per_stage[static_cast<std::size_t>(i)];
    for (int m = 0; m < M; ++m) {
      std::vector<int> assigned;
      for (int j = 0; j < N; ++j)
        if (sched.machine_of(i, j) == m) assigned.push_back(j);
      std::sort(assigned.begin(), assigned.end(), [&](int a, int b) {
        return sched.start(i, a) < sched.start(i, b);
      });
      for (std::size_t t = 1; t < assigned.size(); ++t) {
        const int prev = assigned[t - 1];
        const int cur = assigned[t];
        const double prev_end = sched.start(i, prev) + inst.op_times(i, prev);
        if (sched.start(i, cur) < prev_end - tol) {
          violation(ConstraintFamily::MachineOverlap, i, cur, prev, m,
                    "jobs overlap on the same machine");
        }
      }
    }
  }

  report.stage_tardiness.assign(static_cast<std::size_t>(S), 0.0);
  for (int i = 0; i < S; ++i) {
    double sum = 0.0;
    for (int j = 0; j < N; ++j) sum += sched.start(i, j) + inst.op_times(i, j);
    report.stage_tardiness[static_cast<std::size_t>(i)] = sum;
  }
  return report;
}

double makespan_lower_bound(const Instance& inst) {
  double job_bound = 0.0;
  for (int j = 0; j < inst.n_jobs; ++j)
    job_bound = std::max(job_bound, inst.op_times.col(j).sum());
  double stage_bound = 0.0;
  for (int i = 0; i < inst.n_stages; ++i)
    stage_bound = std::max(
        stage_bound, inst.op_times.row(i).sum() /
                         inst.machines_per_stage[static_cast<std::size_t>(i)]);
  return std::max(job_bound, stage_bound);
}

std::string schedule_to_json(const Schedule& sched, const Instance& inst) {
  nlohmann::ordered_json doc;
  doc["makespan"] = sched.makespan;
  doc["stage_wait"] = sched.stage_wait_total;
  doc["machine_wait"] = sched.machine_wait_total;
  auto records = nlohmann::ordered_json::array();
  for (int i = 0; i < inst.n_stages; ++i) {
    for (int j = 0; j < inst.n_jobs; ++j) {
      nlohmann::ordered_json rec;
      rec["job"] = j;
      rec["stage"] = i;
      rec["machine"] = sched.machine_of(i, j);
      rec["start"] = sched.start(i, j);
      rec["end"] = sched.start(i, j) + inst.op_times(i, j);
      records.push_back(std::move(rec));
    }
  }
  doc["records"] = std::move(records);
  return doc.dump(2);
}

std::string schedule_to_gantt_csv(const Schedule& sched, const Instance& inst) {
  std::ostringstream out;
  out << "stage,machine,job,start,end\n";
  out.precision(12);
  for (int i = 0; i < inst.n_stages; ++i) {
    for (int j = 0; j < inst.n_jobs; ++j) {
      out << i << "," << sched.machine_of(i, j) << "," << j << ","
          << sched.start(i, j) << ","
          << sched.start(i, j) + inst.op_times(i, j) << "\n";
    }
  }
  return out.str();
}

}  // namespace bds
