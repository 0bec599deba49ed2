#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bds/types.hpp"

namespace bds {

/// A hybrid flow-shop instance: every job passes through the same ordered
/// stages, each stage holding identical parallel machines. Operation times
/// are per (stage, job); machines within a stage are interchangeable.
struct Instance {
  std::string name;
  int n_jobs = 0;
  int n_stages = 0;
  std::vector<int> machines_per_stage;
  Matrix op_times;  // n_stages x n_jobs, every entry > 0

  bool operator==(const Instance& other) const {
    return name == other.name && n_jobs == other.n_jobs &&
           n_stages == other.n_stages &&
           machines_per_stage == other.machines_per_stage &&
           op_times.rows() == other.op_times.rows() &&
           op_times.cols() == other.op_times.cols() &&
           op_times == other.op_times;
  }
};

enum class Distribution { Uniform, ChiSquare };

struct GenConfig {
  int n_jobs = 0;
  int n_stages = 0;
  std::vector<int> machines_per_stage;
  Distribution distribution = Distribution::Uniform;
  std::vector<double> dist_params;  // Uniform: {lo, hi}; ChiSquare: {dof}
  std::uint64_t seed = 1;
  std::string name;

  /// The warehouse-style desk default: 5 stages of 10 machines each.
  static GenConfig desk_default(int n_jobs, std::uint64_t seed);
};

Instance generate(const GenConfig& config);

struct InstanceIssue {
  std::string field;
  int stage = -1;
  int job = -1;
  std::string message;
};

struct InstanceReport {
  std::vector<InstanceIssue> issues;
  bool empty() const { return issues.empty(); }
};

/// Reports every invariant violation; never throws.
InstanceReport validate_instance(const Instance& inst);

std::string serialize_instance(const Instance& inst);
Instance parse_instance(const std::string& text);
Instance load_instance(const std::string& path);
void save_instance(const Instance& inst, const std::string& path);

}  // namespace bds
