#include "bds/instance.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bds {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

void check_gen_config(const GenConfig& c) {
  require(c.n_jobs >= 1, "gen config: n_jobs must be >= 1");
  require(c.n_stages >= 1, "gen config: n_stages must be >= 1");
  require(static_cast<int>(c.machines_per_stage.size()) == c.n_stages,
          "gen config: machines_per_stage must have one entry per stage");
  for (int m : c.machines_per_stage)
    require(m >= 1, "gen config: every stage needs at least one machine");
  if (c.distribution == Distribution::Uniform) {
    require(c.dist_params.size() == 2, "uniform distribution needs {lo, hi}");
    const double lo = c.dist_params[0], hi = c.dist_params[1];
    require(lo >= 0.0 && hi >= lo && hi > 0.0,
            "uniform bounds must satisfy 0 <= lo <= hi and hi > 0");
  } else {
    require(c.dist_params.size() == 1,
            "chi-square distribution needs {degrees of freedom}");
    require(c.dist_params[0] > 0.0,
            "chi-square degrees of freedom must be positive");
  }
}

}  // namespace

GenConfig GenConfig::desk_default(int n_jobs, std::uint64_t seed) {
  GenConfig c;
  c.n_jobs = n_jobs;
  c.n_stages = 5;
  c.machines_per_stage.assign(5, 10);
  c.distribution = Distribution::Uniform;
  c.dist_params = {0.0, 1.0};
  c.seed = seed;
  return c;
}

Instance generate(const GenConfig& config) {
  check_gen_config(config);
  Instance inst;
  inst.n_jobs = config.n_jobs;
  inst.n_stages = config.n_stages;
  inst.machines_per_stage = config.machines_per_stage;
  inst.op_times.resize(config.n_stages, config.n_jobs);
  Rng rng(config.seed);
  for (int i = 0; i < config.n_stages; ++i) {
    for (int j = 0; j < config.n_jobs; ++j) {
      double t = 0.0;
      do {
        t = config.distribution == Distribution::Uniform
                ? rng.uniform(config.dist_params[0], config.dist_params[1])
                : rng.chi_square(config.dist_params[0]);
      } while (!(t > 0.0));
      inst.op_times(i, j) = t;
    }
  }
  if (!config.name.empty()) {
    inst.name = config.name;
  } else {
    std::ostringstream name;
    name << (config.distribution == Distribution::Uniform ? "u" : "c")
         << config.n_jobs << "x" << config.n_stages << "s" << config.seed;
    inst.name = name.str();
  }
  return inst;
}

InstanceReport validate_instance(const Instance& inst) {
  InstanceReport report;
  auto issue = [&](const std::string& field, int stage, int job,
                   const std::string& message) {
    report.issues.push_back({field, stage, job, message});
  };
  if (inst.n_jobs < 1) issue("jobs", -1, -1, "n_jobs must be >= 1");
  if (inst.n_stages < 1) issue("stages", -1, -1, "n_stages must be >= 1");
  if (static_cast<int>(inst.machines_per_stage.size()) != inst.n_stages) {
    issue("machines", -1, -1, "machines_per_stage length != n_stages");
  } else {
    for (int i = 0; i < inst.n_stages; ++i) {
      if (inst.machines_per_stage[static_cast<std::size_t>(i)] < 1)
        issue("machines", i, -1, "stage must have at least one machine");
    }
  }
  if (inst.op_times.rows() != inst.n_stages ||
      inst.op_times.cols() != inst.n_jobs) {
    issue("op_times", -1, -1, "op_times must be n_stages x n_jobs");
  } else {
    for (int i = 0; i < inst.n_stages; ++i) {
      for (int j = 0; j < inst.n_jobs; ++j) {
        const double t = inst.op_times(i, j);
        if (!(t > 0.0) || !std::isfinite(t)) {
          std::ostringstream msg;
          msg << "operation time must be > 0 at stage " << i << ", job " << j;
          issue("op_times", i, j, msg.str());
        }
      }
    }
  }
  return report;
}

std::string serialize_instance(const Instance& inst) {
  nlohmann::ordered_json doc;
  doc["name"] = inst.name;
  doc["jobs"] = inst.n_jobs;
  doc["stages"] = inst.n_stages;
  doc["machines"] = inst.machines_per_stage;
  auto rows = nlohmann::ordered_json::array();
  for (int i = 0; i < inst.n_stages; ++i) {
    auto row = nlohmann::ordered_json::array();
    for (int j = 0; j < inst.n_jobs; ++j) row.push_back(inst.op_times(i, j));
    rows.push_back(std::move(row));
  }
  doc["op_times"] = std::move(rows);
  return doc.dump(2);
}

Instance parse_instance(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("instance parse error: ") +
                                e.what());
  }
  Instance inst;
  try {
    inst.name = doc.value("name", std::string{});
    inst.n_jobs = doc.at("jobs").get<int>();
    inst.n_stages = doc.at("stages").get<int>();
    inst.machines_per_stage = doc.at("machines").get<std::vector<int>>();
    const auto& rows = doc.at("op_times");
    if (!rows.is_array() ||
        static_cast<int>(rows.size()) != inst.n_stages)
      throw std::invalid_argument(
          "instance validation error: op_times must have one row per stage");
    inst.op_times.resize(inst.n_stages, inst.n_jobs);
    for (int i = 0; i < inst.n_stages; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (!row.is_array() || static_cast<int>(row.size()) != inst.n_jobs) {
        std::ostringstream msg;
        msg << "instance validation error: op_times row " << i
            << " must have one entry per job";
        throw std::invalid_argument(msg.str());
      }
      for (int j = 0; j < inst.n_jobs; ++j)
        inst.op_times(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("instance validation error: ") +
                                e.what());
  }
  const InstanceReport report = validate_instance(inst);
  if (!report.empty())
    throw std::invalid_argument("instance validation error: " +
                                report.issues.front().message);
  return inst;
}

Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_instance(buf.str());
}

void save_instance(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file: " + path);
  out << serialize_instance(inst) << "\n";
}

}  // namespace bds
