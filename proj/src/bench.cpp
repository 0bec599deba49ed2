#include "bds/bench.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

#include "bds/heuristics.hpp"
#include "json.hpp"

namespace bds {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void append_number(std::ostream& out, double value) {
  out << std::setprecision(17) << value;
}

}  // namespace

Models load_models(const std::string& checkpoint_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(checkpoint_dir);
  Models models;
  models.qnet = qnet_from_json(read_file((dir / "qnet.json").string()));
  models.gpn = gpn_from_json(read_file((dir / "gpn.json").string()));
  return models;
}

void save_models(const Models& models, const CoTrainConfig& cfg,
                 const LoopStats& stats, double final_makespan,
                 const std::string& checkpoint_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(checkpoint_dir);
  fs::create_directories(dir);
  UpperConfig uc;
  uc.gamma = cfg.gamma_u;
  uc.lr = cfg.lr_upper;
  uc.batch_size = cfg.batch_size;
  uc.epochs = cfg.epochs_upper;
  uc.seed = cfg.seed;
  GpnConfig lc;
  lc.hidden = cfg.hidden;
  lc.lr = cfg.lr_lower;
  lc.batch_size = cfg.batch_size;
  lc.epochs = cfg.epochs_lower;
  lc.seed = cfg.seed;
  write_file((dir / "qnet.json").string(), qnet_to_json(models.qnet, uc));
  write_file((dir / "gpn.json").string(), gpn_to_json(models.gpn, lc));
  write_file((dir / "manifest.json").string(),
             run_manifest_json(cfg, stats, final_makespan));
}

bool algorithm_needs_models(const std::string& name) {
  return name == "ddqn" || name == "gpn" || name == "bds";
}

Sequence run_algorithm(const std::string& name, const Instance& inst,
                       const Models* models, const SolveConfig& solve_cfg) {
  if (algorithm_needs_models(name) && !models)
    throw std::runtime_error("algorithm " + name + " requires a checkpoint");
  if (name == "greedy") return greedy_sequence(inst);
  if (name == "neh") return neh_sequence(inst);
  if (name == "ddqn") {
    Rng rng(0);
    return rollout(models->qnet, inst, 0.0, rng).seq;
  }
  if (name == "gpn") {
    // Standalone pointer construction: the whole job set decoded as one window.
    Window w;
    w.start = 0;
    w.jobs = Sequence::identity(inst.n_jobs).order;
    w.context.resize(static_cast<std::size_t>(inst.n_stages));
    for (int i = 0; i < inst.n_stages; ++i)
      w.context[static_cast<std::size_t>(i)]
          .assign(static_cast<std::size_t>(
                      inst.machines_per_stage[static_cast<std::size_t>(i)]),
                  0.0);
    return Sequence(decode_window(models->gpn, inst, w, DecodeMode::Greedy).order);
  }
  if (name == "bds")
    return solve_sequence(inst, models->qnet, models->gpn, solve_cfg);
  throw std::invalid_argument("unknown algorithm: " + name);
}

std::vector<BenchRow> run_benchmark(const std::vector<Instance>& instances,
                                    const std::vector<std::string>& algorithms,
                                    const Models* models,
                                    const BenchOptions& options) {
  for (const auto& algo : algorithms)
    if (algorithm_needs_models(algo) && !models)
      throw std::runtime_error("algorithm " + algo +
                               " requires a checkpoint directory");

  auto run_cell = [&](const Instance& inst,
                      const std::string& algo) -> BenchRow {
    const auto t0 = std::chrono::steady_clock::now();
    const Sequence seq = run_algorithm(algo, inst, models, options.solve);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const Schedule sched = decode_schedule(inst, seq);
    const ValidationReport report =
        validate_schedule(inst, sched, ValidatorConfig::defaults(inst));
    if (!report.empty())
      throw std::runtime_error("algorithm " + algo +
                               " produced an infeasible schedule on " +
                               inst.name);
    BenchRow row;
    row.dataset = inst.name;
    row.algorithm = algo;
    row.jobs = inst.n_jobs;
    row.makespan = sched.makespan;
    row.time_s = elapsed;
    row.seed = options.seed;
    return row;
  };

  std::vector<BenchRow> rows;
  if (options.parallel) {
    std::vector<std::future<BenchRow>> cells;
    for (const auto& inst : instances)
      for (const auto& algo : algorithms)
        cells.push_back(std::async(std::launch::async, run_cell, std::cref(inst),
                                   algo));
    for (auto& cell : cells) rows.push_back(cell.get());
  } else {
    for (const auto& inst : instances)
      for (const auto& algo : algorithms) rows.push_back(run_cell(inst, algo));
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "dataset,algorithm,jobs,makespan,time_s,seed\n";
  for (const auto& r : rows) {
    out << r.dataset << "," << r.algorithm << "," << r.jobs << ",";
    append_number(out, r.makespan);
    out << "," << std::setprecision(3) << std::fixed << r.time_s
        << std::defaultfloat << "," << r.seed << "\n";
  }
  return out.str();
}

std::vector<SweepRow> sweep_beta(const std::vector<Instance>& instances,
                                 const std::vector<int>& betas,
                                 const Models& models, int loops) {
  std::vector<SweepRow> rows;
  for (const auto& inst : instances) {
    for (int beta : betas) {
      SweepRow row;
      row.jobs = inst.n_jobs;
      row.beta = beta;
      if (beta > inst.n_jobs) {
        row.skipped = true;
        rows.push_back(row);
        continue;
      }
      SolveConfig cfg;
      cfg.beta = beta;
      cfg.loops = loops;
      const auto t0 = std::chrono::steady_clock::now();
      const Sequence seq = solve_sequence(inst, models.qnet, models.gpn, cfg);
      row.time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      row.makespan = makespan(inst, seq);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "jobs,beta,makespan,time_s\n";
  for (const auto& r : rows) {
    out << r.jobs << "," << r.beta << ",";
    if (r.skipped) {
      out << "/,/\n";
      continue;
    }
    append_number(out, r.makespan);
    out << "," << std::setprecision(3) << std::fixed << r.time_s
        << std::defaultfloat << "\n";
  }
  // Footer: best beta per job count, skipped rows excluded.
  std::vector<int> job_counts;
  for (const auto& r : rows)
    if (std::find(job_counts.begin(), job_counts.end(), r.jobs) ==
        job_counts.end())
      job_counts.push_back(r.jobs);
  for (int jobs : job_counts) {
    const SweepRow* best = nullptr;
    for (const auto& r : rows)
      if (r.jobs == jobs && !r.skipped &&
          (!best || r.makespan < best->makespan))
        best = &r;
    if (best)
      out << "# best beta for jobs=" << jobs << ": " << best->beta << "\n";
  }
  return out.str();
}

}  // namespace bds
