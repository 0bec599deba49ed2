#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bds/bench.hpp"
#include "bds/heuristics.hpp"

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BDS_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 1;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) values.push_back(std::stoi(item));
  }
  if (values.empty()) throw CLI::ValidationError("expected a comma list of integers");
  return values;
}

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> names;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

bds::GenConfig build_gen_config(int jobs, int stages,
                                const std::string& machines,
                                const std::string& dist,
                                std::vector<double> params,
                                std::uint64_t seed, const std::string& name) {
  bds::GenConfig cfg;
  cfg.n_jobs = jobs;
  cfg.n_stages = stages;
  std::vector<int> machine_list = parse_int_list(machines);
  if (static_cast<int>(machine_list.size()) == 1)
    machine_list.assign(static_cast<std::size_t>(stages), machine_list[0]);
  cfg.machines_per_stage = machine_list;
  if (dist == "uniform") {
    cfg.distribution = bds::Distribution::Uniform;
    cfg.dist_params = params.empty() ? std::vector<double>{0.0, 1.0} : params;
  } else if (dist == "chisquare") {
    cfg.distribution = bds::Distribution::ChiSquare;
    cfg.dist_params = params.empty() ? std::vector<double>{2.0} : params;
  } else {
    throw CLI::ValidationError("--dist must be uniform or chisquare");
  }
  cfg.seed = seed;
  cfg.name = name;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run(int argc, char** argv) {
  CLI::App app{"bds: hybrid flow-shop scheduling benchmarks and a bilevel "
               "learning solver"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a random instance file");
  int g_jobs = 100, g_stages = 5;
  std::string g_machines = "10", g_dist = "uniform", g_name, g_out;
  std::vector<double> g_params;
  std::optional<std::uint64_t> g_seed;
  gen->add_option("--jobs", g_jobs, "number of jobs")->required();
  gen->add_option("--stages", g_stages, "number of stages");
  gen->add_option("--machines", g_machines,
                  "machines per stage (single value or comma list)");
  gen->add_option("--dist", g_dist, "uniform | chisquare");
  gen->add_option("--params", g_params,
                  "distribution parameters (uniform: lo hi; chisquare: dof)");
  gen->add_option("--seed", g_seed, "generator seed (fallback: BDS_SEED)");
  gen->add_option("--name", g_name, "instance name");
  gen->add_option("-o,--out", g_out, "output instance file")->required();

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "solve one instance");
  std::string s_algo = "greedy", s_checkpoint, s_out, s_gantt, s_instance;
  int s_beta = 50, s_loops = 2;
  solve_cmd->add_option("instance", s_instance, "instance file")->required();
  solve_cmd->add_option("--algo", s_algo, "greedy | neh | ddqn | gpn | bds");
  solve_cmd->add_option("--checkpoint", s_checkpoint,
                        "checkpoint directory for learned algorithms");
  solve_cmd->add_option("--beta", s_beta, "sliding window size");
  solve_cmd->add_option("--loops", s_loops, "refinement passes");
  solve_cmd->add_option("-o,--out", s_out, "write schedule JSON here");
  solve_cmd->add_option("--gantt", s_gantt, "write Gantt CSV here");

  // train
  auto* train_cmd = app.add_subcommand("train", "co-train the two levels");
  int t_jobs = 100, t_stages = 5, t_beta = 25, t_loops = 2;
  int t_epochs_upper = 200, t_epochs_lower = 200, t_batch = 200, t_hidden = 64;
  double t_gamma_u = 0.8, t_gamma_l = 0.99, t_lr_u = 1e-3, t_lr_l = 1e-3;
  std::string t_machines = "10", t_dist = "uniform", t_out;
  std::vector<double> t_params;
  std::optional<std::uint64_t> t_seed;
  train_cmd->add_option("--jobs", t_jobs, "jobs per training instance");
  train_cmd->add_option("--stages", t_stages, "stages");
  train_cmd->add_option("--machines", t_machines, "machines per stage");
  train_cmd->add_option("--dist", t_dist, "uniform | chisquare");
  train_cmd->add_option("--params", t_params, "distribution parameters");
  train_cmd->add_option("--beta", t_beta, "sliding window size");
  train_cmd->add_option("--loops", t_loops, "outer co-training loops");
  train_cmd->add_option("--epochs-upper", t_epochs_upper, "upper epochs per loop");
  train_cmd->add_option("--epochs-lower", t_epochs_lower, "lower epochs per loop");
  train_cmd->add_option("--batch", t_batch, "batch size on both levels");
  train_cmd->add_option("--gamma-u", t_gamma_u, "upper discount");
  train_cmd->add_option("--gamma-l", t_gamma_l, "lower discount (manifest echo)");
  train_cmd->add_option("--lr-upper", t_lr_u, "upper learning rate");
  train_cmd->add_option("--lr-lower", t_lr_l, "lower learning rate");
  train_cmd->add_option("--hidden", t_hidden, "hidden width of both models");
  train_cmd->add_option("--seed", t_seed, "training seed (fallback: BDS_SEED)");
  train_cmd->add_option("-o,--out", t_out, "checkpoint directory")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "run a benchmark table");
  std::vector<std::string> b_instances;
  std::string b_algos = "greedy,neh", b_checkpoint, b_out;
  int b_beta = 50, b_loops = 2;
  bool b_parallel = false;
  std::optional<std::uint64_t> b_seed;
  bench_cmd->add_option("instances", b_instances, "instance files")->required();
  bench_cmd->add_option("--algos", b_algos, "comma list of algorithms");
  bench_cmd->add_option("--checkpoint", b_checkpoint, "checkpoint directory");
  bench_cmd->add_option("--beta", b_beta, "window size for bds");
  bench_cmd->add_option("--loops", b_loops, "refinement passes for bds");
  bench_cmd->add_option("--seed", b_seed, "seed column (fallback: BDS_SEED)");
  bench_cmd->add_flag("--parallel", b_parallel,
                      "run cells concurrently (times lose comparability)");
  bench_cmd->add_option("-o,--out", b_out, "output CSV (default: stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep the window size");
  std::vector<std::string> w_instances;
  std::string w_betas = "25,50,100", w_checkpoint, w_out;
  int w_loops = 2;
  sweep_cmd->add_option("instances", w_instances, "instance files")->required();
  sweep_cmd->add_option("--betas", w_betas, "comma list of window sizes");
  sweep_cmd->add_option("--checkpoint", w_checkpoint, "checkpoint directory")
      ->required();
  sweep_cmd->add_option("--loops", w_loops, "refinement passes");
  sweep_cmd->add_option("-o,--out", w_out, "output CSV (default: stdout)");

  // export-gantt
  auto* gantt_cmd =
      app.add_subcommand("export-gantt", "schedule JSON to Gantt CSV");
  std::string x_schedule, x_out;
  gantt_cmd->add_option("schedule", x_schedule, "schedule JSON file")
      ->required();
  gantt_cmd->add_option("-o,--out", x_out, "output CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (gen->parsed()) {
    const auto cfg = build_gen_config(g_jobs, g_stages, g_machines, g_dist,
                                      g_params, resolve_seed(g_seed), g_name);
    bds::save_instance(bds::generate(cfg), g_out);
    std::cout << "wrote " << g_out << "\n";
    return 0;
  }

  if (solve_cmd->parsed()) {
    const bds::Instance inst = bds::load_instance(s_instance);
    std::optional<bds::Models> models;
    if (bds::algorithm_needs_models(s_algo)) {
      if (s_checkpoint.empty())
        throw std::runtime_error("algorithm " + s_algo +
                                 " requires --checkpoint");
      models = bds::load_models(s_checkpoint);
    }
    bds::SolveConfig cfg;
    cfg.beta = s_beta;
    cfg.loops = s_loops;
    const bds::Sequence seq = bds::run_algorithm(
        s_algo, inst, models ? &*models : nullptr, cfg);
    const bds::Schedule sched = bds::decode_schedule(inst, seq);
    const auto report =
        bds::validate_schedule(inst, sched, bds::ValidatorConfig::defaults(inst));
    if (!report.empty()) throw std::runtime_error("schedule failed validation");
    std::cout.precision(12);
    std::cout << "makespan " << sched.makespan << "\n";
    if (!s_out.empty()) write_text(s_out, bds::schedule_to_json(sched, inst));
    if (!s_gantt.empty())
      write_text(s_gantt, bds::schedule_to_gantt_csv(sched, inst));
    return 0;
  }

  if (train_cmd->parsed()) {
    const std::uint64_t seed = resolve_seed(t_seed);
    const auto gen_cfg = build_gen_config(t_jobs, t_stages, t_machines, t_dist,
                                          t_params, seed, "");
    bds::CoTrainConfig cfg;
    cfg.beta = t_beta;
    cfg.loops = t_loops;
    cfg.gamma_u = t_gamma_u;
    cfg.gamma_l = t_gamma_l;
    cfg.epochs_upper = t_epochs_upper;
    cfg.epochs_lower = t_epochs_lower;
    cfg.batch_size = t_batch;
    cfg.seed = seed;
    cfg.hidden = t_hidden;
    cfg.lr_upper = t_lr_u;
    cfg.lr_lower = t_lr_l;
    std::uint64_t counter = 0;
    auto sampler = [&]() {
      bds::GenConfig c = gen_cfg;
      c.seed = bds::derive_seed(seed, counter++);
      return bds::generate(c);
    };
    const bds::CoTrainResult result = bds::co_train(sampler, cfg);
    const double final_makespan =
        result.stats.loops.empty() ? 0.0
                                   : result.stats.loops.back().best_makespan;
    bds::save_models({result.qnet, result.gpn}, cfg, result.stats,
                     final_makespan, t_out);
    std::cout << "checkpoint written to " << t_out << "\n";
    for (const auto& s : result.stats.loops)
      std::cout << "loop " << s.loop << ": probe makespan " << s.probe_makespan
                << ", best " << s.best_makespan << ", accepts " << s.accepts
                << "/" << (s.accepts + s.rejects) << "\n";
    return 0;
  }

  if (bench_cmd->parsed()) {
    std::vector<bds::Instance> instances;
    for (const auto& path : b_instances)
      instances.push_back(bds::load_instance(path));
    std::optional<bds::Models> models;
    const auto algos = parse_name_list(b_algos);
    for (const auto& a : algos) {
      if (bds::algorithm_needs_models(a) && !models) {
        if (b_checkpoint.empty())
          throw std::runtime_error("algorithm " + a + " requires --checkpoint");
        models = bds::load_models(b_checkpoint);
      }
    }
    bds::BenchOptions options;
    options.solve.beta = b_beta;
    options.solve.loops = b_loops;
    options.seed = resolve_seed(b_seed);
    options.parallel = b_parallel;
    if (b_parallel)
      std::cout << "# parallel execution: time_s values are not comparable\n";
    const auto rows = bds::run_benchmark(instances, algos,
                                         models ? &*models : nullptr, options);
    const std::string csv = bds::bench_csv(rows);
    if (b_out.empty())
      std::cout << csv;
    else
      write_text(b_out, csv);
    return 0;
  }

  if (sweep_cmd->parsed()) {
    std::vector<bds::Instance> instances;
    for (const auto& path : w_instances)
      instances.push_back(bds::load_instance(path));
    const bds::Models models = bds::load_models(w_checkpoint);
    std::vector<int> betas = parse_int_list(w_betas);
    const auto rows = bds::sweep_beta(instances, betas, models, w_loops);
    const std::string csv = bds::sweep_csv(rows);
    if (w_out.empty())
      std::cout << csv;
    else
      write_text(w_out, csv);
    return 0;
  }

  if (gantt_cmd->parsed()) {
    const auto doc = nlohmann::json::parse(read_text(x_schedule));
    std::ostringstream out;
    out << "stage,machine,job,start,end\n";
    out.precision(12);
    for (const auto& rec : doc.at("records")) {
      out << rec.at("stage").get<int>() << "," << rec.at("machine").get<int>()
          << "," << rec.at("job").get<int>() << ","
          << rec.at("start").get<double>() << "," << rec.at("end").get<double>()
          << "\n";
    }
    write_text(x_out, out.str());
    std::cout << "wrote " << x_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
