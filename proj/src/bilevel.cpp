#include "bds/bilevel.hpp"

#include <algorithm>
#include <chrono>
#include <deque>

#include "json.hpp"

namespace bds {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Window window_at(const Instance& inst, const Sequence& seq, int start,
                 int beta) {
  Window w;
  w.start = start;
  const int stop = std::min(start + beta, seq.size());
  w.jobs.assign(seq.order.begin() + start, seq.order.begin() + stop);
  Sequence prefix;
  prefix.order.assign(seq.order.begin(), seq.order.begin() + start);
  w.context = decode_frontier(inst, prefix).machine_free;
  return w;
}

}  // namespace

std::vector<Window> sample_windows(const Instance& inst, const Sequence& seq,
                                   int beta) {
  if (beta < 1) throw std::invalid_argument("sample_windows: beta must be >= 1");
  std::vector<Window> windows;
  for (int start = 0; start < seq.size(); start += beta)
    windows.push_back(window_at(inst, seq, start, beta));
  return windows;
}

MergeResult merge_if_improved(const Instance& inst, const Sequence& seq,
                              const Window& window,
                              const std::vector<int>& proposed,
                              double tolerance) {
  const int stop = window.start + window.size();
  if (window.start < 0 || stop > seq.size() ||
      !std::equal(window.jobs.begin(), window.jobs.end(),
                  seq.order.begin() + window.start))
    throw std::invalid_argument("merge_if_improved: window not drawn from seq");

  MergeResult result;
  result.makespan_before = makespan(inst, seq);
  const Sequence merged = splice_window(seq, window, proposed);
  const double merged_makespan = makespan(inst, merged);
  if (merged_makespan < result.makespan_before - tolerance) {
    result.seq = merged;
    result.accepted = true;
    result.makespan_after = merged_makespan;
  } else {
    result.seq = seq;
    result.accepted = false;
    result.makespan_after = result.makespan_before;
  }
  return result;
}

MergeResult refine_and_merge(const Instance& inst, const Sequence& seq,
                             const Window& window, const GpnModel& gpn,
                             DecodeMode mode, Rng* rng, double tolerance) {
  const WindowDecode proposal = decode_window(gpn, inst, window, mode, rng);
  return merge_if_improved(inst, seq, window, proposal.order, tolerance);
}

namespace {

struct RefineOutcome {
  Sequence seq;
  int accepts = 0;
  int rejects = 0;
  std::vector<double> series;
};

RefineOutcome refine_passes(const Instance& inst, Sequence seq,
                            const GpnModel& gpn, int beta, int loops,
                            double tolerance) {
  RefineOutcome out;
  for (int pass = 0; pass < loops; ++pass) {
    for (int start = 0; start < seq.size(); start += beta) {
      const Window w = window_at(inst, seq, start, beta);
      const MergeResult merged =
          refine_and_merge(inst, seq, w, gpn, DecodeMode::Greedy, nullptr,
                           tolerance);
      if (merged.accepted) {
        ++out.accepts;
        seq = merged.seq;
      } else {
        ++out.rejects;
      }
      out.series.push_back(merged.makespan_after);
    }
  }
  out.seq = std::move(seq);
  return out;
}

}  // namespace

Sequence solve_sequence(const Instance& inst, const QNet& qnet,
                        const GpnModel& gpn, const SolveConfig& cfg,
                        SolveStats* stats) {
  Rng rng(0);  // greedy rollout draws nothing
  const RolloutResult rolled = rollout(qnet, inst, 0.0, rng, nullptr);
  const double rollout_cost = makespan(inst, rolled.seq);
  RefineOutcome refined =
      refine_passes(inst, rolled.seq, gpn, cfg.beta, cfg.loops, cfg.tolerance);
  if (stats) {
    stats->rollout_makespan = rollout_cost;
    stats->series = refined.series;
    stats->series.insert(stats->series.begin(), rollout_cost);
    stats->accepts = refined.accepts;
    stats->rejects = refined.rejects;
  }
  return refined.seq;
}

Schedule solve(const Instance& inst, const QNet& qnet, const GpnModel& gpn,
               const SolveConfig& cfg, SolveStats* stats) {
  return decode_schedule(inst, solve_sequence(inst, qnet, gpn, cfg, stats));
}

CoTrainResult co_train(const InstanceSampler& sampler,
                       const CoTrainConfig& cfg) {
  if (cfg.loops < 1) throw std::invalid_argument("co_train: loops must be >= 1");
  const Instance probe = sampler();
  if (cfg.beta < 1 || cfg.beta > probe.n_jobs)
    throw std::invalid_argument("co_train: beta must be in [1, n_jobs]");

  CoTrainResult result;
  result.qnet = make_qnet(probe.n_stages, cfg.hidden,
                          derive_seed(cfg.seed, 11));
  result.gpn = make_gpn(probe.n_stages, cfg.hidden, derive_seed(cfg.seed, 12));
  ReplayBuffer buffer(100000, derive_seed(cfg.seed, 13));
  Rng feedback_rng(derive_seed(cfg.seed, 14));

  double best = 0.0;
  bool has_best = false;
  for (int loop = 0; loop < cfg.loops; ++loop) {
    LoopStat stat;
    stat.loop = loop;

    auto t0 = std::chrono::steady_clock::now();
    UpperConfig uc;
    uc.gamma = cfg.gamma_u;
    uc.lr = cfg.lr_upper;
    uc.batch_size = cfg.batch_size;
    uc.epochs = cfg.epochs_upper;
    uc.hidden = cfg.hidden;
    uc.train_steps_per_episode = cfg.upper_steps_per_episode;
    uc.reward_mode = cfg.reward_mode;
    uc.seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(loop));
    train_upper(sampler, uc, result.qnet, buffer);
    stat.upper_seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    // Window stream: greedy rollouts of fresh instances, cut into windows.
    std::deque<WindowTask> pending;
    Rng dummy(0);
    auto window_stream = [&]() -> WindowTask {
      while (pending.empty()) {
        const Instance inst = sampler();
        const Sequence seq = rollout(result.qnet, inst, 0.0, dummy).seq;
        for (const Window& w : sample_windows(inst, seq, cfg.beta))
          pending.push_back({inst, seq, w});
      }
      WindowTask task = std::move(pending.front());
      pending.pop_front();
      return task;
    };
    GpnConfig lc;
    lc.hidden = cfg.hidden;
    lc.lr = cfg.lr_lower;
    lc.batch_size = cfg.batch_size;
    lc.epochs = cfg.epochs_lower;
    lc.seed = derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(loop));
    train_lower(window_stream, lc, result.gpn);

    // Refined sequences feed the upper level's replay as plain episodes.
    for (int f = 0; f < cfg.feedback_episodes; ++f) {
      const Instance inst = sampler();
      const Sequence seq = rollout(result.qnet, inst, 0.0, feedback_rng).seq;
      const RefineOutcome refined = refine_passes(
          inst, seq, result.gpn, cfg.beta, 1, cfg.tolerance);
      stat.accepts += refined.accepts;
      stat.rejects += refined.rejects;
      record_sequence_episode(inst, refined.seq, buffer, cfg.reward_mode);
    }
    stat.lower_seconds = seconds_since(t0);

    SolveConfig sc;
    sc.beta = cfg.beta;
    sc.loops = cfg.loops;
    sc.tolerance = cfg.tolerance;
    stat.probe_makespan =
        makespan(probe, solve_sequence(probe, result.qnet, result.gpn, sc));
    best = has_best ? std::min(best, stat.probe_makespan) : stat.probe_makespan;
    has_best = true;
    stat.best_makespan = best;
    result.stats.loops.push_back(stat);
  }
  return result;
}

std::string run_manifest_json(const CoTrainConfig& cfg, const LoopStats& stats,
                              double final_makespan) {
  nlohmann::ordered_json doc;
  doc["config"] = {{"beta", cfg.beta},
                   {"loops", cfg.loops},
                   {"gamma_u", cfg.gamma_u},
                   {"gamma_l", cfg.gamma_l},
                   {"epochs_upper", cfg.epochs_upper},
                   {"epochs_lower", cfg.epochs_lower},
                   {"batch_size", cfg.batch_size},
                   {"seed", cfg.seed},
                   {"accept", "if-improved"},
                   {"tolerance", cfg.tolerance},
                   {"hidden", cfg.hidden}};
  auto loops = nlohmann::ordered_json::array();
  for (const auto& s : stats.loops) {
    loops.push_back({{"loop", s.loop},
                     {"probe_makespan", s.probe_makespan},
                     {"best_makespan", s.best_makespan},
                     {"accepts", s.accepts},
                     {"rejects", s.rejects},
                     {"upper_seconds", s.upper_seconds},
                     {"lower_seconds", s.lower_seconds}});
  }
  doc["loops"] = std::move(loops);
  doc["final_makespan"] = final_makespan;
  return doc.dump(2);
}

}  // namespace bds
