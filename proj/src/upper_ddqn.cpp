#include "bds/upper_ddqn.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace bds {

namespace {
// Stage-wait reciprocals need a positive floor: prefixes with no stage wait
// are routine. Half the instance lower bound keeps the reward scale near the
// full-makespan variant's.
constexpr double kStageWaitFloorFraction = 0.5;
}  // namespace

int feature_length(int n_stages) { return 4 * n_stages + 1; }

namespace {

/// Min/mean/max availability per stage, shifted by the earliest availability
/// anywhere and scaled. The shift keeps the features stationary across an
/// episode; scheduling decisions only depend on the frontier's shape.
Vector summarize_frontier(const std::vector<std::vector<double>>& machine_free,
                          double time_scale) {
  const int stages = static_cast<int>(machine_free.size());
  double origin = machine_free[0][0];
  for (const auto& stage : machine_free)
    for (double t : stage) origin = std::min(origin, t);
  Vector summary(3 * stages);
  for (int i = 0; i < stages; ++i) {
    const auto& avail = machine_free[static_cast<std::size_t>(i)];
    double lo = avail[0], hi = avail[0], sum = 0.0;
    for (double t : avail) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
      sum += t;
    }
    summary(3 * i + 0) = (lo - origin) / time_scale;
    summary(3 * i + 1) =
        (sum / static_cast<double>(avail.size()) - origin) / time_scale;
    summary(3 * i + 2) = (hi - origin) / time_scale;
  }
  return summary;
}

}  // namespace

UpperState make_upper_state(const Instance& inst, const Sequence& prefix) {
  UpperState state;
  state.scheduled = prefix;
  state.scheduled_mask.assign(static_cast<std::size_t>(inst.n_jobs), 0);
  for (int j : prefix.order) state.scheduled_mask[static_cast<std::size_t>(j)] = 1;
  state.time_scale = std::max(makespan_lower_bound(inst), 1e-12);
  const Frontier frontier = decode_frontier(inst, prefix);
  state.elapsed = frontier.partial_makespan;
  state.frontier_summary =
      summarize_frontier(frontier.machine_free, state.time_scale);
  return state;
}

Vector state_features(const UpperState& state) {
  const Eigen::Index n = state.frontier_summary.size();
  Vector f(n + 1);
  f.segment(0, n) = state.frontier_summary;
  f(n) = state.scheduled_mask.empty()
             ? 0.0
             : static_cast<double>(state.scheduled.size()) /
                   static_cast<double>(state.scheduled_mask.size());
  return f;
}

Vector action_features(const Instance& inst, const UpperState& state,
                       int candidate) {
  return inst.op_times.col(candidate) / state.time_scale;
}

Vector encode(const Instance& inst, const UpperState& state, int candidate) {
  if (candidate < 0 || candidate >= inst.n_jobs)
    throw std::invalid_argument("encode: candidate out of range");
  if (state.scheduled_mask[static_cast<std::size_t>(candidate)])
    throw std::invalid_argument("encode: candidate already scheduled");
  const int S = inst.n_stages;
  const Vector s = state_features(state);
  Vector f(feature_length(S));
  f.segment(0, 3 * S) = s.segment(0, 3 * S);
  f.segment(3 * S, S) = action_features(inst, state, candidate);
  f(4 * S) = s(3 * S);
  return f;
}

void ReplayBuffer::push(Transition t) {
  if (static_cast<int>(buffer_.size()) < capacity_) {
    buffer_.push_back(std::move(t));
  } else {
    buffer_[static_cast<std::size_t>(write_pos_)] = std::move(t);
  }
  write_pos_ = (write_pos_ + 1) % capacity_;
}

std::vector<int> ReplayBuffer::sample_indices(int batch) {
  if (batch > size())
    throw std::invalid_argument("replay buffer smaller than batch");
  std::vector<int> idx(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i)
    idx[static_cast<std::size_t>(i)] = rng_.uniform_int(size());
  return idx;
}

void QNet::sync_target() { target = online; }

QNet make_qnet(int n_stages, int hidden, std::uint64_t seed) {
  QNet net;
  net.n_stages = n_stages;
  net.hidden = hidden;
  Rng rng(derive_seed(seed, 0xDD01u));
  auto add_tower = [&](const std::string& prefix, int in) {
    auto& W1 = net.online.add(prefix + ".W1", hidden, in);
    fan_in_init(W1, in, rng);
    net.online.add(prefix + ".b1", hidden, 1);
    auto& W2 = net.online.add(prefix + ".W2", hidden, hidden);
    fan_in_init(W2, hidden, rng);
    net.online.add(prefix + ".b2", hidden, 1);
  };
  add_tower("state", net.state_dim());
  add_tower("act", n_stages);
  auto& v = net.online.add("head.v", hidden, 1);
  fan_in_init(v, hidden, rng);
  auto& u = net.online.add("head.u", hidden, 1);
  fan_in_init(u, hidden, rng);
  auto& w = net.online.add("head.w", hidden, 1);
  fan_in_init(w, hidden, rng);
  net.online.add("head.b", 1, 1);
  net.target = net.online;
  net.opt.init(net.online, AdamConfig{});
  return net;
}

namespace {

/// Two relu layers of one tower, batched over rows.
Matrix tower_forward(const ParamStore& params, const std::string& prefix,
                     const Matrix& rows) {
  const Matrix h1 = dense_forward(params.value(prefix + ".W1"),
                                  params.value(prefix + ".b1").col(0), rows,
                                  Activation::ReLU);
  return dense_forward(params.value(prefix + ".W2"),
                       params.value(prefix + ".b2").col(0), h1,
                       Activation::ReLU);
}

}  // namespace

namespace {

/// Splits encode() rows into the state block and the action block.
void split_rows(const QNet& net, const Matrix& rows, Matrix& state_block,
                Matrix& act_block) {
  const int S = net.n_stages;
  if (rows.cols() != net.input_dim())
    throw std::invalid_argument("q_values: feature width mismatch");
  state_block.resize(rows.rows(), net.state_dim());
  state_block.leftCols(3 * S) = rows.leftCols(3 * S);
  state_block.col(3 * S) = rows.col(4 * S);
  act_block = rows.middleCols(3 * S, S);
}

Vector tower_scores(const ParamStore& params, const Matrix& phi,
                    const Matrix& psi) {
  const Vector v = params.value("head.v").col(0);
  const Vector u = params.value("head.u").col(0);
  const Vector w = params.value("head.w").col(0);
  const double b = params.value("head.b")(0, 0);
  Vector scores = (phi.array() * psi.array()).matrix() * v;
  scores.noalias() += psi * u;
  scores.noalias() += phi * w;
  scores.array() += b;
  return scores;
}

}  // namespace

Vector q_values(const QNet& net, const ParamStore& params, const Matrix& rows) {
  Matrix state_block, act_block;
  split_rows(net, rows, state_block, act_block);
  const Matrix phi = tower_forward(params, "state", state_block);
  const Matrix psi = tower_forward(params, "act", act_block);
  net.eval_count += rows.rows();
  return tower_scores(params, phi, psi);
}

Vector q_values_factored(const QNet& net, const ParamStore& params,
                         const Vector& state_feat, const Matrix& act_feats) {
  const Matrix phi_row = tower_forward(params, "state", state_feat.transpose());
  const Matrix psi = tower_forward(params, "act", act_feats);
  const Matrix phi = phi_row.replicate(act_feats.rows(), 1);
  net.eval_count += act_feats.rows();
  return tower_scores(params, phi, psi);
}

namespace {

std::vector<int> unscheduled_jobs(const UpperState& state) {
  std::vector<int> jobs;
  for (std::size_t j = 0; j < state.scheduled_mask.size(); ++j)
    if (!state.scheduled_mask[j]) jobs.push_back(static_cast<int>(j));
  return jobs;
}

Matrix candidate_features(const Instance& inst, const UpperState& state,
                          const std::vector<int>& candidates) {
  Matrix rows(static_cast<Eigen::Index>(candidates.size()),
              feature_length(inst.n_stages));
  for (std::size_t k = 0; k < candidates.size(); ++k)
    rows.row(static_cast<Eigen::Index>(k)) =
        encode(inst, state, candidates[k]).transpose();
  return rows;
}

}  // namespace

int select_action(const QNet& net, const Instance& inst,
                  const UpperState& state, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("select_action: epsilon must be in [0, 1]");
  const std::vector<int> candidates = unscheduled_jobs(state);
  if (candidates.empty())
    throw std::invalid_argument("select_action: no unscheduled jobs");
  if (epsilon > 0.0 && rng.uniform01() <= epsilon)
    return candidates[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(candidates.size())))];
  const Vector q = q_values(net, net.online,
                            candidate_features(inst, state, candidates));
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i)
    if (q(i) > q(best)) best = i;
  return candidates[static_cast<std::size_t>(best)];
}

double step_reward(const Instance& inst, const Sequence& before,
                   const Sequence& after, RewardMode mode) {
  if (after.size() != before.size() + 1 ||
      !std::equal(before.order.begin(), before.order.end(),
                  after.order.begin()))
    throw std::invalid_argument(
        "step_reward: after must extend before by one job");
  double denom = 0.0;
  if (mode == RewardMode::FullMakespan) {
    denom = partial_makespan(inst, after);
    if (!(denom > 0.0))
      throw std::invalid_argument("step_reward: zero partial makespan");
  } else {
    Instance sub = inst;
    sub.n_jobs = after.size();
    sub.op_times.resize(inst.n_stages, after.size());
    for (int p = 0; p < after.size(); ++p)
      sub.op_times.col(p) =
          inst.op_times.col(after.order[static_cast<std::size_t>(p)]);
    const Schedule sched = decode_schedule(sub, Sequence::identity(sub.n_jobs));
    denom = std::max(sched.stage_wait_total,
                     kStageWaitFloorFraction * makespan_lower_bound(inst));
  }
  return 1.0 / denom;
}

double qnet_loss_and_grad(QNet& net, const Matrix& X, const Vector& y) {
  const Eigen::Index B = X.rows();
  Matrix state_block, act_block;
  split_rows(net, X, state_block, act_block);
  ParamStore& p = net.online;

  const Matrix pre_phi1 = dense_preactivation(p.value("state.W1"),
                                              p.value("state.b1").col(0),
                                              state_block);
  const Matrix phi1 = activate(pre_phi1, Activation::ReLU);
  const Matrix pre_phi2 = dense_preactivation(p.value("state.W2"),
                                              p.value("state.b2").col(0), phi1);
  const Matrix phi = activate(pre_phi2, Activation::ReLU);
  const Matrix pre_psi1 = dense_preactivation(p.value("act.W1"),
                                              p.value("act.b1").col(0),
                                              act_block);
  const Matrix psi1 = activate(pre_psi1, Activation::ReLU);
  const Matrix pre_psi2 = dense_preactivation(p.value("act.W2"),
                                              p.value("act.b2").col(0), psi1);
  const Matrix psi = activate(pre_psi2, Activation::ReLU);

  const Vector v = p.value("head.v").col(0);
  const Vector u = p.value("head.u").col(0);
  const Vector w = p.value("head.w").col(0);
  const Matrix prod = (phi.array() * psi.array()).matrix();
  Vector scores = prod * v;
  scores.noalias() += psi * u;
  scores.noalias() += phi * w;
  scores.array() += p.value("head.b")(0, 0);

  const Vector err = scores - y;
  const double loss = err.squaredNorm() / static_cast<double>(B);

  p.zero_grads();
  const Vector ds = (2.0 / static_cast<double>(B)) * err;
  p.grad("head.v").col(0) = prod.transpose() * ds;
  p.grad("head.u").col(0) = psi.transpose() * ds;
  p.grad("head.w").col(0) = phi.transpose() * ds;
  p.grad("head.b")(0, 0) = ds.sum();
  const Matrix dsv = ds * v.transpose();  // B x h
  const Matrix dphi =
      (dsv.array() * psi.array()).matrix() + ds * w.transpose();
  const Matrix dpsi =
      (dsv.array() * phi.array()).matrix() + ds * u.transpose();
  const Matrix dphi1 =
      dense_backward(p.value("state.W2"), phi1, pre_phi2, dphi,
                     Activation::ReLU, p.grad("state.W2"),
                     p.grad("state.b2").col(0));
  dense_backward(p.value("state.W1"), state_block, pre_phi1, dphi1,
                 Activation::ReLU, p.grad("state.W1"),
                 p.grad("state.b1").col(0));
  const Matrix dpsi1 =
      dense_backward(p.value("act.W2"), psi1, pre_psi2, dpsi, Activation::ReLU,
                     p.grad("act.W2"), p.grad("act.b2").col(0));
  dense_backward(p.value("act.W1"), act_block, pre_psi1, dpsi1,
                 Activation::ReLU, p.grad("act.W1"), p.grad("act.b1").col(0));
  return loss;
}

double ddqn_train_step(QNet& net, ReplayBuffer& buffer, int batch_size,
                       double gamma, double lr, double grad_clip) {
  if (buffer.size() < batch_size)
    throw std::invalid_argument("ddqn_train_step: buffer smaller than batch");
  const std::vector<int> idx = buffer.sample_indices(batch_size);
  const Eigen::Index B = batch_size;
  Matrix X(B, net.input_dim());
  Vector y(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Transition& t = buffer.at(idx[static_cast<std::size_t>(b)]);
    X.row(b) = t.features.transpose();
    if (t.terminal || t.next_act_feats.rows() == 0) {
      y(b) = t.reward;
    } else {
      const Vector q_online = q_values_factored(net, net.online,
                                                t.next_state_feat,
                                                t.next_act_feats);
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < q_online.size(); ++i)
        if (q_online(i) > q_online(best)) best = i;
      const Vector q_target = q_values_factored(
          net, net.target, t.next_state_feat, t.next_act_feats.row(best));
      y(b) = t.reward + gamma * q_target(0);
    }
  }

  const double loss = qnet_loss_and_grad(net, X, y);
  net.online.clip_grad_norm(grad_clip);
  net.opt.cfg.lr = lr;
  adam_update(net.online, net.opt);
  ++net.train_steps;
  if (net.train_steps % net.sync_interval == 0) net.sync_target();
  return loss;
}

namespace {

UpperState state_from_scheduler(const Instance& inst,
                                const PrefixScheduler& sched,
                                double time_scale) {
  UpperState state;
  state.scheduled = Sequence(sched.prefix());
  state.scheduled_mask.assign(static_cast<std::size_t>(inst.n_jobs), 0);
  for (int j : sched.prefix())
    state.scheduled_mask[static_cast<std::size_t>(j)] = 1;
  state.time_scale = time_scale;
  state.elapsed = sched.partial_makespan();
  state.frontier_summary = summarize_frontier(sched.machine_free(), time_scale);
  return state;
}

}  // namespace

RolloutResult rollout(const QNet& net, const Instance& inst, double epsilon,
                      Rng& rng, ReplayBuffer* record, RewardMode mode) {
  RolloutResult result;
  const long evals_before = net.eval_count;
  const double time_scale = std::max(makespan_lower_bound(inst), 1e-12);

  // Action towers are a function of the instance alone: cache them.
  Matrix act_feats(inst.n_jobs, inst.n_stages);
  for (int j = 0; j < inst.n_jobs; ++j)
    act_feats.row(j) = inst.op_times.col(j).transpose() / time_scale;
  const Matrix psi_all = tower_forward(net.online, "act", act_feats);
  const Vector v = net.online.value("head.v").col(0);
  const Vector head_u = net.online.value("head.u").col(0);
  const Vector head_w = net.online.value("head.w").col(0);
  const double head_b = net.online.value("head.b")(0, 0);

  PrefixScheduler sched(inst);
  std::vector<std::uint8_t> scheduled(static_cast<std::size_t>(inst.n_jobs), 0);
  for (int step = 0; step < inst.n_jobs; ++step) {
    int pick = -1;
    if (epsilon > 0.0 && rng.uniform01() <= epsilon) {
      int skip = rng.uniform_int(inst.n_jobs - step);
      for (int j = 0; j < inst.n_jobs; ++j) {
        if (scheduled[static_cast<std::size_t>(j)]) continue;
        if (skip-- == 0) {
          pick = j;
          break;
        }
      }
    } else {
      const UpperState state = state_from_scheduler(inst, sched, time_scale);
      const Vector s_feat = state_features(state);
      const Matrix phi =
          tower_forward(net.online, "state", s_feat.transpose());
      const Vector w = v.cwiseProduct(phi.row(0).transpose()) + head_u;
      const double base = phi.row(0).dot(head_w) + head_b;
      double best_score = 0.0;
      for (int j = 0; j < inst.n_jobs; ++j) {
        if (scheduled[static_cast<std::size_t>(j)]) continue;
        const double score = psi_all.row(j).dot(w) + base;
        ++net.eval_count;
        if (pick < 0 || score > best_score) {
          pick = j;
          best_score = score;
        }
      }
    }
    sched.append(pick);
    scheduled[static_cast<std::size_t>(pick)] = 1;
    ++result.actions;
  }
  result.seq = Sequence(sched.prefix());
  result.q_evaluations = net.eval_count - evals_before;
  if (record) record_sequence_episode(inst, result.seq, *record, mode);
  return result;
}

void record_sequence_episode(const Instance& inst, const Sequence& seq,
                             ReplayBuffer& buffer, RewardMode mode) {
  if (!seq.is_permutation_of(inst.n_jobs))
    throw std::invalid_argument(
        "record_sequence_episode: sequence must be a full permutation");
  Sequence prefix;
  UpperState state = make_upper_state(inst, prefix);
  for (int k = 0; k < seq.size(); ++k) {
    const int job = seq.order[static_cast<std::size_t>(k)];
    Sequence next = prefix;
    next.order.push_back(job);
    Transition t;
    t.features = encode(inst, state, job);
    t.action = job;
    t.reward = step_reward(inst, prefix, next, mode);
    t.terminal = next.size() == inst.n_jobs;
    const UpperState next_state = make_upper_state(inst, next);
    if (!t.terminal) {
      t.next_state_feat = state_features(next_state);
      std::vector<int> candidates;
      for (int j = 0; j < inst.n_jobs; ++j)
        if (!next_state.scheduled_mask[static_cast<std::size_t>(j)])
          candidates.push_back(j);
      t.next_act_feats.resize(static_cast<Eigen::Index>(candidates.size()),
                              inst.n_stages);
      for (std::size_t c = 0; c < candidates.size(); ++c)
        t.next_act_feats.row(static_cast<Eigen::Index>(c)) =
            action_features(inst, next_state, candidates[c]).transpose();
    }
    buffer.push(std::move(t));
    prefix = std::move(next);
    state = next_state;
  }
}

TrainUpperStats train_upper(const InstanceSampler& sampler,
                            const UpperConfig& cfg, QNet& net,
                            ReplayBuffer& buffer) {
  if (cfg.epochs < 1)
    throw std::invalid_argument("train_upper: epochs must be >= 1");
  TrainUpperStats stats;
  Rng rng(derive_seed(cfg.seed, 0x5EEDu));
  const int half = std::max(1, cfg.epochs / 2);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double eps = cfg.epsilon_end;
    if (epoch < half) {
      eps = cfg.epsilon_start +
            (cfg.epsilon_end - cfg.epsilon_start) *
                (static_cast<double>(epoch) / static_cast<double>(half));
    }
    const Instance inst = sampler();
    const RolloutResult rolled =
        rollout(net, inst, eps, rng, &buffer, cfg.reward_mode);
    double lr = cfg.lr;
    if (cfg.lr_end > 0.0 && cfg.epochs > 1) {
      const double f = static_cast<double>(epoch) / (cfg.epochs - 1);
      lr = cfg.lr + (cfg.lr_end - cfg.lr) * f;
    }
    double loss_sum = 0.0;
    int losses = 0;
    const int steps = cfg.train_steps_per_episode > 0
                          ? cfg.train_steps_per_episode
                          : inst.n_jobs;
    for (int s = 0; s < steps; ++s) {
      if (buffer.size() < cfg.batch_size) break;
      loss_sum += ddqn_train_step(net, buffer, cfg.batch_size, cfg.gamma, lr,
                                  cfg.grad_clip);
      ++losses;
    }
    EpochStat stat;
    stat.epsilon = eps;
    stat.rollout_makespan = makespan(inst, rolled.seq);
    stat.mean_loss = losses ? loss_sum / losses : 0.0;
    stats.epochs.push_back(stat);
  }
  return stats;
}

std::string qnet_to_json(const QNet& net, const UpperConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["format"] = "bds-qnet-v1";
  doc["n_stages"] = net.n_stages;
  doc["hidden"] = net.hidden;
  doc["sync_interval"] = net.sync_interval;
  doc["train_steps"] = net.train_steps;
  doc["config"] = {{"gamma", cfg.gamma},
                   {"lr", cfg.lr},
                   {"batch_size", cfg.batch_size},
                   {"epsilon_start", cfg.epsilon_start},
                   {"epsilon_end", cfg.epsilon_end},
                   {"epochs", cfg.epochs},
                   {"reward_mode",
                    cfg.reward_mode == RewardMode::FullMakespan ? "full"
                                                                : "stage_wait"},
                   {"seed", cfg.seed}};
  doc["online"] = nlohmann::ordered_json::parse(params_to_json(net.online));
  doc["target"] = nlohmann::ordered_json::parse(params_to_json(net.target));
  return doc.dump();
}

QNet qnet_from_json(const std::string& text) {
  const auto doc = nlohmann::ordered_json::parse(text);
  if (doc.value("format", std::string{}) != "bds-qnet-v1")
    throw std::invalid_argument("unrecognized qnet checkpoint format");
  QNet net;
  net.n_stages = doc.at("n_stages").get<int>();
  net.hidden = doc.at("hidden").get<int>();
  net.sync_interval = doc.at("sync_interval").get<int>();
  net.train_steps = doc.at("train_steps").get<long>();
  net.online = params_from_json(doc.at("online").dump());
  net.target = params_from_json(doc.at("target").dump());
  net.opt.init(net.online, AdamConfig{});
  return net;
}

}  // namespace bds
