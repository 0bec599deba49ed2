#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bds/engine.hpp"
#include "bds/neural.hpp"

namespace bds {

enum class RewardMode {
  FullMakespan,  // 1 / partial makespan of the grown prefix
  StageWait,     // 1 / stage-wait component of the grown prefix
};

/// Construction state of the upper level: the scheduled prefix plus a
/// fixed-length summary of the scheduling frontier.
struct UpperState {
  Sequence scheduled;
  std::vector<std::uint8_t> scheduled_mask;
  Vector frontier_summary;  // 3 per stage: min/mean/max availability, scaled
  double elapsed = 0.0;     // partial makespan of the prefix
  double time_scale = 1.0;
};

UpperState make_upper_state(const Instance& inst, const Sequence& prefix);

/// Feature layout: [frontier summary (3S) | candidate stage times (S) |
/// fraction scheduled (1)]; length 4 * n_stages + 1.
int feature_length(int n_stages);
Vector encode(const Instance& inst, const UpperState& state, int candidate);

struct Transition {
  Vector features;  // encoding of (state, chosen job)
  int action = -1;
  double reward = 0.0;
  bool terminal = false;
  // Next state, factored: the state block plus one stage-time row per
  // candidate. Together these reproduce every candidate's encoding.
  Vector next_state_feat;
  Matrix next_act_feats;
};

class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, std::uint64_t seed)
      : capacity_(capacity), rng_(seed) {}

  void push(Transition t);
  int size() const { return static_cast<int>(buffer_.size()); }
  int capacity() const { return capacity_; }
  const Transition& at(int i) const { return buffer_[static_cast<std::size_t>(i)]; }
  std::vector<int> sample_indices(int batch);

 private:
  int capacity_;
  Rng rng_;
  std::vector<Transition> buffer_;
  int write_pos_ = 0;
};

/// Double-Q value model scoring one (state, candidate) encoding to a scalar.
/// The scorer is factored into a state tower and an action tower (one hidden
/// relu layer each) joined by a weighted elementwise product, so candidate
/// towers can be cached per instance and a rollout's argmax sweep costs O(h)
/// per candidate instead of a full forward pass.
struct QNet {
  ParamStore online;
  ParamStore target;
  AdamState opt;
  int n_stages = 0;
  int hidden = 64;
  int sync_interval = 100;
  long train_steps = 0;
  mutable long eval_count = 0;  // scored candidate encodings, for diagnostics

  int input_dim() const { return feature_length(n_stages); }
  int state_dim() const { return 3 * n_stages + 1; }
  void sync_target();
};

QNet make_qnet(int n_stages, int hidden, std::uint64_t seed);

/// The state block of the feature layout: [frontier summary | fraction].
Vector state_features(const UpperState& state);
/// The action block: the candidate's scaled stage times.
Vector action_features(const Instance& inst, const UpperState& state,
                       int candidate);

/// Batched value of full encode() rows under the given parameter set.
Vector q_values(const QNet& net, const ParamStore& params, const Matrix& rows);
/// Same scores from the factored blocks (one state row, one action row per
/// candidate).
Vector q_values_factored(const QNet& net, const ParamStore& params,
                         const Vector& state_feat, const Matrix& act_feats);

int select_action(const QNet& net, const Instance& inst,
                  const UpperState& state, double epsilon, Rng& rng);

double step_reward(const Instance& inst, const Sequence& before,
                   const Sequence& after,
                   RewardMode mode = RewardMode::FullMakespan);

struct UpperConfig {
  double gamma = 0.8;
  double lr = 1e-3;
  double lr_end = 0.0;  // >0: linear decay from lr to lr_end over the epochs
  int batch_size = 200;
  int replay_capacity = 100000;
  int sync_interval = 100;
  int hidden = 64;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epochs = 500;
  int train_steps_per_episode = 0;  // 0: one per recorded transition
  double grad_clip = 1.0;
  RewardMode reward_mode = RewardMode::FullMakespan;
  std::uint64_t seed = 1;
};

/// Mean-squared error of the online net against fixed targets, with
/// gradients written into net.online. Shared by ddqn_train_step and the
/// finite-difference tests.
double qnet_loss_and_grad(QNet& net, const Matrix& X, const Vector& y);

double ddqn_train_step(QNet& net, ReplayBuffer& buffer, int batch_size,
                       double gamma, double lr, double grad_clip = 1.0);

struct RolloutResult {
  Sequence seq;
  int actions = 0;
  long q_evaluations = 0;
};

/// Builds a full sequence by repeated epsilon-greedy selection. When `record`
/// is set, appends one transition per action with the last marked terminal.
RolloutResult rollout(const QNet& net, const Instance& inst, double epsilon,
                      Rng& rng, ReplayBuffer* record = nullptr,
                      RewardMode mode = RewardMode::FullMakespan);

/// Replays an externally produced sequence into the buffer as if it had been
/// rolled out, with rewards recomputed per step.
void record_sequence_episode(const Instance& inst, const Sequence& seq,
                             ReplayBuffer& buffer,
                             RewardMode mode = RewardMode::FullMakespan);

using InstanceSampler = std::function<Instance()>;

struct EpochStat {
  double epsilon = 0.0;
  double rollout_makespan = 0.0;
  double mean_loss = 0.0;
};

struct TrainUpperStats {
  std::vector<EpochStat> epochs;
};

TrainUpperStats train_upper(const InstanceSampler& sampler,
                            const UpperConfig& cfg, QNet& net,
                            ReplayBuffer& buffer);

std::string qnet_to_json(const QNet& net, const UpperConfig& cfg);
QNet qnet_from_json(const std::string& text);

}  // namespace bds
