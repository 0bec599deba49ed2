#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bds/engine.hpp"
#include "bds/neural.hpp"

namespace bds {

/// A contiguous segment of a parent sequence handed to the lower level for
/// re-permutation, together with the machine availability inherited from the
/// scheduled prefix in front of it.
struct Window {
  int start = 0;          // position in the parent sequence
  std::vector<int> jobs;  // job ids, in current parent order
  std::vector<std::vector<double>> context;  // [stage][machine] availability

  int size() const { return static_cast<int>(jobs.size()); }
};

/// Graph-embedded pointer model: an embedding over the fully connected
/// window graph, a recurrent encoder whose cell also advances the decoder
/// query, and an additive-attention pointer head. The reward baseline is an
/// exponential moving average.
struct GpnModel {
  ParamStore embedding;  // W, U: d x S; b: d x 1
  ParamStore encoder;    // W: 4d x 2d; b: 4d x 1
  ParamStore decoder;    // W_ref, W_q: d x d; v: d x 1
  int hidden = 64;
  int n_stages = 0;
  double baseline = 0.0;
  bool baseline_set = false;
  AdamState opt_embedding, opt_encoder, opt_decoder;
};

GpnModel make_gpn(int n_stages, int hidden, std::uint64_t seed);

/// Embeds each column of `window_ops` (S x n, one stage-time vector per job)
/// through a self term plus the mean over the other jobs:
/// relu(W x_j + U mean_{k != j} x_k + b). The neighbor term of a single-job
/// window is zero. Output is d x n.
Matrix graph_embed(const GpnModel& model, const Matrix& window_ops);

enum class DecodeMode { Greedy, Sample };

struct WindowDecode {
  std::vector<int> order;      // permutation of window.jobs
  std::vector<int> positions;  // chosen window positions, same length
  double logprob = 0.0;
};

WindowDecode decode_window(const GpnModel& model, const Instance& inst,
                           const Window& window, DecodeMode mode,
                           Rng* rng = nullptr);

/// Log-probability of emitting `order` (window job ids); follows the forced
/// path through the same forward code as decode_window.
double window_logprob(const GpnModel& model, const Instance& inst,
                      const Window& window, const std::vector<int>& order);

/// Stage-time columns of the window's jobs, the model input.
Matrix window_ops(const Instance& inst, const Window& window);

/// Reciprocal full-sequence makespan with the window segment replaced by the
/// proposed order.
double window_reward(const Instance& inst, const Sequence& parent,
                     const Window& window, const std::vector<int>& proposed);

Sequence splice_window(const Sequence& parent, const Window& window,
                       const std::vector<int>& proposed);

struct GpnSample {
  Matrix ops;                  // S x n window input
  std::vector<int> positions;  // decoded position sequence
  double reward = 0.0;
};

struct GpnConfig {
  int hidden = 64;
  double lr = 1e-3;
  int batch_size = 200;
  int epochs = 500;
  double baseline_decay = 0.9;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
};

/// The REINFORCE loss -mean[(reward - baseline) * logprob] for a fixed batch
/// at a fixed baseline, with gradients written into the model's stores.
/// Shared by reinforce_update and the finite-difference tests.
double gpn_loss_and_grad(GpnModel& model, const std::vector<GpnSample>& batch,
                         double baseline);

/// REINFORCE step: loss = -mean[(reward - baseline) * logprob]; one Adam step
/// over embedding, encoder and decoder; EMA baseline update afterwards.
/// Returns the loss.
double reinforce_update(GpnModel& model, const std::vector<GpnSample>& batch,
                        const GpnConfig& cfg);

/// A training task: the instance, the parent sequence the window was cut
/// from, and the window itself.
struct WindowTask {
  Instance inst;
  Sequence parent;
  Window window;
};

using WindowSampler = std::function<WindowTask()>;

struct TrainLowerStats {
  std::vector<double> mean_reward;  // per epoch
  std::vector<double> loss;
};

TrainLowerStats train_lower(const WindowSampler& sampler, const GpnConfig& cfg,
                            GpnModel& model);

std::string gpn_to_json(const GpnModel& model, const GpnConfig& cfg);
GpnModel gpn_from_json(const std::string& text);

}  // namespace bds
