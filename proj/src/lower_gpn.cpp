#include "bds/lower_gpn.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace bds {

GpnModel make_gpn(int n_stages, int hidden, std::uint64_t seed) {
  if (hidden <= n_stages)
    throw std::invalid_argument("make_gpn: hidden dim must exceed n_stages");
  GpnModel model;
  model.hidden = hidden;
  model.n_stages = n_stages;
  Rng rng(derive_seed(seed, 0x69B0u));
  auto& W = model.embedding.add("W", hidden, n_stages);
  fan_in_init(W, n_stages, rng);
  auto& U = model.embedding.add("U", hidden, n_stages);
  fan_in_init(U, n_stages, rng);
  model.embedding.add("b", hidden, 1);
  auto& We = model.encoder.add("W", 4 * hidden, 2 * hidden);
  fan_in_init(We, 2 * hidden, rng);
  model.encoder.add("b", 4 * hidden, 1);
  auto& Wr = model.decoder.add("W_ref", hidden, hidden);
  fan_in_init(Wr, hidden, rng);
  auto& Wq = model.decoder.add("W_q", hidden, hidden);
  fan_in_init(Wq, hidden, rng);
  auto& v = model.decoder.add("v", hidden, 1);
  fan_in_init(v, hidden, rng);
  model.opt_embedding.init(model.embedding, AdamConfig{});
  model.opt_encoder.init(model.encoder, AdamConfig{});
  model.opt_decoder.init(model.decoder, AdamConfig{});
  return model;
}

namespace {

Matrix neighbor_means(const Matrix& ops) {
  const Eigen::Index n = ops.cols();
  Matrix nbr = Matrix::Zero(ops.rows(), n);
  if (n <= 1) return nbr;
  const Vector total = ops.rowwise().sum();
  for (Eigen::Index p = 0; p < n; ++p)
    nbr.col(p) = (total - ops.col(p)) / static_cast<double>(n - 1);
  return nbr;
}

struct GpnTrace {
  Matrix ops, nbr, emb_pre, emb;
  std::vector<LstmCache> enc_caches;
  Matrix refs;      // d x n encoder hiddens
  Matrix ref_proj;  // W_ref * refs, shared by every decode step
  std::vector<LstmCache> dec_caches;
  std::vector<Vector> queries;                   // per decode step
  std::vector<Vector> probs;                     // per decode step
  std::vector<Matrix> tanh_a;                    // per step, d x n
  std::vector<std::vector<std::uint8_t>> masks;  // mask before each step
  std::vector<int> chosen;
  double logprob = 0.0;
};

/// Runs the full decode. The choice at each step is driven by the forced
/// path when `forced` is non-null, by sampling when `rng` is non-null, and
/// greedily otherwise.
GpnTrace run_decode(const GpnModel& model, const Matrix& ops,
                    const std::vector<int>* forced, Rng* rng,
                    bool want_trace) {
  const Eigen::Index n = ops.cols();
  if (ops.rows() != model.n_stages)
    throw std::invalid_argument("gpn decode: ops rows != n_stages");
  if (n < 1) throw std::invalid_argument("gpn decode: empty window");
  const int d = model.hidden;

  GpnTrace trace;
  trace.ops = ops;
  trace.nbr = neighbor_means(ops);
  trace.emb_pre = (model.embedding.value("W") * ops +
                   model.embedding.value("U") * trace.nbr)
                      .colwise() +
                  model.embedding.value("b").col(0);
  trace.emb = trace.emb_pre.cwiseMax(0.0);

  const Matrix& We = model.encoder.value("W");
  const Vector be = model.encoder.value("b").col(0);
  LstmState state(d);
  trace.refs.resize(d, n);
  trace.enc_caches.resize(static_cast<std::size_t>(n));
  for (Eigen::Index p = 0; p < n; ++p) {
    state = lstm_step(We, be, trace.emb.col(p), state,
                      want_trace ? &trace.enc_caches[static_cast<std::size_t>(p)]
                                 : nullptr);
    trace.refs.col(p) = state.h;
  }

  const Matrix& Wq = model.decoder.value("W_q");
  const Vector v = model.decoder.value("v").col(0);
  trace.ref_proj = model.decoder.value("W_ref") * trace.refs;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  if (want_trace)
    trace.dec_caches.resize(static_cast<std::size_t>(n > 1 ? n - 1 : 0));
  for (Eigen::Index t = 0; t < n; ++t) {
    Matrix th = trace.ref_proj;
    th.colwise() += (Wq * state.h).eval();
    th = th.array().tanh().matrix();
    Vector scores = th.transpose() * v;
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask[static_cast<std::size_t>(i)])
        scores(i) = -std::numeric_limits<double>::infinity();
    const Vector probs = masked_softmax(scores, mask);
    int pick = -1;
    if (forced) {
      pick = (*forced)[static_cast<std::size_t>(t)];
      if (pick < 0 || pick >= n || mask[static_cast<std::size_t>(pick)])
        throw std::invalid_argument("gpn decode: invalid forced position");
    } else if (rng) {
      const double u = rng->uniform01();
      double cum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)]) continue;
        cum += probs(i);
        pick = static_cast<int>(i);
        if (cum >= u) break;
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)]) continue;
        if (pick < 0 || probs(i) > probs(pick)) pick = static_cast<int>(i);
      }
    }
    trace.logprob += std::log(probs(pick));
    if (want_trace) {
      trace.queries.push_back(state.h);
      trace.probs.push_back(probs);
      trace.tanh_a.push_back(th);
      trace.masks.push_back(mask);
    }
    trace.chosen.push_back(pick);
    mask[static_cast<std::size_t>(pick)] = 1;
    if (t + 1 < n) {
      state = lstm_step(We, be, trace.emb.col(pick), state,
                        want_trace
                            ? &trace.dec_caches[static_cast<std::size_t>(t)]
                            : nullptr);
    }
  }
  return trace;
}

/// Accumulates parameter gradients of (alpha * logprob) for a decoded trace.
void backward_decode(const GpnModel& model, const GpnTrace& trace,
                     double alpha, ParamStore& g_emb, ParamStore& g_enc,
                     ParamStore& g_dec) {
  const Eigen::Index n = trace.ops.cols();
  const int d = model.hidden;
  const Matrix& We = model.encoder.value("W");
  const Matrix& Wr = model.decoder.value("W_ref");
  const Matrix& Wq = model.decoder.value("W_q");
  const Vector v = model.decoder.value("v").col(0);

  Matrix d_refs = Matrix::Zero(d, n);
  Matrix d_emb = Matrix::Zero(d, n);
  Vector dh = Vector::Zero(d);
  Vector dc = Vector::Zero(d);
  Vector dx(d);

  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const auto& mask = trace.masks[static_cast<std::size_t>(t)];
    const Vector& probs = trace.probs[static_cast<std::size_t>(t)];
    const Vector& q = trace.queries[static_cast<std::size_t>(t)];
    const Matrix& th = trace.tanh_a[static_cast<std::size_t>(t)];
    const int chosen = trace.chosen[static_cast<std::size_t>(t)];

    Vector ds = -alpha * probs;
    ds(chosen) += alpha;
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask[static_cast<std::size_t>(i)]) ds(i) = 0.0;

    g_dec.grad("v").col(0).noalias() += th * ds;
    // da_i = ds_i * v .* (1 - th_i^2)
    Matrix da = (1.0 - th.array().square()).matrix();
    da.array().colwise() *= v.array();
    da *= ds.asDiagonal();
    g_dec.grad("W_ref").noalias() += da * trace.refs.transpose();
    d_refs.noalias() += Wr.transpose() * da;
    const Vector da_sum = da.rowwise().sum();
    g_dec.grad("W_q").noalias() += da_sum * q.transpose();
    dh.noalias() += Wq.transpose() * da_sum;

    if (t > 0) {
      lstm_backward(We, trace.dec_caches[static_cast<std::size_t>(t - 1)], dh,
                    dc, dx, g_enc.grad("W"), g_enc.grad("b").col(0));
      const int prev_pick = trace.chosen[static_cast<std::size_t>(t - 1)];
      d_emb.col(prev_pick) += dx;
    }
  }

  for (Eigen::Index p = n - 1; p >= 0; --p) {
    dh += d_refs.col(p);
    lstm_backward(We, trace.enc_caches[static_cast<std::size_t>(p)], dh, dc,
                  dx, g_enc.grad("W"), g_enc.grad("b").col(0));
    d_emb.col(p) += dx;
  }

  const Matrix delta =
      (trace.emb_pre.array() > 0.0)
          .select(d_emb, Matrix::Zero(d_emb.rows(), d_emb.cols()));
  g_emb.grad("W").noalias() += delta * trace.ops.transpose();
  g_emb.grad("U").noalias() += delta * trace.nbr.transpose();
  g_emb.grad("b").col(0) += delta.rowwise().sum();
}

}  // namespace

Matrix graph_embed(const GpnModel& model, const Matrix& window_ops) {
  if (window_ops.rows() != model.n_stages)
    throw std::invalid_argument("graph_embed: ops rows != n_stages");
  const Matrix nbr = neighbor_means(window_ops);
  Matrix pre = (model.embedding.value("W") * window_ops +
                model.embedding.value("U") * nbr)
                   .colwise() +
               model.embedding.value("b").col(0);
  return pre.cwiseMax(0.0);
}

Matrix window_ops(const Instance& inst, const Window& window) {
  Matrix ops(inst.n_stages, window.size());
  for (int p = 0; p < window.size(); ++p) {
    const int job = window.jobs[static_cast<std::size_t>(p)];
    if (job < 0 || job >= inst.n_jobs)
      throw std::invalid_argument("window job id out of range");
    ops.col(p) = inst.op_times.col(job);
  }
  return ops;
}

WindowDecode decode_window(const GpnModel& model, const Instance& inst,
                           const Window& window, DecodeMode mode, Rng* rng) {
  if (mode == DecodeMode::Sample && !rng)
    throw std::invalid_argument("decode_window: sampling needs an rng");
  const Matrix ops = window_ops(inst, window);
  const GpnTrace trace = run_decode(
      model, ops, nullptr, mode == DecodeMode::Sample ? rng : nullptr, false);
  WindowDecode out;
  out.positions = trace.chosen;
  out.order.reserve(trace.chosen.size());
  for (int p : trace.chosen)
    out.order.push_back(window.jobs[static_cast<std::size_t>(p)]);
  out.logprob = trace.logprob;
  return out;
}

double window_logprob(const GpnModel& model, const Instance& inst,
                      const Window& window, const std::vector<int>& order) {
  if (order.size() != window.jobs.size())
    throw std::invalid_argument("window_logprob: order length mismatch");
  std::vector<int> positions;
  positions.reserve(order.size());
  for (int job : order) {
    const auto it = std::find(window.jobs.begin(), window.jobs.end(), job);
    if (it == window.jobs.end())
      throw std::invalid_argument("window_logprob: job not in window");
    positions.push_back(static_cast<int>(it - window.jobs.begin()));
  }
  const Matrix ops = window_ops(inst, window);
  return run_decode(model, ops, &positions, nullptr, false).logprob;
}

Sequence splice_window(const Sequence& parent, const Window& window,
                       const std::vector<int>& proposed) {
  std::vector<int> sorted_window = window.jobs;
  std::vector<int> sorted_proposed = proposed;
  std::sort(sorted_window.begin(), sorted_window.end());
  std::sort(sorted_proposed.begin(), sorted_proposed.end());
  if (sorted_window != sorted_proposed)
    throw std::invalid_argument(
        "splice_window: proposed order is not a permutation of the window");
  Sequence merged = parent;
  for (std::size_t k = 0; k < proposed.size(); ++k)
    merged.order[static_cast<std::size_t>(window.start) + k] = proposed[k];
  return merged;
}

double window_reward(const Instance& inst, const Sequence& parent,
                     const Window& window, const std::vector<int>& proposed) {
  const Sequence merged = splice_window(parent, window, proposed);
  return 1.0 / makespan(inst, merged);
}

double gpn_loss_and_grad(GpnModel& model, const std::vector<GpnSample>& batch,
                         double baseline) {
  if (batch.empty())
    throw std::invalid_argument("gpn_loss_and_grad: empty batch");
  model.embedding.zero_grads();
  model.encoder.zero_grads();
  model.decoder.zero_grads();
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const GpnTrace trace = run_decode(model, s.ops, &s.positions, nullptr, true);
    const double advantage = s.reward - baseline;
    loss -= advantage * trace.logprob * inv_b;
    const double alpha = -advantage * inv_b;
    backward_decode(model, trace, alpha, model.embedding, model.encoder,
                    model.decoder);
  }
  return loss;
}

double reinforce_update(GpnModel& model, const std::vector<GpnSample>& batch,
                        const GpnConfig& cfg) {
  if (batch.empty())
    throw std::invalid_argument("reinforce_update: empty batch");
  double reward_sum = 0.0;
  for (const auto& s : batch) {
    if (!std::isfinite(s.reward))
      throw std::invalid_argument("reinforce_update: non-finite reward");
    reward_sum += s.reward;
  }
  const double mean_reward = reward_sum / static_cast<double>(batch.size());
  const double baseline = model.baseline_set ? model.baseline : mean_reward;

  const double loss = gpn_loss_and_grad(model, batch, baseline);

  // Joint clip across the three stores.
  const double total_norm =
      std::sqrt(model.embedding.grad_squared_norm() +
                model.encoder.grad_squared_norm() +
                model.decoder.grad_squared_norm());
  if (total_norm > cfg.grad_clip && total_norm > 0.0) {
    const double scale = cfg.grad_clip / total_norm;
    for (auto* store : {&model.embedding, &model.encoder, &model.decoder})
      for (auto& e : store->entries()) e.grad *= scale;
  }
  model.opt_embedding.cfg.lr = cfg.lr;
  model.opt_encoder.cfg.lr = cfg.lr;
  model.opt_decoder.cfg.lr = cfg.lr;
  adam_update(model.embedding, model.opt_embedding);
  adam_update(model.encoder, model.opt_encoder);
  adam_update(model.decoder, model.opt_decoder);

  if (model.baseline_set) {
    model.baseline = cfg.baseline_decay * model.baseline +
                     (1.0 - cfg.baseline_decay) * mean_reward;
  } else {
    model.baseline = mean_reward;
    model.baseline_set = true;
  }
  return loss;
}

TrainLowerStats train_lower(const WindowSampler& sampler, const GpnConfig& cfg,
                            GpnModel& model) {
  if (cfg.epochs < 1)
    throw std::invalid_argument("train_lower: epochs must be >= 1");
  TrainLowerStats stats;
  Rng rng(derive_seed(cfg.seed, 0x10E7u));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<GpnSample> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    double reward_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const WindowTask task = sampler();
      const WindowDecode decode =
          decode_window(model, task.inst, task.window, DecodeMode::Sample, &rng);
      GpnSample sample;
      sample.ops = window_ops(task.inst, task.window);
      sample.positions = decode.positions;
      sample.reward =
          window_reward(task.inst, task.parent, task.window, decode.order);
      reward_sum += sample.reward;
      batch.push_back(std::move(sample));
    }
    const double loss = reinforce_update(model, batch, cfg);
    stats.mean_reward.push_back(reward_sum / cfg.batch_size);
    stats.loss.push_back(loss);
  }
  return stats;
}

std::string gpn_to_json(const GpnModel& model, const GpnConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["format"] = "bds-gpn-v1";
  doc["hidden"] = model.hidden;
  doc["n_stages"] = model.n_stages;
  doc["baseline"] = model.baseline;
  doc["baseline_set"] = model.baseline_set;
  doc["config"] = {{"lr", cfg.lr},
                   {"batch_size", cfg.batch_size},
                   {"epochs", cfg.epochs},
                   {"baseline_decay", cfg.baseline_decay},
                   {"seed", cfg.seed}};
  doc["embedding"] = nlohmann::ordered_json::parse(params_to_json(model.embedding));
  doc["encoder"] = nlohmann::ordered_json::parse(params_to_json(model.encoder));
  doc["decoder"] = nlohmann::ordered_json::parse(params_to_json(model.decoder));
  return doc.dump();
}

GpnModel gpn_from_json(const std::string& text) {
  const auto doc = nlohmann::ordered_json::parse(text);
  if (doc.value("format", std::string{}) != "bds-gpn-v1")
    throw std::invalid_argument("unrecognized gpn checkpoint format");
  GpnModel model;
  model.hidden = doc.at("hidden").get<int>();
  model.n_stages = doc.at("n_stages").get<int>();
  model.baseline = doc.at("baseline").get<double>();
  model.baseline_set = doc.at("baseline_set").get<bool>();
  model.embedding = params_from_json(doc.at("embedding").dump());
  model.encoder = params_from_json(doc.at("encoder").dump());
  model.decoder = params_from_json(doc.at("decoder").dump());
  model.opt_embedding.init(model.embedding, AdamConfig{});
  model.opt_encoder.init(model.encoder, AdamConfig{});
  model.opt_decoder.init(model.decoder, AdamConfig{});
  return model;
}

}  // namespace bds
