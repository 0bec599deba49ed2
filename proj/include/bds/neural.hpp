#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bds/types.hpp"

namespace bds {

/// Named dense tensors with matching gradient buffers. Vectors are stored as
/// n x 1 matrices. Iteration order is insertion order, which fixes the
/// optimizer and serialization layout.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  Matrix& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Matrix& value(const std::string& name);
  const Matrix& value(const std::string& name) const;
  Matrix& grad(const std::string& name);

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  bool has(const std::string& name) const;
  long total_parameters() const;

  void zero_grads();
  /// Sum of squared gradient entries.
  double grad_squared_norm() const;
  /// Scales all gradients so the global norm is at most max_norm.
  void clip_grad_norm(double max_norm);
  bool values_finite() const;

 private:
  std::vector<Entry> entries_;
  Entry& find(const std::string& name);
  const Entry& find(const std::string& name) const;
};

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) fill.
void fan_in_init(Matrix& weights, int fan_in, Rng& rng);

enum class Activation { Linear, ReLU, Tanh };

/// Row-major batched affine map: Y = act(X * W^T + b^T), X is batch x in.
Matrix dense_forward(const Matrix& W, const Vector& b, const Matrix& X,
                     Activation act);
/// The affine part alone, for callers that keep a tape.
Matrix dense_preactivation(const Matrix& W, const Vector& b, const Matrix& X);
Matrix activate(const Matrix& pre, Activation act);
/// Backward pass for dense_forward. `pre` is the pre-activation output
/// (X * W^T + b^T), dY the gradient at the activated output. Accumulates into
/// dW/db and returns dX.
Matrix dense_backward(const Matrix& W, const Matrix& X, const Matrix& pre,
                      const Matrix& dY, Activation act, Matrix& dW,
                      Eigen::Ref<Vector> db);

struct LstmState {
  Vector h, c;
  LstmState() = default;
  explicit LstmState(int dim) : h(Vector::Zero(dim)), c(Vector::Zero(dim)) {}
};

/// Per-step activations needed by the backward pass.
struct LstmCache {
  Vector x, h_prev, c_prev;
  Vector gi, gf, gg, go;  // post-nonlinearity gates
  Vector c, tanh_c;
};

/// One gated recurrent update. W is (4d) x (in + d) with gate rows ordered
/// [input, forget, cell, output]; b is 4d.
LstmState lstm_step(const Matrix& W, const Vector& b, const Vector& x,
                    const LstmState& prev, LstmCache* cache = nullptr);

/// Consumes (dh, dc) for this step and rewrites them with the gradients for
/// the previous state; writes dx and accumulates into dW/db.
void lstm_backward(const Matrix& W, const LstmCache& cache, Vector& dh,
                   Vector& dc, Vector& dx, Matrix& dW, Eigen::Ref<Vector> db);

/// Additive attention scores: score_i = v . tanh(W_ref * r_i + W_q * q).
/// Masked entries come back as -infinity. refs is d x n (one column per
/// reference), mask[i] != 0 excludes reference i.
Vector pointer_scores(const Matrix& W_ref, const Matrix& W_q, const Vector& v,
                      const Matrix& refs, const Vector& q,
                      const std::vector<std::uint8_t>& mask);

/// Numerically stable softmax over unmasked entries; masked entries are
/// exactly zero. Throws if everything is masked.
Vector masked_softmax(const Vector& logits,
                      const std::vector<std::uint8_t>& mask);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<Matrix> m, v;
  long step = 0;

  void init(const ParamStore& params, const AdamConfig& config);
  bool initialized() const { return !m.empty(); }
};

/// Bias-corrected Adam step over all tensors, reading ParamStore gradients.
/// Throws on non-finite gradients.
void adam_update(ParamStore& params, AdamState& state);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = -1;
  bool pass(double tol) const { return max_rel_err < tol; }
};

/// Central finite-difference check of an analytic gradient. `loss_and_grad`
/// must zero the store's gradients, evaluate the scalar loss at the current
/// parameters and fill the gradients.
GradCheckReport grad_check(ParamStore& params,
                           const std::function<double(ParamStore&)>& loss_and_grad,
                           double fd_eps = 1e-5);

std::string params_to_json(const ParamStore& params);
ParamStore params_from_json(const std::string& text);

}  // namespace bds
