#include "bds/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace bds {

Matrix& ParamStore::add(const std::string& name, Eigen::Index rows,
                        Eigen::Index cols) {
  if (has(name)) throw std::invalid_argument("duplicate tensor: " + name);
  entries_.push_back({name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return entries_.back().value;
}

ParamStore::Entry& ParamStore::find(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e;
  throw std::out_of_range("no tensor named " + name);
}

const ParamStore::Entry& ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw std::out_of_range("no tensor named " + name);
}

Matrix& ParamStore::value(const std::string& name) { return find(name).value; }
const Matrix& ParamStore::value(const std::string& name) const {
  return find(name).value;
}
Matrix& ParamStore::grad(const std::string& name) { return find(name).grad; }

bool ParamStore::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

long ParamStore::total_parameters() const {
  long n = 0;
  for (const auto& e : entries_) n += static_cast<long>(e.value.size());
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.setZero();
}

double ParamStore::grad_squared_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.grad.squaredNorm();
  return s;
}

void ParamStore::clip_grad_norm(double max_norm) {
  const double norm = std::sqrt(grad_squared_norm());
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& e : entries_) e.grad *= scale;
  }
}

bool ParamStore::values_finite() const {
  for (const auto& e : entries_)
    if (!e.value.allFinite()) return false;
  return true;
}

void fan_in_init(Matrix& weights, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (Eigen::Index i = 0; i < weights.rows(); ++i)
    for (Eigen::Index j = 0; j < weights.cols(); ++j)
      weights(i, j) = rng.uniform(-bound, bound);
}

namespace {

Matrix apply_activation(const Matrix& pre, Activation act) {
  switch (act) {
    case Activation::Linear: return pre;
    case Activation::ReLU: return pre.cwiseMax(0.0);
    case Activation::Tanh: return pre.array().tanh().matrix();
  }
  return pre;
}

Matrix activation_grad(const Matrix& pre, const Matrix& dY, Activation act) {
  switch (act) {
    case Activation::Linear:
      return dY;
    case Activation::ReLU:
      return (pre.array() > 0.0).select(dY, Matrix::Zero(dY.rows(), dY.cols()));
    case Activation::Tanh: {
      const Matrix t = pre.array().tanh().matrix();
      return (dY.array() * (1.0 - t.array().square())).matrix();
    }
  }
  return dY;
}

}  // namespace

Matrix dense_preactivation(const Matrix& W, const Vector& b, const Matrix& X) {
  if (X.cols() != W.cols())
    throw std::invalid_argument("dense layer: input width != fan-in");
  Matrix pre = X * W.transpose();
  pre.rowwise() += b.transpose();
  return pre;
}

Matrix activate(const Matrix& pre, Activation act) {
  return apply_activation(pre, act);
}

Matrix dense_forward(const Matrix& W, const Vector& b, const Matrix& X,
                     Activation act) {
  return apply_activation(dense_preactivation(W, b, X), act);
}

Matrix dense_backward(const Matrix& W, const Matrix& X, const Matrix& pre,
                      const Matrix& dY, Activation act, Matrix& dW,
                      Eigen::Ref<Vector> db) {
  const Matrix dpre = activation_grad(pre, dY, act);
  dW.noalias() += dpre.transpose() * X;
  db.noalias() += dpre.colwise().sum().transpose();
  return dpre * W;
}

LstmState lstm_step(const Matrix& W, const Vector& b, const Vector& x,
                    const LstmState& prev, LstmCache* cache) {
  const Eigen::Index d = prev.h.size();
  if (W.rows() != 4 * d || b.size() != 4 * d ||
      W.cols() != x.size() + d || prev.c.size() != d)
    throw std::invalid_argument("lstm_step: shape mismatch");
  Vector z(x.size() + d);
  z << x, prev.h;
  const Vector pre = W * z + b;
  const auto sigmoid = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  Vector gi(d), gf(d), gg(d), go(d);
  for (Eigen::Index r = 0; r < d; ++r) {
    gi(r) = sigmoid(pre(r));
    gf(r) = sigmoid(pre(d + r));
    gg(r) = std::tanh(pre(2 * d + r));
    go(r) = sigmoid(pre(3 * d + r));
  }
  LstmState out;
  out.c = gf.cwiseProduct(prev.c) + gi.cwiseProduct(gg);
  const Vector tanh_c = out.c.array().tanh().matrix();
  out.h = go.cwiseProduct(tanh_c);
  if (cache) {
    cache->x = x;
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->gi = gi;
    cache->gf = gf;
    cache->gg = gg;
    cache->go = go;
    cache->c = out.c;
    cache->tanh_c = tanh_c;
  }
  return out;
}

void lstm_backward(const Matrix& W, const LstmCache& cache, Vector& dh,
                   Vector& dc, Vector& dx, Matrix& dW, Eigen::Ref<Vector> db) {
  const Eigen::Index d = dh.size();
  const Vector dgo = dh.cwiseProduct(cache.tanh_c);
  dc += dh.cwiseProduct(cache.go)
            .cwiseProduct((1.0 - cache.tanh_c.array().square()).matrix());
  const Vector dgi = dc.cwiseProduct(cache.gg);
  const Vector dgg = dc.cwiseProduct(cache.gi);
  const Vector dgf = dc.cwiseProduct(cache.c_prev);
  Vector dpre(4 * d);
  dpre.segment(0, d) =
      dgi.cwiseProduct(cache.gi).cwiseProduct((1.0 - cache.gi.array()).matrix());
  dpre.segment(d, d) =
      dgf.cwiseProduct(cache.gf).cwiseProduct((1.0 - cache.gf.array()).matrix());
  dpre.segment(2 * d, d) =
      dgg.cwiseProduct((1.0 - cache.gg.array().square()).matrix());
  dpre.segment(3 * d, d) =
      dgo.cwiseProduct(cache.go).cwiseProduct((1.0 - cache.go.array()).matrix());

  Vector z(cache.x.size() + d);
  z << cache.x, cache.h_prev;
  dW.noalias() += dpre * z.transpose();
  db.noalias() += dpre;
  const Vector dz = W.transpose() * dpre;
  dx = dz.segment(0, cache.x.size());
  dh = dz.segment(cache.x.size(), d);
  dc = dc.cwiseProduct(cache.gf);
}

Vector pointer_scores(const Matrix& W_ref, const Matrix& W_q, const Vector& v,
                      const Matrix& refs, const Vector& q,
                      const std::vector<std::uint8_t>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != refs.cols())
    throw std::invalid_argument("pointer_scores: mask length != references");
  if (W_ref.cols() != refs.rows() || W_q.cols() != q.size() ||
      v.size() != W_ref.rows() || W_q.rows() != W_ref.rows())
    throw std::invalid_argument("pointer_scores: shape mismatch");
  const Vector qs = W_q * q;
  Vector scores(refs.cols());
  for (Eigen::Index i = 0; i < refs.cols(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      scores(i) = -std::numeric_limits<double>::infinity();
      continue;
    }
    const Vector a = (W_ref * refs.col(i) + qs).array().tanh().matrix();
    scores(i) = v.dot(a);
  }
  return scores;
}

Vector masked_softmax(const Vector& logits,
                      const std::vector<std::uint8_t>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != logits.size())
    throw std::invalid_argument("masked_softmax: mask length != logits");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (!mask[static_cast<std::size_t>(i)])
      max_logit = std::max(max_logit, logits(i));
  if (!std::isfinite(max_logit))
    throw std::invalid_argument("masked_softmax: all entries masked");
  Vector probs = Vector::Zero(logits.size());
  double denom = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) continue;
    probs(i) = std::exp(logits(i) - max_logit);
    denom += probs(i);
  }
  probs /= denom;
  return probs;
}

void AdamState::init(const ParamStore& params, const AdamConfig& config) {
  cfg = config;
  step = 0;
  m.clear();
  v.clear();
  for (const auto& e : params.entries()) {
    m.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    v.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  }
}

void adam_update(ParamStore& params, AdamState& state) {
  if (!state.initialized()) throw std::logic_error("adam state not initialized");
  if (state.m.size() != params.entries().size())
    throw std::invalid_argument("adam state does not match the param store");
  for (const auto& e : params.entries())
    if (!e.grad.allFinite())
      throw std::runtime_error("adam_update: non-finite gradient in " + e.name);
  ++state.step;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.entries().size(); ++k) {
    auto& e = params.entries()[k];
    auto& mk = state.m[k];
    auto& vk = state.v[k];
    mk = b1 * mk + (1.0 - b1) * e.grad;
    vk = b2 * vk + (1.0 - b2) * e.grad.cwiseProduct(e.grad);
    const Matrix m_hat = mk / bc1;
    const Matrix v_hat = vk / bc2;
    e.value.array() -=
        state.cfg.lr * m_hat.array() / (v_hat.array().sqrt() + state.cfg.eps);
  }
}

GradCheckReport grad_check(ParamStore& params,
                           const std::function<double(ParamStore&)>& loss_and_grad,
                           double fd_eps) {
  loss_and_grad(params);
  std::vector<Matrix> analytic;
  analytic.reserve(params.entries().size());
  for (const auto& e : params.entries()) analytic.push_back(e.grad);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.entries().size(); ++k) {
    auto& e = params.entries()[k];
    for (Eigen::Index idx = 0; idx < e.value.size(); ++idx) {
      const double saved = e.value.data()[idx];
      e.value.data()[idx] = saved + fd_eps;
      const double up = loss_and_grad(params);
      e.value.data()[idx] = saved - fd_eps;
      const double down = loss_and_grad(params);
      e.value.data()[idx] = saved;
      const double numeric = (up - down) / (2.0 * fd_eps);
      const double a = analytic[k].data()[idx];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_tensor = e.name;
        report.worst_index = idx;
      }
    }
  }
  // Leave the store holding the unperturbed gradients.
  loss_and_grad(params);
  return report;
}

std::string params_to_json(const ParamStore& params) {
  nlohmann::ordered_json doc;
  for (const auto& e : params.entries()) {
    nlohmann::ordered_json t;
    t["rows"] = e.value.rows();
    t["cols"] = e.value.cols();
    auto data = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < e.value.size(); ++i)
      data.push_back(e.value.data()[i]);
    t["data"] = std::move(data);
    doc[e.name] = std::move(t);
  }
  return doc.dump();
}

ParamStore params_from_json(const std::string& text) {
  const auto doc = nlohmann::ordered_json::parse(text);
  ParamStore params;
  for (const auto& [name, t] : doc.items()) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    Matrix& value = params.add(name, rows, cols);
    const auto& data = t.at("data");
    if (static_cast<Eigen::Index>(data.size()) != value.size())
      throw std::invalid_argument("parameter payload size mismatch for " + name);
    for (Eigen::Index i = 0; i < value.size(); ++i)
      value.data()[i] = data.at(static_cast<std::size_t>(i)).get<double>();
  }
  return params;
}

}  // namespace bds
