#include "hilab/nn.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hilab {

// ---------------------------------------------------------------------------
// ParamSet

std::size_t ParamSet::add(std::string name, std::vector<std::size_t> shape) {
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  tensors_.push_back(Tensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
  return tensors_.size() - 1;
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.set_zero();
  return out;
}

void ParamSet::set_zero() noexcept {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
}

double ParamSet::l2_norm() const noexcept {
  double acc = 0.0;
  for (const auto& t : tensors_)
    for (double v : t.values) acc += v * v;
  return std::sqrt(acc);
}

void ParamSet::scale(double s) noexcept {
  for (auto& t : tensors_)
    for (double& v : t.values) v *= s;
}

bool ParamSet::all_finite() const noexcept {
  for (const auto& t : tensors_)
    for (double v : t.values)
      if (!std::isfinite(v)) return false;
  return true;
}

bool ParamSet::same_layout(const ParamSet& other) const noexcept {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
  }
  return true;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.tensors_.size() != b.tensors_.size()) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    const auto& x = a.tensors_[i];
    const auto& y = b.tensors_[i];
    if (x.name != y.name || x.shape != y.shape || x.values != y.values) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Kernels. Each output element accumulates over the inner dimension in a
// fixed order, so results do not depend on the batch size.

namespace {

void linear_forward(const Matrix& x, const Tensor& w, const Tensor& b, Matrix& y) {
  const std::size_t in = w.shape[0];
  const std::size_t out = w.shape[1];
  y = Matrix(x.rows, out);
  const double* __restrict wp = w.values.data();
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* __restrict yr = y.data.data() + i * out;
    const double* __restrict xr = x.data.data() + i * in;
    for (std::size_t j = 0; j < out; ++j) yr[j] = b.values[j];
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      const double* __restrict wr = wp + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
}

// dW += x^T dy ; db += colsum(dy)
void linear_backward_params(const Matrix& x, const Matrix& dy, Tensor& dw, Tensor& db) {
  const std::size_t in = x.cols;
  const std::size_t out = dy.cols;
  double* __restrict dwp = dw.values.data();
  double* __restrict dbp = db.values.data();
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* __restrict xr = x.data.data() + i * in;
    const double* __restrict gr = dy.data.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) dbp[j] += gr[j];
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      double* __restrict dwr = dwp + k * out;
      for (std::size_t j = 0; j < out; ++j) dwr[j] += xv * gr[j];
    }
  }
}

// dx = dy W^T, via an explicit transpose so the inner loop is contiguous.
Matrix linear_backward_input(const Matrix& dy, const Tensor& w) {
  const std::size_t in = w.shape[0];
  const std::size_t out = w.shape[1];
  std::vector<double> wt(in * out);
  for (std::size_t k = 0; k < in; ++k)
    for (std::size_t j = 0; j < out; ++j) wt[j * in + k] = w.values[k * out + j];
  Matrix dx(dy.rows, in);
  for (std::size_t i = 0; i < dy.rows; ++i) {
    double* __restrict dxr = dx.data.data() + i * in;
    const double* __restrict gr = dy.data.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) {
      const double g = gr[j];
      const double* __restrict wr = wt.data() + j * in;
      for (std::size_t k = 0; k < in; ++k) dxr[k] += g * wr[k];
    }
  }
  return dx;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t out, Rng& rng) : in_(in), out_(out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t wi = params_.add("l" + std::to_string(l) + ".w", {dims[l], dims[l + 1]});
    const std::size_t bi = params_.add("l" + std::to_string(l) + ".b", {dims[l + 1]});
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (double& v : params_[wi].values) v = rng.uniform(-bound, bound);
    for (double& v : params_[bi].values) v = rng.uniform(-bound, bound);
  }
}

Mlp Mlp::from_params(ParamSet params) {
  if (params.size() < 2 || params.size() % 2 != 0) throw std::invalid_argument("Mlp: bad parameter layout");
  Mlp m;
  for (std::size_t l = 0; l < params.size() / 2; ++l) {
    const auto& w = params[2 * l];
    const auto& b = params[2 * l + 1];
    if (w.shape.size() != 2 || b.shape.size() != 1 || b.shape[0] != w.shape[1]) {
      throw std::invalid_argument("Mlp: bad tensor shapes in layer " + std::to_string(l));
    }
    if (l > 0 && params[2 * l - 2].shape[1] != w.shape[0]) {
      throw std::invalid_argument("Mlp: layer sizes do not chain");
    }
  }
  m.in_ = params[0].shape[0];
  m.out_ = params[params.size() - 2].shape[1];
  m.params_ = std::move(params);
  return m;
}

Matrix Mlp::forward(const Matrix& x) const {
  Trace scratch;
  return forward(x, scratch);
}

Matrix Mlp::forward(const Matrix& x, Trace& trace) const {
  if (x.cols != in_) throw std::invalid_argument("Mlp::forward: input width mismatch");
  const std::size_t layers = layer_count();
  trace.inputs.assign(layers, Matrix{});
  trace.pre.assign(layers - 1, Matrix{});
  trace.inputs[0] = x;
  Matrix y;
  for (std::size_t l = 0; l < layers; ++l) {
    linear_forward(trace.inputs[l], params_[2 * l], params_[2 * l + 1], y);
    if (l + 1 == layers) break;
    trace.pre[l] = y;
    for (double& v : y.data) v = v * sigmoid(v);
    trace.inputs[l + 1] = std::move(y);
  }
  return y;
}

void Mlp::backward(const Trace& trace, const Matrix& dy, ParamSet& grads) const {
  if (!grads.same_layout(params_)) throw std::invalid_argument("Mlp::backward: gradient layout mismatch");
  Matrix g = dy;
  for (std::size_t l = layer_count(); l-- > 0;) {
    linear_backward_params(trace.inputs[l], g, grads[2 * l], grads[2 * l + 1]);
    if (l == 0) break;
    g = linear_backward_input(g, params_[2 * l]);
    const Matrix& pre = trace.pre[l - 1];
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double s = sigmoid(pre.data[i]);
      g.data[i] *= s * (1.0 + pre.data[i] * (1.0 - s));
    }
  }
}

// ---------------------------------------------------------------------------
// Optimizer

double clip_grad_norm(ParamSet& grads, double max_norm) {
  const double norm = grads.l2_norm();
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

AdamW::AdamW(const ParamSet& layout, AdamConfig config)
    : config_(config), m_(layout.zeros_like()), v_(layout.zeros_like()) {}

double AdamW::step(ParamSet& params, ParamSet& grads) {
  if (!params.same_layout(m_) || !grads.same_layout(m_)) {
    throw std::invalid_argument("AdamW::step: layout mismatch");
  }
  if (!grads.all_finite()) throw std::runtime_error("AdamW::step: non-finite gradient");
  const double norm = clip_grad_norm(grads, config_.max_grad_norm);
  if (norm == 0.0) return norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    auto& p = params[ti].values;
    const auto& g = grads[ti].values;
    auto& m = m_[ti].values;
    auto& v = v_[ti].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] = p[i] * decay - config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  return norm;
}

}  // namespace hilab
