#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hilab/rng.hpp"

namespace hilab {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }
};

/// A named parameter tensor stored row-major.
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Ordered collection of tensors; gradients and optimizer moments use the
/// same layout as the parameters they belong to.
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  [[nodiscard]] std::size_t size() const noexcept { return tensors_.size(); }
  [[nodiscard]] std::size_t scalar_count() const noexcept;
  Tensor& operator[](std::size_t i) noexcept { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const noexcept { return tensors_[i]; }
  [[nodiscard]] const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::vector<Tensor>& tensors() noexcept { return tensors_; }

  /// Same names and shapes, all values zero.
  [[nodiscard]] ParamSet zeros_like() const;
  void set_zero() noexcept;
  [[nodiscard]] double l2_norm() const noexcept;
  void scale(double s) noexcept;
  [[nodiscard]] bool all_finite() const noexcept;
  [[nodiscard]] bool same_layout(const ParamSet& other) const noexcept;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Tensor> tensors_;
};

/// Multi-layer perceptron with SiLU hidden activations and a linear head.
class Mlp {
 public:
  struct Trace {
    std::vector<Matrix> inputs;  ///< input to each linear layer
    std::vector<Matrix> pre;     ///< pre-activations of hidden layers
  };

  Mlp() = default;
  /// Linear layers initialized U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t out, Rng& rng);

  [[nodiscard]] std::size_t in_dim() const noexcept { return in_; }
  [[nodiscard]] std::size_t out_dim() const noexcept { return out_; }
  [[nodiscard]] std::size_t layer_count() const noexcept { return params_.size() / 2; }

  ParamSet& params() noexcept { return params_; }
  [[nodiscard]] const ParamSet& params() const noexcept { return params_; }

  /// Row i of the output depends only on row i of x, and is bit-identical
  /// regardless of how many rows are batched together.
  [[nodiscard]] Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Trace& trace) const;

  /// Accumulates parameter gradients of sum(dy .* y) into `grads`.
  void backward(const Trace& trace, const Matrix& dy, ParamSet& grads) const;

  /// Rebuilds an MLP from a parameter set laid out as (w0, b0, w1, b1, ...).
  static Mlp from_params(ParamSet params);

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  ParamSet params_;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-6;
  double weight_decay = 0.01;
  double max_grad_norm = 1.0;
};

/// Rescales `grads` in place so that its global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(ParamSet& grads, double max_norm);

/// Decoupled-weight-decay Adam with global gradient-norm clipping.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamSet& layout, AdamConfig config);

  /// One update. A step whose gradient is identically zero is a no-op.
  /// Throws std::runtime_error on non-finite gradients. Returns the
  /// pre-clip gradient norm.
  double step(ParamSet& params, ParamSet& grads);

  [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t steps_taken() const noexcept { return t_; }

 private:
  AdamConfig config_;
  ParamSet m_;
  ParamSet v_;
  std::size_t t_ = 0;
};

}  // namespace hilab
