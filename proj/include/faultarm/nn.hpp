#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "faultarm/random.hpp"

namespace faultarm::nn {

/// Every parameter, gradient and moment tensor is a dense column-major
/// double matrix; biases are n x 1. Batches are laid out one sample per column.
using Tensor = Eigen::MatrixXd;

struct NamedTensor {
  std::string name;
  Tensor* value;
};

struct ConstNamedTensor {
  std::string name;
  const Tensor* value;
};

using faultarm::Rng;

// GELU, tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
double gelu(double x);
double gelu_derivative(double x);
Tensor gelu(const Tensor& x);

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out x 1

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out);

  std::size_t in_features() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_features() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  Tensor forward(const Tensor& x) const;

  /// Accumulates dL/dW and dL/db into `grad` and returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& dy, DenseLayer& grad) const;

  void init_scaled_normal(Rng& rng, double gain = 1.0);
  void set_zero();
};

/// y = x + W2 gelu(W1 x + b1) + b2, width-preserving.
struct ResidualBlock {
  DenseLayer inner;
  DenseLayer outer;

  struct Cache {
    Tensor input;
    Tensor pre_activation;
    Tensor activation;
  };

  ResidualBlock() = default;
  ResidualBlock(std::size_t width, std::size_t hidden);

  std::size_t parameter_count() const { return inner.parameter_count() + outer.parameter_count(); }
  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& dy, ResidualBlock& grad) const;
};

/// Mean absolute error over every element. The subgradient at zero is 0.
double l1_loss(const Tensor& prediction, const Tensor& target);
Tensor l1_loss_grad(const Tensor& prediction, const Tensor& target);

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  /// Zero moments shaped like `params`.
  static AdamWState like(std::span<Tensor* const> params);
};

/// One AdamW update with decoupled weight decay at learning rate `lr`.
void adamw_step(std::span<Tensor* const> params, std::span<Tensor* const> grads,
                AdamWState& state, const AdamWConfig& config, double lr);

double global_norm(std::span<Tensor* const> grads);

/// Rescales all tensors jointly when their global L2 norm exceeds `max_norm`.
/// Returns the norm measured before clipping.
double clip_global_norm(std::span<Tensor* const> grads, double max_norm = 1.0);

/// Linear warmup from 0 to `base_lr`, constant, then `base_lr * decay_factor`
/// from `decay_step` on.
double lr_at(std::int64_t step, double base_lr, std::int64_t warmup_steps,
             std::int64_t decay_step, double decay_factor = 0.1);

// Checkpoint tensor dump: {"tensors": [{"name", "shape": [r, c], "data": [...]}], "hash"}.
// Doubles are written with round-trip precision.
std::string content_hash(std::span<const ConstNamedTensor> tensors);
nlohmann::json tensors_to_json(std::span<const ConstNamedTensor> tensors);

/// Copies tensor data into `into`, checking names, shapes and hash.
void tensors_from_json(const nlohmann::json& j, std::span<const NamedTensor> into);

}  // namespace faultarm::nn
