#include "faultarm/nn.hpp"

#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace faultarm::nn {

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.rows() << 'x' << a.cols() << " vs " << b.rows()
       << 'x' << b.cols();
    throw std::invalid_argument(os.str());
  }
}

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(T v) {
    bytes(&v, sizeof(v));
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace

double gelu(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  const double d_inner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner;
}

Tensor gelu(const Tensor& x) {
  return x.unaryExpr([](double v) { return gelu(v); });
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weight(Tensor::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
      bias(Tensor::Zero(static_cast<Eigen::Index>(out), 1)) {}

Tensor DenseLayer::forward(const Tensor& x) const {
  if (x.rows() != weight.cols()) {
    std::ostringstream os;
    os << "DenseLayer::forward: expected " << weight.cols() << " input rows, got " << x.rows();
    throw std::invalid_argument(os.str());
  }
  Tensor y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

Tensor DenseLayer::backward(const Tensor& x, const Tensor& dy, DenseLayer& grad) const {
  if (dy.rows() != weight.rows() || dy.cols() != x.cols()) {
    throw std::invalid_argument("DenseLayer::backward: gradient shape mismatch");
  }
  grad.weight.noalias() += dy * x.transpose();
  grad.bias.col(0) += dy.rowwise().sum();
  return weight.transpose() * dy;
}

void DenseLayer::init_scaled_normal(Rng& rng, double gain) {
  const double scale = gain / std::sqrt(static_cast<double>(weight.cols()));
  for (Eigen::Index c = 0; c < weight.cols(); ++c)
    for (Eigen::Index r = 0; r < weight.rows(); ++r) weight(r, c) = scale * rng.normal();
  bias.setZero();
}

void DenseLayer::set_zero() {
  weight.setZero();
  bias.setZero();
}

ResidualBlock::ResidualBlock(std::size_t width, std::size_t hidden)
    : inner(width, hidden), outer(hidden, width) {}

Tensor ResidualBlock::forward(const Tensor& x, Cache* cache) const {
  Tensor pre = inner.forward(x);
  Tensor act = gelu(pre);
  Tensor y = x + outer.forward(act);
  if (cache) {
    cache->input = x;
    cache->pre_activation = std::move(pre);
    cache->activation = std::move(act);
  }
  return y;
}

Tensor ResidualBlock::backward(const Cache& cache, const Tensor& dy, ResidualBlock& grad) const {
  Tensor d_act = outer.backward(cache.activation, dy, grad.outer);
  Tensor d_pre = d_act.cwiseProduct(
      cache.pre_activation.unaryExpr([](double v) { return gelu_derivative(v); }));
  return dy + inner.backward(cache.input, d_pre, grad.inner);
}

double l1_loss(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "l1_loss");
  if (prediction.size() == 0) return 0.0;
  return (prediction - target).cwiseAbs().sum() / static_cast<double>(prediction.size());
}

Tensor l1_loss_grad(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "l1_loss_grad");
  const double n = static_cast<double>(prediction.size());
  return (prediction - target).unaryExpr([n](double d) {
    return d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
  });
}

AdamWState AdamWState::like(std::span<Tensor* const> params) {
  AdamWState s;
  for (const Tensor* p : params) {
    s.m.push_back(Tensor::Zero(p->rows(), p->cols()));
    s.v.push_back(Tensor::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adamw_step(std::span<Tensor* const> params, std::span<Tensor* const> grads,
                AdamWState& state, const AdamWConfig& config, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw std::invalid_argument("adamw_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    require_same_shape(p, g, "adamw_step");
    require_same_shape(p, state.m[i], "adamw_step moment");
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (config.weight_decay != 0.0) p *= (1.0 - lr * config.weight_decay);
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double m_hat = m.data()[k] / bias1;
      const double v_hat = v.data()[k] / bias2;
      p.data()[k] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

double global_norm(std::span<Tensor* const> grads) {
  double sq = 0.0;
  for (const Tensor* g : grads) sq += g->squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Tensor* const> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor* g : grads) *g *= scale;
  }
  return norm;
}

double lr_at(std::int64_t step, double base_lr, std::int64_t warmup_steps,
             std::int64_t decay_step, double decay_factor) {
  if (step < 0) throw std::invalid_argument("lr_at: step must be non-negative");
  if (warmup_steps < 0 || warmup_steps >= decay_step) {
    throw std::invalid_argument("lr_at: warmup_steps must be in [0, decay_step)");
  }
  if (step >= decay_step) return base_lr * decay_factor;
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  return base_lr;
}

std::string content_hash(std::span<const ConstNamedTensor> tensors) {
  Fnv1a h;
  for (const auto& t : tensors) {
    h.bytes(t.name.data(), t.name.size());
    h.value(static_cast<std::int64_t>(t.value->rows()));
    h.value(static_cast<std::int64_t>(t.value->cols()));
    h.bytes(t.value->data(), sizeof(double) * static_cast<std::size_t>(t.value->size()));
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h.digest();
  return os.str();
}

nlohmann::json tensors_to_json(std::span<const ConstNamedTensor> tensors) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : tensors) {
    std::vector<double> data(t.value->data(), t.value->data() + t.value->size());
    list.push_back({{"name", t.name},
                    {"shape", {t.value->rows(), t.value->cols()}},
                    {"data", std::move(data)}});
  }
  return {{"tensors", std::move(list)}, {"hash", content_hash(tensors)}};
}

void tensors_from_json(const nlohmann::json& j, std::span<const NamedTensor> into) {
  const auto& list = j.at("tensors");
  if (list.size() != into.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(list.size()) +
                             " tensors, expected " + std::to_string(into.size()));
  }
  std::vector<ConstNamedTensor> loaded;
  for (std::size_t i = 0; i < into.size(); ++i) {
    const auto& entry = list[i];
    const auto name = entry.at("name").get<std::string>();
    if (name != into[i].name) {
      throw std::runtime_error("checkpoint tensor " + std::to_string(i) + " is '" + name +
                               "', expected '" + into[i].name + "'");
    }
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    Tensor& dst = *into[i].value;
    if (shape.size() != 2 || shape[0] != dst.rows() || shape[1] != dst.cols()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has wrong shape");
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != dst.size()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has wrong element count");
    }
    std::memcpy(dst.data(), data.data(), sizeof(double) * data.size());
    loaded.push_back({into[i].name, into[i].value});
  }
  if (auto it = j.find("hash"); it != j.end()) {
    if (it->get<std::string>() != content_hash(loaded)) {
      throw std::runtime_error("checkpoint content hash mismatch");
    }
  }
}

}  // namespace faultarm::nn
