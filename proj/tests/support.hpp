#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "faultarm/policy.hpp"
#include "faultarm/random.hpp"

namespace faultarm::testing {

inline void fill_uniform(Tensor& t, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
}

/// Every tensor random, including the ones that normally start at zero.
inline PolicyParams random_params(const PolicyConfig& config, Rng& rng, double scale = 0.5) {
  PolicyParams p(config);
  for (auto& t : p.tensors()) fill_uniform(*t.value, rng, scale);
  InputStandardizer& n = p.input_norm;
  fill_uniform(n.obs_shift, rng, 0.5);
  fill_uniform(n.proprio_shift, rng, 0.5);
  n.obs_scale = (n.obs_scale.array() + rng.uniform()).matrix();
  n.proprio_scale = (n.proprio_scale.array() + rng.uniform()).matrix();
  return p;
}

inline PolicyInput random_input(const PolicyConfig& config, std::size_t batch, Rng& rng) {
  const auto b = static_cast<Eigen::Index>(batch);
  PolicyInput in{Tensor(static_cast<Eigen::Index>(config.obs_dim()), b),
                 Tensor(static_cast<Eigen::Index>(config.proprio_dim), b),
                 Tensor(static_cast<Eigen::Index>(config.joints), b)};
  fill_uniform(in.obs, rng, 1.0);
  fill_uniform(in.proprio, rng, 1.0);
  for (Eigen::Index i = 0; i < in.health.size(); ++i) in.health.data()[i] = rng.uniform();
  return in;
}

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t entries = 0;
};

// Relative error per entry, with a floor on the denominator so entries whose
// true gradient is ~0 are judged on absolute error instead.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
}

/// Compares every analytic parameter gradient of the mean-L1 loss against
/// central differences with step h.
inline GradientReport check_policy_gradients(const PolicyParams& params, const PolicyInput& input,
                                             const Tensor& target, double h = 1e-5) {
  PolicyTape tape;
  const Tensor out = policy_forward(params, input, &tape);
  PolicyParams grad = params.zeros_like();
  policy_backward(params, input, tape, nn::l1_loss_grad(out, target), grad);

  PolicyParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = grad.tensors();
  GradientReport report;
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    Tensor& t = *probe_tensors[k].value;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = nn::l1_loss(policy_forward(probe, input), target);
      t.data()[i] = saved - h;
      const double down = nn::l1_loss(policy_forward(probe, input), target);
      t.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      report.max_relative_error = std::max(
          report.max_relative_error, relative_error(grad_tensors[k].value->data()[i], numeric));
      ++report.entries;
    }
  }
  return report;
}

}  // namespace faultarm::testing
