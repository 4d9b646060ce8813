#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faultarm/arm.hpp"
#include "faultarm/episode.hpp"
#include "faultarm/health.hpp"
#include "faultarm/nn.hpp"

namespace faultarm {

using nn::Tensor;

struct PolicyConfig {
  std::size_t joints = 4;
  std::size_t tasks = 4;
  std::size_t proprio_dim = 4;
  std::size_t embed = 64;
  std::size_t projector_hidden = 64;
  std::size_t trunk_blocks = 4;
  std::size_t chunk = 8;
  std::size_t action_dim = Action::kDim;
  bool health_conditioned = false;

  std::size_t obs_dim() const { return Observation::feature_dim(joints, tasks); }
  /// The trunk runs on [observation token ; proprio token], each `embed` wide.
  std::size_t trunk_width() const { return 2 * embed; }
  std::size_t output_dim() const { return chunk * action_dim; }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

/// f_h = W2 gelu(W1 h + b1) + b2. The output layer starts at exactly zero.
struct HealthProjectorParams {
  nn::DenseLayer layer1;
  nn::DenseLayer layer2;

  HealthProjectorParams() = default;
  HealthProjectorParams(std::size_t joints, std::size_t hidden, std::size_t embed);

  std::size_t parameter_count() const {
    return layer1.parameter_count() + layer2.parameter_count();
  }
};

/// Fixed per-feature affine map applied to raw inputs: (x - shift) * scale.
/// Fitted once from training data and carried with the weights; never trained.
struct InputStandardizer {
  Tensor obs_shift, obs_scale;          // obs_dim x 1
  Tensor proprio_shift, proprio_scale;  // proprio_dim x 1

  static InputStandardizer identity(const PolicyConfig& config);
  /// Mean and 1/stddev over every step; constant features are only centered.
  static InputStandardizer fit(const std::vector<Episode>& episodes, const PolicyConfig& config);

  Tensor obs(const Tensor& raw) const;
  Tensor proprio(const Tensor& raw) const;

  friend bool operator==(const InputStandardizer&, const InputStandardizer&) = default;
};

struct PolicyParams {
  PolicyConfig config;
  InputStandardizer input_norm;
  nn::DenseLayer obs_embed;
  nn::DenseLayer proprio_embed;
  Tensor action_queries;  // embed x 1, added to the observation token
  std::vector<nn::ResidualBlock> trunk;
  nn::DenseLayer head;
  std::optional<HealthProjectorParams> projector;

  PolicyParams() = default;
  /// Zero-valued parameters with the right shapes (also used for gradients)
  /// and an identity input map.
  explicit PolicyParams(const PolicyConfig& config);

  /// Random trunk/embeddings, zero head, zero action queries, and when
  /// conditioned a projector whose second layer is zero.
  static PolicyParams initialize(const PolicyConfig& config, std::uint64_t seed);

  std::vector<nn::NamedTensor> tensors();
  std::vector<nn::ConstNamedTensor> tensors() const;

  /// Same shapes, all zeros.
  PolicyParams zeros_like() const { return PolicyParams(config); }
};

/// Returns a health-conditioned copy of `base` sharing every weight, with a
/// fresh zero-output projector.
PolicyParams with_projector(const PolicyParams& base, std::uint64_t seed);

/// Drops the projector, leaving an unconditioned policy on the same weights.
PolicyParams without_projector(const PolicyParams& params);

/// Batch of inputs, one sample per column.
struct PolicyInput {
  Tensor obs;      // obs_dim x B
  Tensor proprio;  // proprio_dim x B
  Tensor health;   // joints x B (ignored by baseline policies)
};

PolicyInput make_input(const Observation& obs, const HealthVector& health);

struct PolicyTape {
  Tensor obs;      // standardized
  Tensor proprio;  // standardized
  Tensor projector_pre;
  Tensor projector_act;
  Tensor trunk_input;
  std::vector<nn::ResidualBlock::Cache> blocks;
  Tensor trunk_output;
};

Tensor health_projector_forward(const HealthProjectorParams& projector, const Tensor& health,
                                PolicyTape* tape = nullptr);
std::vector<double> health_projector_forward(const HealthProjectorParams& projector,
                                             const HealthVector& health);

/// Normalized action chunks, output_dim x B. Column b is step-major:
/// [a_0 ; a_1 ; ... ; a_{C-1}], each a_k of length action_dim.
Tensor policy_forward(const PolicyParams& params, const PolicyInput& input,
                      PolicyTape* tape = nullptr);

/// action_dim x C for one observation.
Tensor policy_forward(const PolicyParams& params, const Observation& obs,
                      const HealthVector& health);

/// Accumulates parameter gradients for dL/d(output) into `grad`.
void policy_backward(const PolicyParams& params, const PolicyInput& input, const PolicyTape& tape,
                     const Tensor& d_output, PolicyParams& grad);

struct ParameterCounts {
  std::size_t obs_embed = 0;
  std::size_t proprio_embed = 0;
  std::size_t action_queries = 0;
  std::size_t trunk = 0;
  std::size_t head = 0;
  std::size_t projector = 0;

  std::size_t total() const {
    return obs_embed + proprio_embed + action_queries + trunk + head + projector;
  }
};

ParameterCounts count_parameters(const PolicyParams& params);

/// (J*H + H) + (H*D + D)
std::size_t projector_parameter_count(std::size_t joints, std::size_t hidden, std::size_t embed);

nlohmann::json to_json(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

/// A trained policy plus the action statistics it was trained against.
struct PolicyCheckpoint {
  PolicyParams params;
  NormStats stats;
};

nlohmann::json to_json(const PolicyCheckpoint& ckpt);
PolicyCheckpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const PolicyCheckpoint& ckpt, const std::filesystem::path& path);
PolicyCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace faultarm
