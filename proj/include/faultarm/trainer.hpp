#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "faultarm/episode.hpp"
#include "faultarm/nn.hpp"
#include "faultarm/policy.hpp"
#include "faultarm/random.hpp"

namespace faultarm {

struct Batch {
  PolicyInput input;
  Tensor target;  // output_dim x B, normalized, step-major like the policy head
};

/// Normalized targets for actions t .. t+chunk-1 of `episode`, stacked
/// step-major. Indices past the end repeat the final action.
Tensor chunk_target(const Episode& episode, std::size_t t, std::size_t chunk,
                    const NormStats& stats);

/// Draws training samples uniformly over every step of every episode. The
/// sequence depends only on the seed.
class BatchSampler {
 public:
  BatchSampler(const std::vector<Episode>& episodes, const NormStats& stats, std::size_t batch,
               std::size_t chunk, std::uint64_t seed);

  Batch next();
  std::size_t sample_count() const { return index_.size(); }

 private:
  const std::vector<Episode>& episodes_;
  NormStats stats_;
  std::size_t batch_;
  std::size_t chunk_;
  std::vector<std::pair<std::size_t, std::size_t>> index_;  // (episode, step)
  Rng rng_;
};

enum class TrainMode {
  Baseline,     // no projector
  Health,       // projector and trunk trained together
  FrozenTrunk,  // trunk copied from an initial checkpoint; only projector + queries update
};

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::Baseline;
  std::int64_t steps = 3000;
  std::size_t batch = 8;
  std::size_t accumulation = 2;
  std::int64_t warmup_steps = 100;
  std::int64_t decay_step = 2000;
  double decay_factor = 0.1;
  double clip_norm = 1.0;
  nn::AdamWConfig optimizer;
  std::int64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  std::uint64_t seed = 0;
  PolicyConfig policy;
};

struct TrainMetric {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainHooks {
  std::function<void(const TrainMetric&)> on_metric;
  std::function<void(std::int64_t step, const PolicyCheckpoint&)> on_checkpoint;
};

/// Behavior cloning with mean L1 over the chunk. Each optimizer step sums
/// gradients of `accumulation` micro-batches (each scaled by 1/accumulation),
/// clips them jointly, then applies AdamW at lr_at(step).
/// `init` is required for FrozenTrunk and optional otherwise.
/// Throws std::runtime_error when the loss becomes non-finite.
PolicyCheckpoint train(const std::vector<Episode>& episodes, const NormStats& stats,
                       const TrainConfig& config, const PolicyParams* init = nullptr,
                       const TrainHooks& hooks = {});

/// Names of the tensors updated in a given mode.
bool is_trainable(TrainMode mode, const std::string& tensor_name);

/// One accumulated optimizer step's gradient (no clipping), for testing the
/// accumulation identity. Returns the mean micro-batch loss.
double accumulate_gradients(const PolicyParams& params, const std::vector<Batch>& micro_batches,
                            PolicyParams& grad);

/// Writes metrics as CSV with header step,lr,loss.
void write_metrics_csv(const std::vector<TrainMetric>& metrics, const std::filesystem::path& path);

}  // namespace faultarm
