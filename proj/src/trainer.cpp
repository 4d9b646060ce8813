#include "faultarm/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace faultarm {

Tensor chunk_target(const Episode& episode, std::size_t t, std::size_t chunk,
                    const NormStats& stats) {
  if (episode.steps.empty()) throw std::invalid_argument("chunk_target: empty episode");
  if (t >= episode.steps.size()) throw std::out_of_range("chunk_target: step out of range");
  const std::size_t last = episode.steps.size() - 1;
  Tensor out(static_cast<Eigen::Index>(chunk * Action::kDim), 1);
  for (std::size_t k = 0; k < chunk; ++k) {
    const auto a = normalize(episode.steps[std::min(t + k, last)].action, stats);
    for (std::size_t d = 0; d < Action::kDim; ++d) {
      out(static_cast<Eigen::Index>(k * Action::kDim + d), 0) = a[d];
    }
  }
  return out;
}

BatchSampler::BatchSampler(const std::vector<Episode>& episodes, const NormStats& stats,
                           std::size_t batch, std::size_t chunk, std::uint64_t seed)
    : episodes_(episodes), stats_(stats), batch_(batch), chunk_(chunk), rng_(seed) {
  if (batch == 0 || chunk == 0) throw std::invalid_argument("batch and chunk must be positive");
  for (std::size_t e = 0; e < episodes.size(); ++e)
    for (std::size_t t = 0; t < episodes[e].steps.size(); ++t) index_.emplace_back(e, t);
  if (index_.empty()) throw std::invalid_argument("cannot sample from an empty dataset");
}

Batch BatchSampler::next() {
  const auto& first = episodes_[index_.front().first].steps.front();
  const auto obs_dim = static_cast<Eigen::Index>(first.observation.features().size());
  const auto joints = static_cast<Eigen::Index>(first.health.size());
  const auto b = static_cast<Eigen::Index>(batch_);

  Batch out;
  out.input.obs.resize(obs_dim, b);
  out.input.proprio.resize(4, b);
  out.input.health.resize(joints, b);
  out.target.resize(static_cast<Eigen::Index>(chunk_ * Action::kDim), b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto [e, t] = index_[rng_.index(index_.size())];
    const StepRecord& step = episodes_[e].steps[t];
    const auto f = step.observation.features();
    if (static_cast<Eigen::Index>(f.size()) != obs_dim ||
        static_cast<Eigen::Index>(step.health.size()) != joints) {
      throw std::invalid_argument("dataset mixes observation layouts");
    }
    for (Eigen::Index r = 0; r < obs_dim; ++r) out.input.obs(r, i) = f[static_cast<std::size_t>(r)];
    for (Eigen::Index r = 0; r < 4; ++r) out.input.proprio(r, i) = step.proprio[static_cast<std::size_t>(r)];
    for (Eigen::Index r = 0; r < joints; ++r)
      out.input.health(r, i) = step.health[static_cast<std::size_t>(r)];
    out.target.col(i) = chunk_target(episodes_[e], t, chunk_, stats_);
  }
  return out;
}

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Baseline:
      return "baseline";
    case TrainMode::Health:
      return "health";
    case TrainMode::FrozenTrunk:
      return "frozen-trunk";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "baseline") return TrainMode::Baseline;
  if (s == "health") return TrainMode::Health;
  if (s == "frozen-trunk") return TrainMode::FrozenTrunk;
  throw std::invalid_argument("unknown training mode '" + s + "'");
}

bool is_trainable(TrainMode mode, const std::string& name) {
  if (mode != TrainMode::FrozenTrunk) return true;
  return name == "action_queries" || name.rfind("projector.", 0) == 0;
}

double accumulate_gradients(const PolicyParams& params, const std::vector<Batch>& micro_batches,
                            PolicyParams& grad) {
  if (micro_batches.empty()) throw std::invalid_argument("no micro-batches");
  const double scale = 1.0 / static_cast<double>(micro_batches.size());
  double loss = 0.0;
  PolicyTape tape;
  for (const Batch& mb : micro_batches) {
    const Tensor pred = policy_forward(params, mb.input, &tape);
    loss += nn::l1_loss(pred, mb.target) * scale;
    const Tensor d = nn::l1_loss_grad(pred, mb.target) * scale;
    policy_backward(params, mb.input, tape, d, grad);
  }
  return loss;
}

namespace {

PolicyParams starting_params(const TrainConfig& config, const PolicyParams* init) {
  PolicyConfig pc = config.policy;
  pc.health_conditioned = config.mode != TrainMode::Baseline;
  switch (config.mode) {
    case TrainMode::FrozenTrunk:
      if (!init) throw std::invalid_argument("frozen-trunk training needs an initial checkpoint");
      return init->projector ? *init : with_projector(*init, config.seed);
    case TrainMode::Baseline:
      if (init) return without_projector(*init);
      return PolicyParams::initialize(pc, config.seed);
    case TrainMode::Health:
      if (init) return init->projector ? *init : with_projector(*init, config.seed);
      return PolicyParams::initialize(pc, config.seed);
  }
  return PolicyParams::initialize(pc, config.seed);
}

}  // namespace

PolicyCheckpoint train(const std::vector<Episode>& episodes, const NormStats& stats,
                       const TrainConfig& config, const PolicyParams* init,
                       const TrainHooks& hooks) {
  if (config.steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (config.accumulation == 0) throw std::invalid_argument("accumulation must be positive");
  // Validates the schedule up front rather than at the first step.
  nn::lr_at(0, config.optimizer.lr, config.warmup_steps, config.decay_step, config.decay_factor);

  PolicyCheckpoint ckpt{starting_params(config, init), stats};
  PolicyParams& params = ckpt.params;
  // A fresh model fits its input map to this dataset; a continued one keeps
  // the map its weights were trained under.
  if (!init) params.input_norm = InputStandardizer::fit(episodes, params.config);
  if (init && !(init->config.obs_dim() == config.policy.obs_dim() &&
                init->config.chunk == config.policy.chunk)) {
    throw std::invalid_argument("initial checkpoint does not match the dataset layout");
  }
  BatchSampler sampler(episodes, stats, config.batch, params.config.chunk, mix_seed(config.seed, 1));

  PolicyParams grad = params.zeros_like();
  std::vector<Tensor*> trainable;
  std::vector<Tensor*> trainable_grads;
  {
    auto p = params.tensors();
    auto g = grad.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!is_trainable(config.mode, p[i].name)) continue;
      trainable.push_back(p[i].value);
      trainable_grads.push_back(g[i].value);
    }
  }
  nn::AdamWState opt = nn::AdamWState::like(trainable);

  std::vector<Batch> micro(config.accumulation);
  for (std::int64_t step = 0; step < config.steps; ++step) {
    for (Tensor* g : trainable_grads) g->setZero();
    for (auto& mb : micro) mb = sampler.next();
    const double loss = accumulate_gradients(params, micro, grad);
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "non-finite loss at step " << step << " (grad norm " << nn::global_norm(trainable_grads)
         << ")";
      throw std::runtime_error(os.str());
    }
    nn::clip_global_norm(trainable_grads, config.clip_norm);
    const double lr = nn::lr_at(step, config.optimizer.lr, config.warmup_steps, config.decay_step,
                                config.decay_factor);
    nn::adamw_step(trainable, trainable_grads, opt, config.optimizer, lr);

    if (hooks.on_metric) hooks.on_metric({step, lr, loss});
    const std::int64_t done = step + 1;
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && done % config.checkpoint_every == 0 &&
        done != config.steps) {
      hooks.on_checkpoint(done, ckpt);
    }
  }
  return ckpt;
}

void write_metrics_csv(const std::vector<TrainMetric>& metrics, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,lr,loss\n" << std::setprecision(10);
  for (const auto& m : metrics) out << m.step << ',' << m.lr << ',' << m.loss << '\n';
}

}  // namespace faultarm
