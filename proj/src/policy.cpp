#include "faultarm/policy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "faultarm/random.hpp"

namespace faultarm {

namespace {

constexpr const char* kCheckpointFormat = "faultarm-policy";
constexpr int kCheckpointVersion = 1;

void add_layer(std::vector<nn::NamedTensor>& out, const std::string& prefix, nn::DenseLayer& l) {
  out.push_back({prefix + ".weight", &l.weight});
  out.push_back({prefix + ".bias", &l.bias});
}

void require_rows(const Tensor& t, std::size_t rows, const char* what) {
  if (static_cast<std::size_t>(t.rows()) != rows) {
    std::ostringstream os;
    os << what << ": expected " << rows << " rows, got " << t.rows();
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

HealthProjectorParams::HealthProjectorParams(std::size_t joints, std::size_t hidden,
                                             std::size_t embed)
    : layer1(joints, hidden), layer2(hidden, embed) {}

PolicyParams::PolicyParams(const PolicyConfig& cfg)
    : config(cfg),
      input_norm(InputStandardizer::identity(cfg)),
      obs_embed(cfg.obs_dim(), cfg.embed),
      proprio_embed(cfg.proprio_dim, cfg.embed),
      action_queries(Tensor::Zero(static_cast<Eigen::Index>(cfg.embed), 1)),
      head(cfg.trunk_width(), cfg.output_dim()) {
  for (std::size_t k = 0; k < cfg.trunk_blocks; ++k) {
    trunk.emplace_back(cfg.trunk_width(), cfg.trunk_width());
  }
  if (cfg.health_conditioned) projector.emplace(cfg.joints, cfg.projector_hidden, cfg.embed);
}

InputStandardizer InputStandardizer::identity(const PolicyConfig& config) {
  const auto o = static_cast<Eigen::Index>(config.obs_dim());
  const auto p = static_cast<Eigen::Index>(config.proprio_dim);
  return {Tensor::Zero(o, 1), Tensor::Ones(o, 1), Tensor::Zero(p, 1), Tensor::Ones(p, 1)};
}

namespace {

void fit_columns(const Tensor& samples, Tensor& shift, Tensor& scale) {
  const double n = static_cast<double>(samples.cols());
  shift = samples.rowwise().mean();
  const Tensor centered = samples.colwise() - shift.col(0);
  const Eigen::VectorXd var = centered.cwiseAbs2().rowwise().sum() / n;
  scale.resize(shift.rows(), 1);
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    const double sd = std::sqrt(var(i));
    scale(i, 0) = sd > 1e-6 ? 1.0 / sd : 1.0;
  }
}

}  // namespace

InputStandardizer InputStandardizer::fit(const std::vector<Episode>& episodes,
                                         const PolicyConfig& config) {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.steps.size();
  if (n == 0) throw std::invalid_argument("cannot fit input statistics on an empty dataset");
  Tensor obs(static_cast<Eigen::Index>(config.obs_dim()), static_cast<Eigen::Index>(n));
  Tensor proprio(static_cast<Eigen::Index>(config.proprio_dim), static_cast<Eigen::Index>(n));
  Eigen::Index col = 0;
  for (const auto& ep : episodes) {
    for (const auto& st : ep.steps) {
      const PolicyInput in = make_input(st.observation, st.health);
      require_rows(in.obs, config.obs_dim(), "input statistics obs");
      obs.col(col) = in.obs.col(0);
      proprio.col(col) = in.proprio.col(0);
      ++col;
    }
  }
  InputStandardizer s;
  fit_columns(obs, s.obs_shift, s.obs_scale);
  fit_columns(proprio, s.proprio_shift, s.proprio_scale);
  return s;
}

Tensor InputStandardizer::obs(const Tensor& raw) const {
  return (raw.colwise() - obs_shift.col(0)).array().colwise() * obs_scale.col(0).array();
}

Tensor InputStandardizer::proprio(const Tensor& raw) const {
  return (raw.colwise() - proprio_shift.col(0)).array().colwise() * proprio_scale.col(0).array();
}

PolicyParams PolicyParams::initialize(const PolicyConfig& config, std::uint64_t seed) {
  PolicyParams p(config);
  Rng rng(mix_seed(seed, 0x706f6c));
  p.obs_embed.init_scaled_normal(rng);
  p.proprio_embed.init_scaled_normal(rng);
  for (auto& block : p.trunk) {
    block.inner.init_scaled_normal(rng);
    block.outer.init_scaled_normal(rng, 0.5);
  }
  // head and action queries start at zero
  if (p.projector) {
    Rng proj_rng(mix_seed(seed, 0x70726f6a));
    p.projector->layer1.init_scaled_normal(proj_rng);
    p.projector->layer2.set_zero();
  }
  return p;
}

std::vector<nn::NamedTensor> PolicyParams::tensors() {
  std::vector<nn::NamedTensor> out;
  add_layer(out, "obs_embed", obs_embed);
  add_layer(out, "proprio_embed", proprio_embed);
  out.push_back({"action_queries", &action_queries});
  for (std::size_t k = 0; k < trunk.size(); ++k) {
    const std::string prefix = "trunk." + std::to_string(k);
    add_layer(out, prefix + ".inner", trunk[k].inner);
    add_layer(out, prefix + ".outer", trunk[k].outer);
  }
  add_layer(out, "head", head);
  if (projector) {
    add_layer(out, "projector.layer1", projector->layer1);
    add_layer(out, "projector.layer2", projector->layer2);
  }
  return out;
}

std::vector<nn::ConstNamedTensor> PolicyParams::tensors() const {
  auto mutable_view = const_cast<PolicyParams*>(this)->tensors();
  std::vector<nn::ConstNamedTensor> out;
  out.reserve(mutable_view.size());
  for (auto& t : mutable_view) out.push_back({std::move(t.name), t.value});
  return out;
}

PolicyParams with_projector(const PolicyParams& base, std::uint64_t seed) {
  PolicyParams p = base;
  p.config.health_conditioned = true;
  p.projector.emplace(p.config.joints, p.config.projector_hidden, p.config.embed);
  Rng rng(mix_seed(seed, 0x70726f6a));
  p.projector->layer1.init_scaled_normal(rng);
  p.projector->layer2.set_zero();
  return p;
}

PolicyParams without_projector(const PolicyParams& params) {
  PolicyParams p = params;
  p.config.health_conditioned = false;
  p.projector.reset();
  return p;
}

PolicyInput make_input(const Observation& obs, const HealthVector& health) {
  PolicyInput in;
  const auto f = obs.features();
  in.obs = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  in.proprio = Eigen::Map<const Eigen::VectorXd>(obs.proprio.data(), 4);
  in.health = Eigen::Map<const Eigen::VectorXd>(health.values().data(),
                                                static_cast<Eigen::Index>(health.size()));
  return in;
}

Tensor health_projector_forward(const HealthProjectorParams& projector, const Tensor& health,
                                PolicyTape* tape) {
  Tensor pre = projector.layer1.forward(health);
  Tensor act = nn::gelu(pre);
  Tensor out = projector.layer2.forward(act);
  if (tape) {
    tape->projector_pre = std::move(pre);
    tape->projector_act = std::move(act);
  }
  return out;
}

std::vector<double> health_projector_forward(const HealthProjectorParams& projector,
                                             const HealthVector& health) {
  if (health.size() != projector.layer1.in_features()) {
    throw std::invalid_argument("health vector length does not match projector input");
  }
  const Tensor h = Eigen::Map<const Eigen::VectorXd>(health.values().data(),
                                                     static_cast<Eigen::Index>(health.size()));
  const Tensor f = health_projector_forward(projector, h);
  return {f.data(), f.data() + f.size()};
}

Tensor policy_forward(const PolicyParams& params, const PolicyInput& input, PolicyTape* tape) {
  const PolicyConfig& cfg = params.config;
  require_rows(input.obs, cfg.obs_dim(), "policy_forward obs");
  require_rows(input.proprio, cfg.proprio_dim, "policy_forward proprio");
  const Eigen::Index batch = input.obs.cols();
  const auto e = static_cast<Eigen::Index>(cfg.embed);

  Tensor obs = params.input_norm.obs(input.obs);
  Tensor proprio = params.input_norm.proprio(input.proprio);
  Tensor trunk_in(2 * e, batch);
  trunk_in.topRows(e) = params.obs_embed.forward(obs);
  trunk_in.topRows(e).colwise() += params.action_queries.col(0);

  // Health features are added to the proprio token: p + f_h.
  trunk_in.bottomRows(e) = params.proprio_embed.forward(proprio);
  if (params.projector) {
    require_rows(input.health, cfg.joints, "policy_forward health");
    if (input.health.cols() != batch) throw std::invalid_argument("health batch size mismatch");
    trunk_in.bottomRows(e) += health_projector_forward(*params.projector, input.health, tape);
  }

  Tensor x = trunk_in;
  if (tape) {
    tape->obs = std::move(obs);
    tape->proprio = std::move(proprio);
    tape->trunk_input = std::move(trunk_in);
    tape->blocks.assign(params.trunk.size(), {});
  }
  for (std::size_t k = 0; k < params.trunk.size(); ++k) {
    x = params.trunk[k].forward(x, tape ? &tape->blocks[k] : nullptr);
  }
  Tensor out = params.head.forward(x);
  if (tape) tape->trunk_output = std::move(x);
  return out;
}

Tensor policy_forward(const PolicyParams& params, const Observation& obs,
                      const HealthVector& health) {
  const Tensor flat = policy_forward(params, make_input(obs, health));
  return Eigen::Map<const Tensor>(flat.data(), static_cast<Eigen::Index>(params.config.action_dim),
                                  static_cast<Eigen::Index>(params.config.chunk));
}

void policy_backward(const PolicyParams& params, const PolicyInput& input, const PolicyTape& tape,
                     const Tensor& d_output, PolicyParams& grad) {
  const auto e = static_cast<Eigen::Index>(params.config.embed);
  Tensor d = params.head.backward(tape.trunk_output, d_output, grad.head);
  for (std::size_t k = params.trunk.size(); k-- > 0;) {
    d = params.trunk[k].backward(tape.blocks[k], d, grad.trunk[k]);
  }
  const Tensor d_obs_token = d.topRows(e);
  const Tensor d_proprio_token = d.bottomRows(e);

  params.obs_embed.backward(tape.obs, d_obs_token, grad.obs_embed);
  grad.action_queries.col(0) += d_obs_token.rowwise().sum();
  params.proprio_embed.backward(tape.proprio, d_proprio_token, grad.proprio_embed);

  if (params.projector) {
    if (!grad.projector) throw std::invalid_argument("gradient holder lacks a projector");
    const Tensor d_act =
        params.projector->layer2.backward(tape.projector_act, d_proprio_token, grad.projector->layer2);
    const Tensor d_pre = d_act.cwiseProduct(
        tape.projector_pre.unaryExpr([](double v) { return nn::gelu_derivative(v); }));
    params.projector->layer1.backward(input.health, d_pre, grad.projector->layer1);
  }
}

ParameterCounts count_parameters(const PolicyParams& params) {
  ParameterCounts c;
  c.obs_embed = params.obs_embed.parameter_count();
  c.proprio_embed = params.proprio_embed.parameter_count();
  c.action_queries = static_cast<std::size_t>(params.action_queries.size());
  for (const auto& b : params.trunk) c.trunk += b.parameter_count();
  c.head = params.head.parameter_count();
  if (params.projector) c.projector = params.projector->parameter_count();
  return c;
}

std::size_t projector_parameter_count(std::size_t joints, std::size_t hidden, std::size_t embed) {
  return (joints * hidden + hidden) + (hidden * embed + embed);
}

nlohmann::json to_json(const PolicyConfig& c) {
  return {{"joints", c.joints},
          {"tasks", c.tasks},
          {"proprio_dim", c.proprio_dim},
          {"embed", c.embed},
          {"projector_hidden", c.projector_hidden},
          {"trunk_blocks", c.trunk_blocks},
          {"chunk", c.chunk},
          {"action_dim", c.action_dim},
          {"health_conditioned", c.health_conditioned}};
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.joints = j.at("joints").get<std::size_t>();
  c.tasks = j.at("tasks").get<std::size_t>();
  c.proprio_dim = j.at("proprio_dim").get<std::size_t>();
  c.embed = j.at("embed").get<std::size_t>();
  c.projector_hidden = j.at("projector_hidden").get<std::size_t>();
  c.trunk_blocks = j.at("trunk_blocks").get<std::size_t>();
  c.chunk = j.at("chunk").get<std::size_t>();
  c.action_dim = j.at("action_dim").get<std::size_t>();
  c.health_conditioned = j.at("health_conditioned").get<bool>();
  if (c.action_dim != Action::kDim) throw std::invalid_argument("unsupported action_dim");
  return c;
}

nlohmann::json to_json(const PolicyCheckpoint& ckpt) {
  nlohmann::json j = nn::tensors_to_json(ckpt.params.tensors());
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(ckpt.params.config);
  j["norm_stats"] = to_json(ckpt.stats);
  const InputStandardizer& in = ckpt.params.input_norm;
  auto column = [](const Tensor& t) { return std::vector<double>(t.data(), t.data() + t.size()); };
  j["input_norm"] = {{"obs_shift", column(in.obs_shift)},
                     {"obs_scale", column(in.obs_scale)},
                     {"proprio_shift", column(in.proprio_shift)},
                     {"proprio_scale", column(in.proprio_scale)}};
  return j;
}

PolicyCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("not a policy checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  PolicyCheckpoint ckpt;
  ckpt.params = PolicyParams(policy_config_from_json(j.at("config")));
  ckpt.stats = norm_stats_from_json(j.at("norm_stats"));
  nn::tensors_from_json(j, ckpt.params.tensors());
  const auto& in = j.at("input_norm");
  InputStandardizer& norm = ckpt.params.input_norm;
  auto read = [&in](const char* key, Tensor& into) {
    const auto v = in.at(key).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != into.rows()) {
      throw std::runtime_error(std::string("input_norm.") + key + " has the wrong length");
    }
    into = Eigen::Map<const Eigen::VectorXd>(v.data(), into.rows());
  };
  read("obs_shift", norm.obs_shift);
  read("obs_scale", norm.obs_scale);
  read("proprio_shift", norm.proprio_shift);
  read("proprio_scale", norm.proprio_scale);
  return ckpt;
}

void save_checkpoint(const PolicyCheckpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(ckpt).dump() << '\n';
}

PolicyCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace faultarm
