#include <doctest.h>

#include <filesystem>

#include "faultarm/expert.hpp"
#include "faultarm/policy.hpp"
#include "support.hpp"

using namespace faultarm;
using faultarm::testing::random_input;
using faultarm::testing::random_params;

namespace {

PolicyConfig small_config(bool conditioned) {
  PolicyConfig c;
  c.joints = 3;
  c.tasks = 2;
  c.embed = 5;
  c.projector_hidden = 6;
  c.trunk_blocks = 2;
  c.chunk = 2;
  c.health_conditioned = conditioned;
  return c;
}

}  // namespace

TEST_CASE("fresh projector outputs zero for any health") {
  PolicyConfig c;
  c.health_conditioned = true;
  const PolicyParams p = PolicyParams::initialize(c, 1);
  REQUIRE(p.projector);
  CHECK_FALSE(p.projector->layer1.weight.isZero());
  for (const auto& h : {HealthVector({1, 1, 1, 1}), HealthVector({0.2, 0.0, 1.0, 0.7})}) {
    for (double v : health_projector_forward(*p.projector, h)) CHECK(v == 0.0);
  }
}

TEST_CASE("projector with zero first layer outputs zero") {
  HealthProjectorParams proj(4, 4, 4);
  proj.layer2.weight = Tensor::Identity(4, 4);
  for (double v : health_projector_forward(proj, HealthVector({0.5, 0.1, 1, 0}))) CHECK(v == 0.0);
}

TEST_CASE("projector matches explicit loops") {
  Rng rng(21);
  HealthProjectorParams proj(4, 6, 5);
  faultarm::testing::fill_uniform(proj.layer1.weight, rng, 1.0);
  faultarm::testing::fill_uniform(proj.layer1.bias, rng, 1.0);
  faultarm::testing::fill_uniform(proj.layer2.weight, rng, 1.0);
  faultarm::testing::fill_uniform(proj.layer2.bias, rng, 1.0);
  const std::vector<double> h{1, 0.3, 1, 1};
  std::vector<double> hidden(6), expected(5);
  for (int k = 0; k < 6; ++k) {
    double s = proj.layer1.bias(k, 0);
    for (int j = 0; j < 4; ++j) s += proj.layer1.weight(k, j) * h[static_cast<std::size_t>(j)];
    hidden[static_cast<std::size_t>(k)] = 0.5 * s * (1 + std::tanh(std::sqrt(2 / M_PI) * (s + 0.044715 * s * s * s)));
  }
  for (int d = 0; d < 5; ++d) {
    double s = proj.layer2.bias(d, 0);
    for (int k = 0; k < 6; ++k) s += proj.layer2.weight(d, k) * hidden[static_cast<std::size_t>(k)];
    expected[static_cast<std::size_t>(d)] = s;
  }
  const auto got = health_projector_forward(proj, HealthVector(h));
  for (std::size_t d = 0; d < 5; ++d) CHECK(got[d] == doctest::Approx(expected[d]).epsilon(1e-13));
}

TEST_CASE("conditioned policy at init equals the baseline on shared weights") {
  Rng rng(5);
  PolicyConfig c;
  PolicyParams base = random_params(c, rng);
  const PolicyParams cond = with_projector(base, 9);
  REQUIRE(cond.projector);
  const PolicyInput in = random_input(c, 32, rng);
  const Tensor diff = policy_forward(base, in) - policy_forward(cond, in);
  CHECK(diff.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(without_projector(cond).projector == std::nullopt);
}

TEST_CASE("output depends on health only once the projector output layer is nonzero") {
  Rng rng(6);
  const PolicyConfig c = small_config(true);
  PolicyParams p = random_params(c, rng);
  p.projector->layer2.set_zero();
  PolicyInput in = random_input(c, 4, rng);
  const Tensor out = policy_forward(p, in);
  PolicyInput other = in;
  other.health.setConstant(0.1);
  CHECK((policy_forward(p, other) - out).isZero(0.0));

  faultarm::testing::fill_uniform(p.projector->layer2.weight, rng, 0.5);
  CHECK(policy_forward(p, other).cwiseNotEqual(policy_forward(p, in)).any());
}

TEST_CASE("analytic gradients match central differences on small nets") {
  Rng rng(8);
  for (bool conditioned : {false, true}) {
    const PolicyConfig c = small_config(conditioned);
    const PolicyParams p = random_params(c, rng);
    const PolicyInput in = random_input(c, 3, rng);
    Tensor target(static_cast<Eigen::Index>(c.output_dim()), 3);
    faultarm::testing::fill_uniform(target, rng, 1.0);
    const auto report = faultarm::testing::check_policy_gradients(p, in, target);
    CHECK(report.entries == count_parameters(p).total());
    CHECK(report.max_relative_error <= 1e-4);
  }
}

TEST_CASE("input standardizer centers and scales each feature") {
  const ArmModel m = ArmModel::desk_default();
  std::vector<Episode> eps;
  for (int t = 0; t < 4; ++t) eps.push_back(run_expert_episode(m, t, 3, DegradationConfig{}));
  PolicyConfig c;
  const InputStandardizer s = InputStandardizer::fit(eps, c);
  Tensor raw(static_cast<Eigen::Index>(c.obs_dim()), static_cast<Eigen::Index>(total_steps(eps)));
  Eigen::Index col = 0;
  for (const auto& ep : eps)
    for (const auto& st : ep.steps) raw.col(col++) = make_input(st.observation, st.health).obs.col(0);
  const Tensor z = s.obs(raw);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mean = z.row(i).mean();
    const double var = (z.row(i).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-9);
    if (s.obs_scale(i, 0) != 1.0) CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
  const InputStandardizer id = InputStandardizer::identity(c);
  CHECK(id.obs(raw) == raw);
  CHECK_THROWS(InputStandardizer::fit({}, c));
}

TEST_CASE("parameter accounting") {
  CHECK(projector_parameter_count(7, 896, 896) == 810880);
  CHECK(projector_parameter_count(4, 64, 64) == 4480);
  CHECK(projector_parameter_count(0, 0, 0) == 0);

  PolicyConfig c;
  c.health_conditioned = true;
  const PolicyParams p(c);
  const ParameterCounts n = count_parameters(p);
  CHECK(n.projector == 4480);
  std::size_t sum = 0;
  for (const auto& t : p.tensors()) sum += static_cast<std::size_t>(t.value->size());
  CHECK(n.total() == sum);
  CHECK(count_parameters(without_projector(p)).projector == 0);
}

TEST_CASE("single observation forward gives an action-by-chunk matrix") {
  const ArmModel m = ArmModel::desk_default();
  PolicyConfig c;
  Rng rng(3);
  const PolicyParams p = random_params(c, rng);
  const Observation o = observe(m, reset(m, 0, 1));
  const HealthVector h = HealthVector::healthy(4);
  const Tensor chunk = policy_forward(p, o, h);
  CHECK(chunk.rows() == 4);
  CHECK(chunk.cols() == 8);
  const Tensor flat = policy_forward(p, make_input(o, h));
  CHECK(chunk(1, 2) == flat(2 * 4 + 1, 0));
}

TEST_CASE("initialization is seeded and leaves head and queries at zero") {
  PolicyConfig c;
  const PolicyParams a = PolicyParams::initialize(c, 4), b = PolicyParams::initialize(c, 4);
  CHECK(a.trunk[0].inner.weight == b.trunk[0].inner.weight);
  CHECK(a.head.weight.isZero(0.0));
  CHECK(a.action_queries.isZero(0.0));
  CHECK_FALSE(PolicyParams::initialize(c, 5).obs_embed.weight == a.obs_embed.weight);
}

TEST_CASE("checkpoint round trip") {
  PolicyConfig c = small_config(true);
  Rng rng(2);
  const ArmModel m = ArmModel::desk_default();
  PolicyCheckpoint ck{random_params(c, rng),
                      compute_norm_stats({run_expert_episode(m, 0, 1, DegradationConfig{})})};
  const auto path = std::filesystem::temp_directory_path() / "faultarm_tests" / "ck.json";
  std::filesystem::create_directories(path.parent_path());
  save_checkpoint(ck, path);
  const PolicyCheckpoint back = load_checkpoint(path);
  CHECK(back.params.config == c);
  CHECK(back.params.input_norm == ck.params.input_norm);
  CHECK(back.stats == ck.stats);
  const auto x = back.params.tensors();
  const auto y = ck.params.tensors();
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(*x[i].value == *y[i].value);

  auto j = to_json(ck);
  j["format"] = "something-else";
  CHECK_THROWS(checkpoint_from_json(j));
}

TEST_CASE("relabeling tasks consistently leaves outputs unchanged") {
  PolicyConfig c = small_config(true);
  c.tasks = 3;
  Rng rng(31);
  const PolicyParams p = random_params(c, rng, 0.5);
  const PolicyInput in = random_input(c, 4, rng);

  // Task slots sit at the end of the observation features.
  const Eigen::Index first = static_cast<Eigen::Index>(c.obs_dim() - c.tasks);
  const std::vector<Eigen::Index> perm{2, 0, 1};
  PolicyParams q = p;
  PolicyInput moved = in;
  for (Eigen::Index k = 0; k < 3; ++k) {
    const Eigen::Index from = first + k, to = first + perm[static_cast<std::size_t>(k)];
    moved.obs.row(to) = in.obs.row(from);
    q.obs_embed.weight.col(to) = p.obs_embed.weight.col(from);
    q.input_norm.obs_shift(to) = p.input_norm.obs_shift(from);
    q.input_norm.obs_scale(to) = p.input_norm.obs_scale(from);
  }
  const Tensor a = policy_forward(p, in), b = policy_forward(q, moved);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a - policy_forward(q, in)).cwiseAbs().maxCoeff() > 1e-6);
}
