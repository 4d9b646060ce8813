// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `acceptance <name>...` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cli.hpp"
#include "faultarm/evaluator.hpp"
#include "faultarm/expert.hpp"
#include "faultarm/trainer.hpp"
#include "support.hpp"

using namespace faultarm;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kZeroInitTolerance = 1e-12;
constexpr std::size_t kZeroInitPairs = 1000;
constexpr double kZeroInitSeconds = 10.0;

constexpr double kGradientStep = 1e-5;
constexpr double kGradientTolerance = 1e-4;
constexpr std::size_t kGradientConfigs = 100;
constexpr double kGradientSeconds = 60.0;

constexpr std::size_t kFuzzSteps = 10000;

constexpr std::size_t kExpertHealthyEpisodes = 100;
constexpr double kExpertHealthyRate = 0.90;
constexpr double kExpertDistalRate = 0.50;
constexpr double kExpertSeconds = 120.0;

constexpr double kHealthyGapPoints = 5.0;
constexpr double kBaselineCollapse = 0.50;
constexpr double kRecoveryPoints = 20.0;
constexpr double kLockedRate = 0.02;  // "about zero"
constexpr std::size_t kTrendEpisodesPerTask = 50;
constexpr double kTrendSeconds = 30.0 * 60.0;

constexpr double kNormalizeTolerance = 1e-9;

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "faultarm_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "faultarm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

HealthVector random_health(Rng& rng, std::size_t joints) {
  std::vector<double> h(joints);
  for (double& v : h) {
    const double u = rng.uniform();
    v = u < 0.15 ? 0.0 : (u < 0.35 ? 1.0 : rng.uniform());
  }
  return HealthVector(h);
}

// ---- criteria ----

Outcome zero_init_preservation() {
  const auto t0 = std::chrono::steady_clock::now();
  const ArmModel m = ArmModel::desk_default();
  PolicyConfig c;
  Rng rng(101);
  // Stand-in for a trained baseline: every weight non-zero.
  const PolicyParams baseline = testing::random_params(c, rng, 0.3);
  const PolicyParams conditioned = with_projector(baseline, 7);
  double worst = 0.0;
  for (std::size_t i = 0; i < kZeroInitPairs; ++i) {
    const HealthVector h = random_health(rng, m.joints());
    ArmState s = reset(m, static_cast<int>(rng.index(m.task_count())), rng.next_u64(), h);
    for (double& q : s.q) q += rng.uniform(-0.3, 0.3);
    s.gripper = rng.uniform();
    const Observation o = observe(m, s);
    const Tensor a = policy_forward(baseline, o, h);
    const Tensor b = policy_forward(conditioned, o, h);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst <= kZeroInitTolerance && secs < kZeroInitSeconds,
          fmt("max |conditioned - baseline| = %.3g over %zu pairs (<= %.0e), %.1f s (< %.0f s)", worst,
              kZeroInitPairs, kZeroInitTolerance, secs, kZeroInitSeconds)};
}

Outcome gradient_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  double worst = 0.0;
  std::size_t entries = 0;
  for (std::size_t k = 0; k < kGradientConfigs; ++k) {
    PolicyConfig c;
    c.joints = 1 + rng.index(4);
    c.tasks = 1 + rng.index(3);
    c.embed = 2 + rng.index(5);
    c.projector_hidden = 2 + rng.index(5);
    c.trunk_blocks = rng.index(3);
    c.chunk = 1 + rng.index(3);
    c.health_conditioned = k % 2 == 0;
    const PolicyParams p = testing::random_params(c, rng, 0.6);
    const std::size_t batch = 1 + rng.index(3);
    const PolicyInput in = testing::random_input(c, batch, rng);
    Tensor target(static_cast<Eigen::Index>(c.output_dim()), static_cast<Eigen::Index>(batch));
    testing::fill_uniform(target, rng, 1.0);
    const auto report = testing::check_policy_gradients(p, in, target, kGradientStep);
    worst = std::max(worst, report.max_relative_error);
    entries += report.entries;

    // The loss gradient with respect to the prediction itself.
    Tensor pred(target.rows(), target.cols());
    testing::fill_uniform(pred, rng, 1.0);
    const Tensor g = nn::l1_loss_grad(pred, target);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      Tensor up = pred, down = pred;
      up.data()[i] += kGradientStep;
      down.data()[i] -= kGradientStep;
      const double numeric = (nn::l1_loss(up, target) - nn::l1_loss(down, target)) / (2 * kGradientStep);
      worst = std::max(worst, testing::relative_error(g.data()[i], numeric));
      ++entries;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kGradientTolerance && secs < kGradientSeconds,
          fmt("max relative error %.2e over %zu configs, %zu entries (<= %.0e), %.1f s (< %.0f s)", worst,
              kGradientConfigs, entries, kGradientTolerance, secs, kGradientSeconds)};
}

Outcome degradation_semantics() {
  const ArmModel m = ArmModel::desk_default();
  Rng rng(303);
  std::size_t limit_violations = 0, locked_moves = 0, healthy_mismatches = 0;
  std::size_t steps = 0;
  while (steps < kFuzzSteps) {
    const HealthVector h = random_health(rng, m.joints());
    const auto limits = degraded_limits(m, h);
    ArmState degraded = reset(m, static_cast<int>(rng.index(m.task_count())), rng.next_u64(), h);
    ArmState healthy = degraded;
    ArmState nominal = degraded;
    const HealthVector full = HealthVector::healthy(m.joints());
    for (int t = 0; t < 100 && steps < kFuzzSteps; ++t, ++steps) {
      // Up to 3x the action bounds so clamping is exercised too.
      const Action a{rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.6, 0.6),
                     rng.uniform(-3.0, 3.0)};
      const ArmState next = osc_step(m, degraded, a, h);
      for (std::size_t j = 0; j < m.joints(); ++j) {
        if (!limits[j].contains(next.q[j])) ++limit_violations;
        if (h[j] == 0.0 && next.q[j] != degraded.q[j]) ++locked_moves;
      }
      degraded = next;
      healthy = osc_step(m, healthy, a, full);
      nominal = osc_step(m, nominal, a);
      if (!(healthy == nominal)) ++healthy_mismatches;
    }
  }
  return {limit_violations == 0 && locked_moves == 0 && healthy_mismatches == 0,
          fmt("%zu fuzz steps: %zu limit violations, %zu locked-joint moves, %zu h=1 vs nominal "
              "mismatches",
              steps, limit_violations, locked_moves, healthy_mismatches)};
}

Outcome expert_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  const ArmModel m = ArmModel::desk_default();
  auto run = [&](const DegradationConfig& d, std::uint64_t seed) {
    CollectOptions o;
    o.tasks = {0, 1, 2, 3};
    o.configs = {d};
    o.per_config = kExpertHealthyEpisodes;
    o.seed = seed;
    o.workers = workers();
    CollectSummary s;
    const auto eps = collect_episodes(m, o, &s);
    return std::make_pair(s.kept, eps);
  };
  const auto [healthy, healthy_eps] = run(DegradationConfig{}, 404);
  const auto [again, again_eps] = run(DegradationConfig{}, 404);
  const std::size_t distal = m.joints() - 1;
  const auto [weak, weak_eps] = run(DegradationConfig::single(distal, 0.5), 405);
  const double healthy_rate = static_cast<double>(healthy) / kExpertHealthyEpisodes;
  const double weak_rate = static_cast<double>(weak) / kExpertHealthyEpisodes;
  const bool deterministic = healthy_eps == again_eps;
  const double secs = seconds_since(t0);
  return {healthy_rate >= kExpertHealthyRate && weak_rate >= kExpertDistalRate && deterministic &&
              secs < kExpertSeconds,
          fmt("healthy %.1f%% (>= %.0f%%), j%zu w=0.5 %.1f%% (>= %.0f%%), deterministic=%s, %.1f s",
              100 * healthy_rate, 100 * kExpertHealthyRate, distal, 100 * weak_rate,
              100 * kExpertDistalRate, deterministic ? "yes" : "no", secs)};
}

Outcome trend_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const ArmModel m = ArmModel::desk_default();
  const std::vector<int> tasks{0, 1, 2, 3};
  const std::vector<double> levels{0.3, 0.5, 0.7, 0.9};
  const int shoulder = 1;

  CollectOptions healthy_opts;
  healthy_opts.tasks = tasks;
  healthy_opts.configs = {DegradationConfig{}};
  healthy_opts.per_config = 800;
  healthy_opts.seed = 1;
  healthy_opts.workers = workers();
  const auto healthy = collect_episodes(m, healthy_opts);

  CollectOptions degraded_opts = healthy_opts;
  degraded_opts.configs = single_joint_grid(m.joints(), levels);
  degraded_opts.per_config = 48;
  degraded_opts.seed = 2;
  std::vector<Episode> mixed = collect_episodes(m, degraded_opts);
  mixed.insert(mixed.end(), healthy.begin(), healthy.begin() + 200);

  TrainConfig tc;
  tc.steps = 30000;
  tc.decay_step = 20000;
  tc.seed = 7;
  tc.checkpoint_every = 0;
  tc.mode = TrainMode::Baseline;
  const auto baseline = std::make_shared<const PolicyCheckpoint>(
      train(healthy, compute_norm_stats(healthy), tc));
  tc.mode = TrainMode::Health;
  const auto ours = std::make_shared<const PolicyCheckpoint>(train(mixed, compute_norm_stats(mixed), tc));

  EvalOptions eo;
  eo.tasks = tasks;
  eo.episodes_per_task = kTrendEpisodesPerTask;
  eo.seed = 99;
  eo.workers = workers();
  auto rate = [&](const std::shared_ptr<const PolicyCheckpoint>& ck, int joint, double w) {
    const ControllerFactory f = [ck] { return std::make_unique<PolicyController>(ck, 8); };
    return 100.0 * run_cell(m, f, joint, w, eo).total.rate();
  };

  const double base_healthy = rate(baseline, -1, 0.0), ours_healthy = rate(ours, -1, 0.0);
  const bool a = std::abs(ours_healthy - base_healthy) <= kHealthyGapPoints;

  // (b) at the mildest moderate level where the baseline has collapsed.
  bool b = false;
  std::string b_text = "baseline never dropped below 50% at w<=0.7";
  for (double w : {0.3, 0.5, 0.7}) {
    const double base = rate(baseline, shoulder, w);
    if (base >= 100.0 * kBaselineCollapse) continue;
    const double mine = rate(ours, shoulder, w);
    b = mine - base >= kRecoveryPoints;
    b_text = fmt("j%d w=%.1f %.1f -> %.1f", shoulder, w, base, mine);
    break;
  }

  const double base_locked = rate(baseline, shoulder, 1.0), ours_locked = rate(ours, shoulder, 1.0);
  const bool c = base_locked <= 100.0 * kLockedRate && ours_locked <= 100.0 * kLockedRate;

  const double secs = seconds_since(t0);
  return {a && b && c && secs <= kTrendSeconds,
          fmt("(a) healthy %.1f vs %.1f %s; (b) %s %s; (c) j%d w=1.0 %.1f / %.1f %s; %zu eps/cell, %.0f s",
              base_healthy, ours_healthy, a ? "ok" : "FAIL", b_text.c_str(), b ? "ok" : "FAIL", shoulder,
              base_locked, ours_locked, c ? "ok" : "FAIL", tasks.size() * kTrendEpisodesPerTask, secs)};
}

Outcome normalization() {
  const ArmModel m = ArmModel::desk_default();
  std::vector<Episode> eps;
  for (int t = 0; t < 4; ++t) eps.push_back(run_expert_episode(m, t, 11, DegradationConfig::single(2, 0.3)));
  const NormStats stats = compute_norm_stats(eps);
  Rng rng(606);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    std::array<double, Action::kDim> a{};
    for (std::size_t d = 0; d < Action::kDim; ++d) {
      a[d] = stats.normalized[d] ? rng.uniform(stats.q_low[d], stats.q_high[d]) : rng.uniform(-1, 1);
    }
    const Action in = Action::from_array(a);
    const auto back = denormalize(normalize(in, stats), stats).as_array();
    for (std::size_t d = 0; d < Action::kDim; ++d) worst = std::max(worst, std::abs(back[d] - a[d]));
  }

  // Sorted-array interpolation oracle on integer grids.
  std::size_t mismatches = 0, checks = 0;
  for (int n : {1, 2, 3, 10, 100, 101, 1000}) {
    std::vector<double> v;
    for (int i = n; i >= 1; --i) v.push_back(i);
    for (double q : {0.0, 0.01, 0.05, 0.5, 0.95, 0.99, 1.0}) {
      const double pos = q * (n - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min<std::size_t>(lo + 1, static_cast<std::size_t>(n - 1));
      const double lo_v = static_cast<double>(lo + 1), hi_v = static_cast<double>(hi + 1);
      const double expected = lo_v + (pos - static_cast<double>(lo)) * (hi_v - lo_v);
      if (quantile(v, q) != expected) ++mismatches;
      ++checks;
    }
  }
  std::vector<double> hundred;
  for (int i = 1; i <= 100; ++i) hundred.push_back(i);
  const double q99 = quantile(hundred, 0.99);
  const bool q99_ok = std::abs(q99 - 99.01) < 1e-12;
  return {worst <= kNormalizeTolerance && mismatches == 0 && q99_ok,
          fmt("round trip max error %.2e (<= %.0e); quantile oracle %zu/%zu exact; 1..100 q99 = %.10g",
              worst, kNormalizeTolerance, checks - mismatches, checks, q99)};
}

Outcome persistence() {
  const fs::path dir = scratch_dir("persistence");
  if (cli({"collect-expert", "--out", (dir / "data").string(), "--workers", std::to_string(workers())}) != 0) {
    return {false, "collect-expert failed"};
  }
  const auto eps = load_dataset(dir / "data");
  save(eps, dir / "copy.jsonl", 4, 4);
  const bool round_trip = load(dir / "copy.jsonl") == eps;
  const ArmModel m = ArmModel::desk_default();
  std::size_t confirmed = 0;
  for (const auto& ep : eps) {
    const ReplayCheck r = replay_episode(m, ep);
    if (r.success_matches && r.observations_match) ++confirmed;
  }
  const bool replay_cli = cli({"replay", "--data", (dir / "data").string()}) == 0;
  return {round_trip && confirmed == eps.size() && replay_cli && !eps.empty(),
          fmt("%zu episodes in the default dataset; round trip %s; replay confirmed %zu/%zu; replay "
              "command %s",
              eps.size(), round_trip ? "equal" : "DIFFERS", confirmed, eps.size(),
              replay_cli ? "exit 0" : "failed")};
}

Outcome parameter_accounting() {
  const std::size_t wide = projector_parameter_count(7, 896, 896);
  PolicyConfig c;
  c.health_conditioned = true;
  const std::size_t desk = count_parameters(PolicyParams(c)).projector;
  return {wide == 810880 && desk == 4480,
          fmt("projector J=7 H=896 D=896: %zu (810880); desk J=4 H=64 D=64: %zu (4480)", wide, desk)};
}

Outcome determinism() {
  auto pipeline = [](const fs::path& dir, std::size_t w) {
    const std::string d = dir.string(), ws = std::to_string(w);
    return cli({"collect-expert", "--seed", "31", "--workers", ws, "--healthy", "2", "--per-cell", "0",
                "--out", d + "/data"}) == 0 &&
           cli({"stats", "--data", d + "/data", "--out", d + "/stats.json"}) == 0 &&
           cli({"train", "--seed", "31", "--data", d + "/data", "--stats", d + "/stats.json", "--steps", "50",
                "--checkpoint-every", "25", "--out", d + "/ckpt"}) == 0 &&
           cli({"eval", "--seed", "31", "--workers", ws, "--ckpt", d + "/ckpt", "--joints", "1", "--levels",
                "0.5", "--episodes", "2", "--no-healthy", "--out", d + "/report"}) == 0;
  };
  const fs::path a = scratch_dir("determinism_a"), b = scratch_dir("determinism_b");
  if (!pipeline(a, 1) || !pipeline(b, workers() > 1 ? workers() : 2)) return {false, "pipeline failed"};
  std::size_t compared = 0, differing = 0;
  for (const auto& rel : {"data/healthy.jsonl", "stats.json", "ckpt/step_000025.json", "ckpt/final.json",
                          "ckpt/metrics.csv", "report/matrix.csv", "report/matrix.md", "report/per_task.csv",
                          "report/matrix.json"}) {
    ++compared;
    const std::string x = slurp(a / rel), y = slurp(b / rel);
    if (x.empty() || x != y) ++differing;
  }
  return {differing == 0, fmt("%zu/%zu artifacts byte-identical across two runs (workers 1 vs %zu)",
                              compared - differing, compared, workers() > 1 ? workers() : 2)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"zero-init-preservation", zero_init_preservation},
      {"gradient-exactness", gradient_exactness},
      {"degradation-semantics", degradation_semantics},
      {"expert-quality-gate", expert_quality},
      {"trend-reproduction", trend_reproduction},
      {"normalization", normalization},
      {"persistence", persistence},
      {"parameter-accounting", parameter_accounting},
      {"determinism", determinism},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
