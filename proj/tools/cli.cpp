#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "faultarm/arm.hpp"
#include "faultarm/episode.hpp"
#include "faultarm/evaluator.hpp"
#include "faultarm/expert.hpp"
#include "faultarm/policy.hpp"
#include "faultarm/random.hpp"
#include "faultarm/render.hpp"
#include "faultarm/teleop.hpp"
#include "faultarm/teleop_server.hpp"
#include "faultarm/trainer.hpp"

namespace faultarm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Thrown for problems the user can fix by changing arguments or config.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Remembers which JSON pointer each flag maps to so a config file can fill in
// whatever was not given on the command line.
class Bindings {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T& target, const std::string& pointer,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(flag, target, help)->capture_default_str();
    record(app, opt, pointer, [&target](const json& j) { target = j.get<T>(); });
    return opt;
  }

  template <class T>
  CLI::Option* add_list(CLI::App* app, const std::string& flag, std::vector<T>& target,
                        const std::string& pointer, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, target, help)->delimiter(',')->capture_default_str();
    record(app, opt, pointer, [&target](const json& j) { target = j.get<std::vector<T>>(); });
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& flag, bool& target,
                        const std::string& pointer, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, target, help);
    record(app, opt, pointer, [&target](const json& j) { target = j.get<bool>(); });
    return opt;
  }

  void check_keys(const json& j, const std::string& prefix = "") const {
    if (!j.is_object()) throw UsageError("config: expected an object at '" + prefix + "'");
    for (const auto& [key, value] : j.items()) {
      const std::string pointer = prefix + "/" + key;
      if (pointers_.contains(pointer)) continue;
      if (sections_.contains(pointer) && value.is_object()) {
        check_keys(value, pointer);
        continue;
      }
      throw UsageError("config: unknown key '" + pointer.substr(1) + "'");
    }
  }

  void apply(const json& file, const CLI::App* active) const {
    for (const auto& b : entries_) {
      if (b.app != active || b.option->count() > 0) continue;
      const json::json_pointer ptr(b.pointer);
      if (!file.contains(ptr)) continue;
      try {
        b.assign(file.at(ptr));
      } catch (const json::exception& e) {
        throw UsageError("config: bad value for '" + b.pointer.substr(1) + "': " + e.what());
      }
    }
  }

 private:
  struct Entry {
    const CLI::App* app;
    CLI::Option* option;
    std::string pointer;
    std::function<void(const json&)> assign;
  };

  void record(const CLI::App* app, CLI::Option* opt, const std::string& pointer,
              std::function<void(const json&)> assign) {
    pointers_.insert(pointer);
    const auto slash = pointer.find('/', 1);
    if (slash != std::string::npos) sections_.insert(pointer.substr(0, slash));
    entries_.push_back({app, opt, pointer, std::move(assign)});
  }

  std::vector<Entry> entries_;
  std::set<std::string> pointers_;
  std::set<std::string> sections_;
};

ArmModel load_scene(const RunConfig& cfg) {
  return cfg.scene.empty() ? ArmModel::desk_default() : load_arm_model(cfg.scene);
}

std::vector<int> all_tasks(const ArmModel& model) {
  std::vector<int> t;
  for (std::size_t i = 0; i < model.task_count(); ++i) t.push_back(static_cast<int>(i));
  return t;
}

std::vector<int> all_joints(const ArmModel& model) {
  std::vector<int> j;
  for (std::size_t i = 0; i < model.joints(); ++i) j.push_back(static_cast<int>(i));
  return j;
}

void check_levels(const std::vector<double>& levels) {
  for (double w : levels) {
    if (!(w >= 0.0 && w <= 1.0)) throw UsageError("weakness levels must lie in [0, 1]");
  }
}

void check_joints(const std::vector<int>& joints, const ArmModel& model) {
  for (int j : joints) {
    if (j < 0 || static_cast<std::size_t>(j) >= model.joints()) {
      throw UsageError("joint " + std::to_string(j) + " not in [0, " + std::to_string(model.joints()) + ")");
    }
  }
}

std::string level_tag(double w) {
  std::ostringstream os;
  os << w;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path resolve_checkpoint(const std::string& given) {
  const fs::path p(given);
  if (fs::is_regular_file(p)) return p;
  if (fs::is_regular_file(p.string() + ".json")) return p.string() + ".json";
  if (fs::is_directory(p) && fs::is_regular_file(p / "final.json")) return p / "final.json";
  throw std::runtime_error("no checkpoint at '" + given + "'");
}

fs::path resolve_matrix(const std::string& given) {
  const fs::path p(given);
  if (fs::is_directory(p)) return p / "matrix.json";
  return p;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// ---- subcommands ----

int cmd_collect(const RunConfig& cfg, std::ostream& out) {
  const ArmModel model = load_scene(cfg);
  const auto& c = cfg.collect;
  std::vector<int> tasks = parse_task_list(c.tasks);
  std::vector<int> joints = c.joints.empty() ? all_joints(model) : c.joints;
  check_joints(joints, model);
  check_levels(c.levels);
  const fs::path dir(c.out);
  fs::create_directories(dir);

  auto run = [&](std::vector<DegradationConfig> configs, std::size_t per, std::uint64_t stream) {
    CollectOptions o;
    o.tasks = tasks;
    o.configs = std::move(configs);
    o.per_config = per;
    o.seed = mix_seed(cfg.seed, stream);
    o.workers = cfg.workers;
    CollectSummary summary;
    auto episodes = collect_episodes(model, o, &summary);
    return std::make_pair(std::move(episodes), summary);
  };

  std::size_t total_eps = 0, total_steps_written = 0;
  auto emit = [&](const std::string& name, const std::vector<Episode>& eps, std::size_t attempted) {
    out << std::left << std::setw(12) << name << ' ' << eps.size() << '/' << attempted << " kept\n";
    if (eps.empty()) return;
    save(eps, dir / (name + ".jsonl"), model.joints(), model.task_count());
    total_eps += eps.size();
    total_steps_written += total_steps(eps);
  };

  if (c.healthy > 0) {
    auto [eps, summary] = run({DegradationConfig{}}, c.healthy, 0);
    emit("healthy", eps, summary.attempted);
  }
  if (c.per_cell > 0) {
    std::vector<DegradationConfig> grid;
    for (int j : joints)
      for (double w : c.levels) grid.push_back(DegradationConfig::single(static_cast<std::size_t>(j), w));
    auto [eps, summary] = run(grid, c.per_cell, 1);
    // Split back into one file per cell; episodes arrive grouped by config.
    std::size_t k = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      std::vector<Episode> cell;
      for (std::size_t n = 0; n < summary.kept_per_config[g].second; ++n) cell.push_back(std::move(eps[k++]));
      const auto& [joint, w] = *grid[g].assignments().begin();
      emit("j" + std::to_string(joint) + "_w" + level_tag(w), cell, c.per_cell);
    }
  }
  out << "wrote " << total_eps << " episodes (" << total_steps_written << " steps) to " << dir.string()
      << '\n';
  return 0;
}

int cmd_stats(const RunConfig& cfg, std::ostream& out) {
  const auto episodes = load_dataset(cfg.stats.data);
  const NormStats stats = compute_norm_stats(episodes);
  save_norm_stats(stats, cfg.stats.out);
  out << to_json(stats).dump(2) << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto& t = cfg.train;
  if (t.stats.empty()) throw UsageError("train needs --stats (run the stats subcommand first)");
  if (!fs::is_regular_file(t.stats)) throw std::runtime_error("stats file '" + t.stats + "' not found");
  const NormStats stats = load_norm_stats(t.stats);
  const auto episodes = load_dataset(t.data);
  if (episodes.empty() || episodes.front().steps.empty()) throw std::runtime_error("dataset is empty");

  TrainConfig tc;
  tc.mode = train_mode_from_string(t.mode);
  tc.steps = t.steps;
  tc.warmup_steps = t.warmup;
  tc.decay_step = t.decay_step;
  tc.optimizer.lr = t.lr;
  tc.optimizer.weight_decay = t.weight_decay;
  tc.batch = t.batch;
  tc.accumulation = t.accumulation;
  tc.checkpoint_every = t.checkpoint_every;
  tc.seed = cfg.seed;
  const StepRecord& first = episodes.front().steps.front();
  tc.policy.joints = first.health.size();
  tc.policy.tasks = first.observation.task_onehot.size();

  std::optional<PolicyParams> init;
  if (!t.init.empty()) init = load_checkpoint(resolve_checkpoint(t.init)).params;
  if (tc.mode == TrainMode::FrozenTrunk && !init) throw UsageError("frozen-trunk mode needs --init");

  const fs::path dir(t.out);
  fs::create_directories(dir);
  std::vector<TrainMetric> metrics;
  TrainHooks hooks;
  hooks.on_metric = [&](const TrainMetric& m) { metrics.push_back(m); };
  hooks.on_checkpoint = [&](std::int64_t step, const PolicyCheckpoint& ckpt) {
    std::ostringstream name;
    name << "step_" << std::setw(6) << std::setfill('0') << step << ".json";
    save_checkpoint(ckpt, dir / name.str());
  };
  const PolicyCheckpoint ckpt = train(episodes, stats, tc, init ? &*init : nullptr, hooks);
  save_checkpoint(ckpt, dir / "final.json");
  write_metrics_csv(metrics, dir / "metrics.csv");

  out << "mode " << t.mode << ", " << episodes.size() << " episodes, " << total_steps(episodes)
      << " steps, " << tc.steps << " optimizer steps\n";
  if (!metrics.empty()) {
    out << "loss " << metrics.front().loss << " -> " << metrics.back().loss << '\n';
  }
  out << "wrote " << (dir / "final.json").string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const ArmModel model = load_scene(cfg);
  const auto& e = cfg.eval;
  check_levels(e.levels);
  check_joints(e.joints, model);
  EvalOptions o;
  o.levels = e.levels;
  o.joints = e.joints;
  o.tasks = e.tasks.empty() ? all_tasks(model) : parse_task_list(e.tasks);
  o.episodes_per_task = e.episodes;
  o.include_healthy = !e.no_healthy;
  o.seed = cfg.seed;
  o.workers = cfg.workers;

  ControllerFactory factory;
  std::string label;
  if (e.expert) {
    if (!e.ckpt.empty()) throw UsageError("--expert and --ckpt are mutually exclusive");
    factory = [] { return std::make_unique<ExpertController>(); };
    label = "expert";
  } else {
    if (e.ckpt.empty()) throw UsageError("eval needs --ckpt or --expert");
    auto ckpt = std::make_shared<const PolicyCheckpoint>(load_checkpoint(resolve_checkpoint(e.ckpt)));
    if (ckpt->params.config.joints != model.joints() || ckpt->params.config.tasks != model.task_count()) {
      throw std::runtime_error("checkpoint was trained for a different scene layout");
    }
    label = ckpt->params.projector ? "health-conditioned" : "baseline";
    const std::size_t replan = e.replan_every;
    factory = [ckpt, replan] { return std::make_unique<PolicyController>(ckpt, replan); };
  }
  const EvalMatrix m = run_matrix(model, factory, o, label);
  const fs::path dir(e.out);
  write_text(dir / "matrix.csv", matrix_csv(m));
  write_text(dir / "matrix.md", matrix_markdown(m));
  write_text(dir / "per_task.csv", per_task_csv(m));
  write_text(dir / "matrix.json", to_json(m).dump(1) + "\n");
  out << matrix_markdown(m);
  return 0;
}

int cmd_report(const RunConfig& cfg, std::ostream& out) {
  const auto& r = cfg.report;
  if (r.baseline.empty() || r.ours.empty()) throw UsageError("report needs --baseline and --ours");
  const EvalMatrix base = eval_matrix_from_json(read_json(resolve_matrix(r.baseline)));
  const EvalMatrix ours = eval_matrix_from_json(read_json(resolve_matrix(r.ours)));
  const fs::path dir(r.out);
  write_text(dir / "comparison.csv", comparison_csv(base, ours));
  write_text(dir / "comparison.md", comparison_markdown(base, ours));
  out << comparison_markdown(base, ours);
  return 0;
}

int cmd_teleop(const RunConfig& cfg, std::ostream& out) {
  TeleopOptions o;
  o.rate_hz = cfg.teleop.rate;
  o.out_dir = cfg.teleop.out;
  o.seed = cfg.seed;
  o.task = cfg.teleop.task;
  TeleopSession session(load_scene(cfg), o);
  TeleopServer server(session, cfg.teleop.port, cfg.teleop.address);
  server.set_logger([&out](const std::string& line) { out << line << std::endl; });
  server.stop_on_signals();
  out << "listening on ws://" << cfg.teleop.address << ':' << server.port() << " at " << o.rate_hz
      << " Hz" << std::endl;
  server.run();
  return 0;
}

int cmd_replay(const RunConfig& cfg, std::ostream& out) {
  const ArmModel model = load_scene(cfg);
  const auto episodes = load_dataset(cfg.replay.data);
  std::size_t mismatches = 0, successes = 0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = episodes[i];
    const ReplayCheck check = replay_episode(model, ep);
    successes += check.success ? 1 : 0;
    if (!check.success_matches || !check.observations_match) {
      ++mismatches;
      out << "episode " << i << " (task " << ep.meta.task_id << ", seed " << ep.meta.seed << ", "
          << ep.meta.degradation.label() << "): stored success=" << ep.meta.success
          << " replayed=" << check.success
          << (check.observations_match ? "" : ", observations diverge") << '\n';
    }
  }
  out << "replayed " << episodes.size() << " episodes, " << successes << " successful, " << mismatches
      << " mismatches\n";
  if (mismatches > 0) throw std::runtime_error(std::to_string(mismatches) + " episodes did not replay");
  return 0;
}

int cmd_render(const RunConfig& cfg, std::ostream& out) {
  const auto& r = cfg.render;
  if (r.data.empty()) throw UsageError("render needs --data");
  if (r.every == 0) throw UsageError("--every must be positive");
  const ArmModel model = load_scene(cfg);
  const auto episodes = load_dataset(r.data);
  if (r.episode >= episodes.size()) {
    throw UsageError("episode " + std::to_string(r.episode) + " not in dataset of " +
                     std::to_string(episodes.size()));
  }
  const Episode& ep = episodes[r.episode];
  const HealthVector health = to_health_vector(ep.meta.degradation, model.joints());
  ArmState state = reset(model, ep.meta.task_id, ep.meta.seed, health);
  const fs::path dir(r.out);
  fs::create_directories(dir);
  std::size_t frames = 0;
  auto frame = [&](std::size_t t) {
    std::ostringstream name;
    name << "frame_" << std::setw(4) << std::setfill('0') << t << ".svg";
    write_text(dir / name.str(), render_svg(model, state, health));
    ++frames;
  };
  for (std::size_t t = 0; t < ep.steps.size(); ++t) {
    if (t % r.every == 0) frame(t);
    state = osc_step(model, state, ep.steps[t].action, health);
  }
  frame(ep.steps.size());
  out << "wrote " << frames << " frames to " << dir.string() << '\n';
  return 0;
}

int cmd_describe(const RunConfig& cfg, std::ostream& out) {
  const auto& d = cfg.describe;
  if (!d.projector.empty()) {
    if (d.projector.size() != 3) throw UsageError("--projector takes J,H,D");
    out << "projector J=" << d.projector[0] << " H=" << d.projector[1] << " D=" << d.projector[2]
        << ": " << projector_parameter_count(d.projector[0], d.projector[1], d.projector[2])
        << " parameters\n";
    return 0;
  }
  PolicyParams params;
  if (!d.ckpt.empty()) {
    params = load_checkpoint(resolve_checkpoint(d.ckpt)).params;
  } else {
    PolicyConfig pc;
    const ArmModel model = load_scene(cfg);
    pc.joints = model.joints();
    pc.tasks = model.task_count();
    pc.health_conditioned = true;
    params = PolicyParams(pc);
  }
  const ParameterCounts c = count_parameters(params);
  const auto row = [&](const char* name, std::size_t n) {
    out << std::left << std::setw(16) << name << std::right << std::setw(10) << n << '\n';
  };
  row("obs_embed", c.obs_embed);
  row("proprio_embed", c.proprio_embed);
  row("action_queries", c.action_queries);
  row("trunk", c.trunk);
  row("head", c.head);
  row("projector", c.projector);
  row("total", c.total());
  return 0;
}

}  // namespace

std::vector<int> parse_task_list(const std::string& text) {
  std::vector<int> tasks;
  auto to_int = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw UsageError("bad task list '" + text + "'");
    return v;
  };
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = to_int(text.substr(0, dots));
    const int hi = to_int(text.substr(dots + 2));
    if (lo >= hi) throw UsageError("empty task range '" + text + "'");
    for (int t = lo; t < hi; ++t) tasks.push_back(t);
    return tasks;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) tasks.push_back(to_int(item));
  if (tasks.empty()) throw UsageError("empty task list");
  return tasks;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  Bindings bind;
  std::string config_path;

  CLI::App app{"Malfunction-aware arm policy lab: data collection, training, evaluation, teleop"};
  app.name("faultarm");
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub, bool uses_scene) {
    sub->add_option("--config", config_path, "JSON run config; flags override it");
    bind.add(sub, "--seed", cfg.seed, "/seed", "Seed for everything random (env FAULTARM_SEED)");
    bind.add(sub, "--workers", cfg.workers, "/workers", "Upper bound on worker threads")
        ->check(CLI::PositiveNumber);
    if (uses_scene) bind.add(sub, "--scene", cfg.scene, "/scene", "Scene JSON (default: built-in desk)");
  };

  auto* collect = app.add_subcommand("collect-expert", "Record scripted expert episodes");
  common(collect, true);
  bind.add(collect, "--tasks", cfg.collect.tasks, "/collect/tasks", "Tasks, a..b (exclusive) or a,b,c");
  bind.add_list(collect, "--levels", cfg.collect.levels, "/collect/levels", "Weakness levels");
  bind.add_list(collect, "--joints", cfg.collect.joints, "/collect/joints", "Joints to degrade (default all)");
  bind.add(collect, "--per-cell", cfg.collect.per_cell, "/collect/per_cell", "Attempts per (joint, level)");
  bind.add(collect, "--healthy", cfg.collect.healthy, "/collect/healthy", "Healthy attempts");
  bind.add(collect, "--out", cfg.collect.out, "/collect/out", "Output directory");

  auto* stats = app.add_subcommand("stats", "Compute action normalization statistics");
  common(stats, false);
  bind.add(stats, "--data", cfg.stats.data, "/stats/data", "Dataset file or directory");
  bind.add(stats, "--out", cfg.stats.out, "/stats/out", "Output JSON");

  auto* train_cmd = app.add_subcommand("train", "Behavior-cloning training");
  common(train_cmd, false);
  bind.add(train_cmd, "--mode", cfg.train.mode, "/train/mode", "baseline | health | frozen-trunk")
      ->check(CLI::IsMember({"baseline", "health", "frozen-trunk"}));
  bind.add(train_cmd, "--data", cfg.train.data, "/train/data", "Dataset file or directory");
  bind.add(train_cmd, "--stats", cfg.train.stats, "/train/stats", "Stats JSON from the stats subcommand");
  bind.add(train_cmd, "--init", cfg.train.init, "/train/init", "Starting checkpoint");
  bind.add(train_cmd, "--steps", cfg.train.steps, "/train/steps", "Optimizer steps")->check(CLI::NonNegativeNumber);
  bind.add(train_cmd, "--warmup", cfg.train.warmup, "/train/warmup", "Linear warmup steps");
  bind.add(train_cmd, "--decay-step", cfg.train.decay_step, "/train/decay_step", "Step of the 10x LR drop");
  bind.add(train_cmd, "--lr", cfg.train.lr, "/train/lr", "Base learning rate");
  bind.add(train_cmd, "--weight-decay", cfg.train.weight_decay, "/train/weight_decay", "AdamW decay");
  bind.add(train_cmd, "--batch", cfg.train.batch, "/train/batch", "Micro-batch size")->check(CLI::PositiveNumber);
  bind.add(train_cmd, "--accumulation", cfg.train.accumulation, "/train/accumulation",
           "Micro-batches per optimizer step")
      ->check(CLI::PositiveNumber);
  bind.add(train_cmd, "--checkpoint-every", cfg.train.checkpoint_every, "/train/checkpoint_every",
           "Periodic checkpoint interval (0 = off)");
  bind.add(train_cmd, "--out", cfg.train.out, "/train/out", "Checkpoint directory");

  auto* eval_cmd = app.add_subcommand("eval", "Success-rate matrix over joints x weakness levels");
  common(eval_cmd, true);
  bind.add(eval_cmd, "--ckpt", cfg.eval.ckpt, "/eval/ckpt", "Checkpoint file or directory");
  bind.add_flag(eval_cmd, "--expert", cfg.eval.expert, "/eval/expert", "Evaluate the scripted expert");
  bind.add_list(eval_cmd, "--levels", cfg.eval.levels, "/eval/levels", "Weakness levels");
  bind.add_list(eval_cmd, "--joints", cfg.eval.joints, "/eval/joints", "Joints (default all)");
  bind.add(eval_cmd, "--tasks", cfg.eval.tasks, "/eval/tasks", "Tasks (default all)");
  bind.add(eval_cmd, "--episodes", cfg.eval.episodes, "/eval/episodes", "Episodes per task per cell")
      ->check(CLI::PositiveNumber);
  bind.add(eval_cmd, "--replan-every", cfg.eval.replan_every, "/eval/replan_every",
           "Actions executed from each predicted chunk")
      ->check(CLI::PositiveNumber);
  bind.add_flag(eval_cmd, "--no-healthy", cfg.eval.no_healthy, "/eval/no_healthy", "Skip the healthy cell");
  bind.add(eval_cmd, "--out", cfg.eval.out, "/eval/out", "Report directory");

  auto* report = app.add_subcommand("report", "Baseline vs conditioned comparison tables");
  common(report, false);
  bind.add(report, "--baseline", cfg.report.baseline, "/report/baseline", "Baseline eval dir or matrix.json");
  bind.add(report, "--ours", cfg.report.ours, "/report/ours", "Conditioned eval dir or matrix.json");
  bind.add(report, "--out", cfg.report.out, "/report/out", "Output directory");

  auto* teleop = app.add_subcommand("teleop-serve", "WebSocket teleoperation server");
  common(teleop, true);
  bind.add(teleop, "--port", cfg.teleop.port, "/teleop/port", "TCP port (0 = any free port)");
  bind.add(teleop, "--address", cfg.teleop.address, "/teleop/address", "Bind address");
  bind.add(teleop, "--rate", cfg.teleop.rate, "/teleop/rate", "Tick rate in Hz")->check(CLI::PositiveNumber);
  bind.add(teleop, "--task", cfg.teleop.task, "/teleop/task", "Initial task");
  bind.add(teleop, "--out", cfg.teleop.out, "/teleop/out", "Directory for saved episodes");

  auto* replay = app.add_subcommand("replay", "Re-simulate stored episodes and check success flags");
  common(replay, true);
  bind.add(replay, "--data", cfg.replay.data, "/replay/data", "Dataset file or directory");

  auto* render = app.add_subcommand("render", "Write SVG frames of a stored episode");
  common(render, true);
  bind.add(render, "--data", cfg.render.data, "/render/data", "Dataset file or directory");
  bind.add(render, "--episode", cfg.render.episode, "/render/episode", "Episode index");
  bind.add(render, "--every", cfg.render.every, "/render/every", "Frame interval in ticks");
  bind.add(render, "--out", cfg.render.out, "/render/out", "Frame directory");

  auto* describe = app.add_subcommand("describe", "Per-component parameter counts");
  common(describe, true);
  bind.add(describe, "--ckpt", cfg.describe.ckpt, "/describe/ckpt", "Checkpoint (default: fresh model)");
  bind.add_list(describe, "--projector", cfg.describe.projector, "/describe/projector",
                "Count a projector with dims J,H,D instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    const std::string where = sub == &app ? "faultarm" : "faultarm " + sub->get_name();
    err << "faultarm: error: usage: " << e.what() << " (see '" << where << " --help')\n";
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  const std::string name = active->get_name();
  try {
    if (!config_path.empty()) {
      const json file = read_json(config_path);
      bind.check_keys(file);
      bind.apply(file, active);
    }
    const bool seed_from_file =
        !config_path.empty() && read_json(config_path).contains("seed");
    if (active->get_option("--seed")->count() == 0 && !seed_from_file) {
      if (const char* env = std::getenv("FAULTARM_SEED")) {
        try {
          cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
          throw UsageError(std::string("FAULTARM_SEED is not an unsigned integer: '") + env + "'");
        }
      }
    }
    if (cfg.workers == 0) throw UsageError("--workers must be at least 1");

    if (name == "collect-expert") return cmd_collect(cfg, out);
    if (name == "stats") return cmd_stats(cfg, out);
    if (name == "train") return cmd_train(cfg, out);
    if (name == "eval") return cmd_eval(cfg, out);
    if (name == "report") return cmd_report(cfg, out);
    if (name == "teleop-serve") return cmd_teleop(cfg, out);
    if (name == "replay") return cmd_replay(cfg, out);
    if (name == "render") return cmd_render(cfg, out);
    if (name == "describe") return cmd_describe(cfg, out);
    throw UsageError("unknown subcommand " + name);
  } catch (const UsageError& e) {
    err << "faultarm: error: usage: " << name << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "faultarm: error: runtime: " << name << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace faultarm::cli
