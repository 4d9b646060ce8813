#include "faultarm/evaluator.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "faultarm/parallel.hpp"
#include "faultarm/random.hpp"

namespace faultarm {

PolicyController::PolicyController(std::shared_ptr<const PolicyCheckpoint> checkpoint,
                                   std::size_t replan_every)
    : ckpt_(std::move(checkpoint)), replan_every_(replan_every) {
  if (!ckpt_) throw std::invalid_argument("PolicyController: null checkpoint");
  if (replan_every_ == 0) throw std::invalid_argument("replan interval must be at least 1");
}

void PolicyController::begin_episode() { pending_.clear(); }

Action PolicyController::act(const ArmModel& model, const ArmState& state,
                             const HealthVector& health) {
  if (pending_.empty()) {
    const Tensor chunk = policy_forward(ckpt_->params, observe(model, state), health);
    const auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(replan_every_), chunk.cols());
    for (Eigen::Index k = 0; k < n; ++k) {
      std::array<double, Action::kDim> a{};
      for (std::size_t d = 0; d < Action::kDim; ++d) a[d] = chunk(static_cast<Eigen::Index>(d), k);
      pending_.push_back(clamp_action(denormalize(a, ckpt_->stats), model.action_bounds));
    }
  }
  const Action a = pending_.front();
  pending_.pop_front();
  return a;
}

void ExpertController::begin_episode() {
  ctx_ = {};
  started_ = false;
}

Action ExpertController::act(const ArmModel& model, const ArmState& state,
                             const HealthVector& health) {
  if (started_) expert_update(model, state, ctx_, tuning_);
  started_ = true;
  return expert_action(model, state, health, ctx_, tuning_);
}

Episode rollout(const ArmModel& model, Controller& controller, int task_id, std::uint64_t seed,
                const DegradationConfig& degradation) {
  const HealthVector health = to_health_vector(degradation, model.joints());
  Episode ep;
  ep.meta = {task_id, seed, degradation, false, EpisodeSource::PolicyRollout};
  ArmState state = reset(model, task_id, seed, health);
  controller.begin_episode();
  for (int t = 0; t < model.horizon; ++t) {
    Observation obs = observe(model, state);
    const Action action = controller.act(model, state, health);
    const auto proprio = obs.proprio;
    ep.steps.push_back({std::move(obs), action, proprio, health});
    state = osc_step(model, state, action, health);
    if (is_success(model, state)) break;
  }
  ep.meta.success = is_success(model, state);
  return ep;
}

ReplayCheck replay_episode(const ArmModel& model, const Episode& episode) {
  constexpr double kObservationTolerance = 1e-12;
  const HealthVector health = to_health_vector(episode.meta.degradation, model.joints());
  ArmState state = reset(model, episode.meta.task_id, episode.meta.seed, health);
  ReplayCheck check;
  check.observations_match = true;
  for (const StepRecord& step : episode.steps) {
    const auto expected = observe(model, state).features();
    const auto stored = step.observation.features();
    if (expected.size() != stored.size()) {
      check.observations_match = false;
    } else {
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (std::abs(expected[i] - stored[i]) > kObservationTolerance) check.observations_match = false;
      }
    }
    state = osc_step(model, state, step.action, health);
  }
  check.success = is_success(model, state);
  check.success_matches = check.success == episode.meta.success;
  return check;
}

std::uint64_t eval_seed(std::uint64_t base, int task, std::size_t index) {
  return mix_seed(mix_seed(base, 0x6576616c + static_cast<std::uint64_t>(task)), index);
}

const EvalCell* EvalMatrix::healthy() const { return find(-1, 0.0); }

const EvalCell* EvalMatrix::find(int joint, double weakness) const {
  for (const auto& c : cells) {
    if (c.joint == joint && (joint < 0 || c.weakness == weakness)) return &c;
  }
  return nullptr;
}

double EvalMatrix::joint_average(int joint) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (double w : levels) {
    if (const EvalCell* c = find(joint, w)) {
      sum += c->total.rate();
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

namespace {

std::vector<int> resolve_tasks(const ArmModel& model, const EvalOptions& o) {
  std::vector<int> tasks = o.tasks;
  if (tasks.empty())
    for (std::size_t t = 0; t < model.task_count(); ++t) tasks.push_back(static_cast<int>(t));
  for (int t : tasks) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.task_count())
      throw std::out_of_range("task " + std::to_string(t) + " out of range");
  }
  return tasks;
}

DegradationConfig cell_degradation(int joint, double weakness) {
  return joint < 0 ? DegradationConfig{} : DegradationConfig::single(static_cast<std::size_t>(joint), weakness);
}

// Evaluates every (cell, task, episode) job in one pool so a single slow cell
// does not serialize the matrix.
std::vector<EvalCell> evaluate_cells(const ArmModel& model, const ControllerFactory& make_controller,
                                     std::vector<EvalCell> cells, const std::vector<int>& tasks,
                                     const EvalOptions& o) {
  for (auto& c : cells) {
    if (c.weakness < 0.0 || c.weakness > 1.0) throw std::invalid_argument("weakness outside [0, 1]");
    cell_degradation(c.joint, c.weakness).validate(model.joints());
    c.per_task.assign(tasks.size(), {});
  }
  const std::size_t per_cell = tasks.size() * o.episodes_per_task;
  std::vector<char> success(cells.size() * per_cell, 0);
  parallel_for(success.size(), o.workers, [&](std::size_t k) {
    const EvalCell& cell = cells[k / per_cell];
    const std::size_t r = k % per_cell;
    const int task = tasks[r / o.episodes_per_task];
    const std::size_t i = r % o.episodes_per_task;
    auto controller = make_controller();
    const Episode ep = rollout(model, *controller, task, eval_seed(o.seed, task, i),
                               cell_degradation(cell.joint, cell.weakness));
    success[k] = ep.meta.success ? 1 : 0;
  });
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t r = 0; r < per_cell; ++r) {
      CellResult& t = cells[c].per_task[r / o.episodes_per_task];
      t.episodes += 1;
      t.successes += static_cast<std::size_t>(success[c * per_cell + r]);
    }
    for (const auto& t : cells[c].per_task) {
      cells[c].total.episodes += t.episodes;
      cells[c].total.successes += t.successes;
    }
  }
  return cells;
}

}  // namespace

EvalCell run_cell(const ArmModel& model, const ControllerFactory& make_controller, int joint,
                  double weakness, const EvalOptions& options) {
  if (options.episodes_per_task == 0) throw std::invalid_argument("episodes_per_task must be positive");
  EvalCell cell;
  cell.joint = joint;
  cell.weakness = joint < 0 ? 0.0 : weakness;
  return evaluate_cells(model, make_controller, {cell}, resolve_tasks(model, options), options).front();
}

EvalMatrix run_matrix(const ArmModel& model, const ControllerFactory& make_controller,
                      const EvalOptions& options, const std::string& label) {
  if (options.episodes_per_task == 0) throw std::invalid_argument("episodes_per_task must be positive");
  EvalMatrix m;
  m.label = label;
  m.levels = options.levels;
  m.tasks = resolve_tasks(model, options);
  m.joints = options.joints;
  if (m.joints.empty())
    for (std::size_t j = 0; j < model.joints(); ++j) m.joints.push_back(static_cast<int>(j));

  std::vector<EvalCell> cells;
  if (options.include_healthy) cells.push_back({-1, 0.0, {}, {}});
  for (int j : m.joints)
    for (double w : m.levels) cells.push_back({j, w, {}, {}});
  m.cells = evaluate_cells(model, make_controller, std::move(cells), m.tasks, options);
  return m;
}

std::string format_rate(double rate) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * rate;
  return os.str();
}

namespace {

std::string level_name(double w) {
  std::ostringstream os;
  os << "w=" << w;
  return os.str();
}

std::string joint_name(int j) { return j < 0 ? "healthy" : "j" + std::to_string(j); }

std::string cell_name(const EvalCell& c) {
  return c.joint < 0 ? "healthy" : cell_degradation(c.joint, c.weakness).label();
}

std::string rate_or_blank(const EvalCell* c) { return c ? format_rate(c->total.rate()) : ""; }

std::vector<std::string> matrix_header(const EvalMatrix& m) {
  std::vector<std::string> h{"joint"};
  for (double w : m.levels) h.push_back(level_name(w));
  h.push_back("Avg");
  return h;
}

std::vector<std::vector<std::string>> matrix_rows(const EvalMatrix& m) {
  std::vector<std::vector<std::string>> rows;
  for (int j : m.joints) {
    std::vector<std::string> row{joint_name(j)};
    for (double w : m.levels) row.push_back(rate_or_blank(m.find(j, w)));
    const double avg = m.joint_average(j);
    row.push_back(std::isnan(avg) ? "" : format_rate(avg));
    rows.push_back(std::move(row));
  }
  if (const EvalCell* h = m.healthy()) {
    std::vector<std::string> row{"healthy"};
    row.resize(m.levels.size() + 1);
    row.push_back(format_rate(h->total.rate()));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string join(const std::vector<std::string>& cols, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += sep;
    out += cols[i];
  }
  return out;
}

std::string markdown_table(const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
  std::string out = "| " + join(header, " | ") + " |\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out += i ? "---:|" : "---|";
  out += '\n';
  for (const auto& r : rows) out += "| " + join(r, " | ") + " |\n";
  return out;
}

}  // namespace

std::string matrix_csv(const EvalMatrix& m) {
  std::string out = join(matrix_header(m), ",") + '\n';
  for (const auto& r : matrix_rows(m)) out += join(r, ",") + '\n';
  return out;
}

std::string matrix_markdown(const EvalMatrix& m) {
  return markdown_table(matrix_header(m), matrix_rows(m));
}

std::string per_task_csv(const EvalMatrix& m) {
  std::string out = "task,cell,successes,episodes,rate\n";
  for (const auto& c : m.cells) {
    for (std::size_t t = 0; t < c.per_task.size(); ++t) {
      const CellResult& r = c.per_task[t];
      out += "T" + std::to_string(m.tasks[t]) + ',' + cell_name(c) + ',' +
             std::to_string(r.successes) + ',' + std::to_string(r.episodes) + ',' +
             format_rate(r.rate()) + '\n';
    }
  }
  return out;
}

namespace {

struct ComparisonRow {
  std::string joint;
  std::string level;
  const EvalCell* base;
  const EvalCell* ours;
};

std::vector<ComparisonRow> comparison_rows(const EvalMatrix& b, const EvalMatrix& o) {
  std::vector<ComparisonRow> rows;
  if (b.healthy() && o.healthy()) rows.push_back({"healthy", "", b.healthy(), o.healthy()});
  for (int j : o.joints) {
    for (double w : o.levels) {
      const EvalCell* bc = b.find(j, w);
      const EvalCell* oc = o.find(j, w);
      if (bc && oc) rows.push_back({joint_name(j), level_name(w), bc, oc});
    }
  }
  return rows;
}

}  // namespace

std::string comparison_csv(const EvalMatrix& baseline, const EvalMatrix& ours) {
  std::string out = "joint,level,baseline,ours,delta,>\n";
  for (const auto& r : comparison_rows(baseline, ours)) {
    const double delta = r.ours->total.rate() - r.base->total.rate();
    std::ostringstream d;
    d << std::showpos << std::fixed << std::setprecision(1) << 100.0 * delta;
    out += r.joint + ',' + r.level + ',' + format_rate(r.base->total.rate()) + ',' +
           format_rate(r.ours->total.rate()) + ',' + d.str() + ',' + (delta > 0 ? ">" : "") + '\n';
  }
  return out;
}

std::string comparison_markdown(const EvalMatrix& baseline, const EvalMatrix& ours) {
  std::vector<std::string> header{"joint"};
  for (double w : ours.levels) header.push_back(level_name(w));
  std::vector<std::vector<std::string>> rows;
  auto pair_text = [](const EvalCell* b, const EvalCell* o) -> std::string {
    if (!b || !o) return "";
    const std::string ours_text = format_rate(o->total.rate());
    return format_rate(b->total.rate()) + " / " +
           (o->total.rate() > b->total.rate() ? "**" + ours_text + "**" : ours_text);
  };
  for (int j : ours.joints) {
    std::vector<std::string> row{joint_name(j)};
    for (double w : ours.levels) row.push_back(pair_text(baseline.find(j, w), ours.find(j, w)));
    rows.push_back(std::move(row));
  }
  std::string out = "Success rate (%), " + (baseline.label.empty() ? "baseline" : baseline.label) +
                    " / " + (ours.label.empty() ? "ours" : ours.label) + "\n\n";
  out += markdown_table(header, rows);
  if (baseline.healthy() && ours.healthy()) {
    out += "\nHealthy: " + pair_text(baseline.healthy(), ours.healthy()) + "\n";
  }
  return out;
}

nlohmann::json to_json(const EvalMatrix& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : m.cells) {
    nlohmann::json per_task = nlohmann::json::array();
    for (const auto& t : c.per_task) per_task.push_back({t.successes, t.episodes});
    cells.push_back({{"joint", c.joint},
                     {"weakness", c.weakness},
                     {"successes", c.total.successes},
                     {"episodes", c.total.episodes},
                     {"per_task", per_task}});
  }
  return {{"label", m.label}, {"levels", m.levels}, {"tasks", m.tasks},
          {"joints", m.joints}, {"cells", cells}};
}

EvalMatrix eval_matrix_from_json(const nlohmann::json& j) {
  EvalMatrix m;
  m.label = j.value("label", "");
  m.levels = j.at("levels").get<std::vector<double>>();
  m.tasks = j.at("tasks").get<std::vector<int>>();
  m.joints = j.at("joints").get<std::vector<int>>();
  for (const auto& c : j.at("cells")) {
    EvalCell cell;
    cell.joint = c.at("joint").get<int>();
    cell.weakness = c.at("weakness").get<double>();
    cell.total = {c.at("successes").get<std::size_t>(), c.at("episodes").get<std::size_t>()};
    for (const auto& t : c.at("per_task")) {
      cell.per_task.push_back({t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>()});
    }
    if (cell.per_task.size() != m.tasks.size()) throw std::invalid_argument("per_task size mismatch");
    m.cells.push_back(std::move(cell));
  }
  return m;
}

}  // namespace faultarm
