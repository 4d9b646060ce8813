#include "faultarm/episode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace faultarm {

namespace {

Observation observation_from_features(const std::vector<double>& f,
                                      const std::array<double, 4>& proprio, std::size_t joints,
                                      std::size_t tasks) {
  if (f.size() != Observation::feature_dim(joints, tasks)) {
    throw std::invalid_argument("observation has " + std::to_string(f.size()) +
                                " features, expected " +
                                std::to_string(Observation::feature_dim(joints, tasks)));
  }
  Observation o;
  auto it = f.begin();
  o.joint_sin_cos.assign(it, it + static_cast<std::ptrdiff_t>(2 * joints));
  it += static_cast<std::ptrdiff_t>(2 * joints);
  o.ee_pose = {it[0], it[1], it[2]};
  o.gripper = it[3];
  o.object_pos = {it[4], it[5]};
  o.target_pos = {it[6], it[7]};
  it += 8;
  o.task_onehot.assign(it, f.end());
  o.proprio = proprio;
  return o;
}

}  // namespace

std::string to_string(EpisodeSource s) {
  switch (s) {
    case EpisodeSource::Expert:
      return "expert";
    case EpisodeSource::Teleop:
      return "teleop";
    case EpisodeSource::PolicyRollout:
      return "policy-rollout";
  }
  return "expert";
}

EpisodeSource episode_source_from_string(const std::string& s) {
  if (s == "expert") return EpisodeSource::Expert;
  if (s == "teleop") return EpisodeSource::Teleop;
  if (s == "policy-rollout") return EpisodeSource::PolicyRollout;
  throw std::invalid_argument("unknown episode source '" + s + "'");
}

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes, std::size_t joints,
                    std::size_t tasks) {
  out << nlohmann::json{{"type", "header"},
                        {"format_version", kEpisodeFormatVersion},
                        {"action_dim", Action::kDim},
                        {"J", joints},
                        {"T", tasks}}
             .dump()
      << '\n';
  for (const Episode& ep : episodes) {
    if (ep.steps.empty()) throw std::invalid_argument("cannot save an episode with no steps");
    out << nlohmann::json{{"type", "episode"},
                          {"task_id", ep.meta.task_id},
                          {"seed", ep.meta.seed},
                          {"degradation", to_json(ep.meta.degradation)},
                          {"success", ep.meta.success},
                          {"source", to_string(ep.meta.source)},
                          {"length", ep.steps.size()}}
               .dump()
        << '\n';
    for (const StepRecord& s : ep.steps) {
      std::vector<double> health(s.health.values().begin(), s.health.values().end());
      out << nlohmann::json{{"type", "step"},
                            {"obs", s.observation.features()},
                            {"proprio", s.proprio},
                            {"action", s.action.as_array()},
                            {"health", health}}
                 .dump()
          << '\n';
    }
  }
}

void save(const std::vector<Episode>& episodes, const std::filesystem::path& path,
          std::size_t joints, std::size_t tasks) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_episodes(out, episodes, joints, tasks);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Episode> read_episodes(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  std::size_t line_no = 0;
  std::size_t joints = 0, tasks = 0;
  bool have_header = false;
  std::size_t expected_steps = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      const std::string type = rec.at("type").get<std::string>();
      if (type == "header") {
        if (have_header) throw std::invalid_argument("duplicate header");
        if (rec.at("format_version").get<int>() != kEpisodeFormatVersion) {
          throw std::invalid_argument("unsupported format_version");
        }
        if (rec.at("action_dim").get<std::size_t>() != Action::kDim) {
          throw std::invalid_argument("unsupported action_dim");
        }
        joints = rec.at("J").get<std::size_t>();
        tasks = rec.at("T").get<std::size_t>();
        have_header = true;
      } else if (!have_header) {
        throw std::invalid_argument("missing header record");
      } else if (type == "episode") {
        if (expected_steps != 0) {
          throw std::invalid_argument("previous episode ended after " +
                                      std::to_string(episodes.back().steps.size()) + " steps");
        }
        Episode ep;
        ep.meta.task_id = rec.at("task_id").get<int>();
        ep.meta.seed = rec.at("seed").get<std::uint64_t>();
        ep.meta.degradation = degradation_from_json(rec.at("degradation"));
        ep.meta.success = rec.at("success").get<bool>();
        ep.meta.source = episode_source_from_string(rec.at("source").get<std::string>());
        expected_steps = rec.at("length").get<std::size_t>();
        if (expected_steps == 0) throw std::invalid_argument("episode length must be positive");
        episodes.push_back(std::move(ep));
      } else if (type == "step") {
        if (expected_steps == 0) throw std::invalid_argument("step record outside an episode");
        StepRecord s;
        const auto proprio = rec.at("proprio").get<std::array<double, 4>>();
        s.observation = observation_from_features(rec.at("obs").get<std::vector<double>>(),
                                                  proprio, joints, tasks);
        s.proprio = proprio;
        s.action = Action::from_array(rec.at("action").get<std::array<double, Action::kDim>>());
        s.health = HealthVector(rec.at("health").get<std::vector<double>>());
        if (s.health.size() != joints) throw std::invalid_argument("health vector length != J");
        auto& steps = episodes.back().steps;
        if (!steps.empty() && !(steps.front().health == s.health)) {
          throw std::invalid_argument("health vector changes within an episode");
        }
        steps.push_back(std::move(s));
        --expected_steps;
      } else {
        throw std::invalid_argument("unknown record type '" + type + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(line_no + 1, "missing header record");
  if (expected_steps != 0) {
    throw ParseError(line_no + 1, "file truncated: episode " + std::to_string(episodes.size() - 1) +
                                      " is missing " + std::to_string(expected_steps) + " steps");
  }
  return episodes;
}

std::vector<Episode> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_episodes(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

std::vector<Episode> load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) return load(path);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Episode> all;
  for (const auto& f : files) {
    auto eps = load(f);
    all.insert(all.end(), std::make_move_iterator(eps.begin()), std::make_move_iterator(eps.end()));
  }
  return all;
}

std::size_t total_steps(const std::vector<Episode>& episodes) {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.steps.size();
  return n;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

NormStats compute_norm_stats(const std::vector<Episode>& episodes, double low_q, double high_q) {
  if (!(low_q < high_q)) throw std::invalid_argument("low quantile must be below high quantile");
  if (total_steps(episodes) < 2) {
    throw std::invalid_argument("need at least 2 recorded steps to compute action statistics");
  }
  NormStats stats;
  stats.low_quantile = low_q;
  stats.high_quantile = high_q;
  for (std::size_t d = 0; d < Action::kDim; ++d) {
    std::vector<double> column;
    column.reserve(total_steps(episodes));
    for (const auto& ep : episodes)
      for (const auto& s : ep.steps) column.push_back(s.action.as_array()[d]);
    double lo = quantile(column, low_q);
    double hi = quantile(std::move(column), high_q);
    if (!(hi - lo > 2.0 * kDegenerateWidening)) {
      const double mid = 0.5 * (lo + hi);
      lo = mid - kDegenerateWidening;
      hi = mid + kDegenerateWidening;
    }
    stats.q_low[d] = lo;
    stats.q_high[d] = hi;
  }
  return stats;
}

std::array<double, Action::kDim> normalize(const Action& action, const NormStats& stats) {
  const auto a = action.as_array();
  std::array<double, Action::kDim> out{};
  for (std::size_t d = 0; d < Action::kDim; ++d) {
    double v = a[d];
    if (stats.normalized[d]) {
      v = 2.0 * (v - stats.q_low[d]) / (stats.q_high[d] - stats.q_low[d]) - 1.0;
    }
    out[d] = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

Action denormalize(const std::array<double, Action::kDim>& normalized, const NormStats& stats) {
  std::array<double, Action::kDim> out{};
  for (std::size_t d = 0; d < Action::kDim; ++d) {
    const double v = normalized[d];
    out[d] = stats.normalized[d]
                 ? stats.q_low[d] + 0.5 * (v + 1.0) * (stats.q_high[d] - stats.q_low[d])
                 : v;
  }
  return Action::from_array(out);
}

nlohmann::json to_json(const NormStats& stats) {
  return {{"convention", "bounds-quantile, linear interpolation, clip to [-1, 1]"},
          {"low_quantile", stats.low_quantile},
          {"high_quantile", stats.high_quantile},
          {"clip", true},
          {"q_low", stats.q_low},
          {"q_high", stats.q_high},
          {"normalized", stats.normalized}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s;
  s.low_quantile = j.at("low_quantile").get<double>();
  s.high_quantile = j.at("high_quantile").get<double>();
  s.q_low = j.at("q_low").get<std::array<double, Action::kDim>>();
  s.q_high = j.at("q_high").get<std::array<double, Action::kDim>>();
  s.normalized = j.at("normalized").get<std::array<bool, Action::kDim>>();
  for (std::size_t d = 0; d < Action::kDim; ++d) {
    if (!(s.q_low[d] < s.q_high[d])) throw std::invalid_argument("stats need q_low < q_high");
  }
  return s;
}

void save_norm_stats(const NormStats& stats, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(stats).dump(2) << '\n';
}

NormStats load_norm_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stats file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("stats file " + path.string() + ": " + e.what());
  }
  return norm_stats_from_json(j);
}

}  // namespace faultarm
