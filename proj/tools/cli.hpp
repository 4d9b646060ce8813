#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace faultarm::cli {

// Everything a subcommand can be configured with. Precedence per field:
// command-line flag, then the --config JSON file, then these defaults.
struct RunConfig {
  std::string scene;  // empty: built-in desk scene
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  struct Collect {
    std::string tasks = "0..4";
    std::vector<double> levels{0.3, 0.5, 0.7, 0.9};
    std::vector<int> joints;  // empty: all
    std::size_t per_cell = 16;
    std::size_t healthy = 50;
    std::string out = "data";
  } collect;

  struct Stats {
    std::string data = "data";
    std::string out = "stats.json";
  } stats;

  struct Train {
    std::string mode = "baseline";
    std::string data = "data";
    std::string stats;  // required
    std::string init;
    std::int64_t steps = 3000;
    std::int64_t warmup = 100;
    std::int64_t decay_step = 2000;
    double lr = 2e-4;
    double weight_decay = 0.01;
    std::size_t batch = 8;
    std::size_t accumulation = 2;
    std::int64_t checkpoint_every = 1000;
    std::string out = "ckpt";
  } train;

  struct Eval {
    std::string ckpt;
    bool expert = false;
    std::vector<double> levels{0.3, 0.5, 0.7, 0.9};
    std::vector<int> joints;
    std::string tasks;
    std::size_t episodes = 10;
    std::size_t replan_every = 8;
    bool no_healthy = false;
    std::string out = "report";
  } eval;

  struct Report {
    std::string baseline;
    std::string ours;
    std::string out = "report";
  } report;

  struct Teleop {
    unsigned short port = 8714;
    std::string address = "127.0.0.1";
    double rate = 20.0;
    int task = 0;
    std::string out = "data/teleop";
  } teleop;

  struct Replay {
    std::string data = "data";
  } replay;

  struct Render {
    std::string data;
    std::size_t episode = 0;
    std::size_t every = 5;
    std::string out = "frames";
  } render;

  struct Describe {
    std::string ckpt;
    std::vector<std::size_t> projector;  // J,H,D
  } describe;
};

/// Task list syntax: "a..b" (b exclusive) or a comma list "0,2,3".
std::vector<int> parse_task_list(const std::string& text);

/// Runs one command line. Returns the process exit code: 0 ok, 1 runtime
/// failure, 2 usage error. Errors are one line on `err`:
/// "faultarm: error: <kind>: <message>".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace faultarm::cli
