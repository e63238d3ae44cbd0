#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "encprop/propagation.hpp"
#include "encprop/schedule.hpp"
#include "encprop/training.hpp"
#include "encprop/unet.hpp"

namespace encprop::cli {

// Raised for anything wrong with the configuration itself; maps to exit
// code 2. Failures while computing map to exit code 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct ScheduleSpec {
  int steps = kDefaultSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
};

// Exactly one way of choosing key steps.
struct PlanSpec {
  enum class Kind { keys, uniform_stride, suggest_budget, all_keys };
  Kind kind = Kind::keys;
  std::vector<Timestep> keys = kDefaultKeySteps;
  int stride = 2;
  int budget = 9;
};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gmm8;
  std::size_t n = 50000;
  std::uint64_t seed = 0;
};

struct CompareRun {
  Strategy strategy = Strategy::full;
  std::optional<PlanSpec> plan;  // falls back to RunConfig::plan
  std::optional<PriorNoiseInjection> inject;
};

struct RunConfig {
  std::filesystem::path checkpoint;  // empty: <out_dir>/model.ckpt
  std::optional<std::filesystem::path> out_dir;
  ScheduleSpec schedule;
  PlanSpec plan;
  Strategy strategy = Strategy::encoder_prop;
  DecodeMode decode_mode = DecodeMode::loop_ordered;
  std::optional<PriorNoiseInjection> inject;
  std::uint64_t seed = 0;
  std::size_t samples = 5000;
  std::size_t workers = 1;
  UNetConfig model;
  TrainConfig train;
  DatasetSpec dataset;
  std::size_t bench_repetitions = 20;
  std::size_t bench_batch = 256;
  std::vector<CompareRun> compare_runs;  // empty: every strategy on `plan`
  std::uint64_t reference_seed = 1;      // fresh dataset points for compare

  std::string source_json;  // the config as read, echoed into manifests
};

// Parses and validates a JSON config. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> out;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

// --out, then the config's out_dir, then $ENCPROP_OUT_DIR, then ".".
std::filesystem::path resolve_out_dir(const RunConfig& cfg);
std::filesystem::path resolve_checkpoint(const RunConfig& cfg);

NoiseSchedule build_schedule(const ScheduleSpec& s);

}  // namespace encprop::cli
