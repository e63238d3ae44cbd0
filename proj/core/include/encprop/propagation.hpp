#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "encprop/schedule.hpp"
#include "encprop/tensor.hpp"
#include "encprop/unet.hpp"

namespace encprop {

struct DeltaSeries;  // analysis.hpp

// Partition of the timesteps T..1 into key steps (encoder runs) and
// non-key steps (decoder consumes the cache of the nearest key step above).
class PropagationPlan {
 public:
  // Validates and builds a plan; `keys` may be given in any order.
  PropagationPlan(int total_steps, std::vector<Timestep> keys);

  int steps() const { return total_steps_; }
  // Strictly decreasing; front() == steps().
  const std::vector<Timestep>& key_steps() const { return keys_; }
  std::vector<Timestep> non_key_steps() const;

  bool is_key(Timestep t) const;
  // Key step whose cache serves t. For a key step that is t itself; for a
  // non-key step it is the nearest key step strictly greater than t.
  Timestep governing_key(Timestep t) const;

  // Timesteps served by key step k, k first, in decreasing order.
  std::vector<Timestep> run_of(Timestep key) const;

  friend bool operator==(const PropagationPlan&, const PropagationPlan&) = default;

 private:
  int total_steps_;
  std::vector<Timestep> keys_;
  std::vector<Timestep> key_of_;  // indexed by t, entry 0 unused
};

// Keys {T, T-stride, ...} down to >= 1.
PropagationPlan uniform_plan(int total_steps, int stride);
// Explicit key set; must contain T, no duplicates, all in [1, T].
PropagationPlan nonuniform_plan(int total_steps, std::vector<Timestep> keys);
// Every step is a key step.
PropagationPlan all_key_plan(int total_steps);
// Greedy selection by summed encoder delta; see analysis for DeltaSeries.
PropagationPlan suggest_plan(const DeltaSeries& deltas, int budget);

// The 9-key non-uniform set for a 50-step DDIM schedule.
inline const std::vector<Timestep> kDefaultKeySteps{50, 49, 48, 47, 45, 40, 35, 25, 15};

enum class Strategy {
  full,
  encoder_prop,
  encoder_prop_parallel,
  decoder_prop,
  both_prop,
  alternating_drop,
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
const std::vector<Strategy>& all_strategies();

enum class DecodeMode {
  // One decode() per timestep; bit-identical to the sequential sampler.
  loop_ordered,
  // Per key run, the time-independent decoder terms are computed once
  // (prepare_decoder) and each step adds its own part. Agrees with
  // loop_ordered to rounding.
  batched,
};

std::string_view to_string(DecodeMode m);
DecodeMode parse_decode_mode(std::string_view name);

struct SampleOptions {
  std::optional<PriorNoiseInjection> inject;
  bool record_trajectory = false;
  // Feature taps per step; only honoured by Strategy::full.
  bool record_bundles = false;
  // Parallel sampler only.
  std::size_t workers = 1;
  DecodeMode decode_mode = DecodeMode::loop_ordered;
};

struct CallCounts {
  std::uint64_t encoder = 0;  // encode() calls (bottleneck included)
  std::uint64_t decoder = 0;  // per-timestep decoder evaluations

  friend bool operator==(const CallCounts&, const CallCounts&) = default;
};

struct PhaseTimings {
  std::int64_t encode_ns = 0;
  std::int64_t decode_ns = 0;
  std::int64_t update_ns = 0;  // DDIM steps and noise injection
  std::int64_t total_ns = 0;
};

struct SampleRun {
  Tensor z0;
  std::vector<Tensor> trajectory;     // z_T ... z_0 when recorded
  std::vector<FeatureBundle> bundles;  // t = T ... 1 when recorded
  PhaseTimings timings;
  CallCounts calls;
};

struct SampleHooks {
  // Called at the start of every step with its timestep and the latent the
  // sampler holds; the hook may overwrite that latent. The parallel sampler
  // has already computed a run's non-key eps by then.
  std::function<void(Timestep, Tensor&)> at_step;
  // When set, receives the eps used at every step, index T - t.
  std::vector<Tensor>* eps_out = nullptr;
};

SampleRun sample(Strategy strategy, const PropagationPlan& plan, const Tensor& z_T, const UNetParams& p,
                 const NoiseSchedule& s, const SampleOptions& opts = {}, const SampleHooks& hooks = {});

}  // namespace encprop
