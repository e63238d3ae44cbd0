#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "encprop/propagation.hpp"
#include "encprop/unet.hpp"

namespace encprop {

// Block ids: "enc<i>" for encoder stage i, "bot", "dec<i>" for decoder
// block i (dec0 is the deepest, dec<S-1> feeds the output head).
std::vector<std::string> block_ids(std::size_t stages);
bool is_encoder_block(std::string_view id);
bool is_decoder_block(std::string_view id);

// Adjacent-step feature change: for every block and t in T..2, the
// per-element mean squared difference between the block's features at t
// and at t-1.
struct DeltaSeries {
  int total_steps = 0;
  std::vector<std::string> blocks;
  std::vector<std::vector<double>> values;  // values[block][T - t]

  double delta(std::size_t block, Timestep t) const { return values[block][static_cast<std::size_t>(total_steps - t)]; }
};

// Distribution of a block's Frobenius norm over all timesteps. Quartiles
// use linear interpolation between order statistics (type 7); std is the
// population standard deviation.
struct BlockNormStats {
  std::string block;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0, std = 0;
};

struct NormStats {
  std::vector<BlockNormStats> blocks;
  const BlockNormStats& at(std::string_view block) const;
};

struct ComponentFlops {
  std::string component;
  std::uint64_t macs_per_call = 0;
  std::uint64_t calls = 0;
  std::uint64_t total_macs = 0;
};

// MAC counts for one sampling run. Per-call counts are for `batch` rows:
// every dense product costs batch·fan_in·fan_out MACs, the time projection
// t_emb·U costs time_embed_dim·fan_out once per call. 1 MAC = 2 FLOPs.
struct FlopsReport {
  Strategy strategy = Strategy::full;
  int total_steps = 0;
  std::size_t batch = 1;
  ComponentFlops encoder, bottleneck, decoder;
  std::uint64_t total_macs = 0;
  std::uint64_t full_total_macs = 0;
  std::uint64_t saved_macs = 0;
  double savings_fraction = 0.0;  // 1 - total / full_total

  std::uint64_t total_flops() const { return 2 * total_macs; }
};

struct MacsPerCall {
  std::uint64_t encoder = 0;
  std::uint64_t bottleneck = 0;
  std::uint64_t decoder = 0;
};

MacsPerCall macs_per_call(const UNetConfig& cfg, std::size_t batch = 1);

// Encoder / bottleneck / decoder evaluations a strategy performs under a
// plan. Matches the sampler's instrumented counters.
struct ComponentCalls {
  std::uint64_t encoder = 0;
  std::uint64_t bottleneck = 0;
  std::uint64_t decoder = 0;
};
ComponentCalls component_calls(Strategy strategy, const PropagationPlan& plan);

FlopsReport flops_report(const UNetConfig& cfg, const PropagationPlan& plan, Strategy strategy, std::size_t batch = 1);

// Bundles from a full run, ordered t = T..1 with consecutive timesteps.
DeltaSeries feature_delta_series(const std::vector<FeatureBundle>& bundles);
NormStats frobenius_stats(const std::vector<FeatureBundle>& bundles);

// Type-7 quantile of an unsorted sample, p in [0,1].
double quantile(std::vector<double> values, double p);

// CSV writers. Numbers use 17 significant digits so values round-trip.
//   deltas: block_id,t,delta              (rows by block, then t = T..2)
//   norms:  block_id,min,q1,median,q3,max,mean,std
//   flops:  component,macs_per_call,calls,total_macs
// The norms and flops files start with '#' comment lines stating the
// quartile convention and the MAC/FLOP convention.
std::string to_csv(const DeltaSeries& d);
std::string to_csv(const NormStats& n);
std::string to_csv(const FlopsReport& f);

void export_csv(const DeltaSeries& d, const std::filesystem::path& path);
void export_csv(const NormStats& n, const std::filesystem::path& path);
void export_csv(const FlopsReport& f, const std::filesystem::path& path);

DeltaSeries parse_deltas_csv(std::string_view text);
NormStats parse_norms_csv(std::string_view text);

// Writes text to a file, throwing with the path on failure.
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace encprop
