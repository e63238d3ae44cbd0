#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "encprop/propagation.hpp"
#include "run_config.hpp"

namespace encprop::cli {

inline constexpr std::string_view kVersion = "encprop 0.1.0";

// Each command reads a validated config and writes its outputs under
// resolve_out_dir(cfg). Errors are thrown: ConfigError for bad input,
// anything else for runtime failures.
void cmd_train(const RunConfig& cfg, std::ostream& log);    // model.ckpt, loss.csv
void cmd_sample(const RunConfig& cfg, std::ostream& log);   // samples.csv, manifest.json
void cmd_analyze(const RunConfig& cfg, std::ostream& log);  // deltas.csv, norms.csv, flops.csv
void cmd_bench(const RunConfig& cfg, std::ostream& log);    // bench.csv
void cmd_compare(const RunConfig& cfg, std::ostream& log);  // compare.csv

// Loads the config, applies overrides, dispatches, and maps failures to
// exit codes (0 ok, 2 config error, 3 runtime error). Messages go to `err`.
int run_command(std::string_view command, const std::filesystem::path& config_path, const Overrides& overrides,
                std::ostream& log, std::ostream& err);

// Initial latents: [n x dim] standard normal from `seed`.
Tensor initial_noise(std::size_t n, std::size_t dim, std::uint64_t seed);

// Resolves a plan spec; suggested plans run a tapped full trajectory first.
PropagationPlan resolve_plan(const PlanSpec& spec, const RunConfig& cfg, const UNetParams& p, const NoiseSchedule& s);

// "x0,x1,..." header, one point per row, 17 significant digits.
std::string samples_csv(const Tensor& points);

}  // namespace encprop::cli
