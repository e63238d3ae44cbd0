#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace encprop::cli;

  CLI::App app{"Encoder propagation sampler for toy diffusion models"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;

  const std::pair<const char*, const char*> commands[] = {
      {"train", "Train a model and write model.ckpt and loss.csv"},
      {"sample", "Draw samples with a strategy and write samples.csv and manifest.json"},
      {"analyze", "Write feature deltas, norm statistics and FLOPs tables"},
      {"bench", "Time full, encoder_prop and encoder_prop_parallel sampling"},
      {"compare", "Energy distance and savings for several strategies and plans"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON run config")->required();
    sub->add_option("--seed", seed, "Override the sampling seed");
    sub->add_option("--workers", workers, "Override the worker count");
    sub->add_option("--out", out, "Output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  Overrides o;
  o.seed = seed;
  o.workers = workers;
  if (out) o.out = *out;
  return run_command(app.get_subcommands().front()->get_name(), config, o, std::cout, std::cerr);
}
