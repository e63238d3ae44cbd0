#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <random>

#include "encprop/analysis.hpp"
#include "encprop/checkpoint.hpp"
#include "encprop/serialize.hpp"
#include "encprop/training.hpp"
#include "json.hpp"

namespace encprop::cli {

namespace {

using nlohmann::json;

std::filesystem::path prepare_out_dir(const RunConfig& cfg) {
  const auto dir = resolve_out_dir(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

UNetParams load_model(const RunConfig& cfg) {
  const auto path = resolve_checkpoint(cfg);
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

json base_manifest(std::string_view command, const RunConfig& cfg) {
  json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = json::parse(cfg.source_json);
  m["seed"] = cfg.seed;
  m["warnings"] = json::array();
  return m;
}

json plan_json(const PropagationPlan& plan) { return json::parse(plan_to_json(plan)); }

json flops_json(const FlopsReport& f) {
  return {{"batch", f.batch},
          {"encoder_macs", f.encoder.total_macs},
          {"bottleneck_macs", f.bottleneck.total_macs},
          {"decoder_macs", f.decoder.total_macs},
          {"total_macs", f.total_macs},
          {"total_flops", f.total_flops()},
          {"full_total_macs", f.full_total_macs},
          {"savings_fraction", f.savings_fraction}};
}

json timings_json(const PhaseTimings& t) {
  return {{"encode", t.encode_ns}, {"decode", t.decode_ns}, {"update", t.update_ns}, {"total", t.total_ns}};
}

std::string plan_label(const PropagationPlan& plan) {
  std::string s;
  for (Timestep k : plan.key_steps()) {
    if (!s.empty()) s += ' ';
    s += std::to_string(k);
  }
  return s;
}

SampleOptions sample_options(const RunConfig& cfg, const std::optional<PriorNoiseInjection>& inject) {
  SampleOptions o;
  o.inject = inject;
  o.workers = cfg.workers;
  o.decode_mode = cfg.decode_mode;
  return o;
}

std::int64_t median(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

}  // namespace

Tensor initial_noise(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gaussian({n, dim}, rng);
}

std::string samples_csv(const Tensor& points) {
  std::string out;
  for (std::size_t j = 0; j < points.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t j = 0; j < points.cols(); ++j) {
      if (j) out += ',';
      out += format_double(points.at(i, j));
    }
    out += '\n';
  }
  return out;
}

PropagationPlan resolve_plan(const PlanSpec& spec, const RunConfig& cfg, const UNetParams& p, const NoiseSchedule& s) {
  const int T = s.steps();
  switch (spec.kind) {
    case PlanSpec::Kind::keys: return nonuniform_plan(T, spec.keys);
    case PlanSpec::Kind::uniform_stride: return uniform_plan(T, spec.stride);
    case PlanSpec::Kind::all_keys: return all_key_plan(T);
    case PlanSpec::Kind::suggest_budget: {
      SampleOptions o;
      o.record_bundles = true;
      const Tensor z_T = initial_noise(std::min<std::size_t>(cfg.samples, 256), p.config.data_dim, cfg.seed);
      const SampleRun run = sample(Strategy::full, all_key_plan(T), z_T, p, s, o);
      return suggest_plan(feature_delta_series(run.bundles), spec.budget);
    }
  }
  throw ConfigError("unknown plan kind");
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto dir = prepare_out_dir(cfg);
  const NoiseSchedule s = build_schedule(cfg.schedule);
  const ToyDataset ds = make_toy_dataset(cfg.dataset.kind, cfg.dataset.n, cfg.dataset.seed);
  log << "training " << cfg.train.steps << " steps on " << to_string(ds.kind) << " (" << ds.points.rows()
      << " points)\n";
  const auto start = std::chrono::steady_clock::now();
  TrainResult result = train(init_params(cfg.model), ds, cfg.train, s, [&log](std::size_t step, double loss) {
    if (step % 1000 == 0) log << "  step " << step << " loss " << loss << '\n';
  });
  const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);

  const auto ckpt = cfg.checkpoint.empty() ? dir / "model.ckpt" : cfg.checkpoint;
  save_checkpoint(result.params, ckpt);
  write_text_file(dir / "loss.csv", loss_curve_csv(result.loss_curve));

  json m = base_manifest("train", cfg);
  m["checkpoint"] = ckpt.string();
  m["checkpoint_hash"] = checkpoint_hash(result.params);
  m["parameter_count"] = result.params.parameter_count();
  m["final_loss"] = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
  m["wall_ns"] = wall.count();
  m["schedule"] = json::parse(schedule_to_json(s));
  write_text_file(dir / "train_manifest.json", m.dump(2) + "\n");
  log << "wrote " << ckpt.string() << " (hash " << m["checkpoint_hash"].get<std::string>() << ")\n";
}

void cmd_sample(const RunConfig& cfg, std::ostream& log) {
  const UNetParams p = load_model(cfg);
  const auto dir = prepare_out_dir(cfg);
  const NoiseSchedule s = build_schedule(cfg.schedule);
  const PropagationPlan plan = resolve_plan(cfg.plan, cfg, p, s);
  const Tensor z_T = initial_noise(cfg.samples, p.config.data_dim, cfg.seed);

  const SampleRun run = sample(cfg.strategy, plan, z_T, p, s, sample_options(cfg, cfg.inject));
  write_text_file(dir / "samples.csv", samples_csv(run.z0));

  json m = base_manifest("sample", cfg);
  m["strategy"] = to_string(cfg.strategy);
  m["decode_mode"] = to_string(cfg.decode_mode);
  m["workers"] = cfg.workers;
  m["plan"] = plan_json(plan);
  m["samples"] = cfg.samples;
  m["checkpoint"] = resolve_checkpoint(cfg).string();
  m["checkpoint_hash"] = checkpoint_hash(p);
  m["timings_ns"] = timings_json(run.timings);
  m["calls"] = {{"encoder", run.calls.encoder}, {"decoder", run.calls.decoder}};
  m["flops"] = flops_json(flops_report(p.config, plan, cfg.strategy, cfg.samples));
  if (cfg.inject) m["inject"] = {{"alpha", cfg.inject->alpha}, {"tau", cfg.inject->tau}};
  m["samples_file"] = "samples.csv";
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
  log << "sampled " << cfg.samples << " points with " << to_string(cfg.strategy) << " in "
      << run.timings.total_ns / 1e6 << " ms\n";
}

void cmd_analyze(const RunConfig& cfg, std::ostream& log) {
  const UNetParams p = load_model(cfg);
  const auto dir = prepare_out_dir(cfg);
  const NoiseSchedule s = build_schedule(cfg.schedule);
  const Tensor z_T = initial_noise(cfg.samples, p.config.data_dim, cfg.seed);

  SampleOptions o;
  o.record_bundles = true;
  const SampleRun run = sample(Strategy::full, all_key_plan(s.steps()), z_T, p, s, o);
  const DeltaSeries deltas = feature_delta_series(run.bundles);
  const NormStats norms = frobenius_stats(run.bundles);
  export_csv(deltas, dir / "deltas.csv");
  export_csv(norms, dir / "norms.csv");

  const PropagationPlan plan = resolve_plan(cfg.plan, cfg, p, s);
  export_csv(flops_report(p.config, plan, cfg.strategy), dir / "flops.csv");

  json m = base_manifest("analyze", cfg);
  m["checkpoint_hash"] = checkpoint_hash(p);
  m["plan"] = plan_json(plan);
  m["files"] = {"deltas.csv", "norms.csv", "flops.csv"};
  write_text_file(dir / "analyze_manifest.json", m.dump(2) + "\n");
  log << "wrote deltas.csv (" << deltas.blocks.size() << " blocks x " << s.steps() - 1
      << " steps), norms.csv, flops.csv\n";
}

void cmd_bench(const RunConfig& cfg, std::ostream& log) {
  const UNetParams p = load_model(cfg);
  const auto dir = prepare_out_dir(cfg);
  const NoiseSchedule s = build_schedule(cfg.schedule);
  const PropagationPlan plan = resolve_plan(cfg.plan, cfg, p, s);
  const Tensor z_T = initial_noise(cfg.bench_batch, p.config.data_dim, cfg.seed);

  json m = base_manifest("bench", cfg);
  if (cfg.bench_repetitions == 1) {
    m["warnings"].push_back("repetitions == 1: the median is a single measurement");
  }
  std::string csv = "strategy,median_ns,flops_total,savings_fraction\n";
  json rows = json::array();
  for (Strategy st : {Strategy::full, Strategy::encoder_prop, Strategy::encoder_prop_parallel}) {
    const SampleOptions o = sample_options(cfg, std::nullopt);
    sample(st, plan, z_T, p, s, o);  // warm-up
    std::vector<std::int64_t> times;
    for (std::size_t r = 0; r < cfg.bench_repetitions; ++r) times.push_back(sample(st, plan, z_T, p, s, o).timings.total_ns);
    const std::int64_t med = median(times);
    const FlopsReport f = flops_report(p.config, plan, st, cfg.bench_batch);
    csv += std::string(to_string(st)) + ',' + std::to_string(med) + ',' + std::to_string(f.total_flops()) + ',' +
           format_double(f.savings_fraction) + '\n';
    rows.push_back({{"strategy", to_string(st)}, {"median_ns", med}, {"runs_ns", times}});
    log << to_string(st) << ": median " << med / 1e6 << " ms over " << times.size() << " runs\n";
  }
  write_text_file(dir / "bench.csv", csv);
  m["plan"] = plan_json(plan);
  m["batch"] = cfg.bench_batch;
  m["workers"] = cfg.workers;
  m["decode_mode"] = to_string(cfg.decode_mode);
  m["results"] = rows;
  write_text_file(dir / "bench_manifest.json", m.dump(2) + "\n");
}

void cmd_compare(const RunConfig& cfg, std::ostream& log) {
  const UNetParams p = load_model(cfg);
  const auto dir = prepare_out_dir(cfg);
  const NoiseSchedule s = build_schedule(cfg.schedule);
  const Tensor z_T = initial_noise(cfg.samples, p.config.data_dim, cfg.seed);
  const ToyDataset reference = make_toy_dataset(cfg.dataset.kind, cfg.samples, cfg.reference_seed);

  std::vector<CompareRun> runs = cfg.compare_runs;
  if (runs.empty()) {
    for (Strategy st : all_strategies()) runs.push_back({st, std::nullopt, cfg.inject});
  }

  std::string csv = "strategy,plan,energy_distance,savings_fraction,wall_ns\n";
  for (const CompareRun& r : runs) {
    const PropagationPlan plan = resolve_plan(r.plan.value_or(cfg.plan), cfg, p, s);
    const SampleRun run = sample(r.strategy, plan, z_T, p, s, sample_options(cfg, r.inject));
    const double ed = energy_distance(run.z0, reference.points);
    const FlopsReport f = flops_report(p.config, plan, r.strategy, cfg.samples);
    csv += std::string(to_string(r.strategy)) + ',' + plan_label(plan) + ',' + format_double(ed) + ',' +
           format_double(f.savings_fraction) + ',' + std::to_string(run.timings.total_ns) + '\n';
    log << to_string(r.strategy) << ": energy distance " << ed << ", savings " << f.savings_fraction << '\n';
  }
  write_text_file(dir / "compare.csv", csv);
  json m = base_manifest("compare", cfg);
  m["checkpoint_hash"] = checkpoint_hash(p);
  m["reference_seed"] = cfg.reference_seed;
  write_text_file(dir / "compare_manifest.json", m.dump(2) + "\n");
}

int run_command(std::string_view command, const std::filesystem::path& config_path, const Overrides& overrides,
                std::ostream& log, std::ostream& err) {
  try {
    if (!std::filesystem::exists(config_path)) throw ConfigError("config file not found: " + config_path.string());
    RunConfig cfg = load_run_config(config_path);
    apply_overrides(cfg, overrides);
    if (command == "train") {
      cmd_train(cfg, log);
    } else if (command == "sample") {
      cmd_sample(cfg, log);
    } else if (command == "analyze") {
      cmd_analyze(cfg, log);
    } else if (command == "bench") {
      cmd_bench(cfg, log);
    } else if (command == "compare") {
      cmd_compare(cfg, log);
    } else {
      throw ConfigError("unknown command '" + std::string(command) + "'");
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace encprop::cli
