#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace encprop::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_opt(const json& obj, const std::string& key, T& out, const std::string& where) {
  if (obj.contains(key)) out = get<T>(obj, key, where);
}

PlanSpec parse_plan(const json& j, const std::string& where) {
  reject_unknown(j, {"keys", "uniform_stride", "suggest_budget", "all_keys"}, where);
  if (j.size() != 1) throw ConfigError(where + ": give exactly one of keys, uniform_stride, suggest_budget, all_keys");
  PlanSpec p;
  if (j.contains("keys")) {
    p.kind = PlanSpec::Kind::keys;
    p.keys = get<std::vector<Timestep>>(j, "keys", where);
  } else if (j.contains("uniform_stride")) {
    p.kind = PlanSpec::Kind::uniform_stride;
    p.stride = get<int>(j, "uniform_stride", where);
    if (p.stride < 2) throw ConfigError(where + ".uniform_stride: must be >= 2");
  } else if (j.contains("suggest_budget")) {
    p.kind = PlanSpec::Kind::suggest_budget;
    p.budget = get<int>(j, "suggest_budget", where);
  } else {
    if (!get<bool>(j, "all_keys", where)) throw ConfigError(where + ".all_keys: must be true when given");
    p.kind = PlanSpec::Kind::all_keys;
  }
  return p;
}

PriorNoiseInjection parse_inject(const json& j, const std::string& where) {
  reject_unknown(j, {"alpha", "tau"}, where);
  PriorNoiseInjection inj;
  read_opt(j, "alpha", inj.alpha, where);
  read_opt(j, "tau", inj.tau, where);
  return inj;
}

Strategy parse_strategy_field(const json& j, const std::string& key, const std::string& where) {
  try {
    return parse_strategy(get<std::string>(j, key, where));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void validate_plan_against_schedule(const PlanSpec& p, const ScheduleSpec& s, const std::string& where) {
  if (p.kind == PlanSpec::Kind::keys) {
    try {
      PropagationPlan(s.steps, p.keys);
    } catch (const std::exception& e) {
      throw ConfigError(where + ": plan does not fit a " + std::to_string(s.steps) + "-step schedule: " + e.what());
    }
  }
  if (p.kind == PlanSpec::Kind::suggest_budget && (p.budget < 1 || p.budget > s.steps)) {
    throw ConfigError(where + ".suggest_budget: must lie in [1, " + std::to_string(s.steps) + "]");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"checkpoint", "out_dir", "schedule", "plan", "strategy", "decode_mode", "inject", "seed", "samples",
                  "workers", "model", "train", "dataset", "bench", "compare"},
                 "config");
  RunConfig c;
  c.source_json = j.dump();

  if (j.contains("checkpoint")) c.checkpoint = get<std::string>(j, "checkpoint", "config");
  if (j.contains("out_dir")) c.out_dir = get<std::string>(j, "out_dir", "config");
  read_opt(j, "seed", c.seed, "config");
  read_opt(j, "samples", c.samples, "config");
  read_opt(j, "workers", c.workers, "config");
  if (j.contains("strategy")) c.strategy = parse_strategy_field(j, "strategy", "config");
  if (j.contains("decode_mode")) {
    try {
      c.decode_mode = parse_decode_mode(get<std::string>(j, "decode_mode", "config"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.decode_mode: ") + e.what());
    }
  }

  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown(s, {"T", "beta_start", "beta_end"}, "schedule");
    read_opt(s, "T", c.schedule.steps, "schedule");
    read_opt(s, "beta_start", c.schedule.beta_start, "schedule");
    read_opt(s, "beta_end", c.schedule.beta_end, "schedule");
  }
  try {
    build_schedule(c.schedule);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }

  if (j.contains("plan")) c.plan = parse_plan(j.at("plan"), "plan");
  validate_plan_against_schedule(c.plan, c.schedule, "plan");
  if (j.contains("inject")) c.inject = parse_inject(j.at("inject"), "inject");

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"data_dim", "stage_widths", "bottleneck_width", "time_embed_dim", "seed"}, "model");
    read_opt(m, "data_dim", c.model.data_dim, "model");
    read_opt(m, "stage_widths", c.model.stage_widths, "model");
    read_opt(m, "bottleneck_width", c.model.bottleneck_width, "model");
    read_opt(m, "time_embed_dim", c.model.time_embed_dim, "model");
    read_opt(m, "seed", c.model.seed, "model");
  }
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"steps", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "seed"}, "train");
    read_opt(t, "steps", c.train.steps, "train");
    read_opt(t, "batch_size", c.train.batch_size, "train");
    read_opt(t, "learning_rate", c.train.learning_rate, "train");
    read_opt(t, "beta1", c.train.beta1, "train");
    read_opt(t, "beta2", c.train.beta2, "train");
    read_opt(t, "adam_eps", c.train.adam_eps, "train");
    read_opt(t, "seed", c.train.seed, "train");
  }
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d, {"kind", "n", "seed"}, "dataset");
    if (d.contains("kind")) {
      try {
        c.dataset.kind = parse_dataset_kind(get<std::string>(d, "kind", "dataset"));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("dataset.kind: ") + e.what());
      }
    }
    read_opt(d, "n", c.dataset.n, "dataset");
    read_opt(d, "seed", c.dataset.seed, "dataset");
  }

  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    reject_unknown(b, {"repetitions", "batch"}, "bench");
    read_opt(b, "repetitions", c.bench_repetitions, "bench");
    read_opt(b, "batch", c.bench_batch, "bench");
  }

  if (j.contains("compare")) {
    const auto& cmp = j.at("compare");
    reject_unknown(cmp, {"runs", "reference_seed"}, "compare");
    read_opt(cmp, "reference_seed", c.reference_seed, "compare");
    if (cmp.contains("runs")) {
      std::size_t i = 0;
      for (const auto& r : cmp.at("runs")) {
        const std::string where = "compare.runs[" + std::to_string(i++) + "]";
        reject_unknown(r, {"strategy", "plan", "inject"}, where);
        CompareRun run;
        run.strategy = parse_strategy_field(r, "strategy", where);
        if (r.contains("plan")) {
          run.plan = parse_plan(r.at("plan"), where + ".plan");
          validate_plan_against_schedule(*run.plan, c.schedule, where + ".plan");
        }
        if (r.contains("inject")) run.inject = parse_inject(r.at("inject"), where + ".inject");
        c.compare_runs.push_back(std::move(run));
      }
    }
  }

  if (c.samples < 1) throw ConfigError("config.samples: must be >= 1");
  if (c.workers < 1) throw ConfigError("config.workers: must be >= 1");
  if (c.bench_repetitions < 1) throw ConfigError("bench.repetitions: must be >= 1");
  if (c.bench_batch < 1) throw ConfigError("bench.batch: must be >= 1");
  if (c.dataset.n < 1) throw ConfigError("dataset.n: must be >= 1");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) {
    if (*o.workers < 1) throw ConfigError("--workers must be >= 1");
    cfg.workers = *o.workers;
  }
  if (o.out) cfg.out_dir = *o.out;
}

std::filesystem::path resolve_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir) return *cfg.out_dir;
  if (const char* env = std::getenv("ENCPROP_OUT_DIR"); env && *env) return env;
  return ".";
}

std::filesystem::path resolve_checkpoint(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  return resolve_out_dir(cfg) / "model.ckpt";
}

NoiseSchedule build_schedule(const ScheduleSpec& s) {
  return make_linear_schedule(s.steps, s.beta_start, s.beta_end);
}

}  // namespace encprop::cli
