#include "encprop/propagation.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "encprop/analysis.hpp"
#include "encprop/thread_pool.hpp"

namespace encprop {

PropagationPlan::PropagationPlan(int total_steps, std::vector<Timestep> keys)
    : total_steps_(total_steps), keys_(std::move(keys)) {
  if (total_steps_ < 2) throw std::invalid_argument("plan: T must be >= 2");
  std::sort(keys_.begin(), keys_.end(), std::greater<>());
  if (std::adjacent_find(keys_.begin(), keys_.end()) != keys_.end()) {
    throw std::invalid_argument("plan: duplicate key step");
  }
  for (Timestep k : keys_) {
    if (k < 1 || k > total_steps_) {
      throw std::invalid_argument("plan: key step " + std::to_string(k) + " outside [1, " +
                                  std::to_string(total_steps_) + "]");
    }
  }
  if (keys_.empty() || keys_.front() != total_steps_) {
    throw std::invalid_argument("plan: key steps must include T=" + std::to_string(total_steps_));
  }
  key_of_.assign(static_cast<std::size_t>(total_steps_) + 1, 0);
  Timestep current = total_steps_;
  std::size_t next = 0;
  for (Timestep t = total_steps_; t >= 1; --t) {
    if (next < keys_.size() && keys_[next] == t) {
      current = t;
      ++next;
    }
    key_of_[static_cast<std::size_t>(t)] = current;
  }
}

std::vector<Timestep> PropagationPlan::non_key_steps() const {
  std::vector<Timestep> out;
  for (Timestep t = total_steps_; t >= 1; --t)
    if (!is_key(t)) out.push_back(t);
  return out;
}

bool PropagationPlan::is_key(Timestep t) const { return governing_key(t) == t; }

Timestep PropagationPlan::governing_key(Timestep t) const {
  if (t < 1 || t > total_steps_) throw std::out_of_range("plan: timestep " + std::to_string(t) + " out of range");
  return key_of_[static_cast<std::size_t>(t)];
}

std::vector<Timestep> PropagationPlan::run_of(Timestep key) const {
  if (!is_key(key)) throw std::invalid_argument("plan: " + std::to_string(key) + " is not a key step");
  std::vector<Timestep> out{key};
  for (Timestep t = key - 1; t >= 1 && !is_key(t); --t) out.push_back(t);
  return out;
}

PropagationPlan uniform_plan(int total_steps, int stride) {
  if (stride < 2) throw std::invalid_argument("uniform_plan: stride must be >= 2 (stride 1 is the full sampler)");
  if (total_steps < 2) throw std::invalid_argument("uniform_plan: T must be >= 2");
  std::vector<Timestep> keys;
  for (Timestep t = total_steps; t >= 1; t -= stride) keys.push_back(t);
  return PropagationPlan(total_steps, std::move(keys));
}

PropagationPlan nonuniform_plan(int total_steps, std::vector<Timestep> keys) {
  return PropagationPlan(total_steps, std::move(keys));
}

PropagationPlan all_key_plan(int total_steps) {
  std::vector<Timestep> keys(static_cast<std::size_t>(total_steps));
  std::iota(keys.rbegin(), keys.rend(), 1);
  return PropagationPlan(total_steps, std::move(keys));
}

PropagationPlan suggest_plan(const DeltaSeries& deltas, int budget) {
  const int T = deltas.total_steps;
  if (T < 2) throw std::invalid_argument("suggest_plan: delta series is empty");
  if (budget < 1 || budget > T) {
    throw std::invalid_argument("suggest_plan: budget " + std::to_string(budget) + " outside [1, " +
                                std::to_string(T) + "]");
  }
  // Step 1 has no successor to compare against; it ranks below every
  // measured step.
  std::vector<double> score(static_cast<std::size_t>(T) + 1, -std::numeric_limits<double>::infinity());
  for (Timestep t = T; t >= 2; --t) {
    double sum = 0.0;
    for (std::size_t b = 0; b < deltas.blocks.size(); ++b)
      if (is_encoder_block(deltas.blocks[b])) sum += deltas.delta(b, t);
    score[static_cast<std::size_t>(t)] = sum;
  }
  std::vector<Timestep> keys{T};
  std::vector<bool> taken(static_cast<std::size_t>(T) + 1, false);
  taken[static_cast<std::size_t>(T)] = true;
  while (static_cast<int>(keys.size()) < budget) {
    Timestep best = 0;
    // Scanning downward with a strict comparison breaks ties toward larger t.
    for (Timestep t = T - 1; t >= 1; --t) {
      if (taken[static_cast<std::size_t>(t)]) continue;
      if (best == 0 || score[static_cast<std::size_t>(t)] > score[static_cast<std::size_t>(best)]) best = t;
    }
    taken[static_cast<std::size_t>(best)] = true;
    keys.push_back(best);
  }
  return PropagationPlan(T, std::move(keys));
}

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 6> kStrategyNames{{
    {Strategy::full, "full"},
    {Strategy::encoder_prop, "encoder_prop"},
    {Strategy::encoder_prop_parallel, "encoder_prop_parallel"},
    {Strategy::decoder_prop, "decoder_prop"},
    {Strategy::both_prop, "both_prop"},
    {Strategy::alternating_drop, "alternating_drop"},
}};

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count();
}

// Shared state of one sampling run: the latent, the time embeddings, and
// the bookkeeping every strategy needs.
class Sampler {
 public:
  Sampler(const PropagationPlan& plan, const Tensor& z_T, const UNetParams& p, const NoiseSchedule& s,
          const SampleOptions& opts, const SampleHooks& hooks)
      : plan_(plan), z_T_(z_T), p_(p), s_(s), opts_(opts), hooks_(hooks), z_(z_T) {
    const int T = s.steps();
    embeddings_.reserve(static_cast<std::size_t>(T));
    for (Timestep t = 1; t <= T; ++t) embeddings_.push_back(time_embedding(t, p.config.time_embed_dim, T));
    if (hooks_.eps_out) hooks_.eps_out->assign(static_cast<std::size_t>(T), Tensor());
    if (opts_.record_trajectory) run_.trajectory.push_back(z_);
  }

  const Tensor& emb(Timestep t) const { return embeddings_[static_cast<std::size_t>(t - 1)]; }

  void at_step(Timestep t) {
    if (hooks_.at_step) hooks_.at_step(t, z_);
  }

  EncoderCache encode(Timestep t) {
    const auto start = Clock::now();
    EncoderCache c = encprop::encode(z_, emb(t), p_, t);
    run_.timings.encode_ns += elapsed_ns(start);
    ++run_.calls.encoder;
    return c;
  }

  DecodeResult decode(const EncoderCache& cache, Timestep t) {
    const auto start = Clock::now();
    DecodeResult r = encprop::decode(cache, emb(t), p_);
    run_.timings.decode_ns += elapsed_ns(start);
    ++run_.calls.decoder;
    return r;
  }

  // DDIM from t to t-1, then prior noise injection on the new latent.
  void update(Timestep t, const Tensor& eps) {
    const auto start = Clock::now();
    z_ = ddim_step(z_, eps, t, t - 1, s_);
    if (opts_.inject) z_ = inject_prior_noise(z_, z_T_, t - 1, opts_.inject->alpha, opts_.inject->tau);
    run_.timings.update_ns += elapsed_ns(start);
    if (hooks_.eps_out) (*hooks_.eps_out)[static_cast<std::size_t>(s_.steps() - t)] = eps;
    if (opts_.record_trajectory) run_.trajectory.push_back(z_);
  }

  void run_full();
  void run_encoder_prop();
  void run_encoder_prop_parallel();
  void run_decoder_prop();
  void run_both_prop();
  void run_alternating_drop();

  SampleRun finish(std::int64_t total_ns) {
    run_.z0 = z_;
    run_.timings.total_ns = total_ns;
    return std::move(run_);
  }

 private:
  const PropagationPlan& plan_;
  const Tensor& z_T_;
  const UNetParams& p_;
  const NoiseSchedule& s_;
  const SampleOptions& opts_;
  const SampleHooks& hooks_;
  std::vector<Tensor> embeddings_;
  Tensor z_;
  SampleRun run_;
};

void Sampler::run_full() {
  for (Timestep t = s_.steps(); t >= 1; --t) {
    at_step(t);
    EncoderCache cache = encode(t);
    DecodeResult dec = decode(cache, t);
    if (opts_.record_bundles) {
      FeatureBundle fb;
      fb.t = t;
      fb.enc = std::move(cache.skips);
      fb.bot = std::move(cache.bot);
      fb.dec = std::move(dec.features);
      fb.eps = dec.eps;
      run_.bundles.push_back(std::move(fb));
    }
    update(t, dec.eps);
  }
}

void Sampler::run_encoder_prop() {
  EncoderCache cache;
  for (Timestep t = s_.steps(); t >= 1; --t) {
    at_step(t);
    if (plan_.is_key(t)) cache = encode(t);
    update(t, decode(cache, t).eps);
  }
}

// Once a key step's cache exists, every step it governs can be decoded:
// the decoder reads the cache and its own time embedding, never the latent.
// The eps values are therefore computed for the whole run up front, one
// slot per timestep, and the latent is then advanced sequentially.
void Sampler::run_encoder_prop_parallel() {
  ThreadPool pool(opts_.workers);
  for (Timestep key : plan_.key_steps()) {
    at_step(key);
    const EncoderCache cache = encode(key);
    const std::vector<Timestep> run = plan_.run_of(key);
    std::vector<Tensor> eps(run.size());

    const auto start = Clock::now();
    if (opts_.decode_mode == DecodeMode::batched) {
      const PreparedDecoder prepared = prepare_decoder(cache, p_);
      pool.parallel_for(run.size(), [&](std::size_t i) { eps[i] = decode_prepared(prepared, emb(run[i]), p_).eps; });
    } else {
      pool.parallel_for(run.size(), [&](std::size_t i) { eps[i] = encprop::decode(cache, emb(run[i]), p_).eps; });
    }
    run_.timings.decode_ns += elapsed_ns(start);
    run_.calls.decoder += run.size();

    for (std::size_t i = 0; i < run.size(); ++i) {
      if (i > 0) at_step(run[i]);
      update(run[i], eps[i]);
    }
  }
}

void Sampler::run_decoder_prop() {
  Tensor eps;
  for (Timestep t = s_.steps(); t >= 1; --t) {
    at_step(t);
    // The encoder runs at every step; only key steps reach the decoder.
    EncoderCache cache = encode(t);
    if (plan_.is_key(t)) eps = decode(cache, t).eps;
    update(t, eps);
  }
}

void Sampler::run_both_prop() {
  Tensor eps;
  for (Timestep t = s_.steps(); t >= 1; --t) {
    at_step(t);
    if (plan_.is_key(t)) eps = decode(encode(t), t).eps;
    update(t, eps);
  }
}

void Sampler::run_alternating_drop() {
  EncoderCache cache;
  Tensor eps;
  int position = 0;  // index within the current key run
  for (Timestep t = s_.steps(); t >= 1; --t) {
    at_step(t);
    if (plan_.is_key(t)) {
      position = 0;
      cache = encode(t);
      eps = decode(cache, t).eps;
    } else if (++position % 2 == 1) {
      cache = encode(t);  // encoder only: eps carried over
    } else {
      eps = decode(cache, t).eps;  // decoder only: stale cache
    }
    update(t, eps);
  }
}

}  // namespace

std::string_view to_string(Strategy s) {
  for (const auto& [k, name] : kStrategyNames)
    if (k == s) return name;
  throw std::invalid_argument("unknown strategy");
}

Strategy parse_strategy(std::string_view name) {
  for (const auto& [k, n] : kStrategyNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all = [] {
    std::vector<Strategy> v;
    for (const auto& [k, _] : kStrategyNames) v.push_back(k);
    return v;
  }();
  return all;
}

std::string_view to_string(DecodeMode m) { return m == DecodeMode::batched ? "batched" : "loop_ordered"; }

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "loop_ordered") return DecodeMode::loop_ordered;
  if (name == "batched") return DecodeMode::batched;
  throw std::invalid_argument("unknown decode mode '" + std::string(name) + "'");
}

SampleRun sample(Strategy strategy, const PropagationPlan& plan, const Tensor& z_T, const UNetParams& p,
                 const NoiseSchedule& s, const SampleOptions& opts, const SampleHooks& hooks) {
  if (plan.steps() != s.steps()) {
    throw std::invalid_argument("sample: plan covers " + std::to_string(plan.steps()) + " steps, schedule has " +
                                std::to_string(s.steps()));
  }
  if (z_T.rank() != 2 || z_T.cols() != p.config.data_dim) {
    throw std::invalid_argument("sample: z_T must be [batch x " + std::to_string(p.config.data_dim) + "], got " +
                                shape_to_string(z_T.shape()));
  }
  if (opts.workers < 1) throw std::invalid_argument("sample: workers must be >= 1");

  const auto start = Clock::now();
  Sampler sampler(plan, z_T, p, s, opts, hooks);
  switch (strategy) {
    case Strategy::full: sampler.run_full(); break;
    case Strategy::encoder_prop: sampler.run_encoder_prop(); break;
    case Strategy::encoder_prop_parallel: sampler.run_encoder_prop_parallel(); break;
    case Strategy::decoder_prop: sampler.run_decoder_prop(); break;
    case Strategy::both_prop: sampler.run_both_prop(); break;
    case Strategy::alternating_drop: sampler.run_alternating_drop(); break;
  }
  return sampler.finish(elapsed_ns(start));
}

}  // namespace encprop
