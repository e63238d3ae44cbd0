#include <gtest/gtest.h>

#include <algorithm>

#include "encprop/analysis.hpp"
#include "encprop/propagation.hpp"
#include "encprop/serialize.hpp"
#include "encprop/thread_pool.hpp"
#include "test_util.hpp"

using namespace encprop;
using encprop::testing::random_tensor;
using encprop::testing::rel_err;

namespace {

struct World {
  UNetParams params;
  NoiseSchedule schedule = make_linear_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd);
  PropagationPlan nine_key = nonuniform_plan(50, kDefaultKeySteps);
  Tensor z_T = random_tensor({32, 2}, 99, -2, 2);

  World() {
    params = init_params(UNetConfig{});
    std::uint64_t k = 500;
    for (Tensor* t : params.tensors()) *t = add(*t, random_tensor(t->shape(), ++k, -0.1, 0.1));
  }
};

const World& world() {
  static const World w;
  return w;
}

std::vector<Timestep> range_desc(Timestep hi, Timestep lo, Timestep step) {
  std::vector<Timestep> v;
  for (Timestep t = hi; t >= lo; t -= step) v.push_back(t);
  return v;
}

}  // namespace

TEST(Plan, UniformStrideTwo) {
  const PropagationPlan p = uniform_plan(50, 2);
  EXPECT_EQ(p.key_steps(), range_desc(50, 2, 2));
  EXPECT_EQ(p.key_steps().size(), 25u);
}

TEST(Plan, UniformStrideSix) {
  EXPECT_EQ(uniform_plan(50, 6).key_steps(), (std::vector<Timestep>{50, 44, 38, 32, 26, 20, 14, 8, 2}));
}

TEST(Plan, SmallestUniform) {
  const PropagationPlan p = uniform_plan(4, 2);
  EXPECT_EQ(p.key_steps(), (std::vector<Timestep>{4, 2}));
  EXPECT_EQ(p.governing_key(3), 4);
  EXPECT_EQ(p.governing_key(1), 2);
  EXPECT_THROW(uniform_plan(50, 1), std::invalid_argument);
}

TEST(Plan, NineKeyPlan) {
  const PropagationPlan p = nonuniform_plan(50, {50, 49, 48, 47, 45, 40, 35, 25, 15});
  EXPECT_EQ(p.key_steps().size(), 9u);
  EXPECT_EQ(p.non_key_steps().size(), 41u);
  EXPECT_EQ(p.governing_key(46), 47);
  EXPECT_EQ(p.governing_key(44), 45);
  EXPECT_EQ(p.governing_key(1), 15);
  EXPECT_EQ(p.run_of(25), range_desc(25, 16, 1));
}

TEST(Plan, SecondNonUniformSet) {
  const PropagationPlan p = nonuniform_plan(50, {50, 30, 25, 20, 15, 14, 5, 4, 3});
  EXPECT_EQ(p.key_steps().size(), 9u);
  EXPECT_EQ(p.governing_key(2), 3);
  EXPECT_EQ(p.governing_key(31), 50);
}

TEST(Plan, PartitionInvariant) {
  for (const PropagationPlan& p : {uniform_plan(50, 2), uniform_plan(50, 7), world().nine_key, all_key_plan(50),
                                   nonuniform_plan(50, {50, 3}), nonuniform_plan(10, {1, 10, 5})}) {
    std::vector<Timestep> all = p.key_steps();
    const auto non = p.non_key_steps();
    all.insert(all.end(), non.begin(), non.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), static_cast<std::size_t>(p.steps()));
    for (int i = 0; i < p.steps(); ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i + 1);
    EXPECT_EQ(p.key_steps().front(), p.steps());
    for (Timestep t : non) {
      const Timestep k = p.governing_key(t);
      EXPECT_GT(k, t);
      for (Timestep u = t + 1; u < k; ++u) EXPECT_FALSE(p.is_key(u));
    }
  }
}

TEST(Plan, InvalidKeySets) {
  EXPECT_THROW(nonuniform_plan(50, {49, 30}), std::invalid_argument);
  EXPECT_THROW(nonuniform_plan(50, {50, 30, 30}), std::invalid_argument);
  EXPECT_THROW(nonuniform_plan(50, {50, 0}), std::invalid_argument);
  EXPECT_THROW(nonuniform_plan(50, {50, 51}), std::invalid_argument);
}

TEST(Plan, JsonRoundTrip) {
  const PropagationPlan p = world().nine_key;
  EXPECT_EQ(plan_from_json(plan_to_json(p)), p);
  EXPECT_EQ(plan_to_json(nonuniform_plan(4, {4, 2})), R"({"T":4,"key_steps":[4,2]})");
}

TEST(SuggestPlan, BudgetExtremesAndSpike) {
  DeltaSeries d;
  d.total_steps = 50;
  d.blocks = {"enc0", "enc1", "bot", "dec0"};
  d.values.assign(4, std::vector<double>(49, 0.01));
  EXPECT_EQ(suggest_plan(d, 50), all_key_plan(50));
  EXPECT_EQ(suggest_plan(d, 1).key_steps(), std::vector<Timestep>{50});

  d.values[1][50 - 30] = 5.0;
  d.values[3][50 - 20] = 100.0;  // decoder deltas do not count
  EXPECT_EQ(suggest_plan(d, 2).key_steps(), (std::vector<Timestep>{50, 30}));
  EXPECT_THROW(suggest_plan(d, 0), std::invalid_argument);
  EXPECT_THROW(suggest_plan(d, 51), std::invalid_argument);
}

TEST(SuggestPlan, TiesGoToLargerT) {
  DeltaSeries d;
  d.total_steps = 10;
  d.blocks = {"enc0"};
  d.values.assign(1, std::vector<double>(9, 1.0));
  EXPECT_EQ(suggest_plan(d, 3).key_steps(), (std::vector<Timestep>{10, 9, 8}));
}

TEST(Strategy, NamesRoundTrip) {
  for (Strategy s : all_strategies()) EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_EQ(all_strategies().size(), 6u);
  EXPECT_THROW(parse_strategy("nope"), std::invalid_argument);
  EXPECT_EQ(parse_decode_mode("batched"), DecodeMode::batched);
}

TEST(Sampler, AllKeyPlanEqualsFullBitExactly) {
  const World& w = world();
  const PropagationPlan all = all_key_plan(50);
  const Tensor full = sample(Strategy::full, all, w.z_T, w.params, w.schedule).z0;
  EXPECT_EQ(sample(Strategy::encoder_prop, all, w.z_T, w.params, w.schedule).z0, full);
  for (std::size_t workers : {1u, 3u}) {
    SampleOptions o;
    o.workers = workers;
    EXPECT_EQ(sample(Strategy::encoder_prop_parallel, all, w.z_T, w.params, w.schedule, o).z0, full);
  }
  // Every other strategy also degenerates to full.
  for (Strategy s : {Strategy::decoder_prop, Strategy::both_prop, Strategy::alternating_drop})
    EXPECT_EQ(sample(s, all, w.z_T, w.params, w.schedule).z0, full) << to_string(s);
}

TEST(Sampler, ParallelMatchesSequentialAcrossWorkerCounts) {
  const World& w = world();
  const Tensor seq = sample(Strategy::encoder_prop, w.nine_key, w.z_T, w.params, w.schedule).z0;
  for (std::size_t workers : {1u, 2u, 8u}) {
    SampleOptions o;
    o.workers = workers;
    EXPECT_EQ(sample(Strategy::encoder_prop_parallel, w.nine_key, w.z_T, w.params, w.schedule, o).z0, seq)
        << workers << " workers";
    o.decode_mode = DecodeMode::batched;
    const Tensor batched = sample(Strategy::encoder_prop_parallel, w.nine_key, w.z_T, w.params, w.schedule, o).z0;
    for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_LE(rel_err(batched[i], seq[i]), 1e-10);
  }
}

TEST(Sampler, DecoderIgnoresTheLatentAtNonKeySteps) {
  const World& w = world();
  std::vector<Tensor> clean, perturbed;
  SampleHooks h1;
  h1.eps_out = &clean;
  sample(Strategy::encoder_prop, w.nine_key, w.z_T, w.params, w.schedule, {}, h1);

  SampleHooks h2;
  h2.eps_out = &perturbed;
  h2.at_step = [](Timestep t, Tensor& z) {
    if (t == 30) z = random_tensor(z.shape(), 1234, -50, 50);
  };
  sample(Strategy::encoder_prop, w.nine_key, w.z_T, w.params, w.schedule, {}, h2);
  EXPECT_EQ(perturbed[50 - 30], clean[50 - 30]);
  // The perturbation does reach the next key step.
  EXPECT_NE(perturbed[50 - 25], clean[50 - 25]);
}

TEST(Sampler, CallCountsPerStrategy) {
  const World& w = world();
  const PropagationPlan& plan = w.nine_key;
  for (Strategy s : all_strategies()) {
    const SampleRun run = sample(s, plan, w.z_T, w.params, w.schedule);
    const ComponentCalls expected = component_calls(s, plan);
    EXPECT_EQ(run.calls.encoder, expected.encoder) << to_string(s);
    EXPECT_EQ(run.calls.decoder, expected.decoder) << to_string(s);
  }
  const SampleRun ep = sample(Strategy::encoder_prop, plan, w.z_T, w.params, w.schedule);
  EXPECT_EQ(ep.calls.encoder, 9u);
  EXPECT_EQ(ep.calls.decoder, 50u);
  const SampleRun bp = sample(Strategy::both_prop, plan, w.z_T, w.params, w.schedule);
  EXPECT_EQ(bp.calls.decoder, 9u);
}

TEST(Sampler, TrajectoryAndBundles) {
  const World& w = world();
  SampleOptions o;
  o.record_trajectory = true;
  o.record_bundles = true;
  const SampleRun run = sample(Strategy::full, w.nine_key, w.z_T, w.params, w.schedule, o);
  ASSERT_EQ(run.trajectory.size(), 51u);
  EXPECT_EQ(run.trajectory.front(), w.z_T);
  EXPECT_EQ(run.trajectory.back(), run.z0);
  ASSERT_EQ(run.bundles.size(), 50u);
  EXPECT_EQ(run.bundles.front().t, 50);
  EXPECT_EQ(run.bundles.back().t, 1);
}

TEST(Sampler, InjectionAddsPriorNoiseAfterEachUpdate) {
  const World& w = world();
  SampleOptions plain, inj;
  plain.record_trajectory = inj.record_trajectory = true;
  inj.inject = PriorNoiseInjection{};
  std::vector<Tensor> eps;
  SampleHooks h;
  h.eps_out = &eps;
  const SampleRun a = sample(Strategy::encoder_prop, w.nine_key, w.z_T, w.params, w.schedule, inj, h);
  // Replay the latent scan with the recorded eps.
  Tensor z = w.z_T;
  for (Timestep t = 50; t >= 1; --t) {
    z = ddim_step(z, eps[static_cast<std::size_t>(50 - t)], t, t - 1, w.schedule);
    if (t - 1 < 25) z = add(z, scale(w.z_T, 0.003));
    EXPECT_EQ(a.trajectory[static_cast<std::size_t>(51 - t)], z) << "t=" << t;
  }
  const SampleRun b = sample(Strategy::encoder_prop, w.nine_key, w.z_T, w.params, w.schedule, plain);
  EXPECT_EQ(a.trajectory[25], b.trajectory[25]);  // z_25: nothing injected yet
  EXPECT_NE(a.z0, b.z0);
}

TEST(Sampler, RejectsMismatchedInputs) {
  const World& w = world();
  EXPECT_THROW(sample(Strategy::full, uniform_plan(40, 2), w.z_T, w.params, w.schedule), std::invalid_argument);
  EXPECT_THROW(sample(Strategy::full, w.nine_key, random_tensor({3, 3}, 1), w.params, w.schedule), std::invalid_argument);
  SampleOptions o;
  o.workers = 0;
  EXPECT_THROW(sample(Strategy::encoder_prop_parallel, w.nine_key, w.z_T, w.params, w.schedule, o), std::invalid_argument);
}

TEST(ThreadPool, RunsEveryIndexOnceAndRethrows) {
  for (std::size_t n : {1u, 4u, 8u}) {
    ThreadPool pool(n);
    EXPECT_EQ(pool.size(), n);
    std::vector<int> hits(100, 0);
    pool.parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    pool.parallel_for(0, [](std::size_t) { FAIL(); });
    EXPECT_THROW(pool.parallel_for(10,
                                   [](std::size_t i) {
                                     if (i == 7) throw std::runtime_error("boom");
                                   }),
                 std::runtime_error);
    pool.parallel_for(3, [&](std::size_t i) { hits[i] += 1; });
    EXPECT_EQ(hits[2], 2);
  }
}
