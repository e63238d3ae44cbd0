#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "encprop/schedule.hpp"
#include "test_util.hpp"

using namespace encprop;
using encprop::testing::random_tensor;
using encprop::testing::rel_err;

namespace {
NoiseSchedule default_schedule() { return make_linear_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd); }
}  // namespace

TEST(Schedule, TwoStepProduct) {
  const NoiseSchedule s = make_linear_schedule(2, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9);
  EXPECT_DOUBLE_EQ(s.alpha_bar(2), 0.81);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, DefaultAlphaBarMatchesOracle) {
  // tests/oracles/frozen_values.py
  EXPECT_LT(rel_err(default_schedule().alpha_bar(50), 0.602951597329715), 1e-12);
}

TEST(Schedule, CumulativeProductAndStrictDecrease) {
  for (auto [T, b0, b1] : {std::tuple{50, 1e-4, 0.02}, std::tuple{2, 0.3, 0.3}, std::tuple{1000, 1e-4, 0.02}}) {
    const NoiseSchedule s = make_linear_schedule(T, b0, b1);
    ASSERT_EQ(s.betas().size(), static_cast<std::size_t>(T));
    ASSERT_EQ(s.alpha_bars().size(), static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= 1.0 - s.beta(t);
      EXPECT_LT(rel_err(s.alpha_bar(t), prod), 1e-12);
      EXPECT_GT(s.alpha_bar(t), 0.0);
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    }
  }
}

TEST(Schedule, InvalidRangesThrow) {
  EXPECT_THROW(make_linear_schedule(1, 0.1, 0.2), std::invalid_argument);
  EXPECT_THROW(make_linear_schedule(10, 0.0, 0.2), std::invalid_argument);
  EXPECT_THROW(make_linear_schedule(10, 0.3, 0.2), std::invalid_argument);
  EXPECT_THROW(make_linear_schedule(10, 0.1, 1.0), std::invalid_argument);
}

TEST(Schedule, AddNoise) {
  const NoiseSchedule s = default_schedule();
  const Tensor x0 = random_tensor({4, 2}, 1), eps = random_tensor({4, 2}, 2);
  EXPECT_EQ(add_noise(x0, Tensor::zeros({4, 2}), 10, s), scale(x0, std::sqrt(s.alpha_bar(10))));
  EXPECT_THROW(add_noise(x0, eps, 0, s), std::out_of_range);
  EXPECT_THROW(add_noise(x0, eps, 51, s), std::out_of_range);

  const NoiseSchedule one = make_linear_schedule(2, 1e-15, 1e-15);
  const Tensor z = add_noise(x0, eps, 1, one);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_LT(std::abs(z[i] - x0[i]), 1e-6);

  // x0 = 1.5, eps = -0.5 at alpha_bar = 0.64 (beta 0.2 then 0.2)
  const NoiseSchedule s64 = make_linear_schedule(2, 0.2, 0.2);
  EXPECT_LT(rel_err(add_noise(Tensor::vector({1.5}), Tensor::vector({-0.5}), 2, s64)[0], 0.9000000000000001), 1e-15);
}

TEST(Schedule, AddNoiseThenPerfectDenoisingRecoversX0) {
  const NoiseSchedule s = default_schedule();
  const Tensor x0 = random_tensor({8, 2}, 3), eps = random_tensor({8, 2}, 4);
  for (Timestep t : {1, 17, 50}) {
    const Tensor z = add_noise(x0, eps, t, s);
    const double ab = s.alpha_bar(t);
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_LT(rel_err((z[i] - std::sqrt(1 - ab) * eps[i]) / std::sqrt(ab), x0[i]), 1e-10);
    }
  }
}

TEST(Schedule, DdimStepExamples) {
  const NoiseSchedule s = default_schedule();
  const Tensor z = random_tensor({3, 2}, 5);
  EXPECT_EQ(ddim_step(z, Tensor::zeros({3, 2}), 30, 20, s), scale(z, std::sqrt(s.alpha_bar(20) / s.alpha_bar(30))));
  EXPECT_THROW(ddim_step(z, z, 20, 20, s), std::invalid_argument);
  EXPECT_THROW(ddim_step(z, z, 20, 30, s), std::invalid_argument);
  EXPECT_THROW(ddim_step(z, z, 51, 3, s), std::out_of_range);

  // alpha_bar_prev close to alpha_bar_t: the step barely moves z.
  const NoiseSchedule flat = make_linear_schedule(3, 1e-15, 1e-15);
  const Tensor moved = ddim_step(z, Tensor::zeros({3, 2}), 3, 2, flat);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_LT(std::abs(moved[i] - z[i]), 1e-12);
}

TEST(Schedule, DdimScalarMatchesOracle) {
  // alpha_bar_t = 0.25, alpha_bar_prev = 0.81 via a hand-made two-step schedule:
  // beta_1 = 0.19, beta_2 = 1 - 0.25/0.81.
  const NoiseSchedule s({0.19, 1.0 - 0.25 / 0.81});
  ASSERT_LT(rel_err(s.alpha_bar(2), 0.25), 1e-15);
  const double z = ddim_step(Tensor::vector({1}), Tensor::vector({1}), 2, 1, s)[0];
  EXPECT_LT(rel_err(z, 0.6770441675420777), 1e-14);
}

TEST(Schedule, DdimTelescopesWithZeroEps) {
  const NoiseSchedule s = default_schedule();
  Tensor z = random_tensor({4, 2}, 6);
  const Tensor z_T = z;
  for (Timestep t = 50; t >= 1; --t) z = ddim_step(z, Tensor::zeros({4, 2}), t, t - 1, s);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_LT(rel_err(z[i], z_T[i] / std::sqrt(s.alpha_bar(50))), 1e-9);
}

TEST(Schedule, DdpmStep) {
  const NoiseSchedule tiny = make_linear_schedule(2, 1e-15, 1e-15);
  const Tensor z = random_tensor({3, 2}, 7), zero = Tensor::zeros({3, 2});
  const Tensor out = ddpm_step(z, zero, 2, tiny, zero);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_LT(std::abs(out[i] - z[i]), 1e-9);
}

TEST(Schedule, DdpmScalarMatchesOracle) {
  // beta_t = 0.02 with alpha_bar_t = 0.5: beta_1 = 1 - 0.5/0.98, beta_2 = 0.02.
  const NoiseSchedule s({1.0 - 0.5 / 0.98, 0.02});
  ASSERT_LT(rel_err(s.alpha_bar(2), 0.5), 1e-15);
  const double z = ddpm_step(Tensor::vector({0.7}), Tensor::vector({-0.3}), 2, s, Tensor::vector({0}))[0];
  EXPECT_LT(rel_err(z, 0.7156782097579759), 1e-14);
}

TEST(Schedule, DdpmAtStepOneWithZeroNoiseIsDeterministic) {
  const NoiseSchedule s = default_schedule();
  const Tensor z = random_tensor({2, 2}, 8), eps = random_tensor({2, 2}, 9), zero = Tensor::zeros({2, 2});
  const Tensor expected = scale(sub(z, scale(eps, s.beta(1) / std::sqrt(1 - s.alpha_bar(1)))), 1 / std::sqrt(1 - s.beta(1)));
  EXPECT_EQ(ddpm_step(z, eps, 1, s, zero), expected);
}

TEST(Schedule, PriorNoiseInjection) {
  const Tensor z = random_tensor({5, 2}, 10), z_T = random_tensor({5, 2}, 11);
  const PriorNoiseInjection defaults;
  EXPECT_EQ(defaults.alpha, 0.003);
  EXPECT_EQ(defaults.tau, 25);
  for (Timestep t = 1; t <= 50; ++t) EXPECT_EQ(inject_prior_noise(z, z_T, t, 0.0, 25), z);
  for (Timestep t = 25; t <= 50; ++t) EXPECT_EQ(inject_prior_noise(z, z_T, t, 0.003, 25), z);
  const Tensor zero = Tensor::zeros({5, 2});
  for (Timestep t = 1; t < 25; ++t) {
    EXPECT_EQ(inject_prior_noise(z, z_T, t, 0.003, 25), add(z, scale(z_T, 0.003)));
    // From a zero latent the added term is observed without rounding.
    const Tensor one = inject_prior_noise(zero, z_T, t, 0.003, 25);
    EXPECT_EQ(inject_prior_noise(zero, z_T, t, 0.006, 25), scale(one, 2.0));
    EXPECT_EQ(one, scale(z_T, 0.003));
  }
}
