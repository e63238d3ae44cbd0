#pragma once

#include <cstddef>
#include <vector>

#include "encprop/tensor.hpp"

namespace encprop {

// Timesteps are 1-based: t = 1..T. Index 0 denotes the clean sample.
using Timestep = int;

// Per-step noise tables. alpha_bar is the cumulative product of (1 - beta);
// it is the quantity the DDIM update calls alpha_t.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> beta);

  int steps() const { return static_cast<int>(beta_.size()); }
  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  double beta(Timestep t) const;
  // alpha_bar(0) == 1 so the last DDIM step lands on the clean sample.
  double alpha_bar(Timestep t) const;

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  void check_step(Timestep t, bool allow_zero) const;

  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end);

// Defaults used across the project: 50 steps, beta linear 1e-4 -> 0.02.
inline constexpr int kDefaultSteps = 50;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

// Forward process: sqrt(abar_t)·x0 + sqrt(1 - abar_t)·eps.
Tensor add_noise(const Tensor& x0, const Tensor& eps, Timestep t, const NoiseSchedule& s);

// Deterministic DDIM update from t to t_prev (t > t_prev >= 0).
Tensor ddim_step(const Tensor& z_t, const Tensor& eps, Timestep t, Timestep t_prev, const NoiseSchedule& s);

// Ancestral DDPM update from t to t-1. `noise` is supplied by the caller;
// pass zeros at t == 1.
Tensor ddpm_step(const Tensor& z_t, const Tensor& eps, Timestep t, const NoiseSchedule& s, const Tensor& noise);

struct PriorNoiseInjection {
  double alpha = 0.003;
  Timestep tau = 25;
};

// z_t + alpha·z_T when t < tau, otherwise z_t unchanged.
Tensor inject_prior_noise(const Tensor& z_t, const Tensor& z_T, Timestep t, double alpha, Timestep tau);

}  // namespace encprop
