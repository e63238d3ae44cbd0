#include "encprop/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace encprop {

NoiseSchedule::NoiseSchedule(std::vector<double> beta) : beta_(std::move(beta)) {
  if (beta_.size() < 2) throw std::invalid_argument("NoiseSchedule: need at least 2 steps");
  alpha_bar_.reserve(beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    const double b = beta_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("NoiseSchedule: beta[" + std::to_string(i + 1) + "] = " + std::to_string(b) +
                                  " outside (0,1)");
    }
    prod *= 1.0 - b;
    if (!alpha_bar_.empty() && !(prod < alpha_bar_.back())) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing at t=" + std::to_string(i + 1));
    }
    alpha_bar_.push_back(prod);
  }
}

void NoiseSchedule::check_step(Timestep t, bool allow_zero) const {
  const int lo = allow_zero ? 0 : 1;
  if (t < lo || t > steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(Timestep t) const {
  check_step(t, false);
  return beta_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(Timestep t) const {
  check_step(t, true);
  return t == 0 ? 1.0 : alpha_bar_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw std::invalid_argument("make_linear_schedule: T must be >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> beta(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    beta[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * i / (steps - 1);
  }
  return NoiseSchedule(std::move(beta));
}

Tensor add_noise(const Tensor& x0, const Tensor& eps, Timestep t, const NoiseSchedule& s) {
  const double ab = s.alpha_bar(t);
  if (t == 0) throw std::out_of_range("add_noise: timestep 0 is the clean sample");
  return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps, Timestep t, Timestep t_prev, const NoiseSchedule& s) {
  if (t_prev >= t) {
    throw std::invalid_argument("ddim_step: t_prev (" + std::to_string(t_prev) + ") must be < t (" +
                                std::to_string(t) + ")");
  }
  if (t < 1) throw std::out_of_range("ddim_step: t must be >= 1");
  const double a_t = s.alpha_bar(t);
  const double a_prev = s.alpha_bar(t_prev);
  const double c_latent = std::sqrt(a_prev / a_t);
  const double c_eps = std::sqrt(a_prev) * (std::sqrt(1.0 / a_prev - 1.0) - std::sqrt(1.0 / a_t - 1.0));
  return add(scale(z_t, c_latent), scale(eps, c_eps));
}

Tensor ddpm_step(const Tensor& z_t, const Tensor& eps, Timestep t, const NoiseSchedule& s, const Tensor& noise) {
  const double b = s.beta(t);
  const double ab = s.alpha_bar(t);
  const Tensor mean = scale(sub(z_t, scale(eps, b / std::sqrt(1.0 - ab))), 1.0 / std::sqrt(1.0 - b));
  return add(mean, scale(noise, std::sqrt(b)));
}

Tensor inject_prior_noise(const Tensor& z_t, const Tensor& z_T, Timestep t, double alpha, Timestep tau) {
  if (z_t.shape() != z_T.shape()) {
    throw std::invalid_argument("inject_prior_noise: shape mismatch " + shape_to_string(z_t.shape()) + " vs " +
                                shape_to_string(z_T.shape()));
  }
  if (t >= tau || alpha == 0.0) return z_t;
  return add(z_t, scale(z_T, alpha));
}

}  // namespace encprop
