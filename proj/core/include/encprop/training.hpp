#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "encprop/schedule.hpp"
#include "encprop/tensor.hpp"
#include "encprop/unet.hpp"

namespace encprop {

enum class DatasetKind { gmm8, swissroll, checker };

std::string_view to_string(DatasetKind k);
DatasetKind parse_dataset_kind(std::string_view name);

// Two-dimensional point clouds used to give the denoiser something to learn.
//   gmm8:      8 Gaussians (sigma 0.1) centred on the unit circle
//   swissroll: noisy spiral scaled to roughly [-1, 1]^2
//   checker:   uniform over the dark squares of a 4x4 board on [-1, 1]^2
struct ToyDataset {
  DatasetKind kind = DatasetKind::gmm8;
  std::uint64_t seed = 0;
  Tensor points;  // [n x 2]
};

ToyDataset make_toy_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed);

// Standard normal tensor of the given shape.
Tensor gaussian(Shape shape, std::mt19937_64& rng);

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossAndGrads {
  double loss = 0.0;
  UNetParams grads;  // same layout as the parameters
};

// Epsilon-prediction objective for explicit timesteps and noise:
//   mean_b || noise_b - eps_theta(add_noise(x0_b, noise_b, t_b), t_b) ||^2
// with gradients by reverse-mode differentiation through the network.
LossAndGrads loss_and_grads(const UNetParams& p, const Tensor& x0, const std::vector<Timestep>& t, const Tensor& noise,
                            const NoiseSchedule& s);

// Same objective with t uniform in {1..T} and standard normal noise drawn
// from `rng` (t for every row first, then the noise).
LossAndGrads loss_and_grads(const UNetParams& p, const Tensor& x0, const NoiseSchedule& s, std::mt19937_64& rng);

// Loss only, same arithmetic as loss_and_grads.
double denoising_loss(const UNetParams& p, const Tensor& x0, const std::vector<Timestep>& t, const Tensor& noise,
                      const NoiseSchedule& s);

struct TrainResult {
  UNetParams params;
  std::vector<double> loss_curve;  // loss before each update
};

// Adam on minibatches drawn with replacement from the dataset. Throws
// std::runtime_error naming the step if the loss stops being finite.
TrainResult train(UNetParams params, const ToyDataset& ds, const TrainConfig& tc, const NoiseSchedule& s,
                  const std::function<void(std::size_t step, double loss)>& progress = {});

// "step,loss" with one row per optimisation step.
std::string loss_curve_csv(const std::vector<double>& curve);

// Energy distance between two point sets (rows), V-statistic form:
//   2·mean||x-y|| - mean||x-x'|| - mean||y-y'||
// with every ordered pair included, self pairs too, so identical sets give
// exactly zero.
double energy_distance(const Tensor& a, const Tensor& b);

}  // namespace encprop
