#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "encprop/schedule.hpp"
#include "encprop/tensor.hpp"

namespace encprop {

// Layout of the split denoiser. Stage widths play the role of feature
// resolutions: the encoder walks stage_widths in order, the decoder walks
// them in reverse and concatenates the matching encoder output (skip) in
// front of its upstream input.
struct UNetConfig {
  std::size_t data_dim = 2;
  std::vector<std::size_t> stage_widths{64, 32, 16};
  std::size_t bottleneck_width = 16;
  std::size_t time_embed_dim = 16;
  std::uint64_t seed = 0;

  std::size_t stages() const { return stage_widths.size(); }
  // Throws std::invalid_argument on a malformed configuration.
  void validate() const;

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

// One dense layer with additive time conditioning:
//   silu(x·weight + bias + t_emb·time_proj)
// The output head carries no time projection and no activation.
struct DenseBlock {
  Tensor weight;     // [fan_in x fan_out]
  Tensor bias;       // [fan_out]
  Tensor time_proj;  // [time_embed_dim x fan_out], empty for the head

  std::size_t fan_in() const { return weight.shape()[0]; }
  std::size_t fan_out() const { return weight.shape()[1]; }
  bool has_time() const { return !time_proj.empty(); }

  friend bool operator==(const DenseBlock&, const DenseBlock&) = default;
};

struct UNetParams {
  UNetConfig config;
  std::vector<DenseBlock> encoder;  // S blocks, encoder[0] reads the data vector
  DenseBlock bottleneck;
  std::vector<DenseBlock> decoder;  // S blocks, decoder[i] emits stage_widths[S-1-i]
  DenseBlock head;

  // Every tensor in declaration order: encoder blocks (weight, bias,
  // time_proj), bottleneck, decoder blocks, head (weight, bias). This is
  // the checkpoint order.
  std::vector<const Tensor*> tensors() const;
  std::vector<Tensor*> tensors();
  std::size_t parameter_count() const;

  friend bool operator==(const UNetParams&, const UNetParams&) = default;
};

// Zero-valued parameters with the shapes implied by `cfg`.
UNetParams zero_params(const UNetConfig& cfg);

// Glorot-uniform weights and time projections from cfg.seed, zero biases.
UNetParams init_params(const UNetConfig& cfg);

// Sinusoidal embedding: (sin(t·w_k), cos(t·w_k)) pairs, w_k = 10000^(-2k/dim).
// Returns shape [1 x dim].
Tensor time_embedding(Timestep t, std::size_t dim, int total_steps);

// Encoder outputs that the decoder consumes. Holding one of these is all a
// decoder call needs besides the time embedding.
struct EncoderCache {
  Timestep source_key_t = 0;
  std::vector<Tensor> skips;  // skips[i] has width stage_widths[i]
  Tensor bot;
};

struct DecodeResult {
  Tensor eps;
  std::vector<Tensor> features;  // decoder block outputs, deepest first
};

struct FeatureBundle {
  Timestep t = 0;
  std::vector<Tensor> enc;
  Tensor bot;
  std::vector<Tensor> dec;
  Tensor eps;
};

// z is [batch x data_dim]; t_emb is [1 x time_embed_dim] (shared by every
// row) or [batch x time_embed_dim].
EncoderCache encode(const Tensor& z, const Tensor& t_emb, const UNetParams& p, Timestep source_t = 0);

// Reads only the cache and the time embedding. There is deliberately no
// latent argument.
DecodeResult decode(const EncoderCache& cache, const Tensor& t_emb, const UNetParams& p);

// Full network evaluation at timestep t with all feature taps.
FeatureBundle forward(const Tensor& z, Timestep t, const UNetParams& p, const NoiseSchedule& s);

// Decoder terms that do not depend on the time embedding: the skip half of
// every decoder block's input product (plus its bias), and for the first
// block the bottleneck half as well. Computed once per cache, they let a
// run of decoder calls on the same cache skip that work. Splitting the
// concatenated product changes the summation order, so results agree with
// decode() to rounding, not bit for bit.
struct PreparedDecoder {
  std::vector<Tensor> shared;  // per decoder block, [batch x fan_out]
};

PreparedDecoder prepare_decoder(const EncoderCache& cache, const UNetParams& p);
DecodeResult decode_prepared(const PreparedDecoder& prepared, const Tensor& t_emb, const UNetParams& p);

}  // namespace encprop
