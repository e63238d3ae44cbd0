#include "encprop/unet.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace encprop {

namespace {

DenseBlock zero_block(std::size_t fan_in, std::size_t fan_out, std::size_t time_dim) {
  DenseBlock b;
  b.weight = Tensor({fan_in, fan_out});
  b.bias = Tensor({fan_out});
  if (time_dim > 0) b.time_proj = Tensor({time_dim, fan_out});
  return b;
}

// Time contribution t_emb·U, [1 x n] or [batch x n].
Tensor time_term(const Tensor& t_emb, const Tensor& proj) {
  if (t_emb.rank() == 1) return matmul(Tensor({1, t_emb.size()}, {t_emb.data().begin(), t_emb.data().end()}), proj);
  return matmul(t_emb, proj);
}

Tensor block_forward(const Tensor& x, const DenseBlock& blk, const Tensor& t_emb) {
  Tensor a = add_rows(matmul(x, blk.weight), blk.bias);
  a = add_rows(a, time_term(t_emb, blk.time_proj));
  return silu(a);
}

void check_input(const Tensor& z, const UNetParams& p) {
  if (z.rank() != 2 || z.cols() != p.config.data_dim) {
    throw std::invalid_argument("encode: latent must be [batch x " + std::to_string(p.config.data_dim) + "], got " +
                                shape_to_string(z.shape()));
  }
}

void check_time(const Tensor& t_emb, const UNetParams& p) {
  if (t_emb.cols() != p.config.time_embed_dim) {
    throw std::invalid_argument("time embedding width " + std::to_string(t_emb.cols()) + " != " +
                                std::to_string(p.config.time_embed_dim));
  }
}

void check_cache(const EncoderCache& cache, const UNetParams& p) {
  const auto& w = p.config.stage_widths;
  if (cache.skips.size() != w.size()) {
    throw std::invalid_argument("decode: cache has " + std::to_string(cache.skips.size()) + " skips, expected " +
                                std::to_string(w.size()));
  }
  const std::size_t rows = cache.bot.rows();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (cache.skips[i].rank() != 2 || cache.skips[i].cols() != w[i] || cache.skips[i].rows() != rows) {
      throw std::invalid_argument("decode: skip " + std::to_string(i) + " has shape " +
                                  shape_to_string(cache.skips[i].shape()));
    }
  }
  if (cache.bot.rank() != 2 || cache.bot.cols() != p.config.bottleneck_width) {
    throw std::invalid_argument("decode: bottleneck has shape " + shape_to_string(cache.bot.shape()));
  }
}

}  // namespace

void UNetConfig::validate() const {
  if (data_dim < 1) throw std::invalid_argument("UNetConfig: data_dim must be positive");
  if (stage_widths.size() < 2) throw std::invalid_argument("UNetConfig: need at least 2 stages");
  for (std::size_t w : stage_widths)
    if (w < 2) throw std::invalid_argument("UNetConfig: stage widths must be >= 2");
  if (bottleneck_width < 2) throw std::invalid_argument("UNetConfig: bottleneck_width must be >= 2");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
    throw std::invalid_argument("UNetConfig: time_embed_dim must be a positive even integer");
  }
}

std::vector<const Tensor*> UNetParams::tensors() const {
  std::vector<const Tensor*> out;
  auto push = [&out](const DenseBlock& b) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
    if (b.has_time()) out.push_back(&b.time_proj);
  };
  for (const auto& b : encoder) push(b);
  push(bottleneck);
  for (const auto& b : decoder) push(b);
  push(head);
  return out;
}

std::vector<Tensor*> UNetParams::tensors() {
  std::vector<Tensor*> out;
  for (const Tensor* t : std::as_const(*this).tensors()) out.push_back(const_cast<Tensor*>(t));
  return out;
}

std::size_t UNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

UNetParams zero_params(const UNetConfig& cfg) {
  cfg.validate();
  UNetParams p;
  p.config = cfg;
  const auto& w = cfg.stage_widths;
  const std::size_t S = w.size();
  std::size_t prev = cfg.data_dim;
  for (std::size_t i = 0; i < S; ++i) {
    p.encoder.push_back(zero_block(prev, w[i], cfg.time_embed_dim));
    prev = w[i];
  }
  p.bottleneck = zero_block(w[S - 1], cfg.bottleneck_width, cfg.time_embed_dim);
  std::size_t incoming = cfg.bottleneck_width;
  for (std::size_t i = 0; i < S; ++i) {
    const std::size_t out = w[S - 1 - i];
    p.decoder.push_back(zero_block(out + incoming, out, cfg.time_embed_dim));
    incoming = out;
  }
  p.head = zero_block(w[0], cfg.data_dim, 0);
  return p;
}

UNetParams init_params(const UNetConfig& cfg) {
  UNetParams p = zero_params(cfg);
  std::mt19937_64 rng(cfg.seed);
  auto fill = [&rng](Tensor& t) {
    const double limit = std::sqrt(6.0 / static_cast<double>(t.shape()[0] + t.shape()[1]));
    for (double& v : t.data()) {
      // 53 random mantissa bits mapped to [0,1), then to [-limit, limit).
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = (2.0 * u - 1.0) * limit;
    }
  };
  auto fill_block = [&fill](DenseBlock& b) {
    fill(b.weight);
    if (b.has_time()) fill(b.time_proj);
  };
  for (auto& b : p.encoder) fill_block(b);
  fill_block(p.bottleneck);
  for (auto& b : p.decoder) fill_block(b);
  fill_block(p.head);
  return p;
}

Tensor time_embedding(Timestep t, std::size_t dim, int total_steps) {
  if (t < 1 || t > total_steps) {
    throw std::out_of_range("time_embedding: timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(total_steps) + "]");
  }
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be a positive even integer");
  Tensor e({1, dim});
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    e[2 * k] = std::sin(t * omega);
    e[2 * k + 1] = std::cos(t * omega);
  }
  return e;
}

EncoderCache encode(const Tensor& z, const Tensor& t_emb, const UNetParams& p, Timestep source_t) {
  check_input(z, p);
  check_time(t_emb, p);
  EncoderCache cache;
  cache.source_key_t = source_t;
  cache.skips.reserve(p.encoder.size());
  Tensor h = z;
  for (const auto& blk : p.encoder) {
    h = block_forward(h, blk, t_emb);
    cache.skips.push_back(h);
  }
  cache.bot = block_forward(h, p.bottleneck, t_emb);
  return cache;
}

DecodeResult decode(const EncoderCache& cache, const Tensor& t_emb, const UNetParams& p) {
  check_cache(cache, p);
  check_time(t_emb, p);
  const std::size_t S = p.decoder.size();
  DecodeResult r;
  r.features.reserve(S);
  Tensor h = cache.bot;
  for (std::size_t i = 0; i < S; ++i) {
    h = block_forward(concat(cache.skips[S - 1 - i], h, 1), p.decoder[i], t_emb);
    r.features.push_back(h);
  }
  r.eps = add_rows(matmul(h, p.head.weight), p.head.bias);
  return r;
}

FeatureBundle forward(const Tensor& z, Timestep t, const UNetParams& p, const NoiseSchedule& s) {
  const Tensor t_emb = time_embedding(t, p.config.time_embed_dim, s.steps());
  EncoderCache cache = encode(z, t_emb, p, t);
  DecodeResult dec = decode(cache, t_emb, p);
  FeatureBundle fb;
  fb.t = t;
  fb.enc = std::move(cache.skips);
  fb.bot = std::move(cache.bot);
  fb.dec = std::move(dec.features);
  fb.eps = std::move(dec.eps);
  return fb;
}

PreparedDecoder prepare_decoder(const EncoderCache& cache, const UNetParams& p) {
  check_cache(cache, p);
  const std::size_t S = p.decoder.size();
  PreparedDecoder prep;
  prep.shared.reserve(S);
  for (std::size_t i = 0; i < S; ++i) {
    const Tensor& skip = cache.skips[S - 1 - i];
    auto [w_skip, w_up] = split(p.decoder[i].weight, 0, skip.cols());
    Tensor shared = add_rows(matmul(skip, w_skip), p.decoder[i].bias);
    if (i == 0) shared = add(shared, matmul(cache.bot, w_up));
    prep.shared.push_back(std::move(shared));
  }
  return prep;
}

DecodeResult decode_prepared(const PreparedDecoder& prep, const Tensor& t_emb, const UNetParams& p) {
  check_time(t_emb, p);
  const std::size_t S = p.decoder.size();
  if (prep.shared.size() != S) throw std::invalid_argument("decode_prepared: wrong number of decoder terms");
  DecodeResult r;
  r.features.reserve(S);
  Tensor h;
  for (std::size_t i = 0; i < S; ++i) {
    const DenseBlock& blk = p.decoder[i];
    Tensor a = prep.shared[i];
    if (i > 0) {
      const std::size_t skip_width = blk.fan_in() - h.cols();
      const std::size_t up_width = h.cols();
      // Rows [skip_width, fan_in) of the weight multiply the upstream half.
      Tensor w_up({up_width, blk.fan_out()},
                  std::vector<double>(blk.weight.data().begin() + static_cast<std::ptrdiff_t>(skip_width * blk.fan_out()),
                                      blk.weight.data().end()));
      a = add(a, matmul(h, w_up));
    }
    a = add_rows(a, time_term(t_emb, blk.time_proj));
    h = silu(a);
    r.features.push_back(h);
  }
  r.eps = add_rows(matmul(h, p.head.weight), p.head.bias);
  return r;
}

}  // namespace encprop
