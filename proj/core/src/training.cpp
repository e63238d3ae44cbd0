#include "encprop/training.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace encprop {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct BlockTrace {
  Tensor input;
  Tensor pre;  // pre-activation
  Tensor out;
};

struct NetworkTrace {
  std::vector<BlockTrace> enc;
  BlockTrace bot;
  std::vector<BlockTrace> dec;
  Tensor eps;
};

BlockTrace traced_block(Tensor x, const DenseBlock& blk, const Tensor& t_emb) {
  BlockTrace tr;
  tr.pre = add_rows(matmul(x, blk.weight), blk.bias);
  tr.pre = add_rows(tr.pre, matmul(t_emb, blk.time_proj));
  tr.out = silu(tr.pre);
  tr.input = std::move(x);
  return tr;
}

// Mirrors encode()/decode() operation for operation, keeping what the
// backward pass needs.
NetworkTrace traced_forward(const Tensor& z, const Tensor& t_emb, const UNetParams& p) {
  const std::size_t S = p.encoder.size();
  NetworkTrace tr;
  Tensor h = z;
  for (const auto& blk : p.encoder) {
    tr.enc.push_back(traced_block(h, blk, t_emb));
    h = tr.enc.back().out;
  }
  tr.bot = traced_block(h, p.bottleneck, t_emb);
  h = tr.bot.out;
  for (std::size_t i = 0; i < S; ++i) {
    tr.dec.push_back(traced_block(concat(tr.enc[S - 1 - i].out, h, 1), p.decoder[i], t_emb));
    h = tr.dec.back().out;
  }
  tr.eps = add_rows(matmul(h, p.head.weight), p.head.bias);
  return tr;
}

// Accumulates parameter gradients of one block and returns d loss / d input.
Tensor block_backward(const BlockTrace& tr, const DenseBlock& blk, const Tensor& t_emb, const Tensor& grad_out,
                      DenseBlock& g) {
  const Tensor g_pre = hadamard(grad_out, silu_grad(tr.pre));
  g.weight = matmul_tn(tr.input, g_pre);
  g.bias = column_sums(g_pre);
  g.time_proj = matmul_tn(t_emb, g_pre);
  return matmul_nt(g_pre, blk.weight);
}

void check_batch(const UNetParams& p, const Tensor& x0, const std::vector<Timestep>& t, const Tensor& noise) {
  if (x0.rank() != 2 || x0.cols() != p.config.data_dim || x0.rows() == 0) {
    throw std::invalid_argument("loss: batch must be a nonempty [n x " + std::to_string(p.config.data_dim) +
                                "] tensor, got " + shape_to_string(x0.shape()));
  }
  if (noise.shape() != x0.shape()) {
    throw std::invalid_argument("loss: noise shape " + shape_to_string(noise.shape()) + " != batch shape " +
                                shape_to_string(x0.shape()));
  }
  if (t.size() != x0.rows()) throw std::invalid_argument("loss: need one timestep per batch row");
}

// Noised inputs and per-row time embeddings for a batch.
std::pair<Tensor, Tensor> prepare_batch(const UNetParams& p, const Tensor& x0, const std::vector<Timestep>& t,
                                        const Tensor& noise, const NoiseSchedule& s) {
  const std::size_t n = x0.rows(), d = x0.cols(), e = p.config.time_embed_dim;
  Tensor z({n, d});
  Tensor t_emb({n, e});
  for (std::size_t r = 0; r < n; ++r) {
    if (t[r] < 1) throw std::out_of_range("loss: timestep must be >= 1");
    const double ab = s.alpha_bar(t[r]);
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    for (std::size_t j = 0; j < d; ++j) z.at(r, j) = c0 * x0.at(r, j) + c1 * noise.at(r, j);
    const Tensor row = time_embedding(t[r], e, s.steps());
    for (std::size_t j = 0; j < e; ++j) t_emb.at(r, j) = row[j];
  }
  return {std::move(z), std::move(t_emb)};
}

double batch_loss(const Tensor& eps_hat, const Tensor& noise) {
  double sum = 0.0;
  auto a = eps_hat.data();
  auto b = noise.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(eps_hat.rows());
}

}  // namespace

std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::gmm8: return "gmm8";
    case DatasetKind::swissroll: return "swissroll";
    case DatasetKind::checker: return "checker";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "gmm8") return DatasetKind::gmm8;
  if (name == "swissroll") return DatasetKind::swissroll;
  if (name == "checker") return DatasetKind::checker;
  throw std::invalid_argument("unknown dataset kind '" + std::string(name) + "'");
}

Tensor gaussian(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.data()) v = n(rng);
  return t;
}

ToyDataset make_toy_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_toy_dataset: n must be >= 1");
  ToyDataset ds{kind, seed, Tensor({n, 2})};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0, y = 0.0;
    switch (kind) {
      case DatasetKind::gmm8: {
        const auto mode = static_cast<int>(rng() % 8);
        const double angle = 2.0 * std::numbers::pi * mode / 8.0;
        x = std::cos(angle) + 0.1 * normal(rng);
        y = std::sin(angle) + 0.1 * normal(rng);
        break;
      }
      case DatasetKind::swissroll: {
        const double r = 1.5 * std::numbers::pi * (1.0 + 2.0 * uniform01(rng));
        x = (r * std::cos(r) + 0.5 * normal(rng)) / 10.0;
        y = (r * std::sin(r) + 0.5 * normal(rng)) / 10.0;
        break;
      }
      case DatasetKind::checker: {
        // Pick a cell of the 4x4 board with (row + col) even, then a point in it.
        const auto cell = static_cast<int>(rng() % 8);
        const int row = cell / 2;
        const int col = 2 * (cell % 2) + (row % 2);
        x = -1.0 + 0.5 * (col + uniform01(rng));
        y = -1.0 + 0.5 * (row + uniform01(rng));
        break;
      }
    }
    ds.points.at(i, 0) = x;
    ds.points.at(i, 1) = y;
  }
  return ds;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: Adam betas must lie in (0,1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be positive");
}

LossAndGrads loss_and_grads(const UNetParams& p, const Tensor& x0, const std::vector<Timestep>& t, const Tensor& noise,
                            const NoiseSchedule& s) {
  check_batch(p, x0, t, noise);
  const auto [z, t_emb] = prepare_batch(p, x0, t, noise, s);
  const NetworkTrace tr = traced_forward(z, t_emb, p);
  const std::size_t S = p.encoder.size();

  LossAndGrads out;
  out.loss = batch_loss(tr.eps, noise);
  out.grads = zero_params(p.config);
  UNetParams& g = out.grads;

  const Tensor g_eps = scale(sub(tr.eps, noise), 2.0 / static_cast<double>(x0.rows()));
  const Tensor& head_in = tr.dec.back().out;
  g.head.weight = matmul_tn(head_in, g_eps);
  g.head.bias = column_sums(g_eps);
  Tensor g_h = matmul_nt(g_eps, p.head.weight);

  // Gradient flowing into each encoder output, from its skip and from the
  // block that consumes it.
  std::vector<Tensor> g_enc(S);
  for (std::size_t k = 0; k < S; ++k) {
    const std::size_t i = S - 1 - k;  // decoder block, last first
    const Tensor g_in = block_backward(tr.dec[i], p.decoder[i], t_emb, g_h, g.decoder[i]);
    const std::size_t skip = S - 1 - i;
    auto [g_skip, g_up] = split(g_in, 1, p.config.stage_widths[skip]);
    g_enc[skip] = std::move(g_skip);
    g_h = std::move(g_up);
  }
  g_enc[S - 1] = add(g_enc[S - 1], block_backward(tr.bot, p.bottleneck, t_emb, g_h, g.bottleneck));
  for (std::size_t k = 0; k < S; ++k) {
    const std::size_t i = S - 1 - k;
    const Tensor g_in = block_backward(tr.enc[i], p.encoder[i], t_emb, g_enc[i], g.encoder[i]);
    if (i > 0) g_enc[i - 1] = add(g_enc[i - 1], g_in);
  }
  return out;
}

LossAndGrads loss_and_grads(const UNetParams& p, const Tensor& x0, const NoiseSchedule& s, std::mt19937_64& rng) {
  std::vector<Timestep> t(x0.rows());
  for (auto& v : t) v = 1 + static_cast<Timestep>(rng() % static_cast<std::uint64_t>(s.steps()));
  const Tensor noise = gaussian(x0.shape(), rng);
  return loss_and_grads(p, x0, t, noise, s);
}

double denoising_loss(const UNetParams& p, const Tensor& x0, const std::vector<Timestep>& t, const Tensor& noise,
                      const NoiseSchedule& s) {
  check_batch(p, x0, t, noise);
  const auto [z, t_emb] = prepare_batch(p, x0, t, noise, s);
  return batch_loss(traced_forward(z, t_emb, p).eps, noise);
}

TrainResult train(UNetParams params, const ToyDataset& ds, const TrainConfig& tc, const NoiseSchedule& s,
                  const std::function<void(std::size_t, double)>& progress) {
  tc.validate();
  const std::size_t n = ds.points.rows();
  const std::size_t d = ds.points.cols();
  if (d != params.config.data_dim) throw std::invalid_argument("train: dataset width does not match the model");

  std::mt19937_64 rng(tc.seed);
  const std::vector<Tensor*> theta = params.tensors();
  std::vector<Tensor> m, v;
  for (const Tensor* t : theta) {
    m.emplace_back(t->shape());
    v.emplace_back(t->shape());
  }

  TrainResult result;
  result.loss_curve.reserve(tc.steps);
  double b1_pow = 1.0, b2_pow = 1.0;
  for (std::size_t step = 0; step < tc.steps; ++step) {
    Tensor batch({tc.batch_size, d});
    for (std::size_t r = 0; r < tc.batch_size; ++r) {
      const std::size_t idx = static_cast<std::size_t>(rng() % n);
      for (std::size_t j = 0; j < d; ++j) batch.at(r, j) = ds.points.at(idx, j);
    }
    LossAndGrads lg = loss_and_grads(params, batch, s, rng);
    if (!std::isfinite(lg.loss)) throw std::runtime_error("train: loss diverged at step " + std::to_string(step));
    result.loss_curve.push_back(lg.loss);
    if (progress) progress(step, lg.loss);

    b1_pow *= tc.beta1;
    b2_pow *= tc.beta2;
    const double step_size = tc.learning_rate / (1.0 - b1_pow);
    const double v_corr = 1.0 / (1.0 - b2_pow);
    const std::vector<Tensor*> grads = lg.grads.tensors();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      auto w = theta[k]->data();
      auto gk = grads[k]->data();
      auto mk = m[k].data();
      auto vk = v[k].data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        mk[i] = tc.beta1 * mk[i] + (1.0 - tc.beta1) * gk[i];
        vk[i] = tc.beta2 * vk[i] + (1.0 - tc.beta2) * gk[i] * gk[i];
        w[i] -= step_size * mk[i] / (std::sqrt(vk[i] * v_corr) + tc.adam_eps);
      }
    }
  }
  result.params = std::move(params);
  return result;
}

std::string loss_curve_csv(const std::vector<double>& curve) {
  std::string out = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, curve[i]);
    out += buf;
  }
  return out;
}

double energy_distance(const Tensor& a, const Tensor& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("energy_distance: point sets must be nonempty");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw std::invalid_argument("energy_distance: point sets must be [n x d] with equal d, got " +
                                shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  auto mean_pairwise = [](const Tensor& x, const Tensor& y) {
    const std::size_t d = x.cols();
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto xi = x.row(i);
      for (std::size_t j = 0; j < y.rows(); ++j) {
        const auto yj = y.row(j);
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = xi[k] - yj[k];
          sq += diff * diff;
        }
        sum += std::sqrt(sq);
      }
    }
    return sum / (static_cast<double>(x.rows()) * static_cast<double>(y.rows()));
  };
  return 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
}

}  // namespace encprop
