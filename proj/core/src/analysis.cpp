#include "encprop/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace encprop {

namespace {

std::vector<const Tensor*> block_features(const FeatureBundle& fb) {
  std::vector<const Tensor*> out;
  for (const auto& e : fb.enc) out.push_back(&e);
  out.push_back(&fb.bot);
  for (const auto& d : fb.dec) out.push_back(&d);
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view s) {
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size()) throw std::runtime_error("csv: not a number: '" + buf + "'");
  return v;
}

// Data lines of a CSV: comment lines ('#') and the header are skipped after
// the header is checked.
std::vector<std::vector<std::string_view>> csv_rows(std::string_view text, std::string_view header) {
  std::vector<std::vector<std::string_view>> rows;
  bool seen_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    if (!seen_header) {
      if (line != header) throw std::runtime_error("csv: expected header '" + std::string(header) + "'");
      seen_header = true;
      continue;
    }
    rows.push_back(split_fields(line));
  }
  if (!seen_header) throw std::runtime_error("csv: missing header '" + std::string(header) + "'");
  return rows;
}

}  // namespace

std::vector<std::string> block_ids(std::size_t stages) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < stages; ++i) ids.push_back("enc" + std::to_string(i));
  ids.emplace_back("bot");
  for (std::size_t i = 0; i < stages; ++i) ids.push_back("dec" + std::to_string(i));
  return ids;
}

bool is_encoder_block(std::string_view id) { return id.starts_with("enc"); }
bool is_decoder_block(std::string_view id) { return id.starts_with("dec"); }

const BlockNormStats& NormStats::at(std::string_view block) const {
  for (const auto& b : blocks)
    if (b.block == block) return b;
  throw std::out_of_range("no norm statistics for block '" + std::string(block) + "'");
}

MacsPerCall macs_per_call(const UNetConfig& cfg, std::size_t batch) {
  const UNetParams shapes = zero_params(cfg);
  auto block_macs = [batch](const DenseBlock& b) -> std::uint64_t {
    std::uint64_t m = static_cast<std::uint64_t>(batch) * b.fan_in() * b.fan_out();
    if (b.has_time()) m += static_cast<std::uint64_t>(b.time_proj.shape()[0]) * b.fan_out();
    return m;
  };
  MacsPerCall out;
  for (const auto& b : shapes.encoder) out.encoder += block_macs(b);
  out.bottleneck = block_macs(shapes.bottleneck);
  for (const auto& b : shapes.decoder) out.decoder += block_macs(b);
  out.decoder += block_macs(shapes.head);
  return out;
}

ComponentCalls component_calls(Strategy strategy, const PropagationPlan& plan) {
  const auto T = static_cast<std::uint64_t>(plan.steps());
  const auto K = static_cast<std::uint64_t>(plan.key_steps().size());
  switch (strategy) {
    case Strategy::full: return {T, T, T};
    case Strategy::encoder_prop:
    case Strategy::encoder_prop_parallel: return {K, K, T};
    case Strategy::decoder_prop: return {T, T, K};
    case Strategy::both_prop: return {K, K, K};
    case Strategy::alternating_drop: {
      // Within each key run the non-key steps alternate encoder-only,
      // decoder-only, starting with encoder-only.
      ComponentCalls c{K, K, K};
      for (Timestep k : plan.key_steps()) {
        const auto m = static_cast<std::uint64_t>(plan.run_of(k).size() - 1);
        c.encoder += (m + 1) / 2;
        c.bottleneck += (m + 1) / 2;
        c.decoder += m / 2;
      }
      return c;
    }
  }
  throw std::invalid_argument("component_calls: unknown strategy");
}

FlopsReport flops_report(const UNetConfig& cfg, const PropagationPlan& plan, Strategy strategy, std::size_t batch) {
  const MacsPerCall per = macs_per_call(cfg, batch);
  const ComponentCalls calls = component_calls(strategy, plan);
  const ComponentCalls full = component_calls(Strategy::full, plan);

  FlopsReport r;
  r.strategy = strategy;
  r.total_steps = plan.steps();
  r.batch = batch;
  r.encoder = {"encoder", per.encoder, calls.encoder, per.encoder * calls.encoder};
  r.bottleneck = {"bottleneck", per.bottleneck, calls.bottleneck, per.bottleneck * calls.bottleneck};
  r.decoder = {"decoder", per.decoder, calls.decoder, per.decoder * calls.decoder};
  r.total_macs = r.encoder.total_macs + r.bottleneck.total_macs + r.decoder.total_macs;
  r.full_total_macs = per.encoder * full.encoder + per.bottleneck * full.bottleneck + per.decoder * full.decoder;
  // decoder_prop can cost as much as full but never more; saved is >= 0.
  r.saved_macs = r.full_total_macs > r.total_macs ? r.full_total_macs - r.total_macs : 0;
  r.savings_fraction = 1.0 - static_cast<double>(r.total_macs) / static_cast<double>(r.full_total_macs);
  return r;
}

DeltaSeries feature_delta_series(const std::vector<FeatureBundle>& bundles) {
  if (bundles.size() < 2) throw std::invalid_argument("feature_delta_series: need at least 2 bundles");
  for (std::size_t i = 1; i < bundles.size(); ++i) {
    if (bundles[i].t != bundles[i - 1].t - 1) {
      throw std::invalid_argument("feature_delta_series: bundles must be ordered t = T..1 without gaps (found t=" +
                                  std::to_string(bundles[i - 1].t) + " followed by t=" + std::to_string(bundles[i].t) +
                                  ")");
    }
  }
  DeltaSeries d;
  d.total_steps = bundles.front().t;
  d.blocks = block_ids(bundles.front().enc.size());
  d.values.assign(d.blocks.size(), {});
  for (std::size_t i = 0; i + 1 < bundles.size(); ++i) {
    const auto cur = block_features(bundles[i]);
    const auto next = block_features(bundles[i + 1]);
    if (cur.size() != d.blocks.size() || next.size() != d.blocks.size()) {
      throw std::invalid_argument("feature_delta_series: bundles disagree on block structure");
    }
    for (std::size_t b = 0; b < cur.size(); ++b) d.values[b].push_back(mse(*cur[b], *next[b]));
  }
  return d;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

NormStats frobenius_stats(const std::vector<FeatureBundle>& bundles) {
  if (bundles.size() < 2) throw std::invalid_argument("frobenius_stats: need at least 2 bundles");
  const auto ids = block_ids(bundles.front().enc.size());
  std::vector<std::vector<double>> norms(ids.size());
  for (const auto& fb : bundles) {
    const auto feats = block_features(fb);
    if (feats.size() != ids.size()) throw std::invalid_argument("frobenius_stats: bundles disagree on block structure");
    for (std::size_t b = 0; b < feats.size(); ++b) norms[b].push_back(frobenius_norm(*feats[b]));
  }
  NormStats out;
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const auto& v = norms[b];
    BlockNormStats s;
    s.block = ids[b];
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    s.q1 = quantile(v, 0.25);
    s.median = quantile(v, 0.5);
    s.q3 = quantile(v, 0.75);
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(var / static_cast<double>(v.size()));
    out.blocks.push_back(std::move(s));
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string to_csv(const DeltaSeries& d) {
  std::string out = "block_id,t,delta\n";
  for (std::size_t b = 0; b < d.blocks.size(); ++b) {
    for (std::size_t i = 0; i < d.values[b].size(); ++i) {
      out += d.blocks[b] + ',' + std::to_string(d.total_steps - static_cast<int>(i)) + ',' +
             format_double(d.values[b][i]) + '\n';
    }
  }
  return out;
}

std::string to_csv(const NormStats& n) {
  std::string out =
      "# Frobenius norm of each block's features over all timesteps\n"
      "# quartiles: linear interpolation between order statistics (type 7); std: population\n"
      "block_id,min,q1,median,q3,max,mean,std\n";
  for (const auto& s : n.blocks) {
    out += s.block;
    for (double v : {s.min, s.q1, s.median, s.q3, s.max, s.mean, s.std}) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

std::string to_csv(const FlopsReport& f) {
  std::ostringstream os;
  os << "# strategy=" << to_string(f.strategy) << " T=" << f.total_steps << " batch=" << f.batch
     << " savings_fraction=" << format_double(f.savings_fraction) << '\n'
     << "# counts are multiply-accumulates; 1 MAC = 2 FLOPs\n"
     << "component,macs_per_call,calls,total_macs\n";
  for (const auto* c : {&f.encoder, &f.bottleneck, &f.decoder})
    os << c->component << ',' << c->macs_per_call << ',' << c->calls << ',' << c->total_macs << '\n';
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void export_csv(const DeltaSeries& d, const std::filesystem::path& path) { write_text_file(path, to_csv(d)); }
void export_csv(const NormStats& n, const std::filesystem::path& path) { write_text_file(path, to_csv(n)); }
void export_csv(const FlopsReport& f, const std::filesystem::path& path) { write_text_file(path, to_csv(f)); }

DeltaSeries parse_deltas_csv(std::string_view text) {
  DeltaSeries d;
  for (const auto& row : csv_rows(text, "block_id,t,delta")) {
    if (row.size() != 3) throw std::runtime_error("deltas csv: expected 3 fields");
    const std::string block(row[0]);
    const int t = static_cast<int>(parse_number(row[1]));
    if (d.blocks.empty() || d.blocks.back() != block) {
      d.blocks.push_back(block);
      d.values.emplace_back();
      if (d.blocks.size() == 1) d.total_steps = t;
    }
    d.values.back().push_back(parse_number(row[2]));
  }
  return d;
}

NormStats parse_norms_csv(std::string_view text) {
  NormStats n;
  for (const auto& row : csv_rows(text, "block_id,min,q1,median,q3,max,mean,std")) {
    if (row.size() != 8) throw std::runtime_error("norms csv: expected 8 fields");
    BlockNormStats s;
    s.block = std::string(row[0]);
    s.min = parse_number(row[1]);
    s.q1 = parse_number(row[2]);
    s.median = parse_number(row[3]);
    s.q3 = parse_number(row[4]);
    s.max = parse_number(row[5]);
    s.mean = parse_number(row[6]);
    s.std = parse_number(row[7]);
    n.blocks.push_back(std::move(s));
  }
  return n;
}

}  // namespace encprop
