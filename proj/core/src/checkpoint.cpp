#include "encprop/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace encprop {

namespace {

constexpr char kMagic[8] = {'E', 'N', 'C', 'P', 'R', 'O', 'P', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const UNetParams& p) {
  const UNetConfig& c = p.config;
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, c.data_dim);
  put<std::uint64_t>(out, c.stage_widths.size());
  for (std::size_t w : c.stage_widths) put<std::uint64_t>(out, w);
  put<std::uint64_t>(out, c.bottleneck_width);
  put<std::uint64_t>(out, c.time_embed_dim);
  put<std::uint64_t>(out, c.seed);
  put<std::uint64_t>(out, p.parameter_count());
  for (const Tensor* t : p.tensors())
    for (double v : t->data()) put<double>(out, v);
  return out;
}

UNetParams deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw std::runtime_error("not an encprop checkpoint (bad magic)");
  }
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
  }
  UNetConfig c;
  c.data_dim = r.get<std::uint64_t>();
  const auto stages = r.get<std::uint64_t>();
  if (stages > 1024) throw std::runtime_error("checkpoint declares an implausible stage count");
  c.stage_widths.clear();
  for (std::uint64_t i = 0; i < stages; ++i) c.stage_widths.push_back(r.get<std::uint64_t>());
  c.bottleneck_width = r.get<std::uint64_t>();
  c.time_embed_dim = r.get<std::uint64_t>();
  c.seed = r.get<std::uint64_t>();
  UNetParams p = zero_params(c);
  if (const auto n = r.get<std::uint64_t>(); n != p.parameter_count()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(n) + " values, config implies " +
                             std::to_string(p.parameter_count()));
  }
  for (Tensor* t : p.tensors())
    for (double& v : t->data()) v = r.get<double>();
  if (!r.done()) throw std::runtime_error("checkpoint has trailing bytes");
  return p;
}

void save_checkpoint(const UNetParams& p, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_checkpoint(p);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

UNetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string checkpoint_hash(const UNetParams& p) { return hash_hex(fnv1a64(serialize_checkpoint(p))); }

}  // namespace encprop
