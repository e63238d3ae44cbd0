#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "encprop/unet.hpp"

namespace encprop {

// Binary checkpoint layout, all integers little-endian u64 unless noted:
//
//   magic        8 bytes  "ENCPROP\0"
//   version      u32      currently 1
//   data_dim
//   stages       S
//   stage_widths S values
//   bottleneck_width
//   time_embed_dim
//   seed
//   value_count  total number of parameters
//   values       value_count IEEE-754 binary64, little-endian, in
//                UNetParams::tensors() order: for each encoder block
//                weight, bias, time_proj; bottleneck likewise; each decoder
//                block likewise; head weight, head bias. Matrices row-major.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const UNetParams& p);
UNetParams deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const UNetParams& p, const std::filesystem::path& path);
UNetParams load_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a over raw bytes; used as the reproducibility fingerprint.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);
std::string checkpoint_hash(const UNetParams& p);

}  // namespace encprop
