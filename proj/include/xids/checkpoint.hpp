// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "xids/encoder.hpp"

namespace xids {

inline constexpr std::string_view kCheckpointMagic = "XIDSCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container, all integers little-endian:
///   magic[8] version:u32 config_len:u32 config_json[config_len]
///   tensor_count:u32 { name_len:u32 name rows:u64 cols:u64 f64[rows*cols] }*
///   sha1[20] over every preceding byte
/// Tensors appear in EncoderParams::for_each order, so identical parameters
/// always produce identical bytes.
std::string serialize_checkpoint(const EncoderParams& params);

/// Throws DataError on a bad magic, unknown version, digest mismatch, or a
/// tensor whose name or shape disagrees with the embedded config.
EncoderParams deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace xids
