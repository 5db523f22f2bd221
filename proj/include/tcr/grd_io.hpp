#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tcr/grid.hpp"

namespace tcr {

// "3DTC-GRD v1" container. All integers and floats little-endian:
//   "3DTC" | u16 version=1 | u16 flags=0 | u32 C, H, W
//   C x (u8 len + ASCII channel name)
//   f64 lat_center, lon_center, dlat, dlon | i64 valid_time | i32 lead_hours
//   C*H*W f32 payload, channel-major then row-major (row 0 = north)
std::vector<unsigned char> encode_grd(const FieldStack& stack);
FieldStack decode_grd(const std::vector<unsigned char>& bytes);

void write_grd(const std::filesystem::path& path, const FieldStack& stack);
FieldStack read_grd(const std::filesystem::path& path);

}  // namespace tcr
