#include "tcr/grd_io.hpp"

#include <fstream>
#include <iterator>

#include "tcr/bytes.hpp"

namespace tcr {

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<unsigned char> encode_grd(const FieldStack& stack) {
  ByteWriter w;
  w.raw("3DTC");
  w.u16(1);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(stack.num_channels()));
  w.u32(static_cast<std::uint32_t>(stack.height()));
  w.u32(static_cast<std::uint32_t>(stack.width()));
  for (ChannelId id : stack.channels()) w.short_string(channel_name(id));
  const GeoWindow& g = stack.geo();
  w.f64(g.lat_center);
  w.f64(g.lon_center);
  w.f64(g.dlat);
  w.f64(g.dlon);
  w.i64(stack.valid_time());
  w.i32(stack.lead_hours());
  w.bytes().reserve(w.bytes().size() + stack.data().size() * 4);
  for (float v : stack.data()) w.f32(v);
  return std::move(w.bytes());
}

FieldStack decode_grd(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != "3DTC") throw DataError("not a 3DTC-GRD container (bad magic)");
  const auto version = r.u16();
  if (version != 1) throw DataError("unsupported 3DTC-GRD version " + std::to_string(version));
  if (r.u16() != 0) throw DataError("3DTC-GRD flags must be 0");
  const auto c = r.u32();
  const auto h = r.u32();
  const auto wdt = r.u32();
  if (c == 0 || h == 0 || wdt == 0 || c > 255) throw DataError("3DTC-GRD: invalid dimensions");
  std::vector<ChannelId> channels;
  for (std::uint32_t k = 0; k < c; ++k) {
    const std::string name = r.short_string();
    try {
      channels.push_back(channel_from_name(name));
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("3DTC-GRD: ") + e.what());
    }
  }
  GeoWindow g;
  g.lat_center = r.f64();
  g.lon_center = r.f64();
  g.dlat = r.f64();
  g.dlon = r.f64();
  g.h = static_cast<int>(h);
  g.w = static_cast<int>(wdt);
  const auto valid_time = r.i64();
  const auto lead = r.i32();
  const std::size_t n = static_cast<std::size_t>(c) * h * wdt;
  if (r.remaining() != n * 4) throw DataError("3DTC-GRD: payload size mismatch");
  std::vector<float> data(n);
  for (auto& v : data) v = r.f32();
  if (lead < 0) throw DataError("3DTC-GRD: negative lead_hours");
  return FieldStack(std::move(channels), g, std::move(data), valid_time, lead);
}

void write_grd(const std::filesystem::path& path, const FieldStack& stack) {
  write_file_bytes(path, encode_grd(stack));
}

FieldStack read_grd(const std::filesystem::path& path) {
  try {
    return decode_grd(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace tcr
