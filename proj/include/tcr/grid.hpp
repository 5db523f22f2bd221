#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tcr {

inline constexpr int kNumChannels = 21;
inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kKmPerDegree = 2.0 * 3.14159265358979323846 * kEarthRadiusKm / 360.0;

// Canonical channel order. The numeric value of each enumerator is its
// serialization index and must never change.
enum class ChannelId : std::uint8_t {
  Z850, Z700, Z500, Z200,
  T850, T700, T500, T200,
  U850, U700, U500, U200,
  V850, V700, V500, V200,
  T2M, MSL, U10M, V10M, WS10M,
};

int channel_index(ChannelId id);
int channel_index(std::string_view name);
ChannelId channel_from_index(int index);
ChannelId channel_from_name(std::string_view name);
std::string_view channel_name(ChannelId id);
const std::vector<ChannelId>& canonical_channels();

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

double haversine_km(LatLon a, LatLon b);

// Equal-angle lat/lon window. Node (i, j) sits at
//   lat = lat_center + (h/2 - i) * dlat,   lon = lon_center + (j - w/2) * dlon
// with integer division, so row 0 is north, column 0 is west and the node
// (h/2, w/2) carries the center coordinates exactly.
struct GeoWindow {
  double lat_center = 0.0;
  double lon_center = 0.0;
  double dlat = 0.15625;
  double dlon = 0.15625;
  int h = 64;
  int w = 64;

  int center_row() const { return h / 2; }
  int center_col() const { return w / 2; }
  double lat_of_row(double i) const { return lat_center + (center_row() - i) * dlat; }
  double lon_of_col(double j) const { return lon_center + (j - center_col()) * dlon; }
  double row_of_lat(double lat) const { return center_row() - (lat - lat_center) / dlat; }
  double col_of_lon(double lon) const { return center_col() + (lon - lon_center) / dlon; }
  double extent_lat() const { return h * dlat; }
  double extent_lon() const { return w * dlon; }
  bool contains(LatLon p) const;

  // Square window of `extent_deg` degrees split into h x w cells.
  static GeoWindow centered(LatLon center, double extent_deg, int h, int w);
};

bool operator==(const GeoWindow& a, const GeoWindow& b);

// C x H x W float32 stack, channel-major then row-major.
class FieldStack {
 public:
  FieldStack() = default;
  FieldStack(std::vector<ChannelId> channels, GeoWindow geo, std::int64_t valid_time = 0,
             int lead_hours = 0);
  FieldStack(std::vector<ChannelId> channels, GeoWindow geo, std::vector<float> data,
             std::int64_t valid_time, int lead_hours);

  // All 21 canonical channels, zero filled.
  static FieldStack canonical(GeoWindow geo, std::int64_t valid_time = 0, int lead_hours = 0);

  int num_channels() const { return static_cast<int>(channels_.size()); }
  int height() const { return geo_.h; }
  int width() const { return geo_.w; }
  std::size_t plane_size() const { return static_cast<std::size_t>(geo_.h) * geo_.w; }

  const std::vector<ChannelId>& channels() const { return channels_; }
  const GeoWindow& geo() const { return geo_; }
  void set_geo(const GeoWindow& geo);
  std::int64_t valid_time() const { return valid_time_; }
  void set_valid_time(std::int64_t t) { valid_time_ = t; }
  int lead_hours() const { return lead_hours_; }
  void set_lead_hours(int lead);

  bool has(ChannelId id) const;
  int position(ChannelId id) const;  // throws std::invalid_argument if absent

  std::span<float> plane(int c);
  std::span<const float> plane(int c) const;
  std::span<float> plane(ChannelId id) { return plane(position(id)); }
  std::span<const float> plane(ChannelId id) const { return plane(position(id)); }

  float& at(int c, int i, int j) { return data_[(c * plane_size()) + static_cast<std::size_t>(i) * geo_.w + j]; }
  float at(int c, int i, int j) const { return data_[(c * plane_size()) + static_cast<std::size_t>(i) * geo_.w + j]; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  // Throws tcr::NumericalError naming the first non-finite cell.
  void validate_finite() const;

 private:
  std::vector<ChannelId> channels_;
  GeoWindow geo_;
  std::vector<float> data_;
  std::int64_t valid_time_ = 0;
  int lead_hours_ = 0;
};

struct CycloneFix {
  std::int64_t time = 0;
  double lat = 0.0;
  double lon = 0.0;
  double vmax = 0.0;
  double pmin = 101000.0;
  bool gap = false;  // tracker could not confirm this fix; position extrapolated

  LatLon position() const { return {lat, lon}; }
  void validate() const;
};

struct CycloneTrack {
  std::vector<CycloneFix> fixes;

  // Strictly increasing times, valid fixes, and no consecutive translation
  // faster than `max_speed_ms`.
  void validate(double max_speed_ms = 30.0) const;
};

struct CropResult {
  FieldStack stack;
  bool padded = false;
};

// Window of size_deg x size_deg centered on the grid node nearest to
// `center`; out-of-domain cells are filled by edge replication.
CropResult crop_window(const FieldStack& stack, LatLon center, double size_deg);

// Corner-aligned bilinear resampling of an h x w field to h2 x w2.
std::vector<float> bilinear_resample(std::span<const float> field, int h, int w, int h2, int w2);

// Bilinear sample at fractional (row, col) with edge clamping.
double sample_bilinear(std::span<const float> field, int h, int w, double row, double col);

}  // namespace tcr
