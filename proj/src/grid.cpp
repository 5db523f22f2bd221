#include "tcr/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tcr/error.hpp"

namespace tcr {

namespace {

constexpr std::array<std::string_view, kNumChannels> kChannelNames = {
    "Z850", "Z700", "Z500", "Z200", "T850", "T700", "T500", "T200", "U850", "U700", "U500",
    "U200", "V850", "V700", "V500", "V200", "T2M",  "MSL",  "U10M", "V10M", "WS10M",
};

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

}  // namespace

int channel_index(ChannelId id) { return static_cast<int>(id); }

int channel_index(std::string_view name) {
  for (int i = 0; i < kNumChannels; ++i) {
    if (kChannelNames[i] == name) return i;
  }
  throw std::invalid_argument("unknown channel name '" + std::string(name) + "'");
}

ChannelId channel_from_index(int index) {
  if (index < 0 || index >= kNumChannels) {
    throw std::invalid_argument("channel index out of range: " + std::to_string(index));
  }
  return static_cast<ChannelId>(index);
}

ChannelId channel_from_name(std::string_view name) { return channel_from_index(channel_index(name)); }

std::string_view channel_name(ChannelId id) { return kChannelNames.at(channel_index(id)); }

const std::vector<ChannelId>& canonical_channels() {
  static const std::vector<ChannelId> all = [] {
    std::vector<ChannelId> v;
    for (int i = 0; i < kNumChannels; ++i) v.push_back(static_cast<ChannelId>(i));
    return v;
  }();
  return all;
}

double haversine_km(LatLon a, LatLon b) {
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double dphi = (b.lat - a.lat) * kDegToRad;
  const double dlam = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlam / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

bool GeoWindow::contains(LatLon p) const {
  const double i = row_of_lat(p.lat);
  const double j = col_of_lon(p.lon);
  return i >= 0.0 && i <= h - 1 && j >= 0.0 && j <= w - 1;
}

GeoWindow GeoWindow::centered(LatLon center, double extent_deg, int h, int w) {
  if (h < 1 || w < 1 || !(extent_deg > 0.0)) {
    throw std::invalid_argument("GeoWindow::centered: invalid dimensions");
  }
  GeoWindow g;
  g.lat_center = center.lat;
  g.lon_center = center.lon;
  g.h = h;
  g.w = w;
  g.dlat = extent_deg / h;
  g.dlon = extent_deg / w;
  return g;
}

bool operator==(const GeoWindow& a, const GeoWindow& b) {
  return a.lat_center == b.lat_center && a.lon_center == b.lon_center && a.dlat == b.dlat &&
         a.dlon == b.dlon && a.h == b.h && a.w == b.w;
}

FieldStack::FieldStack(std::vector<ChannelId> channels, GeoWindow geo, std::int64_t valid_time,
                       int lead_hours)
    : channels_(std::move(channels)), geo_(geo), valid_time_(valid_time) {
  if (geo_.h < 1 || geo_.w < 1) throw std::invalid_argument("FieldStack: empty grid");
  set_lead_hours(lead_hours);
  data_.assign(channels_.size() * plane_size(), 0.0f);
}

FieldStack::FieldStack(std::vector<ChannelId> channels, GeoWindow geo, std::vector<float> data,
                       std::int64_t valid_time, int lead_hours)
    : channels_(std::move(channels)), geo_(geo), data_(std::move(data)), valid_time_(valid_time) {
  if (geo_.h < 1 || geo_.w < 1) throw std::invalid_argument("FieldStack: empty grid");
  set_lead_hours(lead_hours);
  if (data_.size() != channels_.size() * plane_size()) {
    throw std::invalid_argument("FieldStack: payload size does not match C*H*W");
  }
  validate_finite();
}

FieldStack FieldStack::canonical(GeoWindow geo, std::int64_t valid_time, int lead_hours) {
  return FieldStack(canonical_channels(), geo, valid_time, lead_hours);
}

void FieldStack::set_geo(const GeoWindow& geo) {
  if (geo.h != geo_.h || geo.w != geo_.w) {
    throw std::invalid_argument("FieldStack::set_geo: grid dimensions must not change");
  }
  geo_ = geo;
}

void FieldStack::set_lead_hours(int lead) {
  if (lead < 0) throw std::invalid_argument("FieldStack: lead_hours must be >= 0");
  lead_hours_ = lead;
}

bool FieldStack::has(ChannelId id) const {
  return std::find(channels_.begin(), channels_.end(), id) != channels_.end();
}

int FieldStack::position(ChannelId id) const {
  auto it = std::find(channels_.begin(), channels_.end(), id);
  if (it == channels_.end()) {
    throw std::invalid_argument("FieldStack: channel " + std::string(channel_name(id)) + " not present");
  }
  return static_cast<int>(it - channels_.begin());
}

std::span<float> FieldStack::plane(int c) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(), plane_size());
}

std::span<const float> FieldStack::plane(int c) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(), plane_size());
}

void FieldStack::validate_finite() const {
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k])) {
      const std::size_t c = k / plane_size();
      const std::size_t rem = k % plane_size();
      std::ostringstream os;
      os << "non-finite value in channel " << channel_name(channels_[c]) << " at (" << rem / geo_.w
         << ", " << rem % geo_.w << ")";
      throw NumericalError(os.str());
    }
  }
}

void CycloneFix::validate() const {
  if (!(lat >= -90.0 && lat <= 90.0)) throw std::invalid_argument("CycloneFix: latitude out of range");
  if (!(lon >= -180.0 && lon < 180.0)) throw std::invalid_argument("CycloneFix: longitude out of range");
  if (!(vmax >= 0.0)) throw std::invalid_argument("CycloneFix: vmax must be >= 0");
  if (!(pmin > 80000.0 && pmin < 105000.0)) throw std::invalid_argument("CycloneFix: pmin out of range");
}

void CycloneTrack::validate(double max_speed_ms) const {
  for (std::size_t k = 0; k < fixes.size(); ++k) {
    fixes[k].validate();
    if (k == 0) continue;
    const auto& a = fixes[k - 1];
    const auto& b = fixes[k];
    if (b.time <= a.time) throw std::invalid_argument("CycloneTrack: times must be strictly increasing");
    const double km = haversine_km(a.position(), b.position());
    const double speed = km * 1000.0 / static_cast<double>(b.time - a.time);
    if (speed > max_speed_ms) {
      std::ostringstream os;
      os << "CycloneTrack: translation " << speed << " m/s between fixes " << k - 1 << " and " << k
         << " exceeds " << max_speed_ms << " m/s";
      throw std::invalid_argument(os.str());
    }
  }
}

CropResult crop_window(const FieldStack& stack, LatLon center, double size_deg) {
  if (!(size_deg > 0.0)) throw std::invalid_argument("crop_window: size_deg must be positive");
  const GeoWindow& g = stack.geo();
  const int h2 = static_cast<int>(std::lround(size_deg / g.dlat));
  const int w2 = static_cast<int>(std::lround(size_deg / g.dlon));
  if (h2 > 4 * g.h || w2 > 4 * g.w) {
    throw std::invalid_argument("crop_window: requested window exceeds 4x the source extent");
  }
  if (h2 < 1 || w2 < 1) throw std::invalid_argument("crop_window: window smaller than one cell");

  const int ci = static_cast<int>(std::lround(g.row_of_lat(center.lat)));
  const int cj = static_cast<int>(std::lround(g.col_of_lon(center.lon)));
  const int i0 = ci - h2 / 2;
  const int j0 = cj - w2 / 2;

  GeoWindow out_geo = g;
  out_geo.lat_center = g.lat_of_row(ci);
  out_geo.lon_center = g.lon_of_col(cj);
  out_geo.h = h2;
  out_geo.w = w2;

  CropResult result{FieldStack(stack.channels(), out_geo, stack.valid_time(), stack.lead_hours()), false};
  result.padded = i0 < 0 || j0 < 0 || i0 + h2 > g.h || j0 + w2 > g.w;
  for (int c = 0; c < stack.num_channels(); ++c) {
    for (int i = 0; i < h2; ++i) {
      const int si = std::clamp(i0 + i, 0, g.h - 1);
      for (int j = 0; j < w2; ++j) {
        const int sj = std::clamp(j0 + j, 0, g.w - 1);
        result.stack.at(c, i, j) = stack.at(c, si, sj);
      }
    }
  }
  return result;
}

std::vector<float> bilinear_resample(std::span<const float> field, int h, int w, int h2, int w2) {
  if (h < 2 || w < 2) throw std::invalid_argument("bilinear_resample: source dims must be >= 2");
  if (h2 < 2 || w2 < 2) throw std::invalid_argument("bilinear_resample: target dims must be >= 2");
  if (field.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("bilinear_resample: field size does not match dims");
  }
  std::vector<float> out(static_cast<std::size_t>(h2) * w2);
  for (int i = 0; i < h2; ++i) {
    const double si = static_cast<double>(i) * (h - 1) / (h2 - 1);
    const int i0 = std::min(static_cast<int>(si), h - 2);
    const double fy = si - i0;
    for (int j = 0; j < w2; ++j) {
      const double sj = static_cast<double>(j) * (w - 1) / (w2 - 1);
      const int j0 = std::min(static_cast<int>(sj), w - 2);
      const double fx = sj - j0;
      const double a = field[static_cast<std::size_t>(i0) * w + j0];
      const double b = field[static_cast<std::size_t>(i0) * w + j0 + 1];
      const double c = field[static_cast<std::size_t>(i0 + 1) * w + j0];
      const double d = field[static_cast<std::size_t>(i0 + 1) * w + j0 + 1];
      const double top = a + fx * (b - a);
      const double bot = c + fx * (d - c);
      double v = top + fy * (bot - top);
      v = std::clamp(v, std::min({a, b, c, d}), std::max({a, b, c, d}));
      out[static_cast<std::size_t>(i) * w2 + j] = static_cast<float>(v);
    }
  }
  return out;
}

double sample_bilinear(std::span<const float> field, int h, int w, double row, double col) {
  row = std::clamp(row, 0.0, static_cast<double>(h - 1));
  col = std::clamp(col, 0.0, static_cast<double>(w - 1));
  const int i0 = std::min(static_cast<int>(row), std::max(h - 2, 0));
  const int j0 = std::min(static_cast<int>(col), std::max(w - 2, 0));
  const int i1 = std::min(i0 + 1, h - 1);
  const int j1 = std::min(j0 + 1, w - 1);
  const double fy = row - i0;
  const double fx = col - j0;
  const double a = field[static_cast<std::size_t>(i0) * w + j0];
  const double b = field[static_cast<std::size_t>(i0) * w + j1];
  const double c = field[static_cast<std::size_t>(i1) * w + j0];
  const double d = field[static_cast<std::size_t>(i1) * w + j1];
  const double top = a + fx * (b - a);
  const double bot = c + fx * (d - c);
  return top + fy * (bot - top);
}

}  // namespace tcr
