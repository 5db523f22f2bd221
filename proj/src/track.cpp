#include "tcr/track.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "tcr/error.hpp"
#include "tcr/filter.hpp"

namespace tcr::track {

namespace {

// Least-squares quadratic over a 3x3 stencil (x = column offset, y = row offset).
struct Quad {
  double a, b, c, dxx, exy, fyy;

  double at(double x, double y) const { return a + b * x + c * y + dxx * x * x + exy * x * y + fyy * y * y; }
};

template <typename Get>
Quad fit3x3(Get f) {
  double s = 0, sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (int y = -1; y <= 1; ++y) {
    for (int x = -1; x <= 1; ++x) {
      const double v = f(y, x);
      s += v;
      sx += x * v;
      sy += y * v;
      sxy += x * y * v;
      sxx += (x * x - 2.0 / 3.0) * v;
      syy += (y * y - 2.0 / 3.0) * v;
    }
  }
  Quad q{};
  q.b = sx / 6.0;
  q.c = sy / 6.0;
  q.exy = sxy / 4.0;
  q.dxx = sxx / 2.0;
  q.fyy = syy / 2.0;
  q.a = s / 9.0 - 2.0 / 3.0 * (q.dxx + q.fyy);
  return q;
}

std::pair<double, double> vertex(const Quad& q) {
  double x = 0.0, y = 0.0;
  const double det = 4.0 * q.dxx * q.fyy - q.exy * q.exy;
  if (q.dxx > 0.0 && q.fyy > 0.0 && det > 0.0) {
    x = (-q.b * 2.0 * q.fyy + q.c * q.exy) / det;
    y = (-q.c * 2.0 * q.dxx + q.b * q.exy) / det;
  } else {
    if (q.dxx > 0.0) x = -q.b / (2.0 * q.dxx);
    if (q.fyy > 0.0) y = -q.c / (2.0 * q.fyy);
  }
  return {std::clamp(x, -0.5, 0.5), std::clamp(y, -0.5, 0.5)};
}

}  // namespace

void TrackerSpec::validate(const GeoWindow& geo) const {
  if (!(search_radius_deg > 0.0)) throw std::invalid_argument("TrackerSpec: search radius must be positive");
  const double half = 0.5 * std::min(geo.extent_lat(), geo.extent_lon());
  if (!(search_radius_deg < half)) {
    throw std::invalid_argument("TrackerSpec: search radius must be less than half the window");
  }
  if (smooth_sigma_cells < 0.0) throw std::invalid_argument("TrackerSpec: smoothing sigma must be >= 0");
  if (!(max_jump_kmh > 0.0)) throw std::invalid_argument("TrackerSpec: max_jump_kmh must be positive");
}

CenterResult find_center(std::span<const float> msl, const GeoWindow& geo, std::optional<LatLon> first_guess,
                         const TrackerSpec& spec) {
  spec.validate(geo);
  const int h = geo.h, w = geo.w;
  if (msl.size() != static_cast<std::size_t>(h) * w) throw std::invalid_argument("find_center: field/geo mismatch");
  for (float v : msl)
    if (!std::isfinite(v)) throw NumericalError("find_center: non-finite MSL value");
  const auto sm = gaussian_blur(msl, h, w, spec.smooth_sigma_cells);

  const double radius_km = spec.search_radius_deg * kKmPerDegree;
  std::vector<char> inside(static_cast<std::size_t>(h) * w, 1);
  bool any = true;
  if (first_guess) {
    any = false;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const bool in = haversine_km(*first_guess, {geo.lat_of_row(i), geo.lon_of_col(j)}) <= radius_km;
        inside[static_cast<std::size_t>(i) * w + j] = in;
        any = any || in;
      }
    if (!any) std::fill(inside.begin(), inside.end(), 1);
  }
  CenterResult r;
  double best = 0.0;
  bool found = false;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      if (!inside[k]) continue;
      if (!found || sm[k] < best) {
        best = sm[k];
        r.row = i;
        r.col = j;
        found = true;
      }
    }
  auto in_disk = [&](int i, int j) {
    return i >= 0 && i < h && j >= 0 && j < w && inside[static_cast<std::size_t>(i) * w + j];
  };
  const bool domain_edge = r.row == 0 || r.col == 0 || r.row == h - 1 || r.col == w - 1;
  const bool disk_edge = !in_disk(r.row - 1, r.col) || !in_disk(r.row + 1, r.col) || !in_disk(r.row, r.col - 1) ||
                         !in_disk(r.row, r.col + 1);
  r.low_confidence = domain_edge || disk_edge || !any;

  r.row_f = r.row;
  r.col_f = r.col;
  r.pmin = msl[static_cast<std::size_t>(r.row) * w + r.col];
  if (spec.refine && !domain_edge) {
    const Quad qs = fit3x3([&](int dy, int dx) { return sm[static_cast<std::size_t>(r.row + dy) * w + r.col + dx]; });
    const auto [x, y] = vertex(qs);
    r.col_f = r.col + x;
    r.row_f = r.row + y;
    const Quad qr = fit3x3([&](int dy, int dx) {
      return static_cast<double>(msl[static_cast<std::size_t>(r.row + dy) * w + r.col + dx]);
    });
    r.pmin = std::min(r.pmin, qr.at(x, y));
  }
  r.position = {geo.lat_of_row(r.row_f), geo.lon_of_col(r.col_f)};
  return r;
}

CycloneTrack follow_track(const std::vector<FieldStack>& seq, std::optional<LatLon> init_guess,
                          const TrackerSpec& spec) {
  if (seq.empty()) throw std::invalid_argument("follow_track: empty sequence");
  CycloneTrack track;
  std::vector<LatLon> pos;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const FieldStack& s = seq[k];
    if (k > 0 && s.valid_time() <= seq[k - 1].valid_time()) {
      throw std::invalid_argument("follow_track: frames must have strictly increasing times");
    }
    std::optional<LatLon> guess = init_guess;
    if (pos.size() == 1) guess = pos.back();
    if (pos.size() >= 2) {
      const LatLon& a = pos[pos.size() - 2];
      const LatLon& b = pos.back();
      guess = LatLon{2.0 * b.lat - a.lat, 2.0 * b.lon - a.lon};
    }
    const auto c = find_center(s.plane(ChannelId::MSL), s.geo(), guess, spec);
    bool gap = c.low_confidence;
    if (!gap && !pos.empty()) {
      const double hours = static_cast<double>(s.valid_time() - seq[k - 1].valid_time()) / 3600.0;
      gap = haversine_km(pos.back(), c.position) / hours > spec.max_jump_kmh;
    }
    CycloneFix fix;
    fix.time = s.valid_time();
    LatLon p = c.position;
    double pmin = c.pmin;
    if (gap && guess) {
      p = *guess;
      const GeoWindow& g = s.geo();
      pmin = sample_bilinear(s.plane(ChannelId::MSL), g.h, g.w, g.row_of_lat(p.lat), g.col_of_lon(p.lon));
    }
    fix.lat = p.lat;
    fix.lon = p.lon;
    fix.pmin = pmin;
    fix.gap = gap;
    const auto ws = s.plane(ChannelId::WS10M);
    fix.vmax = *std::max_element(ws.begin(), ws.end());
    pos.push_back(p);
    track.fixes.push_back(fix);
  }
  return track;
}

std::vector<CropResult> extract_following_windows(const std::vector<FieldStack>& seq, const CycloneTrack& track,
                                                  double size_deg) {
  if (seq.size() != track.fixes.size()) throw std::invalid_argument("extract_following_windows: track/seq length");
  std::vector<CropResult> out;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    if (seq[k].valid_time() != track.fixes[k].time) {
      throw std::invalid_argument("extract_following_windows: track not aligned to sequence times");
    }
    out.push_back(crop_window(seq[k], track.fixes[k].position(), size_deg));
  }
  return out;
}

std::string track_csv(const CycloneTrack& track) {
  std::string out = "time,lat,lon,vmax_ms,pmin_pa,flag\n";
  char buf[160];
  for (const auto& f : track.fixes) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.4f,%.2f,%d\n", static_cast<long long>(f.time), f.lat, f.lon,
                  f.vmax, f.pmin, f.gap ? 1 : 0);
    out += buf;
  }
  return out;
}

CycloneTrack parse_track_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("time,lat,lon", 0) != 0) throw DataError("track CSV: missing header");
  CycloneTrack t;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    CycloneFix f;
    long long time = 0;
    int flag = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%d", &time, &f.lat, &f.lon, &f.vmax, &f.pmin, &flag) != 6) {
      throw DataError("track CSV: malformed line " + std::to_string(lineno));
    }
    f.time = time;
    f.gap = flag != 0;
    t.fixes.push_back(f);
  }
  return t;
}

}  // namespace tcr::track
