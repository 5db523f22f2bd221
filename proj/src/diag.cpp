#include "tcr/diag.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace tcr::diag {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::pair<double, double> offset_km(const GeoWindow& geo, LatLon c, int i, int j) {
  const double east = (geo.lon_of_col(j) - c.lon) * kKmPerDegree * std::cos(c.lat * kDeg);
  const double north = (geo.lat_of_row(i) - c.lat) * kKmPerDegree;
  return {east, north};
}

template <typename T>
double bilinear(std::span<const T> f, int w, double row, double col) {
  const int i0 = static_cast<int>(std::floor(row));
  const int j0 = static_cast<int>(std::floor(col));
  const double fr = row - i0, fc = col - j0;
  auto at = [&](int i, int j) { return static_cast<double>(f[static_cast<std::size_t>(i) * w + j]); };
  const int i1 = fr > 0.0 ? i0 + 1 : i0;
  const int j1 = fc > 0.0 ? j0 + 1 : j0;
  const double top = at(i0, j0) + fc * (at(i0, j1) - at(i0, j0));
  const double bot = at(i1, j0) + fc * (at(i1, j1) - at(i1, j0));
  return top + fr * (bot - top);
}

template <typename T>
HarmonicSpectrum decompose(std::span<const T> field, const GeoWindow& geo, LatLon center,
                           const std::vector<double>& radii, int n_theta, int k_max) {
  if (field.size() != static_cast<std::size_t>(geo.h) * geo.w) {
    throw std::invalid_argument("azimuthal_decompose: field/geo mismatch");
  }
  if (n_theta < 4) throw std::invalid_argument("azimuthal_decompose: n_theta must be >= 4");
  if (k_max < 0 || k_max > n_theta / 2 - 1) {
    throw std::invalid_argument("azimuthal_decompose: k_max must be <= n_theta/2 - 1");
  }
  for (std::size_t k = 1; k < radii.size(); ++k)
    if (!(radii[k] > radii[k - 1])) throw std::invalid_argument("azimuthal_decompose: radii must increase");
  HarmonicSpectrum out;
  out.radii = radii;
  out.k_max = k_max;
  out.n_theta = n_theta;
  const double km_lon = kKmPerDegree * std::cos(center.lat * kDeg);
  std::vector<double> ring(n_theta);
  for (double r : radii) {
    bool ok = r >= 0.0;
    for (int n = 0; n < n_theta && ok; ++n) {
      const double th = 2.0 * std::numbers::pi * n / n_theta;
      const double lat = center.lat + r * std::sin(th) / kKmPerDegree;
      const double lon = center.lon + r * std::cos(th) / km_lon;
      const double row = geo.row_of_lat(lat), col = geo.col_of_lon(lon);
      if (row < 0.0 || col < 0.0 || row > geo.h - 1 || col > geo.w - 1) {
        ok = false;
        break;
      }
      ring[n] = bilinear(field, geo.w, row, col);
    }
    std::vector<double> amp(k_max + 1, 0.0), ph(k_max + 1, 0.0);
    if (ok) {
      for (int k = 0; k <= k_max; ++k) {
        std::complex<double> c = 0.0;
        for (int n = 0; n < n_theta; ++n) {
          const double a = -2.0 * std::numbers::pi * k * n / n_theta;
          c += ring[n] * std::complex<double>(std::cos(a), std::sin(a));
        }
        if (k == 0) {
          amp[0] = c.real() / n_theta;
        } else {
          amp[k] = 2.0 * std::abs(c) / n_theta;
          ph[k] = std::arg(c);
        }
      }
    }
    out.amplitude.push_back(std::move(amp));
    out.phase.push_back(std::move(ph));
    out.valid.push_back(ok);
  }
  return out;
}

template <typename T>
std::vector<double> mean_removed(std::span<const T> f) {
  std::vector<double> out(f.begin(), f.end());
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(out.size());
  for (double& v : out) v -= mean;
  return out;
}

// |F|^2 for every mode of a real field (full complex transform).
std::vector<double> mode_power(const std::vector<double>& f, int h, int w) {
  const std::size_t n = f.size();
  fftw_complex* buf = fftw_alloc_complex(n);
  for (std::size_t k = 0; k < n; ++k) {
    buf[k][0] = f[k];
    buf[k][1] = 0.0;
  }
  fftw_plan plan = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  std::vector<double> p(n);
  for (std::size_t k = 0; k < n; ++k) p[k] = buf[k][0] * buf[k][0] + buf[k][1] * buf[k][1];
  fftw_destroy_plan(plan);
  fftw_free(buf);
  return p;
}

SpectrumSet bin(const std::vector<double>& modes, int n, double scale, SpectrumKind kind) {
  const int kmax = static_cast<int>(std::lround(std::sqrt(2.0) * (n / 2)));
  SpectrumSet s;
  s.kind = kind;
  for (int k = 1; k <= kmax; ++k) s.k.push_back(k);
  s.power.assign(kmax, 0.0);
  s.modes.assign(kmax, 0);
  for (int i = 0; i < n; ++i) {
    const int ki = i <= n / 2 ? i : i - n;
    for (int j = 0; j < n; ++j) {
      const int kj = j <= n / 2 ? j : j - n;
      const int b = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ki * ki + kj * kj))));
      if (b == 0) continue;
      s.power[b - 1] += scale * modes[static_cast<std::size_t>(i) * n + j];
      s.modes[b - 1] += 1;
    }
  }
  return s;
}

template <typename T>
SpectrumSet scalar_spectrum(std::span<const T> field, int h, int w) {
  if (h != w) throw std::invalid_argument("power_spectrum: square grids only");
  if (h < 2 || field.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("power_spectrum: field size does not match dims");
  }
  const auto p = mode_power(mean_removed(field), h, w);
  return bin(p, h, 1.0 / (static_cast<double>(h) * w), SpectrumKind::ScalarPower);
}

template <typename T>
SpectrumSet ke_spectrum(std::span<const T> u, std::span<const T> v, int h, int w) {
  if (h != w) throw std::invalid_argument("kinetic_energy_spectrum: square grids only");
  if (h < 2 || u.size() != static_cast<std::size_t>(h) * w || v.size() != u.size()) {
    throw std::invalid_argument("kinetic_energy_spectrum: field size does not match dims");
  }
  auto pu = mode_power(mean_removed(u), h, w);
  const auto pv = mode_power(mean_removed(v), h, w);
  for (std::size_t k = 0; k < pu.size(); ++k) pu[k] += pv[k];
  return bin(pu, h, 0.5 / (static_cast<double>(h) * w), SpectrumKind::KineticEnergy);
}

template <typename T>
Histogram histogram(std::span<const T> values, const std::vector<double>& edges) {
  if (edges.size() < 2) throw std::invalid_argument("histogram_pdf: need at least two edges");
  for (std::size_t k = 1; k < edges.size(); ++k)
    if (!(edges[k] > edges[k - 1])) throw std::invalid_argument("histogram_pdf: edges must increase strictly");
  Histogram h;
  h.edges = edges;
  std::vector<std::size_t> counts(edges.size() - 1, 0);
  for (T raw : values) {
    const double x = raw;
    if (x < edges.front()) {
      ++h.underflow;
    } else if (x > edges.back()) {
      ++h.overflow;
    } else {
      auto it = std::upper_bound(edges.begin(), edges.end(), x);
      std::size_t b = static_cast<std::size_t>(it - edges.begin());
      b = b == 0 ? 0 : b - 1;
      if (b >= counts.size()) b = counts.size() - 1;
      ++counts[b];
      ++h.in_range;
    }
  }
  if (h.in_range == 0) throw std::invalid_argument("histogram_pdf: no values inside the bin edges");
  for (std::size_t b = 0; b < counts.size(); ++b) {
    h.density.push_back(static_cast<double>(counts[b]) / (static_cast<double>(h.in_range) * (edges[b + 1] - edges[b])));
  }
  return h;
}

}  // namespace

WindComponents tangential_radial(std::span<const float> u, std::span<const float> v, const GeoWindow& geo,
                                 LatLon center) {
  const std::size_t n = static_cast<std::size_t>(geo.h) * geo.w;
  if (u.size() != n || v.size() != n) throw std::invalid_argument("tangential_radial: field/geo mismatch");
  WindComponents out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (int i = 0; i < geo.h; ++i)
    for (int j = 0; j < geo.w; ++j) {
      const auto [dx, dy] = offset_km(geo, center, i, j);
      const double r = std::hypot(dx, dy);
      if (r < 1e-9) continue;
      const std::size_t k = static_cast<std::size_t>(i) * geo.w + j;
      out.ur[k] = (u[k] * dx + v[k] * dy) / r;
      out.vt[k] = (-u[k] * dy + v[k] * dx) / r;
    }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> compose_uv(const WindComponents& w, const GeoWindow& geo,
                                                               LatLon center) {
  const std::size_t n = static_cast<std::size_t>(geo.h) * geo.w;
  if (w.vt.size() != n || w.ur.size() != n) throw std::invalid_argument("compose_uv: field/geo mismatch");
  std::vector<double> u(n, 0.0), v(n, 0.0);
  for (int i = 0; i < geo.h; ++i)
    for (int j = 0; j < geo.w; ++j) {
      const auto [dx, dy] = offset_km(geo, center, i, j);
      const double r = std::hypot(dx, dy);
      if (r < 1e-9) continue;
      const std::size_t k = static_cast<std::size_t>(i) * geo.w + j;
      u[k] = (w.ur[k] * dx - w.vt[k] * dy) / r;
      v[k] = (w.ur[k] * dy + w.vt[k] * dx) / r;
    }
  return {u, v};
}

HarmonicSpectrum azimuthal_decompose(std::span<const float> field, const GeoWindow& geo, LatLon center,
                                     const std::vector<double>& radii_km, int n_theta, int k_max) {
  return decompose(field, geo, center, radii_km, n_theta, k_max);
}

HarmonicSpectrum azimuthal_decompose(std::span<const double> field, const GeoWindow& geo, LatLon center,
                                     const std::vector<double>& radii_km, int n_theta, int k_max) {
  return decompose(field, geo, center, radii_km, n_theta, k_max);
}

RadialProfile azimuthal_mean(std::span<const double> field, const GeoWindow& geo, LatLon center,
                             const std::vector<double>& radii_km, int n_theta) {
  const auto h = decompose(field, geo, center, radii_km, n_theta, 0);
  RadialProfile p;
  p.n_theta = n_theta;
  for (std::size_t k = 0; k < radii_km.size(); ++k) {
    if (!h.valid[k]) continue;
    p.radii.push_back(radii_km[k]);
    p.values.push_back(h.amplitude[k][0]);
  }
  return p;
}

RmwResult radius_of_max_wind(const RadialProfile& profile) {
  const auto& r = profile.radii;
  const auto& y = profile.values;
  if (r.size() < 3 || y.size() != r.size()) throw std::invalid_argument("radius_of_max_wind: need >= 3 radii");
  std::size_t m = 0;
  for (std::size_t k = 1; k < y.size(); ++k)
    if (y[k] > y[m]) m = k;
  RmwResult res{r[m], false};
  if (m == 0 || m + 1 == y.size()) {
    res.at_boundary = true;
    return res;
  }
  if (y[m + 1] == y[m]) return res;  // plateau: keep the smallest radius
  const double x0 = r[m - 1], x1 = r[m], x2 = r[m + 1];
  const double y0 = y[m - 1], y1 = y[m], y2 = y[m + 1];
  const double d1 = (y1 - y0) / (x1 - x0), d2 = (y2 - y1) / (x2 - x1);
  const double a = (d2 - d1) / (x2 - x0);
  if (a < 0.0) {
    const double b = d1 - a * (x0 + x1);
    res.radius_km = std::clamp(-b / (2.0 * a), x0, x2);
  }
  return res;
}

double SpectrumSet::total() const {
  double s = 0.0;
  for (double p : power) s += p;
  return s;
}

double SpectrumSet::top_half(int n) const {
  double s = 0.0;
  for (std::size_t b = 0; b < k.size(); ++b)
    if (4 * k[b] > n) s += power[b];
  return s;
}

SpectrumSet power_spectrum(std::span<const double> field, int h, int w) { return scalar_spectrum(field, h, w); }
SpectrumSet power_spectrum(std::span<const float> field, int h, int w) { return scalar_spectrum(field, h, w); }
SpectrumSet kinetic_energy_spectrum(std::span<const double> u, std::span<const double> v, int h, int w) {
  return ke_spectrum(u, v, h, w);
}
SpectrumSet kinetic_energy_spectrum(std::span<const float> u, std::span<const float> v, int h, int w) {
  return ke_spectrum(u, v, h, w);
}

Histogram histogram_pdf(std::span<const double> values, const std::vector<double>& edges) {
  return histogram(values, edges);
}
Histogram histogram_pdf(std::span<const float> values, const std::vector<double>& edges) {
  return histogram(values, edges);
}

std::string profile_csv(const RadialProfile& p) {
  std::string out = "radius_km,value\n";
  char buf[96];
  for (std::size_t k = 0; k < p.radii.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.4f,%.9g\n", p.radii[k], p.values[k]);
    out += buf;
  }
  return out;
}

std::string harmonics_csv(const HarmonicSpectrum& h) {
  std::string out = "radius_km,k,amplitude,phase\n";
  char buf[128];
  for (std::size_t r = 0; r < h.radii.size(); ++r) {
    if (!h.valid[r]) continue;
    for (int k = 0; k <= h.k_max; ++k) {
      std::snprintf(buf, sizeof buf, "%.4f,%d,%.9g,%.9g\n", h.radii[r], k, h.amplitude[r][k], h.phase[r][k]);
      out += buf;
    }
  }
  return out;
}

std::string spectrum_csv(const SpectrumSet& s) {
  std::string out = "k,power\n";
  char buf[64];
  for (std::size_t b = 0; b < s.k.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%d,%.9g\n", s.k[b], s.power[b]);
    out += buf;
  }
  return out;
}

std::string pdf_csv(const Histogram& h) {
  std::string out = "bin_center,density\n";
  char buf[64];
  for (std::size_t b = 0; b < h.density.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.6g,%.9g\n", 0.5 * (h.edges[b] + h.edges[b + 1]), h.density[b]);
    out += buf;
  }
  return out;
}

}  // namespace tcr::diag
