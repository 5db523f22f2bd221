#pragma once

#include <span>
#include <string>
#include <vector>

#include "tcr/grid.hpp"

namespace tcr::diag {

struct WindComponents {
  std::vector<double> vt;  // counterclockwise positive
  std::vector<double> ur;  // outward positive
};

// Tangential/radial winds about `center` using local flat-earth offsets
// (km, cos(center lat) scaling); both are 0 at r = 0.
WindComponents tangential_radial(std::span<const float> u, std::span<const float> v, const GeoWindow& geo,
                                 LatLon center);

// Inverse of tangential_radial (cells at r = 0 map to zero wind).
std::pair<std::vector<double>, std::vector<double>> compose_uv(const WindComponents& w, const GeoWindow& geo,
                                                               LatLon center);

struct HarmonicSpectrum {
  std::vector<double> radii;  // km
  int k_max = 0;
  int n_theta = 0;
  std::vector<std::vector<double>> amplitude;  // [radius][k], A0 = ring mean, Ak = 2|ck|/n
  std::vector<std::vector<double>> phase;      // f = A0 + sum Ak cos(k theta + phase_k)
  std::vector<bool> valid;                     // false where the ring leaves the domain
};

// Samples rings of n_theta points (bilinear, theta counterclockwise from east)
// and Fourier-decomposes each ring up to k_max <= n_theta/2 - 1.
HarmonicSpectrum azimuthal_decompose(std::span<const float> field, const GeoWindow& geo, LatLon center,
                                     const std::vector<double>& radii_km, int n_theta = 128, int k_max = 20);
HarmonicSpectrum azimuthal_decompose(std::span<const double> field, const GeoWindow& geo, LatLon center,
                                     const std::vector<double>& radii_km, int n_theta = 128, int k_max = 20);

struct RadialProfile {
  std::vector<double> radii;
  std::vector<double> values;
  int n_theta = 0;
};

// Azimuthal means (A0) on the valid rings.
RadialProfile azimuthal_mean(std::span<const double> field, const GeoWindow& geo, LatLon center,
                             const std::vector<double>& radii_km, int n_theta = 128);

struct RmwResult {
  double radius_km = 0.0;
  bool at_boundary = false;
};

// Argmax (smallest radius on ties) refined by a 3-point parabola; a maximum
// at either end of the profile is returned unrefined with the boundary flag.
RmwResult radius_of_max_wind(const RadialProfile& profile);

enum class SpectrumKind { ScalarPower, KineticEnergy };

struct SpectrumSet {
  SpectrumKind kind = SpectrumKind::ScalarPower;
  std::vector<int> k;          // integer bin centers, 1..round(sqrt(2) N/2)
  std::vector<double> power;   // per bin
  std::vector<int> modes;      // Fourier modes per bin

  double total() const;
  // Sum over bins with k > N/4, N the grid size.
  double top_half(int n) const;
};

// Square grids only; the field is mean-removed. Bin k gathers modes with
// round(|k|) = k; power = sum |F|^2 / (H W) so bins sum to the field variance
// times H W.
SpectrumSet power_spectrum(std::span<const double> field, int h, int w);
SpectrumSet power_spectrum(std::span<const float> field, int h, int w);
SpectrumSet kinetic_energy_spectrum(std::span<const double> u, std::span<const double> v, int h, int w);
SpectrumSet kinetic_energy_spectrum(std::span<const float> u, std::span<const float> v, int h, int w);

struct Histogram {
  std::vector<double> edges;
  std::vector<double> density;  // sum density_i * width_i = 1
  std::size_t underflow = 0;
  std::size_t overflow = 0;
  std::size_t in_range = 0;
};

// Bins are [e_i, e_{i+1}); the last bin also takes its right edge.
Histogram histogram_pdf(std::span<const double> values, const std::vector<double>& edges);
Histogram histogram_pdf(std::span<const float> values, const std::vector<double>& edges);

std::string profile_csv(const RadialProfile& p);
std::string harmonics_csv(const HarmonicSpectrum& h);
std::string spectrum_csv(const SpectrumSet& s);
std::string pdf_csv(const Histogram& h);

}  // namespace tcr::diag
