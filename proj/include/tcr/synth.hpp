#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <vector>

#include "tcr/grid.hpp"
#include <nlohmann/json.hpp>

namespace tcr::synth {

inline constexpr double kGravity = 9.80665;
inline constexpr double kOmega = 7.2921e-5;

double coriolis(double lat_deg);

struct HollandParams {
  double pc = 95000.0;  // Pa
  double pn = 101000.0;
  double rmw_km = 40.0;
  double B = 1.5;
  double rho = 1.15;
  double f = 0.0;  // 1/s
  LatLon center;

  void validate() const;
};

// p(r) = pc + (pn - pc) exp(-(rmw/r)^B); p(0) = pc.
double holland_pressure(double r_km, const HollandParams& p);
// Gradient wind; r in metres inside the formula, 0 at r = 0.
double holland_wind(double r_km, const HollandParams& p);

struct Harmonic {
  int k = 1;
  double amplitude = 0.0;  // fraction of the symmetric wind
  double phase = 0.0;      // radians
};

struct AsymmetrySpec {
  std::vector<Harmonic> terms;

  void validate() const;
  double factor(double theta) const;  // 1 + sum a_k cos(k theta + phi_k)
};

// Vertical structure tables, ordered 10 m, 850, 700, 500, 200 hPa.
struct VortexStructure {
  std::array<double, 5> wind_scale{0.80, 0.95, 0.85, 0.65, 0.25};
  std::array<double, 5> inflow_deg{25.0, 20.0, 10.0, 0.0, -15.0};
  std::array<double, 4> level_rho{1.05, 0.91, 0.69, 0.33};
  std::array<double, 4> z_base{1500.0, 3100.0, 5870.0, 12400.0};
  std::array<double, 4> t_base{290.0, 282.0, 268.0, 220.0};
  std::array<double, 4> warm_core{1.0, 2.0, 4.0, 6.0};
  double t2m_base = 300.0;
};

struct RenderResult {
  FieldStack stack;
  CycloneFix fix;
};

// Local flat-earth displacement (km) of `p` from `c`, east and north.
std::pair<double, double> local_offset_km(LatLon c, LatLon p);

RenderResult render_vortex(const HollandParams& p, const AsymmetrySpec& asym, const GeoWindow& geo,
                           double env_u = 0.0, double env_v = 0.0, std::int64_t valid_time = 0,
                           const VortexStructure& vs = {});

struct DegradeSpec {
  double blur_sigma_cells = 2.0;
  int down_ratio = 4;  // 1 disables the resampling step
  double shift_km_per_hour = 4.0;
  double shift_jitter_km = 10.0;
  double damp_per_24h = 0.15;
  double bearing_deg = 315.0;  // direction the forecast pattern drifts toward

  void validate() const;
  nlohmann::json to_json() const;
  static DegradeSpec from_json(const nlohmann::json& j);
};

// Blur, down-sample by down_ratio and up-sample back (corner aligned);
// WS10M recomputed from the degraded 10 m winds.
FieldStack degrade_clean(const FieldStack& stack, const DegradeSpec& spec);

// Moves the pattern by (east_km, north_km); vacated cells replicate edges.
FieldStack shift_field(const FieldStack& stack, double east_km, double north_km);

struct ForecastError {
  double east_km = 0.0;
  double north_km = 0.0;
  double damping = 1.0;
};

FieldStack degrade_forecast(const FieldStack& stack, int lead_hours, const DegradeSpec& spec, std::uint64_t seed,
                            ForecastError* applied = nullptr);

// SplitMix64 finalizer and the per-sample seed derivation
// derive_seed(m, i) = splitmix64(splitmix64(m) ^ (i + 1) * 0x9E3779B97F4A7C15).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct GenConfig {
  int n_samples = 512;
  int grid_h = 64;
  int grid_w = 64;
  double extent_deg = 10.0;
  std::vector<int> leads = default_leads();
  std::array<double, 2> vmax_range{18.0, 70.0};  // target 10 m maximum wind, m/s
  std::array<double, 2> b_range{1.0, 2.0};
  std::array<double, 2> rmw_range{20.0, 80.0};
  std::array<double, 2> lat_range{12.0, 30.0};
  std::array<double, 2> lon_range{125.0, 160.0};
  double pn = 101000.0;
  double max_pressure_drop = 20000.0;
  double center_jitter_deg = 0.5;
  double env_speed_max = 4.0;
  double asym_k1_max = 0.2;
  double asym_k2_max = 0.1;
  DegradeSpec degrade;

  static std::vector<int> default_leads();
  void validate() const;
  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
};

struct SampleMeta {
  int index = 0;
  std::uint64_t seed = 0;
  HollandParams params;
  AsymmetrySpec asym;
  double env_u = 0.0;
  double env_v = 0.0;
  CycloneFix fix;

  nlohmann::json to_json() const;
  static SampleMeta from_json(const nlohmann::json& j);
};

struct Sample {
  SampleMeta meta;
  FieldStack truth;
  FieldStack clean;
};

Sample make_sample(const GenConfig& cfg, std::uint64_t master_seed, int index);
std::uint64_t forecast_seed(const SampleMeta& meta, int lead_hours);
FieldStack make_forecast(const Sample& s, int lead_hours, const GenConfig& cfg, ForecastError* applied = nullptr);

// Writes <root>/dataset.json and <root>/sample_<idx>/{truth,clean,fcst_<lead>}.grd + meta.json.
void gen_dataset(const GenConfig& cfg, std::uint64_t master_seed, const std::filesystem::path& root);
std::string sample_dir_name(int index);

// Read access shared by the generator-backed and on-disk datasets.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int size() const = 0;
  virtual const std::vector<int>& leads() const = 0;
  virtual SampleMeta meta(int i) const = 0;
  virtual FieldStack truth(int i) const = 0;
  virtual FieldStack clean(int i) const = 0;
  virtual FieldStack forecast(int i, int lead_hours) const = 0;
};

// Regenerates samples from (config, seed); truth and clean stacks are cached,
// forecasts are rebuilt on request.
class GeneratedDataset : public Dataset {
 public:
  GeneratedDataset(GenConfig cfg, std::uint64_t master_seed);
  int size() const override { return cfg_.n_samples; }
  const std::vector<int>& leads() const override { return cfg_.leads; }
  SampleMeta meta(int i) const override { return at(i).meta; }
  FieldStack truth(int i) const override { return at(i).truth; }
  FieldStack clean(int i) const override { return at(i).clean; }
  FieldStack forecast(int i, int lead_hours) const override;
  const GenConfig& config() const { return cfg_; }
  const Sample& at(int i) const;

 private:
  GenConfig cfg_;
  std::uint64_t seed_;
  mutable std::vector<std::unique_ptr<Sample>> cache_;
};

class DiskDataset : public Dataset {
 public:
  explicit DiskDataset(std::filesystem::path root);
  int size() const override { return n_; }
  const std::vector<int>& leads() const override { return leads_; }
  SampleMeta meta(int i) const override;
  FieldStack truth(int i) const override;
  FieldStack clean(int i) const override;
  FieldStack forecast(int i, int lead_hours) const override;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path sample_path(int i) const;
  std::filesystem::path root_;
  int n_ = 0;
  std::vector<int> leads_;
};

// A storm translating across a fixed domain: frame k is centered at
// start + k * step_deg, valid at k * dt_hours.
std::vector<RenderResult> render_moving_storm(const HollandParams& p, const AsymmetrySpec& asym,
                                              const GeoWindow& domain, LatLon start, LatLon step_deg, int frames,
                                              int dt_hours);

}  // namespace tcr::synth
