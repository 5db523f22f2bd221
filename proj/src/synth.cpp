#include "tcr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "tcr/bytes.hpp"
#include "tcr/error.hpp"
#include "tcr/filter.hpp"
#include "tcr/grd_io.hpp"

namespace tcr::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

// Wind channels per vertical slot (10 m, 850, 700, 500, 200).
constexpr std::array<ChannelId, 5> kU{ChannelId::U10M, ChannelId::U850, ChannelId::U700, ChannelId::U500,
                                      ChannelId::U200};
constexpr std::array<ChannelId, 5> kV{ChannelId::V10M, ChannelId::V850, ChannelId::V700, ChannelId::V500,
                                      ChannelId::V200};
constexpr std::array<ChannelId, 4> kZ{ChannelId::Z850, ChannelId::Z700, ChannelId::Z500, ChannelId::Z200};
constexpr std::array<ChannelId, 4> kT{ChannelId::T850, ChannelId::T700, ChannelId::T500, ChannelId::T200};

bool is_wind(ChannelId c) {
  const int i = channel_index(c);
  return (i >= channel_index(ChannelId::U850) && i <= channel_index(ChannelId::V200)) || c == ChannelId::U10M ||
         c == ChannelId::V10M || c == ChannelId::WS10M;
}

void recompute_ws10m(FieldStack& s) {
  if (!s.has(ChannelId::WS10M) || !s.has(ChannelId::U10M) || !s.has(ChannelId::V10M)) return;
  auto u = s.plane(ChannelId::U10M);
  auto v = s.plane(ChannelId::V10M);
  auto ws = s.plane(ChannelId::WS10M);
  for (std::size_t k = 0; k < ws.size(); ++k) {
    ws[k] = static_cast<float>(std::sqrt(static_cast<double>(u[k]) * u[k] + static_cast<double>(v[k]) * v[k]));
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

void check_range(const std::array<double, 2>& r, const char* name, double lo_bound, double hi_bound) {
  if (!(r[0] <= r[1]) || r[0] < lo_bound || r[1] > hi_bound) {
    throw ConfigError(std::string("generation config: ") + name + " range invalid");
  }
}

}  // namespace

double coriolis(double lat_deg) { return 2.0 * kOmega * std::sin(lat_deg * kDeg); }

void HollandParams::validate() const {
  if (!(pn > pc)) throw std::invalid_argument("HollandParams: pn must exceed pc");
  if (!(rmw_km > 0.0)) throw std::invalid_argument("HollandParams: rmw must be positive");
  if (!(B >= 1.0 && B <= 2.5)) throw std::invalid_argument("HollandParams: B must lie in [1, 2.5]");
  if (!(rho > 0.0)) throw std::invalid_argument("HollandParams: rho must be positive");
}

double holland_pressure(double r_km, const HollandParams& p) {
  if (r_km < 0.0) throw std::invalid_argument("holland_pressure: negative radius");
  if (r_km == 0.0) return p.pc;
  const double x = std::pow(p.rmw_km / r_km, p.B);
  return p.pc + (p.pn - p.pc) * std::exp(-x);
}

double holland_wind(double r_km, const HollandParams& p) {
  if (r_km < 0.0) throw std::invalid_argument("holland_wind: negative radius");
  if (r_km == 0.0) return 0.0;
  const double r_m = r_km * 1000.0;
  const double x = std::pow(p.rmw_km / r_km, p.B);
  const double dp = p.pn - p.pc;
  const double half_rf = 0.5 * r_m * std::abs(p.f);
  const double v = std::sqrt(p.B * dp / p.rho * x * std::exp(-x) + half_rf * half_rf) - half_rf;
  return std::max(v, 0.0);
}

void AsymmetrySpec::validate() const {
  for (const auto& h : terms) {
    if (h.k < 1 || h.k > 20) throw std::invalid_argument("AsymmetrySpec: wavenumber must lie in [1, 20]");
    if (!(h.amplitude >= 0.0 && h.amplitude <= 0.5)) {
      throw std::invalid_argument("AsymmetrySpec: amplitude fraction must lie in [0, 0.5]");
    }
  }
  double lowest = 1.0;
  for (int n = 0; n < 3600; ++n) lowest = std::min(lowest, factor(2.0 * kPi * n / 3600.0));
  if (lowest < 0.0) throw std::invalid_argument("AsymmetrySpec: combined amplitudes drive the wind negative");
}

double AsymmetrySpec::factor(double theta) const {
  double f = 1.0;
  for (const auto& h : terms) f += h.amplitude * std::cos(h.k * theta + h.phase);
  return f;
}

std::pair<double, double> local_offset_km(LatLon c, LatLon p) {
  const double east = (p.lon - c.lon) * kKmPerDegree * std::cos(c.lat * kDeg);
  const double north = (p.lat - c.lat) * kKmPerDegree;
  return {east, north};
}

RenderResult render_vortex(const HollandParams& p, const AsymmetrySpec& asym, const GeoWindow& geo, double env_u,
                           double env_v, std::int64_t valid_time, const VortexStructure& vs) {
  p.validate();
  asym.validate();
  if (!geo.contains(p.center)) throw std::invalid_argument("render_vortex: vortex center outside the window");
  RenderResult out{FieldStack::canonical(geo, valid_time, 0), {}};
  FieldStack& s = out.stack;
  const double hemi = p.center.lat >= 0.0 ? 1.0 : -1.0;
  for (int i = 0; i < geo.h; ++i) {
    for (int j = 0; j < geo.w; ++j) {
      const auto [dx, dy] = local_offset_km(p.center, {geo.lat_of_row(i), geo.lon_of_col(j)});
      const double r = std::hypot(dx, dy);
      const double theta = std::atan2(dy, dx);
      const double vr = holland_wind(r, p) * asym.factor(theta);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (int l = 0; l < 5; ++l) {
        const double speed = vs.wind_scale[l] * vr;
        const double a = vs.inflow_deg[l] * kDeg;
        const double vt = hemi * speed * std::cos(a);
        const double ur = -speed * std::sin(a);
        double u = env_u, v = env_v;
        if (r > 0.0) {
          u += ur * ct - vt * st;
          v += ur * st + vt * ct;
        }
        s.at(channel_index(kU[l]), i, j) = static_cast<float>(u);
        s.at(channel_index(kV[l]), i, j) = static_cast<float>(v);
      }
      const double pr = holland_pressure(r, p);
      const double core = std::exp(-std::pow(r / (2.0 * p.rmw_km), 2.0));
      s.at(channel_index(ChannelId::MSL), i, j) = static_cast<float>(pr);
      for (int l = 0; l < 4; ++l) {
        s.at(channel_index(kZ[l]), i, j) =
            static_cast<float>(vs.z_base[l] + (pr - p.pn) / (vs.level_rho[l] * kGravity));
        s.at(channel_index(kT[l]), i, j) = static_cast<float>(vs.t_base[l] + vs.warm_core[l] * core);
      }
      s.at(channel_index(ChannelId::T2M), i, j) = static_cast<float>(vs.t2m_base + 0.2 * vs.warm_core[0] * core);
    }
  }
  recompute_ws10m(s);
  s.validate_finite();
  const auto ws = s.plane(ChannelId::WS10M);
  const auto msl = s.plane(ChannelId::MSL);
  out.fix.time = valid_time;
  out.fix.lat = p.center.lat;
  out.fix.lon = p.center.lon;
  out.fix.vmax = *std::max_element(ws.begin(), ws.end());
  out.fix.pmin = *std::min_element(msl.begin(), msl.end());
  return out;
}

void DegradeSpec::validate() const {
  if (!(blur_sigma_cells > 0.0)) throw std::invalid_argument("DegradeSpec: blur_sigma_cells must be positive");
  if (down_ratio < 1) throw std::invalid_argument("DegradeSpec: down_ratio must be >= 1");
  if (!(shift_km_per_hour >= 0.0)) throw std::invalid_argument("DegradeSpec: shift_km_per_hour must be >= 0");
  if (!(shift_jitter_km >= 0.0)) throw std::invalid_argument("DegradeSpec: shift_jitter_km must be >= 0");
  if (!(damp_per_24h >= 0.0 && damp_per_24h < 1.0)) {
    throw std::invalid_argument("DegradeSpec: damp_per_24h must lie in [0, 1)");
  }
}

nlohmann::json DegradeSpec::to_json() const {
  return {{"blur_sigma_cells", blur_sigma_cells}, {"down_ratio", down_ratio},
          {"shift_km_per_hour", shift_km_per_hour}, {"shift_jitter_km", shift_jitter_km},
          {"damp_per_24h", damp_per_24h},           {"bearing_deg", bearing_deg}};
}

DegradeSpec DegradeSpec::from_json(const nlohmann::json& j) {
  DegradeSpec d;
  d.blur_sigma_cells = j.value("blur_sigma_cells", d.blur_sigma_cells);
  d.down_ratio = j.value("down_ratio", d.down_ratio);
  d.shift_km_per_hour = j.value("shift_km_per_hour", d.shift_km_per_hour);
  d.shift_jitter_km = j.value("shift_jitter_km", d.shift_jitter_km);
  d.damp_per_24h = j.value("damp_per_24h", d.damp_per_24h);
  d.bearing_deg = j.value("bearing_deg", d.bearing_deg);
  return d;
}

FieldStack degrade_clean(const FieldStack& stack, const DegradeSpec& spec) {
  spec.validate();
  const int h = stack.height(), w = stack.width();
  const int r = spec.down_ratio;
  if (h % r != 0 || w % r != 0) throw std::invalid_argument("degrade_clean: down_ratio must divide H and W");
  FieldStack out = stack;
  for (int c = 0; c < stack.num_channels(); ++c) {
    const auto blurred = gaussian_blur(stack.plane(c), h, w, spec.blur_sigma_cells);
    std::vector<float> f(blurred.begin(), blurred.end());
    if (r > 1) {
      const auto coarse = bilinear_resample(f, h, w, h / r, w / r);
      f = bilinear_resample(coarse, h / r, w / r, h, w);
    }
    std::copy(f.begin(), f.end(), out.plane(c).begin());
  }
  recompute_ws10m(out);
  return out;
}

FieldStack shift_field(const FieldStack& stack, double east_km, double north_km) {
  const GeoWindow& g = stack.geo();
  const double east_cells = east_km / (kKmPerDegree * std::cos(g.lat_center * kDeg) * g.dlon);
  const double north_cells = north_km / (kKmPerDegree * g.dlat);
  FieldStack out = stack;
  if (east_cells == 0.0 && north_cells == 0.0) return out;
  for (int c = 0; c < stack.num_channels(); ++c) {
    const auto src = stack.plane(c);
    auto dst = out.plane(c);
    for (int i = 0; i < g.h; ++i)
      for (int j = 0; j < g.w; ++j)
        dst[static_cast<std::size_t>(i) * g.w + j] =
            static_cast<float>(sample_bilinear(src, g.h, g.w, i + north_cells, j - east_cells));
  }
  return out;
}

FieldStack degrade_forecast(const FieldStack& stack, int lead_hours, const DegradeSpec& spec, std::uint64_t seed,
                            ForecastError* applied) {
  spec.validate();
  if (lead_hours < 0) throw std::invalid_argument("degrade_forecast: lead_hours must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double z = normal(rng);
  ForecastError err;
  const double mag = spec.shift_km_per_hour * lead_hours + (lead_hours > 0 ? spec.shift_jitter_km * z : 0.0);
  err.east_km = mag * std::sin(spec.bearing_deg * kDeg);
  err.north_km = mag * std::cos(spec.bearing_deg * kDeg);
  if (mag == 0.0) err.east_km = err.north_km = 0.0;
  err.damping = std::pow(1.0 - spec.damp_per_24h, lead_hours / 24.0);

  FieldStack shifted = shift_field(stack, err.east_km, err.north_km);
  if (err.damping != 1.0) {
    for (int c = 0; c < shifted.num_channels(); ++c) {
      if (!is_wind(shifted.channels()[c])) continue;
      auto pl = shifted.plane(c);
      double mean = 0.0;
      for (float v : pl) mean += v;
      mean /= static_cast<double>(pl.size());
      for (auto& v : pl) v = static_cast<float>(mean + err.damping * (v - mean));
    }
  }
  FieldStack out = degrade_clean(shifted, spec);
  out.set_lead_hours(lead_hours);
  if (applied) *applied = err;
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ ((index + 1) * 0x9E3779B97F4A7C15ULL));
}

std::vector<int> GenConfig::default_leads() {
  std::vector<int> l;
  for (int k = 6; k <= 120; k += 6) l.push_back(k);
  return l;
}

void GenConfig::validate() const {
  if (n_samples < 1) throw ConfigError("generation config: n_samples must be >= 1");
  if (grid_h < 2 || grid_w < 2) throw ConfigError("generation config: grid must be at least 2x2");
  if (!(extent_deg > 0.0 && extent_deg <= 60.0)) throw ConfigError("generation config: extent_deg out of range");
  for (int l : leads)
    if (l < 0) throw ConfigError("generation config: leads must be >= 0");
  check_range(vmax_range, "vmax", 0.0, 120.0);
  check_range(b_range, "B", 1.0, 2.5);
  check_range(rmw_range, "rmw", 1.0, 500.0);
  check_range(lat_range, "lat", -60.0, 60.0);
  check_range(lon_range, "lon", -180.0, 179.0);
  if (!(max_pressure_drop > 0.0 && pn - max_pressure_drop > 80000.0)) {
    throw ConfigError("generation config: max_pressure_drop must keep pc above 80000 Pa");
  }
  if (!(asym_k1_max >= 0 && asym_k2_max >= 0 && asym_k1_max + asym_k2_max <= 0.5)) {
    throw ConfigError("generation config: asymmetry amplitudes must be >= 0 and sum to <= 0.5");
  }
  const double b_lo = b_range[0];
  const double reachable = 0.8 * std::sqrt(b_lo * max_pressure_drop / (1.15 * std::numbers::e));
  if (vmax_range[0] > reachable) throw ConfigError("generation config: vmax range unreachable under max_pressure_drop");
  try {
    degrade.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("generation config: ") + e.what());
  }
  if (grid_h % degrade.down_ratio != 0 || grid_w % degrade.down_ratio != 0) {
    throw ConfigError("generation config: down_ratio must divide the grid");
  }
}

nlohmann::json GenConfig::to_json() const {
  return {{"n_samples", n_samples},
          {"grid_h", grid_h},
          {"grid_w", grid_w},
          {"extent_deg", extent_deg},
          {"leads", leads},
          {"vmax_range", vmax_range},
          {"b_range", b_range},
          {"rmw_range", rmw_range},
          {"lat_range", lat_range},
          {"lon_range", lon_range},
          {"pn", pn},
          {"max_pressure_drop", max_pressure_drop},
          {"center_jitter_deg", center_jitter_deg},
          {"env_speed_max", env_speed_max},
          {"asym_k1_max", asym_k1_max},
          {"asym_k2_max", asym_k2_max},
          {"degrade", degrade.to_json()}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  GenConfig c;
  c.n_samples = j.value("n_samples", c.n_samples);
  c.grid_h = j.value("grid_h", c.grid_h);
  c.grid_w = j.value("grid_w", c.grid_w);
  c.extent_deg = j.value("extent_deg", c.extent_deg);
  c.leads = j.value("leads", c.leads);
  c.vmax_range = j.value("vmax_range", c.vmax_range);
  c.b_range = j.value("b_range", c.b_range);
  c.rmw_range = j.value("rmw_range", c.rmw_range);
  c.lat_range = j.value("lat_range", c.lat_range);
  c.lon_range = j.value("lon_range", c.lon_range);
  c.pn = j.value("pn", c.pn);
  c.max_pressure_drop = j.value("max_pressure_drop", c.max_pressure_drop);
  c.center_jitter_deg = j.value("center_jitter_deg", c.center_jitter_deg);
  c.env_speed_max = j.value("env_speed_max", c.env_speed_max);
  c.asym_k1_max = j.value("asym_k1_max", c.asym_k1_max);
  c.asym_k2_max = j.value("asym_k2_max", c.asym_k2_max);
  if (j.contains("degrade")) c.degrade = DegradeSpec::from_json(j.at("degrade"));
  return c;
}

nlohmann::json SampleMeta::to_json() const {
  nlohmann::json asym_j = nlohmann::json::array();
  for (const auto& h : asym.terms) asym_j.push_back({{"k", h.k}, {"amplitude", h.amplitude}, {"phase", h.phase}});
  return {{"index", index},
          {"seed", seed},
          {"holland",
           {{"pc", params.pc},
            {"pn", params.pn},
            {"rmw_km", params.rmw_km},
            {"B", params.B},
            {"rho", params.rho},
            {"f", params.f}}},
          {"asymmetry", asym_j},
          {"env_flow", {env_u, env_v}},
          {"center", {{"lat", fix.lat}, {"lon", fix.lon}}},
          {"time", fix.time},
          {"vmax", fix.vmax},
          {"pmin", fix.pmin}};
}

SampleMeta SampleMeta::from_json(const nlohmann::json& j) {
  SampleMeta m;
  try {
    m.index = j.at("index").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& h = j.at("holland");
    m.params.pc = h.at("pc").get<double>();
    m.params.pn = h.at("pn").get<double>();
    m.params.rmw_km = h.at("rmw_km").get<double>();
    m.params.B = h.at("B").get<double>();
    m.params.rho = h.at("rho").get<double>();
    m.params.f = h.at("f").get<double>();
    for (const auto& a : j.at("asymmetry")) {
      m.asym.terms.push_back({a.at("k").get<int>(), a.at("amplitude").get<double>(), a.at("phase").get<double>()});
    }
    m.env_u = j.at("env_flow").at(0).get<double>();
    m.env_v = j.at("env_flow").at(1).get<double>();
    m.fix.lat = j.at("center").at("lat").get<double>();
    m.fix.lon = j.at("center").at("lon").get<double>();
    m.fix.time = j.at("time").get<std::int64_t>();
    m.fix.vmax = j.at("vmax").get<double>();
    m.fix.pmin = j.at("pmin").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sample metadata: ") + e.what());
  }
  m.params.center = {m.fix.lat, m.fix.lon};
  return m;
}

Sample make_sample(const GenConfig& cfg, std::uint64_t master_seed, int index) {
  cfg.validate();
  if (index < 0) throw std::invalid_argument("make_sample: negative index");
  Sample s;
  s.meta.index = index;
  s.meta.seed = derive_seed(master_seed, static_cast<std::uint64_t>(index));
  std::mt19937_64 rng(s.meta.seed);

  HollandParams& p = s.meta.params;
  p.pn = cfg.pn;
  p.B = uniform(rng, cfg.b_range[0], cfg.b_range[1]);
  const double v_reach = 0.8 * std::sqrt(p.B * cfg.max_pressure_drop / (p.rho * std::numbers::e));
  const double v10 = uniform(rng, cfg.vmax_range[0], std::min(cfg.vmax_range[1], v_reach));
  const double vg = v10 / 0.8;
  p.pc = p.pn - vg * vg * p.rho * std::numbers::e / p.B;
  p.rmw_km = uniform(rng, cfg.rmw_range[0], cfg.rmw_range[1]);
  const LatLon window{uniform(rng, cfg.lat_range[0], cfg.lat_range[1]),
                      uniform(rng, cfg.lon_range[0], cfg.lon_range[1])};
  p.center = {window.lat + uniform(rng, -cfg.center_jitter_deg, cfg.center_jitter_deg),
              window.lon + uniform(rng, -cfg.center_jitter_deg, cfg.center_jitter_deg)};
  p.f = coriolis(p.center.lat);
  const double env_speed = uniform(rng, 0.0, cfg.env_speed_max);
  const double env_dir = uniform(rng, 0.0, 2.0 * kPi);
  s.meta.env_u = env_speed * std::cos(env_dir);
  s.meta.env_v = env_speed * std::sin(env_dir);
  const double a1 = uniform(rng, 0.0, cfg.asym_k1_max), ph1 = uniform(rng, 0.0, 2.0 * kPi);
  const double a2 = uniform(rng, 0.0, cfg.asym_k2_max), ph2 = uniform(rng, 0.0, 2.0 * kPi);
  s.meta.asym.terms = {{1, a1, ph1}, {2, a2, ph2}};

  const GeoWindow geo = GeoWindow::centered(window, cfg.extent_deg, cfg.grid_h, cfg.grid_w);
  const std::int64_t valid_time = 1700000000LL + static_cast<std::int64_t>(index) * 21600;
  auto rendered = render_vortex(p, s.meta.asym, geo, s.meta.env_u, s.meta.env_v, valid_time);
  s.meta.fix = rendered.fix;
  s.truth = std::move(rendered.stack);
  s.clean = degrade_clean(s.truth, cfg.degrade);
  return s;
}

std::uint64_t forecast_seed(const SampleMeta& meta, int lead_hours) {
  return derive_seed(meta.seed, static_cast<std::uint64_t>(lead_hours));
}

FieldStack make_forecast(const Sample& s, int lead_hours, const GenConfig& cfg, ForecastError* applied) {
  return degrade_forecast(s.truth, lead_hours, cfg.degrade, forecast_seed(s.meta, lead_hours), applied);
}

std::string sample_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04d", index);
  return buf;
}

void gen_dataset(const GenConfig& cfg, std::uint64_t master_seed, const std::filesystem::path& root) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw DataError("cannot create dataset directory " + root.string() + ": " + ec.message());
  nlohmann::json manifest{{"format", "3DTC-DATASET v1"}, {"master_seed", master_seed}, {"config", cfg.to_json()}};
  write_text_file(root / "dataset.json", manifest.dump(2) + "\n");
  for (int i = 0; i < cfg.n_samples; ++i) {
    const Sample s = make_sample(cfg, master_seed, i);
    const auto dir = root / sample_dir_name(i);
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    write_grd(dir / "truth.grd", s.truth);
    write_grd(dir / "clean.grd", s.clean);
    nlohmann::json meta = s.meta.to_json();
    nlohmann::json errs = nlohmann::json::object();
    for (int lead : cfg.leads) {
      ForecastError fe;
      write_grd(dir / ("fcst_" + std::to_string(lead) + ".grd"), make_forecast(s, lead, cfg, &fe));
      errs[std::to_string(lead)] = {{"east_km", fe.east_km}, {"north_km", fe.north_km}, {"damping", fe.damping}};
    }
    meta["forecast_error"] = errs;
    write_text_file(dir / "meta.json", meta.dump(2) + "\n");
  }
}

GeneratedDataset::GeneratedDataset(GenConfig cfg, std::uint64_t master_seed)
    : cfg_(std::move(cfg)), seed_(master_seed) {
  cfg_.validate();
  cache_.resize(static_cast<std::size_t>(cfg_.n_samples));
}

const Sample& GeneratedDataset::at(int i) const {
  if (i < 0 || i >= cfg_.n_samples) throw std::out_of_range("dataset index out of range");
  auto& slot = cache_[static_cast<std::size_t>(i)];
  if (!slot) slot = std::make_unique<Sample>(make_sample(cfg_, seed_, i));
  return *slot;
}

FieldStack GeneratedDataset::forecast(int i, int lead_hours) const { return make_forecast(at(i), lead_hours, cfg_); }

DiskDataset::DiskDataset(std::filesystem::path root) : root_(std::move(root)) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(root_ / "dataset.json"));
    const auto cfg = GenConfig::from_json(j.at("config"));
    n_ = cfg.n_samples;
    leads_ = cfg.leads;
  } catch (const nlohmann::json::exception& e) {
    throw DataError((root_ / "dataset.json").string() + ": " + e.what());
  }
}

std::filesystem::path DiskDataset::sample_path(int i) const {
  if (i < 0 || i >= n_) throw std::out_of_range("dataset index out of range");
  return root_ / sample_dir_name(i);
}

SampleMeta DiskDataset::meta(int i) const {
  const auto path = sample_path(i) / "meta.json";
  try {
    return SampleMeta::from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

FieldStack DiskDataset::truth(int i) const { return read_grd(sample_path(i) / "truth.grd"); }
FieldStack DiskDataset::clean(int i) const { return read_grd(sample_path(i) / "clean.grd"); }
FieldStack DiskDataset::forecast(int i, int lead_hours) const {
  return read_grd(sample_path(i) / ("fcst_" + std::to_string(lead_hours) + ".grd"));
}

std::vector<RenderResult> render_moving_storm(const HollandParams& p, const AsymmetrySpec& asym,
                                              const GeoWindow& domain, LatLon start, LatLon step_deg, int frames,
                                              int dt_hours) {
  if (frames < 1) throw std::invalid_argument("render_moving_storm: need at least one frame");
  std::vector<RenderResult> out;
  for (int k = 0; k < frames; ++k) {
    HollandParams q = p;
    q.center = {start.lat + k * step_deg.lat, start.lon + k * step_deg.lon};
    out.push_back(render_vortex(q, asym, domain, 0.0, 0.0, static_cast<std::int64_t>(k) * dt_hours * 3600));
  }
  return out;
}

}  // namespace tcr::synth
