#include "tcr/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tcr/bytes.hpp"
#include "tcr/error.hpp"
#include "tcr/grd_io.hpp"
#include "tcr/synth.hpp"

namespace tcr::verify {

namespace fs = std::filesystem;

double max_ws10m(const FieldStack& stack) {
  if (!stack.has(ChannelId::WS10M)) throw DataError("max_ws10m: stack has no WS10M channel");
  const auto ws = stack.plane(ChannelId::WS10M);
  if (ws.empty()) throw DataError("max_ws10m: empty WS10M plane");
  return *std::max_element(ws.begin(), ws.end());
}

namespace {

void check_pair(std::span<const double> p, std::span<const double> o, const char* what) {
  if (p.empty() || p.size() != o.size()) {
    throw std::invalid_argument(std::string(what) + ": inputs must be non-empty and of equal length");
  }
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> obs) {
  check_pair(pred, obs, "rmse");
  long double s = 0.0L;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const long double d = static_cast<long double>(pred[k]) - obs[k];
    s += d * d;
  }
  return static_cast<double>(std::sqrt(s / pred.size()));
}

double bias(std::span<const double> pred, std::span<const double> obs) {
  check_pair(pred, obs, "bias");
  long double s = 0.0L;
  for (std::size_t k = 0; k < pred.size(); ++k) s += static_cast<long double>(pred[k]) - obs[k];
  return static_cast<double>(s / pred.size());
}

double ContingencyTable::csi() const {
  const std::int64_t d = hits + misses + false_alarms;
  return d == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(d);
}

ContingencyTable contingency(const std::vector<bool>& pred_events, const std::vector<bool>& obs_events) {
  if (pred_events.size() != obs_events.size()) throw std::invalid_argument("csi: event lists differ in length");
  ContingencyTable t;
  for (std::size_t k = 0; k < pred_events.size(); ++k) {
    const bool p = pred_events[k], o = obs_events[k];
    if (p && o) ++t.hits;
    else if (o) ++t.misses;
    else if (p) ++t.false_alarms;
    else ++t.correct_negatives;
  }
  return t;
}

double csi(const std::vector<bool>& pred_events, const std::vector<bool>& obs_events) {
  return contingency(pred_events, obs_events).csi();
}

ContingencyTable gridwise_contingency(const FieldStack& pred, const FieldStack& obs, double threshold) {
  if (!pred.has(ChannelId::WS10M) || !obs.has(ChannelId::WS10M)) throw DataError("gridwise CSI: WS10M missing");
  const auto p = pred.plane(ChannelId::WS10M);
  const auto o = obs.plane(ChannelId::WS10M);
  if (p.size() != o.size()) throw DataError("gridwise CSI: grids differ");
  std::vector<bool> pe(p.size()), oe(o.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    pe[k] = p[k] >= threshold;
    oe[k] = o[k] >= threshold;
  }
  auto t = contingency(pe, oe);
  t.threshold = threshold;
  return t;
}

int bucket_of(int lead_hours, int width_hours) {
  if (lead_hours < 0) throw std::invalid_argument("bucket_of: negative lead");
  if (width_hours < 1) throw std::invalid_argument("bucket_of: width must be >= 1");
  return lead_hours == 0 ? 0 : (lead_hours - 1) / width_hours + 1;
}

std::map<int, TrackErrorCell> track_mae(const CycloneTrack& pred, const CycloneTrack& truth, std::int64_t init_time,
                                        int bucket_hours) {
  std::map<std::int64_t, const CycloneFix*> by_time;
  for (const auto& f : truth.fixes) by_time[f.time] = &f;
  std::map<int, long double> sums;
  std::map<int, TrackErrorCell> out;
  bool shared = false;
  for (const auto& p : pred.fixes) {
    auto it = by_time.find(p.time);
    if (it == by_time.end()) continue;
    shared = true;
    if (p.time < init_time) throw std::invalid_argument("track_mae: fix before the initial time");
    const int lead = static_cast<int>((p.time - init_time) / 3600);
    auto& cell = out[bucket_of(lead, bucket_hours)];
    if (p.gap || it->second->gap) {
      ++cell.excluded;
      continue;
    }
    sums[bucket_of(lead, bucket_hours)] += haversine_km(p.position(), it->second->position());
    ++cell.n;
  }
  if (!shared) throw std::invalid_argument("track_mae: tracks share no timestamps");
  for (auto& [b, cell] : out)
    if (cell.n > 0) cell.mae_km = static_cast<double>(sums[b] / cell.n);
  return out;
}

void EvalConfig::validate() const {
  if (thresholds.empty()) throw ConfigError("evaluate: at least one threshold required");
  for (double t : thresholds)
    if (!std::isfinite(t)) throw ConfigError("evaluate: thresholds must be finite");
  if (buckets.empty()) throw ConfigError("evaluate: at least one bucket required");
  for (int b : buckets)
    if (b < 0) throw ConfigError("evaluate: buckets must be >= 0");
  if (bucket_hours < 1) throw ConfigError("evaluate: bucket_hours must be >= 1");
  if (pred_prefix.empty()) throw ConfigError("evaluate: pred_prefix must not be empty");
  if (first_sample < 0) throw ConfigError("evaluate: first_sample must be >= 0");
  if (sample_count < -1 || sample_count == 0) throw ConfigError("evaluate: sample_count must be -1 or >= 1");
}

nlohmann::json EvalConfig::to_json() const {
  return {{"thresholds", thresholds},
          {"buckets", buckets},
          {"bucket_hours", bucket_hours},
          {"csi_mode", csi_mode == CsiMode::Event ? "event" : "gridwise"},
          {"pred_prefix", pred_prefix},
          {"first_sample", first_sample},
          {"sample_count", sample_count},
          {"tracker",
           {{"smooth_sigma_cells", tracker.smooth_sigma_cells},
            {"search_radius_deg", tracker.search_radius_deg},
            {"refine", tracker.refine},
            {"max_jump_kmh", tracker.max_jump_kmh}}}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  c.thresholds = j.value("thresholds", c.thresholds);
  c.buckets = j.value("buckets", c.buckets);
  c.bucket_hours = j.value("bucket_hours", c.bucket_hours);
  const std::string mode = j.value("csi_mode", std::string("event"));
  if (mode == "event") c.csi_mode = CsiMode::Event;
  else if (mode == "gridwise") c.csi_mode = CsiMode::Gridwise;
  else throw ConfigError("evaluate: csi_mode must be 'event' or 'gridwise'");
  c.pred_prefix = j.value("pred_prefix", c.pred_prefix);
  c.first_sample = j.value("first_sample", c.first_sample);
  c.sample_count = j.value("sample_count", c.sample_count);
  if (j.contains("tracker")) {
    const auto& t = j.at("tracker");
    c.tracker.smooth_sigma_cells = t.value("smooth_sigma_cells", c.tracker.smooth_sigma_cells);
    c.tracker.search_radius_deg = t.value("search_radius_deg", c.tracker.search_radius_deg);
    c.tracker.refine = t.value("refine", c.tracker.refine);
    c.tracker.max_jump_kmh = t.value("max_jump_kmh", c.tracker.max_jump_kmh);
  }
  return c;
}

const BucketReport* EvalReport::bucket(int b) const {
  for (const auto& r : buckets)
    if (r.bucket == b) return &r;
  return nullptr;
}

void EvalReport::check_invariants() const {
  for (const auto& b : buckets) {
    if (!b.present) continue;
    // Relative slack absorbs the last-ulp rounding of the two reductions.
    if (b.rmse < std::abs(b.bias) * (1.0 - 1e-12)) {
      throw NumericalError("report invariant: RMSE < |Bias| in bucket " + std::to_string(b.bucket));
    }
    for (const auto& t : b.csi) {
      const double c = t.csi();
      if (!(c >= 0.0 && c <= 1.0)) throw NumericalError("report invariant: CSI outside [0,1]");
    }
  }
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json bj = nlohmann::json::array();
  for (const auto& b : buckets) {
    nlohmann::json e = {{"bucket", b.bucket}, {"present", b.present}, {"n", b.n}};
    if (b.present) {
      e["rmse"] = b.rmse;
      e["bias"] = b.bias;
      e["mae"] = b.mae;
      e["track"] = {{"n", b.track.n}, {"excluded", b.track.excluded}};
      if (b.track.n > 0) e["track"]["mae_km"] = b.track.mae_km;
      nlohmann::json cj = nlohmann::json::array();
      for (const auto& t : b.csi) {
        cj.push_back({{"threshold", t.threshold},
                      {"csi", t.csi()},
                      {"hits", t.hits},
                      {"misses", t.misses},
                      {"false_alarms", t.false_alarms},
                      {"correct_negatives", t.correct_negatives}});
      }
      e["csi"] = cj;
    }
    bj.push_back(e);
  }
  return {{"format", "3DTC-EVAL v1"}, {"config", config.to_json()}, {"buckets", bj},
          {"samples", residuals.size()}};
}

std::string EvalReport::to_csv() const {
  std::string out = "bucket,threshold,metric,value,n\n";
  char buf[160];
  auto row = [&](int b, const char* thr, const char* metric, double v, long long n) {
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%.9g,%lld\n", b, thr, metric, v, n);
    out += buf;
  };
  for (const auto& b : buckets) {
    if (!b.present) continue;
    row(b.bucket, "", "rmse", b.rmse, b.n);
    row(b.bucket, "", "bias", b.bias, b.n);
    row(b.bucket, "", "mae", b.mae, b.n);
    if (b.track.n > 0) row(b.bucket, "", "track_mae_km", b.track.mae_km, b.track.n);
    for (const auto& t : b.csi) {
      char thr[32];
      std::snprintf(thr, sizeof thr, "%g", t.threshold);
      row(b.bucket, thr, "csi", t.csi(), t.total());
    }
  }
  return out;
}

std::string EvalReport::residuals_csv() const {
  std::string out = "sample,lead_hours,bucket,pred_max,obs_max,residual,center_error_km,track_gap\n";
  char buf[200];
  for (const auto& r : residuals) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f,%.6f,%.6f,%.4f,%d\n", r.sample, r.lead_hours, r.bucket, r.pred_max,
                  r.obs_max, r.pred_max - r.obs_max, r.center_error_km, r.track_gap ? 1 : 0);
    out += buf;
  }
  return out;
}

EvalReport evaluate_items(std::vector<EvalItem> items, const EvalConfig& cfg) {
  cfg.validate();
  std::sort(items.begin(), items.end(), [](const EvalItem& a, const EvalItem& b) {
    return a.sample != b.sample ? a.sample < b.sample : a.lead_hours < b.lead_hours;
  });
  for (std::size_t k = 1; k < items.size(); ++k) {
    if (items[k].sample == items[k - 1].sample && items[k].lead_hours == items[k - 1].lead_hours) {
      throw DataError("evaluate: duplicate item for sample " + std::to_string(items[k].sample) + " lead " +
                      std::to_string(items[k].lead_hours));
    }
  }
  EvalReport rep;
  rep.config = cfg;
  for (const auto& it : items) {
    Residual r;
    r.sample = it.sample;
    r.lead_hours = it.lead_hours;
    r.bucket = bucket_of(it.lead_hours, cfg.bucket_hours);
    r.pred_max = max_ws10m(it.pred);
    r.obs_max = max_ws10m(it.truth);
    const GeoWindow& g = it.pred.geo();
    const auto c = track::find_center(it.pred.plane(ChannelId::MSL), g, LatLon{g.lat_center, g.lon_center},
                                      cfg.tracker);
    r.track_gap = c.low_confidence;
    r.center_error_km = haversine_km(c.position, it.true_center);
    rep.residuals.push_back(r);
  }
  std::vector<int> order = cfg.buckets;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  for (int b : order) {
    BucketReport br;
    br.bucket = b;
    std::vector<double> p, o;
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < rep.residuals.size(); ++k) {
      if (rep.residuals[k].bucket != b) continue;
      p.push_back(rep.residuals[k].pred_max);
      o.push_back(rep.residuals[k].obs_max);
      idx.push_back(k);
    }
    br.n = static_cast<int>(p.size());
    br.present = br.n > 0;
    if (br.present) {
      br.rmse = rmse(p, o);
      br.bias = bias(p, o);
      long double a = 0.0L, d = 0.0L;
      for (std::size_t k = 0; k < p.size(); ++k) a += std::abs(static_cast<long double>(p[k]) - o[k]);
      br.mae = static_cast<double>(a / p.size());
      for (std::size_t k : idx) {
        if (rep.residuals[k].track_gap) {
          ++br.track.excluded;
        } else {
          d += rep.residuals[k].center_error_km;
          ++br.track.n;
        }
      }
      if (br.track.n > 0) br.track.mae_km = static_cast<double>(d / br.track.n);
      for (double thr : cfg.thresholds) {
        ContingencyTable t;
        if (cfg.csi_mode == CsiMode::Event) {
          std::vector<bool> pe, oe;
          for (std::size_t k = 0; k < p.size(); ++k) {
            pe.push_back(p[k] >= thr);
            oe.push_back(o[k] >= thr);
          }
          t = contingency(pe, oe);
        } else {
          for (std::size_t k : idx) {
            const auto& it = items[k];
            const auto g = gridwise_contingency(it.pred, it.truth, thr);
            t.hits += g.hits;
            t.misses += g.misses;
            t.false_alarms += g.false_alarms;
            t.correct_negatives += g.correct_negatives;
          }
        }
        t.threshold = thr;
        t.bucket = b;
        br.csi.push_back(t);
      }
    }
    rep.buckets.push_back(std::move(br));
  }
  rep.check_invariants();
  return rep;
}

namespace {

// Lead hours of every <prefix><lead>.grd in a sample directory.
std::set<int> leads_in(const fs::path& dir, const std::string& prefix) {
  std::set<int> leads;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() <= prefix.size() + 4 || name.rfind(prefix, 0) != 0 || e.path().extension() != ".grd") continue;
    const std::string mid = name.substr(prefix.size(), name.size() - prefix.size() - 4);
    if (mid.empty() || mid.find_first_not_of("0123456789") != std::string::npos) continue;
    leads.insert(std::stoi(mid));
  }
  return leads;
}

int sample_index(const std::string& name) {
  if (name.rfind("sample_", 0) != 0 || name.size() <= 7) return -1;
  const std::string d = name.substr(7);
  if (d.find_first_not_of("0123456789") != std::string::npos) return -1;
  return std::stoi(d);
}

}  // namespace

EvalReport evaluate_run(const fs::path& pred_dir, const fs::path& truth_dir, const EvalConfig& cfg) {
  cfg.validate();
  if (!fs::is_directory(pred_dir)) throw DataError("evaluate: prediction directory not found: " + pred_dir.string());
  if (!fs::is_directory(truth_dir)) throw DataError("evaluate: truth directory not found: " + truth_dir.string());
  std::map<int, std::set<int>> inventory;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (!e.is_directory()) continue;
    const int idx = sample_index(e.path().filename().string());
    if (idx < cfg.first_sample) continue;
    if (cfg.sample_count > 0 && idx >= cfg.first_sample + cfg.sample_count) continue;
    auto leads = leads_in(e.path(), cfg.pred_prefix);
    if (!leads.empty()) inventory[idx] = std::move(leads);
  }
  if (inventory.empty()) {
    throw DataError("evaluate: no " + cfg.pred_prefix + "<lead>.grd files under " + pred_dir.string());
  }
  std::set<int> all_leads;
  for (const auto& [idx, leads] : inventory) all_leads.insert(leads.begin(), leads.end());
  std::vector<std::string> missing;
  for (const auto& [idx, leads] : inventory) {
    for (int l : all_leads)
      if (!leads.count(l)) {
        missing.push_back((pred_dir / synth::sample_dir_name(idx) / (cfg.pred_prefix + std::to_string(l) + ".grd"))
                              .string());
      }
    const fs::path t = truth_dir / synth::sample_dir_name(idx);
    for (const char* f : {"truth.grd", "meta.json"})
      if (!fs::exists(t / f)) missing.push_back((t / f).string());
  }
  if (!missing.empty()) {
    std::string msg = "evaluate: inventory mismatch, missing:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw DataError(msg);
  }
  std::vector<EvalItem> items;
  for (const auto& [idx, leads] : inventory) {
    const fs::path t = truth_dir / synth::sample_dir_name(idx);
    const FieldStack truth = read_grd(t / "truth.grd");
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(read_text_file(t / "meta.json"));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("evaluate: bad " + (t / "meta.json").string() + ": " + e.what());
    }
    const auto sm = synth::SampleMeta::from_json(meta);
    for (int l : leads) {
      EvalItem it;
      it.sample = idx;
      it.lead_hours = l;
      it.pred = read_grd(pred_dir / synth::sample_dir_name(idx) / (cfg.pred_prefix + std::to_string(l) + ".grd"));
      if (!(it.pred.geo() == truth.geo())) {
        throw DataError("evaluate: grid mismatch for sample " + std::to_string(idx) + " lead " + std::to_string(l));
      }
      it.truth = truth;
      it.true_center = sm.fix.position();
      items.push_back(std::move(it));
    }
  }
  return evaluate_items(std::move(items), cfg);
}

void write_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text_file(dir / "report.csv", report.to_csv());
  write_text_file(dir / "residuals.csv", report.residuals_csv());
}

}  // namespace tcr::verify
