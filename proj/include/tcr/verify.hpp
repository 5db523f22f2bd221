#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcr/grid.hpp"
#include "tcr/track.hpp"

namespace tcr::verify {

// Field maximum of the WS10M channel; DataError when the channel is absent.
double max_ws10m(const FieldStack& stack);

// Both throw std::invalid_argument on empty or mismatched inputs.
double rmse(std::span<const double> pred, std::span<const double> obs);
double bias(std::span<const double> pred, std::span<const double> obs);

struct ContingencyTable {
  std::int64_t hits = 0;
  std::int64_t misses = 0;
  std::int64_t false_alarms = 0;
  std::int64_t correct_negatives = 0;
  double threshold = 0.0;
  int bucket = 0;

  std::int64_t total() const { return hits + misses + false_alarms + correct_negatives; }
  // hits / (hits + misses + false alarms); 1.0 when all three are zero.
  double csi() const;
};

ContingencyTable contingency(const std::vector<bool>& pred_events, const std::vector<bool>& obs_events);
double csi(const std::vector<bool>& pred_events, const std::vector<bool>& obs_events);

// Cellwise events (WS10M >= threshold) over two stacks on the same grid.
ContingencyTable gridwise_contingency(const FieldStack& pred, const FieldStack& obs, double threshold);

// Lead bucket of width `width_hours`: 0 for lead 0, then 1 for (0, w], 2 for (w, 2w], ...
int bucket_of(int lead_hours, int width_hours);

struct TrackErrorCell {
  double mae_km = 0.0;
  int n = 0;         // fixes averaged
  int excluded = 0;  // gap-flagged fixes skipped
};

// Mean haversine error per lead bucket over shared timestamps, with leads
// measured from `init_time`. Buckets where every fix is a gap report n = 0.
// Throws std::invalid_argument when the tracks share no timestamp.
std::map<int, TrackErrorCell> track_mae(const CycloneTrack& pred, const CycloneTrack& truth, std::int64_t init_time,
                                        int bucket_hours = 24);

enum class CsiMode { Event, Gridwise };

struct EvalConfig {
  std::vector<double> thresholds{13.9, 17.2, 20.8, 24.5, 28.5, 32.7};
  std::vector<int> buckets{1, 2, 3, 4, 5};
  int bucket_hours = 24;
  CsiMode csi_mode = CsiMode::Event;
  std::string pred_prefix = "recon_";  // prediction files are <sample>/<prefix><lead>.grd
  int first_sample = 0;                // sample index range considered by evaluate_run
  int sample_count = -1;               // -1: every sample from first_sample on
  track::TrackerSpec tracker;

  void validate() const;  // ConfigError
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

// One verified prediction: the predicted and true stacks plus the true center.
struct EvalItem {
  int sample = 0;
  int lead_hours = 0;
  FieldStack pred;
  FieldStack truth;
  LatLon true_center;
};

struct Residual {
  int sample = 0;
  int lead_hours = 0;
  int bucket = 0;
  double pred_max = 0.0;
  double obs_max = 0.0;
  double center_error_km = 0.0;
  bool track_gap = false;
};

struct BucketReport {
  int bucket = 0;
  bool present = false;  // false when no sample falls in the bucket
  int n = 0;
  double rmse = 0.0;
  double bias = 0.0;
  double mae = 0.0;  // mean |pred max - obs max|
  TrackErrorCell track;
  std::vector<ContingencyTable> csi;  // one per threshold
};

struct EvalReport {
  EvalConfig config;
  std::vector<BucketReport> buckets;
  std::vector<Residual> residuals;  // sorted by (sample, lead)

  nlohmann::json to_json() const;
  // bucket,threshold,metric,value,n
  std::string to_csv() const;
  std::string residuals_csv() const;
  const BucketReport* bucket(int b) const;
  // Throws NumericalError when RMSE < |Bias| anywhere or a CSI leaves [0, 1].
  void check_invariants() const;
};

// Items may arrive in any order; the report depends only on their content.
EvalReport evaluate_items(std::vector<EvalItem> items, const EvalConfig& cfg);

// pred_dir/sample_XXXX/<prefix><lead>.grd against truth_dir/sample_XXXX/
// {truth.grd, meta.json}. Every prediction sample must carry the same lead
// set and have a truth counterpart; otherwise DataError lists what is missing.
EvalReport evaluate_run(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir,
                        const EvalConfig& cfg);

// Writes report.json, report.csv and residuals.csv into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace tcr::verify
