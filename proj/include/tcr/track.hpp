#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcr/grid.hpp"

namespace tcr::track {

struct TrackerSpec {
  double smooth_sigma_cells = 1.5;
  double search_radius_deg = 3.0;
  bool refine = true;
  double max_jump_kmh = 110.0;

  // Throws std::invalid_argument unless 0 < search radius < half the window.
  void validate(const GeoWindow& geo) const;
};

struct CenterResult {
  int row = 0;
  int col = 0;
  double row_f = 0.0;  // refined fractional position
  double col_f = 0.0;
  LatLon position;
  double pmin = 0.0;
  bool low_confidence = false;
};

// MSL-minimum center finder: Gaussian smoothing, optional search disk around
// `first_guess`, argmin, then a 3x3 quadratic vertex clamped to +-0.5 cell.
// The argmin is flagged low-confidence when it lies on the domain edge or the
// edge of the search disk.
CenterResult find_center(std::span<const float> msl, const GeoWindow& geo, std::optional<LatLon> first_guess,
                         const TrackerSpec& spec);

// Follows the MSL minimum through time-ordered frames. Each frame is searched
// around the previous center extrapolated by the previous displacement; fixes
// that are low-confidence or imply a translation above max_jump_kmh are
// replaced by the extrapolated position and flagged as gaps.
CycloneTrack follow_track(const std::vector<FieldStack>& seq, std::optional<LatLon> init_guess,
                          const TrackerSpec& spec);

// Storm-centered crops along a track aligned with `seq`.
std::vector<CropResult> extract_following_windows(const std::vector<FieldStack>& seq, const CycloneTrack& track,
                                                  double size_deg);

// CSV columns: time,lat,lon,vmax_ms,pmin_pa,flag (flag 1 = gap).
std::string track_csv(const CycloneTrack& track);
CycloneTrack parse_track_csv(const std::string& text);

}  // namespace tcr::track
