#pragma once

#include <vector>

namespace tcr::train {

using FeatureSet = std::vector<std::vector<double>>;

struct MmdSpec {
  // Kernel variances are median_bandwidth(pooled) * multiplier; an empty
  // list of fixed variances means "use the median heuristic".
  std::vector<double> multipliers{0.5, 1.0, 2.0};
  std::vector<double> fixed_sigma2;
  double lambda = 0.1;
  int bucket_hours = 24;
};

// sigma^2 = median pairwise squared distance / 2, floored at 1e-6.
double median_bandwidth(const FeatureSet& feats);

// Kernel variances for the pooled sample X u Y under `spec`.
std::vector<double> mmd_bandwidths(const FeatureSet& x, const FeatureSet& y, const MmdSpec& spec);

// Biased V-statistic MMD^2 with a Gaussian mixture kernel
// k(a, b) = exp(-|a - b|^2 / (2 sigma^2)), averaged over the variances.
double mmd2(const FeatureSet& x, const FeatureSet& y, const MmdSpec& spec);
double mmd2_with(const FeatureSet& x, const FeatureSet& y, const std::vector<double>& sigma2s);
// mmd2_with accumulated and returned in extended precision.
long double mmd2_extended(const FeatureSet& x, const FeatureSet& y, const std::vector<double>& sigma2s);

}  // namespace tcr::train
