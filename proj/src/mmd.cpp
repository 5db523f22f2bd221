#include "tcr/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tcr::train {

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

void check_dims(const FeatureSet& x, const FeatureSet& y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("mmd2: sample sets must be nonempty");
  const std::size_t d = x.front().size();
  for (const auto& v : x)
    if (v.size() != d) throw std::invalid_argument("mmd2: dimension mismatch within X");
  for (const auto& v : y)
    if (v.size() != d) throw std::invalid_argument("mmd2: dimension mismatch between X and Y");
}

}  // namespace

double median_bandwidth(const FeatureSet& feats) {
  if (feats.size() < 2) throw std::invalid_argument("median_bandwidth: need at least two vectors");
  std::vector<double> d;
  d.reserve(feats.size() * (feats.size() - 1) / 2);
  for (std::size_t i = 0; i < feats.size(); ++i)
    for (std::size_t j = i + 1; j < feats.size(); ++j) d.push_back(squared_distance(feats[i], feats[j]));
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return std::max(median / 2.0, 1e-6);
}

std::vector<double> mmd_bandwidths(const FeatureSet& x, const FeatureSet& y, const MmdSpec& spec) {
  if (!spec.fixed_sigma2.empty()) return spec.fixed_sigma2;
  if (spec.multipliers.empty()) throw std::invalid_argument("mmd2: at least one bandwidth required");
  if (x.empty() && y.empty()) throw std::invalid_argument("mmd2: sample sets must be nonempty");
  FeatureSet pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  const double base = pooled.size() >= 2 ? median_bandwidth(pooled) : 1.0;
  std::vector<double> out;
  for (double m : spec.multipliers) out.push_back(base * m);
  return out;
}

double mmd2_with(const FeatureSet& x, const FeatureSet& y, const std::vector<double>& sigma2s) {
  check_dims(x, y);
  if (sigma2s.empty()) throw std::invalid_argument("mmd2: at least one bandwidth required");
  // Canonical argument order keeps mmd2(X, Y) and mmd2(Y, X) bitwise equal.
  if (y < x) return mmd2_with(y, x, sigma2s);
  auto mean_kernel = [](const FeatureSet& a, const FeatureSet& b, double s2) {
    double s = 0.0;
    for (const auto& u : a)
      for (const auto& v : b) s += std::exp(-squared_distance(u, v) / (2.0 * s2));
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  double total = 0.0;
  for (double s2 : sigma2s) total += mean_kernel(x, x, s2) + mean_kernel(y, y, s2) - 2.0 * mean_kernel(x, y, s2);
  return total / static_cast<double>(sigma2s.size());
}

long double mmd2_extended(const FeatureSet& x, const FeatureSet& y, const std::vector<double>& sigma2s) {
  check_dims(x, y);
  if (sigma2s.empty()) throw std::invalid_argument("mmd2: at least one bandwidth required");
  if (y < x) return mmd2_extended(y, x, sigma2s);
  auto mean_kernel = [](const FeatureSet& a, const FeatureSet& b, double s2) {
    long double s = 0.0L;
    for (const auto& u : a)
      for (const auto& v : b) {
        long double d2 = 0.0L;
        for (std::size_t k = 0; k < u.size(); ++k) {
          const long double d = static_cast<long double>(u[k]) - v[k];
          d2 += d * d;
        }
        s += std::exp(-d2 / (2.0L * s2));
      }
    return s / (static_cast<long double>(a.size()) * static_cast<long double>(b.size()));
  };
  long double total = 0.0L;
  for (double s2 : sigma2s) total += mean_kernel(x, x, s2) + mean_kernel(y, y, s2) - 2.0L * mean_kernel(x, y, s2);
  return total / static_cast<long double>(sigma2s.size());
}

double mmd2(const FeatureSet& x, const FeatureSet& y, const MmdSpec& spec) {
  check_dims(x, y);
  return mmd2_with(x, y, mmd_bandwidths(x, y, spec));
}

}  // namespace tcr::train
