#include "tcr/filter.hpp"

#include <cmath>
#include <stdexcept>

namespace tcr {

namespace {

int reflect(int i, int n) {
  // Period 2n mirror including the edge sample.
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

template <typename In>
std::vector<double> blur_impl(std::span<const In> field, int h, int w, double sigma) {
  if (h < 1 || w < 1 || field.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("gaussian_blur: field size does not match dims");
  }
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(field.size()), out(field.size());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int t = -r; t <= r; ++t) s += k[t + r] * field[static_cast<std::size_t>(i) * w + reflect(j + t, w)];
      tmp[static_cast<std::size_t>(i) * w + j] = s;
    }
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int t = -r; t <= r; ++t) s += k[t + r] * tmp[static_cast<std::size_t>(reflect(i + t, h)) * w + j];
      out[static_cast<std::size_t>(i) * w + j] = s;
    }
  }
  return out;
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int r = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int t = -r; t <= r; ++t) {
    k[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += k[t + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::vector<double> gaussian_blur(std::span<const double> field, int h, int w, double sigma) {
  return blur_impl(field, h, w, sigma);
}

std::vector<double> gaussian_blur(std::span<const float> field, int h, int w, double sigma) {
  return blur_impl(field, h, w, sigma);
}

}  // namespace tcr
