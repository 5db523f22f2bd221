#pragma once

#include <span>
#include <vector>

namespace tcr {

// Normalized 1D Gaussian taps over [-R, R], R = ceil(4 sigma). sigma <= 0
// yields the single tap {1}.
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian blur with half-sample symmetric reflection at the
// boundary (d c b a | a b c d). Accumulates in double.
std::vector<double> gaussian_blur(std::span<const double> field, int h, int w, double sigma);
std::vector<double> gaussian_blur(std::span<const float> field, int h, int w, double sigma);

}  // namespace tcr
