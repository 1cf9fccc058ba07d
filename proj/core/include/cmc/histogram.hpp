#pragma once

#include <span>
#include <vector>

#include "cmc/geometry.hpp"

namespace cmc {

// Equal-width histogram over [lo, hi].
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> counts;

  double total() const;
  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  // Piecewise-linear inverse CDF; q in [0,1].
  double quantile(double q) const;
};

Histogram build_histogram(std::span<const float> values, int n_bins = 256);

// Monotone intensity remapping by CDF matching: every sample is mapped
// through its empirical rank onto the reference's inverse CDF. A constant
// image maps to the reference median.
PlanarImage histogram_normalize(const PlanarImage& image, const Histogram& reference);

}  // namespace cmc
