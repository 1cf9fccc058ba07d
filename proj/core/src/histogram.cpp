#include "cmc/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmc/error.hpp"

namespace cmc {

double Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

double Histogram::quantile(double q) const {
  const double n = total();
  if (counts.empty() || !(n > 0.0)) throw InvalidInput("empty reference histogram");
  q = std::clamp(q, 0.0, 1.0);
  const double target = q * n;
  double acc = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] > 0.0 && acc + counts[b] >= target) {
      const double frac = std::clamp((target - acc) / counts[b], 0.0, 1.0);
      return lo + (static_cast<double>(b) + frac) * bin_width();
    }
    acc += counts[b];
  }
  return hi;
}

Histogram build_histogram(std::span<const float> values, int n_bins) {
  if (n_bins < 2) throw InvalidInput("histogram needs at least 2 bins");
  if (values.empty()) throw InvalidInput("histogram of an empty sample");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  Histogram h;
  h.lo = *mn;
  h.hi = *mx;
  if (h.hi <= h.lo) h.hi = h.lo + 1.0;
  h.counts.assign(static_cast<std::size_t>(n_bins), 0.0);
  const double scale = n_bins / (h.hi - h.lo);
  for (float v : values) {
    const int b = std::min(static_cast<int>((v - h.lo) * scale), n_bins - 1);
    h.counts[static_cast<std::size_t>(b)] += 1.0;
  }
  return h;
}

PlanarImage histogram_normalize(const PlanarImage& image, const Histogram& reference) {
  if (reference.counts.size() < 2) throw InvalidInput("reference histogram needs >= 2 bins");
  PlanarImage out = image;
  const auto in = image.samples();
  const std::size_t n = in.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return in[a] < in[b]; });
  if (in[order.front()] == in[order.back()]) {
    std::fill(out.samples().begin(), out.samples().end(), static_cast<float>(reference.quantile(0.5)));
    return out;
  }
  // Mid-rank of each run of tied values.
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && in[order[j + 1]] == in[order[i]]) ++j;
    const double rank = (0.5 * static_cast<double>(i + j) + 0.5) / static_cast<double>(n);
    const auto mapped = static_cast<float>(reference.quantile(rank));
    for (std::size_t k = i; k <= j; ++k) out.samples()[order[k]] = mapped;
    i = j + 1;
  }
  return out;
}

}  // namespace cmc
