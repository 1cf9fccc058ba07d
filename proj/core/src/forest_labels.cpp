// Structured-label machinery: the pairwise mapping of label patches and the
// PCA binary quantisation that turns them into two classes per node.
#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "cmc/error.hpp"
#include "cmc/forest.hpp"

namespace cmc {

std::vector<std::uint8_t> pi_mapping(std::span<const std::uint8_t> label, std::span<const PixelPair> pairs) {
  std::vector<std::uint8_t> z(2 * pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [j1, j2] = pairs[p];
    if (j1 == j2) throw InvalidInput("pi_mapping: pair with identical pixels");
    const std::uint8_t a = label[static_cast<std::size_t>(j1)];
    const std::uint8_t b = label[static_cast<std::size_t>(j2)];
    z[2 * p] = (a == 0 && b == 0) ? 1 : 0;
    z[2 * p + 1] = (a == 1 && b == 1) ? 1 : 0;
  }
  return z;
}

std::vector<double> principal_projections(const std::vector<std::vector<std::uint8_t>>& zs, int iterations,
                                          int max_axis_samples) {
  const std::size_t n = zs.size();
  if (n == 0) return {};
  const std::size_t dim = zs.front().size();
  const std::size_t words = (dim + 63) / 64;

  // Axis samples: evenly spaced subset when capped.
  std::vector<std::size_t> axis_idx;
  const std::size_t a = (max_axis_samples > 0 && n > static_cast<std::size_t>(max_axis_samples))
                            ? static_cast<std::size_t>(max_axis_samples)
                            : n;
  axis_idx.reserve(a);
  for (std::size_t i = 0; i < a; ++i) axis_idx.push_back(i * n / a);

  std::vector<std::uint64_t> packed(a * words, 0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < a; ++i) {
    const auto& z = zs[axis_idx[i]];
    if (z.size() != dim) throw InvalidInput("z vectors differ in length");
    for (std::size_t d = 0; d < dim; ++d)
      if (z[d]) {
        packed[i * words + d / 64] |= std::uint64_t{1} << (d % 64);
        mean[static_cast<Eigen::Index>(d)] += 1.0;
      }
  }
  mean /= static_cast<double>(a);

  // Power iteration runs on the a x a Gram matrix of the centred vectors
  // (same leading eigenvector after mapping back through Z^T); bit-packed
  // dot products keep it cheap.
  Eigen::MatrixXd gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = i; j < a; ++j) {
      int dot = 0;
      for (std::size_t w = 0; w < words; ++w) dot += std::popcount(packed[i * words + w] & packed[j * words + w]);
      gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dot;
      gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = dot;
    }
  const Eigen::VectorXd row_mean = gram.rowwise().mean();
  const double all_mean = row_mean.mean();
  gram.colwise() -= row_mean;
  gram.rowwise() -= row_mean.transpose();
  gram.array() += all_mean;

  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::VectorXd u(static_cast<Eigen::Index>(a));
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = uni(rng);
  u.normalize();
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd next = gram * u;
    const double norm = next.norm();
    if (!(norm > 1e-12)) return std::vector<double>(n, 0.0);
    u = next / norm;
  }

  Eigen::VectorXd axis = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < a; ++i) {
    const auto& z = zs[axis_idx[i]];
    for (std::size_t d = 0; d < dim; ++d)
      axis[static_cast<Eigen::Index>(d)] += u[static_cast<Eigen::Index>(i)] * (z[d] - mean[static_cast<Eigen::Index>(d)]);
  }
  const double axis_norm = axis.norm();
  if (!(axis_norm > 1e-12)) return std::vector<double>(n, 0.0);
  axis /= axis_norm;
  // Sign: the first component within 1e-9 of the largest magnitude is positive.
  const double amax = axis.cwiseAbs().maxCoeff();
  Eigen::Index imax = 0;
  while (std::abs(axis[imax]) < amax - 1e-9) ++imax;
  if (axis[imax] < 0) axis = -axis;

  const double offset = mean.dot(axis);
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = zs[i];
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d)
      if (z[d]) acc += axis[static_cast<Eigen::Index>(d)];
    proj[i] = acc - offset;
  }
  return proj;
}

std::vector<std::uint8_t> binarize_labels(const std::vector<std::vector<std::uint8_t>>& zs, int iterations,
                                          int max_axis_samples) {
  const std::size_t n = zs.size();
  std::vector<std::uint8_t> classes(n, 0);
  if (n < 2) return classes;
  if (std::all_of(zs.begin(), zs.end(), [&](const auto& z) { return z == zs.front(); })) return classes;

  const std::vector<double> proj = principal_projections(zs, iterations, max_axis_samples);
  std::vector<double> sorted = proj;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  // Even n: midpoint of the two middle projections.
  const double median = n % 2 ? *mid : 0.5 * (*mid + *std::max_element(sorted.begin(), mid));
  std::size_t above = 0;
  for (std::size_t i = 0; i < n; ++i) {
    classes[i] = proj[i] > median ? 1 : 0;
    above += classes[i];
  }
  if (above == 0)
    for (std::size_t i = 0; i < n; ++i) classes[i] = proj[i] >= median ? 1 : 0;
  return classes;
}

}  // namespace cmc
