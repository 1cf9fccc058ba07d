#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. They are written from the definitions and share no code with the
// library beyond data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cmc/evalx.hpp"
#include "cmc/features.hpp"
#include "cmc/forest.hpp"

namespace cmc::oracle {

inline double entropy_bits(double n0, double n1) {
  const double n = n0 + n1;
  if (n <= 0) return 0.0;
  double h = 0.0;
  for (double c : {n0, n1})
    if (c > 0) h -= (c / n) * std::log2(c / n);
  return h;
}

inline double gain_bits(double l0, double l1, double r0, double r1) {
  const double nl = l0 + l1, nr = r0 + r1, n = nl + nr;
  if (nl == 0 || nr == 0) return 0.0;
  return entropy_bits(l0 + r0, l1 + r1) - nl / n * entropy_bits(l0, l1) - nr / n * entropy_bits(r0, r1);
}

// 1/2 log det(ML covariance + eps I).
inline double half_log_det(const std::vector<Eigen::VectorXd>& xs, double eps) {
  const Eigen::Index d = xs.front().size();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  for (const auto& x : xs) mu += x;
  mu /= static_cast<double>(xs.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : xs) c += (x - mu) * (x - mu).transpose();
  c /= static_cast<double>(xs.size());
  c += eps * Eigen::MatrixXd::Identity(d, d);
  return 0.5 * std::log(c.determinant());
}

inline double regression_gain(const std::vector<Eigen::VectorXd>& left, const std::vector<Eigen::VectorXd>& right,
                              double eps) {
  std::vector<Eigen::VectorXd> all = left;
  all.insert(all.end(), right.begin(), right.end());
  const double n = static_cast<double>(all.size());
  return half_log_det(all, eps) - left.size() / n * half_log_det(left, eps) -
         right.size() / n * half_log_det(right, eps);
}

// Split response read straight from the channel arrays (identity probe transform).
inline float response(const SplitParam& s, const FeatureStack& fs, int plane, int cx, int cy) {
  auto read = [&](int dx, int dy, int dz) {
    const int z = std::clamp(plane + dz, 0, fs.plane_count() - 1);
    const FeatureChannels& ch = fs.planes[static_cast<std::size_t>(z)];
    const int x = std::clamp(cx + dx, 0, ch.width() - 1);
    const int y = std::clamp(cy + dy, 0, ch.height() - 1);
    return ch.at(s.channel, x, y);
  };
  const float a = read(s.dx1, s.dy1, s.dz1);
  return s.kind == SplitParam::Kind::single ? a : a - read(s.dx2, s.dy2, s.dz2);
}

inline const LeafPayload& leaf_of(const DecisionTree& t, const FeatureStack& fs, int plane, int cx, int cy) {
  std::size_t node = 0;
  while (t.nodes[node].leaf < 0) {
    const TreeNode& n = t.nodes[node];
    node = static_cast<std::size_t>(response(n.split, fs, plane, cx, cy) >= n.split.threshold ? n.right : n.left);
  }
  return t.leaves[static_cast<std::size_t>(t.nodes[node].leaf)];
}

// Every stride-th centre whose label footprint lies inside [0, extent).
inline std::vector<int> centres(int extent, int label, int stride) {
  std::vector<int> c;
  for (int x = label / 2; x - label / 2 + label <= extent; x += stride) c.push_back(x);
  return c;
}

// Re-route every probe and average the leaf label patches per pixel.
inline std::vector<double> psm(const FeatureStack& fs, int plane, const HybridForest& f, int w, int h, int stride) {
  const int L = f.meta.label_size;
  std::vector<double> sum(static_cast<std::size_t>(w) * h, 0.0), cnt(sum.size(), 0.0);
  for (int cy : centres(h, L, stride))
    for (int cx : centres(w, L, stride))
      for (int v = 0; v < L; ++v)
        for (int u = 0; u < L; ++u) {
          double m = 0.0;
          for (const auto& t : f.trees) m += leaf_of(t, fs, plane, cx, cy).mean_label[static_cast<std::size_t>(v * L + u)];
          const std::size_t p = static_cast<std::size_t>(cy - L / 2 + v) * w + (cx - L / 2 + u);
          sum[p] += m / static_cast<double>(f.trees.size());
          cnt[p] += 1.0;
        }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = cnt[i] > 0 ? sum[i] / cnt[i] : 0.0;
  return sum;
}

// Gaussian vote accumulation over the full grid (no truncation box); the
// library truncates at Mahalanobis^2 > 9, which is mirrored here.
inline std::vector<double> hough(const FeatureStack& fs, int plane, const HybridForest& f, int w, int h, int stride,
                                 int landmark) {
  std::vector<double> map(static_cast<std::size_t>(w) * h, 0.0);
  const int L = f.meta.label_size;
  for (int cy : centres(h, L, stride))
    for (int cx : centres(w, L, stride))
      for (const auto& t : f.trees) {
        const LeafPayload& lf = leaf_of(t, fs, plane, cx, cy);
        if (lf.reg_mean.empty()) continue;
        const std::size_t m = 2 * static_cast<std::size_t>(landmark), c = 4 * static_cast<std::size_t>(landmark);
        const double a = lf.reg_cov[c], b = lf.reg_cov[c + 1], d = lf.reg_cov[c + 3];
        const double wt = 1.0 / std::sqrt(a * d - b * b);
        const double sa = a + 1.0 / 12, sb = b, sd = d + 1.0 / 12;
        const double det = sa * sd - sb * sb;
        const double mx = cx + lf.reg_mean[m], my = cy + lf.reg_mean[m + 1];
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double qx = x - mx, qy = y - my;
            const double maha = (sd * qx * qx - 2 * sb * qx * qy + sa * qy * qy) / det;
            if (maha > 9.0 || std::abs(qx) > 3 * std::sqrt(sa) || std::abs(qy) > 3 * std::sqrt(sd)) continue;
            map[static_cast<std::size_t>(y) * w + x] += wt * std::exp(-0.5 * maha);
          }
      }
  return map;
}

// Symmetric mean of nearest distances over all pairs.
inline double mad(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  auto directed = [](const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
    double s = 0.0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : q) best = std::min(best, (x - y).norm());
      s += best;
    }
    return s / static_cast<double>(p.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

inline double hausdorff(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  auto directed = [](const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
    double worst = 0.0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : q) best = std::min(best, (x - y).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

}  // namespace cmc::oracle
