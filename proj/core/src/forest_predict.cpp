#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "cmc/error.hpp"
#include "cmc/forest.hpp"

namespace cmc {

Mat2 Augmentation::matrix() const {
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  Mat2 r;
  r << c, -s, s, c;
  return scale * r;
}

Augmentation draw_augmentation(std::mt19937_64& rng, double scale_sd, double angle_sd_deg) {
  std::normal_distribution<double> sd(1.0, scale_sd);
  std::normal_distribution<double> ad(0.0, angle_sd_deg);
  Augmentation a;
  do a.scale = sd(rng);
  while (a.scale <= 0.5);
  a.angle_rad = ad(rng) * std::numbers::pi / 180.0;
  return a;
}

std::vector<std::uint8_t> extract_label(const PlanarImage& mask, int cx, int cy, int label_size,
                                        const ProbeTransform& xf) {
  if (label_size < 1) throw InvalidInput("label size must be >= 1");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(label_size) * label_size, 0);
  const int h = label_size / 2;
  for (int v = 0; v < label_size; ++v) {
    for (int u = 0; u < label_size; ++u) {
      const double ox = u - h;
      const double oy = v - h;
      const auto x = static_cast<int>(std::lround(cx + xf[0] * ox + xf[1] * oy));
      const auto y = static_cast<int>(std::lround(cy + xf[2] * ox + xf[3] * oy));
      if (mask.contains(x, y) && mask.at(x, y) >= 0.5f)
        out[static_cast<std::size_t>(v) * label_size + u] = 1;
    }
  }
  return out;
}

TrainSample augment(const TrainSample& sample, const Augmentation& aug, const PlanarImage& mask_plane,
                    int label_size) {
  const Mat2 t = aug.matrix();
  const Mat2 tinv = t.inverse();
  Mat2 xf;
  xf << sample.probe_xf[0], sample.probe_xf[1], sample.probe_xf[2], sample.probe_xf[3];
  const Mat2 composed = xf * tinv;
  TrainSample out = sample;
  out.probe_xf = {static_cast<float>(composed(0, 0)), static_cast<float>(composed(0, 1)),
                  static_cast<float>(composed(1, 0)), static_cast<float>(composed(1, 1))};
  out.label = extract_label(mask_plane, sample.cx, sample.cy, label_size, out.probe_xf);
  for (std::size_t l = 0; l + 1 < out.disp.size(); l += 2) {
    const Vec2 d = t * Vec2(sample.disp[l], sample.disp[l + 1]);
    out.disp[l] = static_cast<float>(d.x());
    out.disp[l + 1] = static_cast<float>(d.y());
  }
  return out;
}

TrainSample augment(const TrainSample& sample, const PlanarImage& mask_plane, int label_size,
                    std::mt19937_64& rng) {
  return augment(sample, draw_augmentation(rng), mask_plane, label_size);
}

std::vector<int> probe_centers(int extent, int label_size, int stride) {
  if (stride < 1) throw InvalidInput("stride must be >= 1");
  std::vector<int> out;
  const int h = label_size / 2;
  for (int c = h; c + (label_size - h) <= extent; c += stride) out.push_back(c);
  return out;
}

namespace {

void check_forest(const HybridForest& forest) {
  if (forest.trees.empty()) throw InvalidInput("model has no trees");
}

void check_extent(const PlanarImage& geometry, const ModelMeta& meta) {
  if (geometry.width() < meta.patch_size || geometry.height() < meta.patch_size)
    throw InvalidInput("image smaller than the model patch (" + std::to_string(meta.patch_size) + " px)");
}

}  // namespace

PlanarImage predict_psm(const FeatureStack& fs, int plane, const HybridForest& forest, const PlanarImage& geometry,
                        int stride) {
  check_forest(forest);
  check_extent(geometry, forest.meta);
  const int ls = forest.meta.label_size;
  const int h = ls / 2;
  const int w = geometry.width();
  const int ht = geometry.height();
  std::vector<double> acc(static_cast<std::size_t>(w) * ht, 0.0);
  std::vector<std::uint32_t> cnt(acc.size(), 0);
  const auto xs = probe_centers(w, ls, stride);
  const auto ys = probe_centers(ht, ls, stride);
  const double inv_trees = 1.0 / static_cast<double>(forest.trees.size());
  std::vector<double> patch(static_cast<std::size_t>(ls) * ls);

  for (int cy : ys) {
    for (int cx : xs) {
      std::fill(patch.begin(), patch.end(), 0.0);
      for (const DecisionTree& tree : forest.trees) {
        const LeafPayload& leaf = tree.leaves[static_cast<std::size_t>(route(tree, fs, plane, cx, cy))];
        for (std::size_t i = 0; i < patch.size(); ++i) patch[i] += leaf.mean_label[i];
      }
      for (int v = 0; v < ls; ++v) {
        const std::size_t row = static_cast<std::size_t>(cy - h + v) * w;
        for (int u = 0; u < ls; ++u) {
          const std::size_t p = row + static_cast<std::size_t>(cx - h + u);
          acc[p] += patch[static_cast<std::size_t>(v) * ls + u] * inv_trees;
          cnt[p] += 1;
        }
      }
    }
  }
  PlanarImage out(w, ht, geometry.spacing(), geometry.pose(), Role::probability);
  auto s = out.samples();
  for (std::size_t i = 0; i < acc.size(); ++i)
    s[i] = cnt[i] ? static_cast<float>(std::clamp(acc[i] / cnt[i], 0.0, 1.0)) : 0.0f;
  return out;
}

PlanarImage predict_psm(const PlanarImage& image, const HybridForest& forest, int stride) {
  check_forest(forest);
  check_extent(image, forest.meta);
  const FeatureStack fs = compute_feature_stack(image, forest.meta.features);
  return predict_psm(fs, 0, forest, image, stride);
}

void splat_gaussian(PlanarImage& map, const Vec2& mean, const Mat2& cov, double weight) {
  const Mat2 s = cov + Mat2::Identity() / 12.0;
  const double det = s.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) return;
  const Mat2 si = s.inverse();
  const double rx = 3.0 * std::sqrt(s(0, 0));
  const double ry = 3.0 * std::sqrt(s(1, 1));
  const int x0 = std::max(0, static_cast<int>(std::ceil(mean.x() - rx)));
  const int x1 = std::min(map.width() - 1, static_cast<int>(std::floor(mean.x() + rx)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(mean.y() - ry)));
  const int y1 = std::min(map.height() - 1, static_cast<int>(std::floor(mean.y() + ry)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 q(x - mean.x(), y - mean.y());
      const double m = q.dot(si * q);
      if (m > 9.0) continue;
      map.at(x, y) += static_cast<float>(weight * std::exp(-0.5 * m));
    }
  }
}

Eigen::Vector2i hough_argmax(const PlanarImage& map) {
  Eigen::Vector2i best(0, 0);
  float bv = -std::numeric_limits<float>::infinity();
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      if (map.at(x, y) > bv) {
        bv = map.at(x, y);
        best = {x, y};
      }
  return best;
}

LandmarkPrediction predict_landmarks(const FeatureStack& fs, int plane, const HybridForest& forest,
                                     const PlanarImage& geometry, int stride) {
  check_forest(forest);
  check_extent(geometry, forest.meta);
  const int nl = forest.meta.n_landmarks;
  if (nl < 1) throw InvalidInput("model has no landmark regressors");
  LandmarkPrediction out;
  for (int l = 0; l < nl; ++l)
    out.hough.emplace_back(geometry.width(), geometry.height(), geometry.spacing(), geometry.pose(),
                           Role::intensity);
  const auto xs = probe_centers(geometry.width(), forest.meta.label_size, stride);
  const auto ys = probe_centers(geometry.height(), forest.meta.label_size, stride);
  for (int cy : ys) {
    for (int cx : xs) {
      for (const DecisionTree& tree : forest.trees) {
        const LeafPayload& leaf = tree.leaves[static_cast<std::size_t>(route(tree, fs, plane, cx, cy))];
        if (!leaf.has_regression()) continue;
        for (int l = 0; l < nl; ++l) {
          const std::size_t m = static_cast<std::size_t>(2 * l);
          const std::size_t c = static_cast<std::size_t>(4 * l);
          Mat2 cov;
          cov << leaf.reg_cov[c], leaf.reg_cov[c + 1], leaf.reg_cov[c + 2], leaf.reg_cov[c + 3];
          const double det = cov.determinant();
          if (!(det > 0.0)) continue;
          splat_gaussian(out.hough[static_cast<std::size_t>(l)],
                         Vec2(cx + leaf.reg_mean[m], cy + leaf.reg_mean[m + 1]), cov, 1.0 / std::sqrt(det));
        }
      }
    }
  }
  for (const PlanarImage& map : out.hough) {
    const Eigen::Vector2i p = hough_argmax(map);
    out.pixels.emplace_back(p.x(), p.y());
    double total = 0.0;
    for (float v : map.samples()) total += v;
    out.confidence.push_back(total > 0.0 ? map.at(p.x(), p.y()) / total : 0.0);
  }
  return out;
}

LandmarkPrediction predict_landmarks(const PlanarImage& image, const HybridForest& forest, int stride) {
  check_forest(forest);
  check_extent(image, forest.meta);
  const FeatureStack fs = compute_feature_stack(image, forest.meta.features);
  return predict_landmarks(fs, 0, forest, image, stride);
}

}  // namespace cmc
