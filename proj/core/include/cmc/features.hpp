#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmc/geometry.hpp"

namespace cmc {

struct FeatureConfig {
  std::vector<double> sigmas{0.0, 2.0, 4.0};  // intensity smoothing scales (px)
  int hog_bins = 6;                           // unsigned orientation bins over [0, pi)
  int hog_cell = 4;                           // box aggregation cell (px)
};

nlohmann::json to_json(const FeatureConfig& cfg);
FeatureConfig feature_config_from_json(const nlohmann::json& j);

// Per-pixel channels on the source grid, stored channel-major.
// Order: int_s0.., gradmag, hog_b0..
class FeatureChannels {
 public:
  FeatureChannels() = default;
  FeatureChannels(int width, int height, std::vector<std::string> ids);

  int width() const { return width_; }
  int height() const { return height_; }
  int channel_count() const { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }
  int channel_index(const std::string& id) const;  // throws InvalidInput when absent

  float at(int channel, int x, int y) const {
    return data_[(static_cast<std::size_t>(channel) * height_ + y) * width_ + x];
  }
  float& at(int channel, int x, int y) {
    return data_[(static_cast<std::size_t>(channel) * height_ + y) * width_ + x];
  }
  // Border-clamped read.
  float clamped(int channel, int x, int y) const {
    x = x < 0 ? 0 : (x >= width_ ? width_ - 1 : x);
    y = y < 0 ? 0 : (y >= height_ ? height_ - 1 : y);
    return at(channel, x, y);
  }
  PlanarImage channel_image(int channel, const PlanarImage& geometry) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
};

FeatureChannels compute_channels(const PlanarImage& image, const FeatureConfig& cfg = {});

// Channel value at center + offset; out-of-bounds reads clamp to the border.
float patch_feature(const FeatureChannels& ch, int cx, int cy, int dx, int dy, int channel);
float patch_feature(const FeatureChannels& ch, int cx, int cy, int dx, int dy, const std::string& channel_id);

// Channels for every plane of a volume (or a single image). Probes clamp in z too.
struct FeatureStack {
  std::vector<FeatureChannels> planes;

  int plane_count() const { return static_cast<int>(planes.size()); }
  float probe(int channel, int x, int y, int z) const {
    z = z < 0 ? 0 : (z >= plane_count() ? plane_count() - 1 : z);
    return planes[static_cast<std::size_t>(z)].clamped(channel, x, y);
  }
};

FeatureStack compute_feature_stack(const PlanarImage& image, const FeatureConfig& cfg);
FeatureStack compute_feature_stack(const Volume& volume, const FeatureConfig& cfg, int threads = 1);

// Separable Gaussian blur with border clamping; sigma 0 returns the input.
std::vector<float> gaussian_blur(std::span<const float> src, int width, int height, double sigma);

}  // namespace cmc
