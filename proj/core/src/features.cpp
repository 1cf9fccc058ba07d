#include "cmc/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cmc/error.hpp"
#include "cmc/parallel.hpp"

namespace cmc {
namespace {

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Mean over a cell x cell box (offsets -cell/2 .. cell/2-1), border-clamped.
std::vector<float> box_mean(const std::vector<float>& src, int w, int h, int cell) {
  const int lo = -cell / 2;
  const int hi = lo + cell - 1;
  std::vector<float> tmp(src.size());
  std::vector<float> out(src.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = lo; d <= hi; ++d) acc += src[static_cast<std::size_t>(y) * w + clampi(x + d, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  const double norm = 1.0 / (static_cast<double>(cell) * cell);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = lo; d <= hi; ++d) acc += tmp[static_cast<std::size_t>(clampi(y + d, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc * norm);
    }
  return out;
}

}  // namespace

nlohmann::json to_json(const FeatureConfig& cfg) {
  return {{"sigmas", cfg.sigmas}, {"hog_bins", cfg.hog_bins}, {"hog_cell", cfg.hog_cell}};
}

FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig cfg;
  cfg.sigmas = j.value("sigmas", cfg.sigmas);
  cfg.hog_bins = j.value("hog_bins", cfg.hog_bins);
  cfg.hog_cell = j.value("hog_cell", cfg.hog_cell);
  return cfg;
}

FeatureChannels::FeatureChannels(int width, int height, std::vector<std::string> ids)
    : width_(width), height_(height), ids_(std::move(ids)),
      data_(static_cast<std::size_t>(width) * height * ids_.size(), 0.0f) {}

int FeatureChannels::channel_index(const std::string& id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw InvalidInput("unknown feature channel '" + id + "'");
  return static_cast<int>(it - ids_.begin());
}

PlanarImage FeatureChannels::channel_image(int channel, const PlanarImage& geometry) const {
  PlanarImage img(width_, height_, geometry.spacing(), geometry.pose(), Role::intensity);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) img.at(x, y) = at(channel, x, y);
  return img;
}

std::vector<float> gaussian_blur(std::span<const float> src, int w, int h, double sigma) {
  std::vector<float> out(src.begin(), src.end());
  if (sigma <= 0.0) return out;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= sum;
  std::vector<float> tmp(out.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * src[static_cast<std::size_t>(y) * w + clampi(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(clampi(y + i, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  return out;
}

FeatureChannels compute_channels(const PlanarImage& image, const FeatureConfig& cfg) {
  const int w = image.width();
  const int h = image.height();
  if (w < 8 || h < 8) throw InvalidInput("feature extraction needs at least 8x8 pixels");
  const double max_sigma = cfg.sigmas.empty() ? 0.0 : *std::max_element(cfg.sigmas.begin(), cfg.sigmas.end());
  if (std::min(w, h) <= static_cast<int>(std::ceil(3.0 * max_sigma)))
    throw InvalidInput("image smaller than the smoothing support");
  if (cfg.hog_bins < 1 || cfg.hog_cell < 1) throw InvalidInput("invalid HoG configuration");

  std::vector<std::string> ids;
  for (std::size_t s = 0; s < cfg.sigmas.size(); ++s) ids.push_back("int_s" + std::to_string(s));
  ids.emplace_back("gradmag");
  for (int b = 0; b < cfg.hog_bins; ++b) ids.push_back("hog_b" + std::to_string(b));
  FeatureChannels ch(w, h, ids);

  int c = 0;
  for (double sigma : cfg.sigmas) {
    const std::vector<float> blurred = gaussian_blur(image.samples(), w, h, sigma);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) ch.at(c, x, y) = blurred[static_cast<std::size_t>(y) * w + x];
    ++c;
  }

  const int grad_channel = c;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::vector<float>> bins(static_cast<std::size_t>(cfg.hog_bins), std::vector<float>(n, 0.0f));
  const double bin_width = std::numbers::pi / cfg.hog_bins;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (image.at(clampi(x + 1, 0, w - 1), y) - image.at(clampi(x - 1, 0, w - 1), y));
      const double gy = 0.5 * (image.at(x, clampi(y + 1, 0, h - 1)) - image.at(x, clampi(y - 1, 0, h - 1)));
      const double mag = std::hypot(gx, gy);
      ch.at(grad_channel, x, y) = static_cast<float>(mag);
      if (mag == 0.0) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += std::numbers::pi;
      if (theta >= std::numbers::pi) theta -= std::numbers::pi;
      // Bin b is centred on b * bin_width; split linearly between neighbours.
      const double pos = theta / bin_width;
      const int b0 = static_cast<int>(std::floor(pos)) % cfg.hog_bins;
      const int b1 = (b0 + 1) % cfg.hog_bins;
      const double frac = pos - std::floor(pos);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      bins[static_cast<std::size_t>(b0)][i] += static_cast<float>((1.0 - frac) * mag);
      bins[static_cast<std::size_t>(b1)][i] += static_cast<float>(frac * mag);
    }
  }
  for (int b = 0; b < cfg.hog_bins; ++b) {
    const std::vector<float> cell = box_mean(bins[static_cast<std::size_t>(b)], w, h, cfg.hog_cell);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) ch.at(grad_channel + 1 + b, x, y) = cell[static_cast<std::size_t>(y) * w + x];
  }
  return ch;
}

float patch_feature(const FeatureChannels& ch, int cx, int cy, int dx, int dy, int channel) {
  return ch.clamped(channel, cx + dx, cy + dy);
}

float patch_feature(const FeatureChannels& ch, int cx, int cy, int dx, int dy, const std::string& channel_id) {
  return ch.clamped(ch.channel_index(channel_id), cx + dx, cy + dy);
}

FeatureStack compute_feature_stack(const PlanarImage& image, const FeatureConfig& cfg) {
  FeatureStack fs;
  fs.planes.push_back(compute_channels(image, cfg));
  return fs;
}

FeatureStack compute_feature_stack(const Volume& volume, const FeatureConfig& cfg, int threads) {
  FeatureStack fs;
  fs.planes.resize(static_cast<std::size_t>(volume.nz()));
  parallel_for(fs.planes.size(), threads, [&](std::size_t k) {
    fs.planes[k] = compute_channels(volume.plane(static_cast<int>(k)), cfg);
  });
  return fs;
}

}  // namespace cmc
