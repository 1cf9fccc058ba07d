#include "cmc/resample.hpp"

#include <algorithm>
#include <cmath>

#include "cmc/error.hpp"

namespace cmc {
namespace {

constexpr double kEdgeTol = 1e-6;

// Clamp a continuous coordinate that is within kEdgeTol of the valid range.
bool inside_axis(double& c, int n) {
  if (c < -kEdgeTol || c > (n - 1) + kEdgeTol) return false;
  c = std::clamp(c, 0.0, static_cast<double>(n - 1));
  return true;
}

void check_grid(const PlaneGrid& g) {
  if (g.width < 1 || g.height < 1) throw InvalidInput("target dims must be >= 1");
  if (!(g.spacing.x() > 0.0) || !(g.spacing.y() > 0.0))
    throw InvalidInput("target spacing must be positive");
  if (!g.pose.is_orthonormal()) throw InvalidInput("degenerate target pose (axes not orthonormal)");
}

}  // namespace

std::size_t Resampled::support_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::optional<double> sample_volume(const Volume& vol, const Vec3& world, Interp interp) {
  Vec3 c = vol.index_from_world(world);
  for (int a = 0; a < 3; ++a)
    if (!inside_axis(c[a], vol.dims()[a])) return std::nullopt;

  if (interp == Interp::nearest) {
    return vol.at(static_cast<int>(std::lround(c[0])), static_cast<int>(std::lround(c[1])),
                  static_cast<int>(std::lround(c[2])));
  }
  int i0[3];
  int i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::min(static_cast<int>(std::floor(c[a])), vol.dims()[a] - 1);
    i1[a] = std::min(i0[a] + 1, vol.dims()[a] - 1);
    f[a] = c[a] - i0[a];
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? f[2] : 1.0 - f[2];
    if (wz == 0.0) continue;
    const int k = dz ? i1[2] : i0[2];
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? f[1] : 1.0 - f[1];
      if (wy == 0.0) continue;
      const int j = dy ? i1[1] : i0[1];
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? f[0] : 1.0 - f[0];
        if (wx == 0.0) continue;
        acc += wx * wy * wz * vol.at(dx ? i1[0] : i0[0], j, k);
      }
    }
  }
  return acc;
}

std::optional<double> sample_planar(const PlanarImage& img, const Vec2& p, Interp interp) {
  double x = p.x();
  double y = p.y();
  if (!inside_axis(x, img.width()) || !inside_axis(y, img.height())) return std::nullopt;
  if (interp == Interp::nearest)
    return img.at(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
  const int x0 = std::min(static_cast<int>(std::floor(x)), img.width() - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  double acc = (1.0 - fx) * (1.0 - fy) * img.at(x0, y0);
  if (fx != 0.0) acc += fx * (1.0 - fy) * img.at(x1, y0);
  if (fy != 0.0) acc += (1.0 - fx) * fy * img.at(x0, y1);
  if (fx != 0.0 && fy != 0.0) acc += fx * fy * img.at(x1, y1);
  return acc;
}

Resampled resample_plane(const Volume& source, const PlaneGrid& target, Interp interp) {
  check_grid(target);
  Resampled out{PlanarImage(target.width, target.height, target.spacing, target.pose, source.role()),
                std::vector<std::uint8_t>(static_cast<std::size_t>(target.width) * target.height, 0)};
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      const Vec3 w = world_from_pixel(target.pose, target.spacing, Vec2(x, y));
      if (auto v = sample_volume(source, w, interp)) {
        out.image.at(x, y) = static_cast<float>(*v);
        out.mask[static_cast<std::size_t>(y) * target.width + x] = 1;
      }
    }
  }
  return out;
}

Resampled resample_plane(const PlanarImage& source, const PlaneGrid& target, Interp interp,
                         std::optional<double> half_thickness) {
  check_grid(target);
  if (!source.pose().is_orthonormal()) throw InvalidInput("degenerate source pose");
  const double band = half_thickness.value_or(0.5 * 0.5 * (target.spacing.x() + target.spacing.y()));
  Resampled out{PlanarImage(target.width, target.height, target.spacing, target.pose, source.role()),
                std::vector<std::uint8_t>(static_cast<std::size_t>(target.width) * target.height, 0)};
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      const Vec3 w = world_from_pixel(target.pose, target.spacing, Vec2(x, y));
      if (std::abs(plane_distance(source.pose(), w)) > band + 1e-9) continue;
      if (auto v = sample_planar(source, source.pixel(w), interp)) {
        out.image.at(x, y) = static_cast<float>(*v);
        out.mask[static_cast<std::size_t>(y) * target.width + x] = 1;
      }
    }
  }
  return out;
}

Volume upsample_z(const SliceStack& stack, double target_spacing_z) {
  if (stack.size() < 2) throw InvalidInput("upsample_z needs at least two slices");
  stack.validate();
  if (!(target_spacing_z > 0.0)) throw InvalidInput("target z spacing must be positive");

  const std::vector<double> pos = stack.positions();
  const double extent = pos.back();
  const double sign = extent > 0 ? 1.0 : -1.0;
  if (target_spacing_z > std::abs(pos[1] - pos[0]) + 1e-9)
    throw InvalidInput("target z spacing exceeds the slice gap");
  const int steps = static_cast<int>(std::ceil(std::abs(extent) / target_spacing_z - 1e-9));
  const double dz = std::abs(extent) / steps;

  const PlanarImage& s0 = stack[0];
  Mat3 axes;
  axes.col(0) = s0.pose().row_dir;
  axes.col(1) = s0.pose().col_dir;
  axes.col(2) = sign * stack.normal();
  Volume vol({s0.width(), s0.height(), steps + 1}, Vec3(s0.spacing().x(), s0.spacing().y(), dz),
             s0.pose().origin, axes, s0.role());

  // Slice k sampled on the common grid at its current offset.
  auto shifted_value = [&](std::size_t k, int x, int y) -> double {
    const PlanarImage& s = stack[k];
    const Vec2& off = s.pose().inplane_offset;
    if (off.x() == 0.0 && off.y() == 0.0) return s.at(x, y);
    return sample_planar(s, Vec2(x, y) - off, Interp::linear).value_or(0.0);
  };

  for (int k = 0; k <= steps; ++k) {
    const double z = k * dz;
    std::size_t lo = 0;
    while (lo + 2 < stack.size() && std::abs(pos[lo + 1]) <= z + 1e-9) ++lo;
    const double z0 = std::abs(pos[lo]);
    const double z1 = std::abs(pos[lo + 1]);
    double w1 = std::clamp((z - z0) / (z1 - z0), 0.0, 1.0);
    if (std::abs(z - z1) <= 1e-9) w1 = 1.0;
    if (std::abs(z - z0) <= 1e-9) w1 = 0.0;
    for (int y = 0; y < vol.ny(); ++y) {
      for (int x = 0; x < vol.nx(); ++x) {
        double v;
        if (w1 == 0.0)
          v = shifted_value(lo, x, y);
        else if (w1 == 1.0)
          v = shifted_value(lo + 1, x, y);
        else
          v = (1.0 - w1) * shifted_value(lo, x, y) + w1 * shifted_value(lo + 1, x, y);
        vol.at(x, y, k) = static_cast<float>(v);
      }
    }
  }
  return vol;
}

void apply_translation(SliceStack& stack, std::size_t slice_idx, const Vec2& t) {
  if (slice_idx >= stack.size()) throw InvalidInput("slice index out of range");
  stack[slice_idx].pose().inplane_offset += t;
}

SliceStack export_resampled(const SliceStack& stack, Interp interp) {
  SliceStack out;
  out.slice_gap = stack.slice_gap;
  out.slices.reserve(stack.size());
  for (const PlanarImage& s : stack.slices) {
    const Vec2 off = s.pose().inplane_offset;
    PlanePose pose = s.pose();
    pose.inplane_offset = Vec2::Zero();
    if (off.x() == 0.0 && off.y() == 0.0) {
      out.slices.push_back(s);
      continue;
    }
    PlanarImage img(s.width(), s.height(), s.spacing(), pose, s.role());
    for (int y = 0; y < s.height(); ++y)
      for (int x = 0; x < s.width(); ++x)
        img.at(x, y) = static_cast<float>(sample_planar(s, Vec2(x, y) - off, interp).value_or(0.0));
    out.slices.push_back(std::move(img));
  }
  return out;
}

}  // namespace cmc
