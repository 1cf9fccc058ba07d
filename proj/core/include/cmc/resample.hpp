#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cmc/geometry.hpp"

namespace cmc {

enum class Interp { nearest, linear };

// Resampled image plus the pixels whose world position fell inside the
// source footprint. Pixels outside support are 0 with mask 0.
struct Resampled {
  PlanarImage image;
  std::vector<std::uint8_t> mask;

  std::size_t support_count() const;
};

// Sample a volume at a world point. Returns nullopt outside the voxel grid
// (continuous index outside [0, n-1] on any axis, with a 1e-6 tolerance).
std::optional<double> sample_volume(const Volume& vol, const Vec3& world, Interp interp);

// Sample a planar image at continuous pixel coordinates. Returns nullopt
// outside [0, w-1] x [0, h-1].
std::optional<double> sample_planar(const PlanarImage& img, const Vec2& p, Interp interp);

Resampled resample_plane(const Volume& source, const PlaneGrid& target, Interp interp);

// Planar sources are treated as slabs of the given half-thickness (mm).
// When half_thickness is not given it defaults to 0.5 * mean target spacing.
Resampled resample_plane(const PlanarImage& source, const PlaneGrid& target, Interp interp,
                         std::optional<double> half_thickness = std::nullopt);

// Volume whose z-planes linearly interpolate the stack slices at their
// current in-plane offsets. The grid is the offset-free grid of slice 0,
// axes (row_dir, col_dir, stack normal). The z spacing is the largest value
// <= target_spacing_z that divides the stack extent, so the first and last
// planes coincide with the first and last slices.
Volume upsample_z(const SliceStack& stack, double target_spacing_z);

// Geometry-only correction: adds t (pixels) to the in-plane offset of one slice.
void apply_translation(SliceStack& stack, std::size_t slice_idx, const Vec2& t);

// Resample every slice onto its offset-free grid (bilinear). Slices whose
// offset is exactly zero are copied untouched.
SliceStack export_resampled(const SliceStack& stack, Interp interp = Interp::linear);

}  // namespace cmc
