#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cmc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kAxisTolerance = 1e-6;

// What the samples of an image mean. Probability images live in [0,1],
// masks in {0,1}.
enum class Role { intensity, probability, mask };

const char* role_name(Role role);
Role role_from_name(const std::string& name);

// Placement of a 2D pixel grid in world space (mm).
//
// Pixel p = (x, y) has x running along row_dir and y along col_dir; the
// in-plane offset (pixels) is the accumulated motion correction and is added
// to p before scaling by the spacing.
struct PlanePose {
  Vec3 origin = Vec3::Zero();
  Vec3 row_dir = Vec3::UnitX();
  Vec3 col_dir = Vec3::UnitY();
  Vec2 inplane_offset = Vec2::Zero();

  Vec3 normal() const { return row_dir.cross(col_dir); }
  bool is_orthonormal(double tol = kAxisTolerance) const;
};

// A pose plus grid extents. Used as the target description for resampling.
struct PlaneGrid {
  PlanePose pose;
  int width = 0;
  int height = 0;
  Vec2 spacing = Vec2::Ones();
};

Vec3 world_from_pixel(const PlanePose& pose, const Vec2& spacing, const Vec2& p);
Vec2 pixel_from_world(const PlanePose& pose, const Vec2& spacing, const Vec3& w);
// Signed distance (mm) from the plane along its normal.
double plane_distance(const PlanePose& pose, const Vec3& w);

class PlanarImage {
 public:
  PlanarImage() = default;
  PlanarImage(int width, int height, Vec2 spacing, PlanePose pose,
              Role role = Role::intensity);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return samples_.size(); }
  const Vec2& spacing() const { return spacing_; }
  const PlanePose& pose() const { return pose_; }
  PlanePose& pose() { return pose_; }
  Role role() const { return role_; }
  void set_role(Role role) { role_ = role; }
  PlaneGrid grid() const { return {pose_, width_, height_, spacing_}; }

  float at(int x, int y) const { return samples_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return samples_[static_cast<std::size_t>(y) * width_ + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::span<const float> samples() const { return samples_; }
  std::span<float> samples() { return samples_; }

  Vec3 world(const Vec2& p) const { return world_from_pixel(pose_, spacing_, p); }
  Vec2 pixel(const Vec3& w) const { return pixel_from_world(pose_, spacing_, w); }
  Vec3 center_world() const;

  float max_value() const;

 private:
  int width_ = 0;
  int height_ = 0;
  Vec2 spacing_ = Vec2::Ones();
  PlanePose pose_;
  Role role_ = Role::intensity;
  std::vector<float> samples_;
};

// Regular 3D grid. Voxel index (i, j, k) sits at
// origin + i*spacing[0]*axes.col(0) + j*spacing[1]*axes.col(1) + k*spacing[2]*axes.col(2).
class Volume {
 public:
  Volume() = default;
  Volume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, Mat3 axes,
         Role role = Role::intensity);

  const std::array<int, 3>& dims() const { return dims_; }
  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  std::size_t size() const { return samples_.size(); }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  Vec3& origin() { return origin_; }
  const Mat3& axes() const { return axes_; }
  Role role() const { return role_; }
  void set_role(Role role) { role_ = role; }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i;
  }
  float at(int i, int j, int k) const { return samples_[index(i, j, k)]; }
  float& at(int i, int j, int k) { return samples_[index(i, j, k)]; }

  std::span<const float> samples() const { return samples_; }
  std::span<float> samples() { return samples_; }

  Vec3 world_from_index(const Vec3& idx) const;
  Vec3 index_from_world(const Vec3& w) const;

  // Plane k as a planar image (pose and samples copied).
  PlanarImage plane(int k) const;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 spacing_ = Vec3::Ones();
  Vec3 origin_ = Vec3::Zero();
  Mat3 axes_ = Mat3::Identity();
  Role role_ = Role::intensity;
  std::vector<float> samples_;
};

// Parallel slices sharing one in-plane grid, ordered along the common normal.
struct SliceStack {
  std::vector<PlanarImage> slices;
  double slice_gap = 0.0;

  std::size_t size() const { return slices.size(); }
  bool empty() const { return slices.empty(); }
  const PlanarImage& operator[](std::size_t i) const { return slices[i]; }
  PlanarImage& operator[](std::size_t i) { return slices[i]; }

  // Throws InvalidInput when the slices disagree on grid, are not parallel,
  // or are not monotonically ordered along the normal.
  void validate() const;

  Vec3 normal() const;
  // Position of every slice plane along normal() relative to slice 0.
  std::vector<double> positions() const;
};

}  // namespace cmc
