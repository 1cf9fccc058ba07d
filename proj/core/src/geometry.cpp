#include "cmc/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "cmc/error.hpp"

namespace cmc {

const char* role_name(Role role) {
  switch (role) {
    case Role::intensity: return "intensity";
    case Role::probability: return "probability";
    case Role::mask: return "mask";
  }
  return "intensity";
}

Role role_from_name(const std::string& name) {
  if (name == "intensity") return Role::intensity;
  if (name == "probability") return Role::probability;
  if (name == "mask") return Role::mask;
  throw FormatError("unknown role tag '" + name + "'");
}

bool PlanePose::is_orthonormal(double tol) const {
  return std::abs(row_dir.norm() - 1.0) <= tol && std::abs(col_dir.norm() - 1.0) <= tol &&
         std::abs(row_dir.dot(col_dir)) <= tol;
}

Vec3 world_from_pixel(const PlanePose& pose, const Vec2& spacing, const Vec2& p) {
  const Vec2 q = p + pose.inplane_offset;
  return pose.origin + q.x() * spacing.x() * pose.row_dir + q.y() * spacing.y() * pose.col_dir;
}

Vec2 pixel_from_world(const PlanePose& pose, const Vec2& spacing, const Vec3& w) {
  const Vec3 d = w - pose.origin;
  return Vec2(d.dot(pose.row_dir) / spacing.x(), d.dot(pose.col_dir) / spacing.y()) -
         pose.inplane_offset;
}

double plane_distance(const PlanePose& pose, const Vec3& w) {
  return (w - pose.origin).dot(pose.normal());
}

PlanarImage::PlanarImage(int width, int height, Vec2 spacing, PlanePose pose, Role role)
    : width_(width), height_(height), spacing_(spacing), pose_(pose), role_(role) {
  if (width < 1 || height < 1) throw InvalidInput("planar image needs width, height >= 1");
  if (!(spacing.x() > 0.0) || !(spacing.y() > 0.0))
    throw InvalidInput("planar image spacing must be positive");
  if (!pose.is_orthonormal()) throw InvalidInput("plane pose axes are not orthonormal");
  samples_.assign(static_cast<std::size_t>(width) * height, 0.0f);
}

Vec3 PlanarImage::center_world() const {
  return world(Vec2(0.5 * (width_ - 1), 0.5 * (height_ - 1)));
}

float PlanarImage::max_value() const {
  if (samples_.empty()) return 0.0f;
  return *std::max_element(samples_.begin(), samples_.end());
}

Volume::Volume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, Mat3 axes, Role role)
    : dims_(dims), spacing_(spacing), origin_(origin), axes_(axes), role_(role) {
  for (int d : dims)
    if (d < 1) throw InvalidInput("volume dims must be >= 1");
  if ((spacing.array() <= 0.0).any()) throw InvalidInput("volume spacing must be positive");
  if (!(axes.transpose() * axes).isIdentity(kAxisTolerance))
    throw InvalidInput("volume axes are not orthonormal");
  samples_.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0f);
}

Vec3 Volume::world_from_index(const Vec3& idx) const {
  return origin_ + axes_ * idx.cwiseProduct(spacing_);
}

Vec3 Volume::index_from_world(const Vec3& w) const {
  return (axes_.transpose() * (w - origin_)).cwiseQuotient(spacing_);
}

PlanarImage Volume::plane(int k) const {
  PlanePose pose;
  pose.origin = world_from_index(Vec3(0, 0, k));
  pose.row_dir = axes_.col(0);
  pose.col_dir = axes_.col(1);
  PlanarImage img(nx(), ny(), Vec2(spacing_[0], spacing_[1]), pose, role_);
  const std::size_t n = static_cast<std::size_t>(nx()) * ny();
  std::copy_n(samples_.begin() + static_cast<std::ptrdiff_t>(n * k), n, img.samples().begin());
  return img;
}

void SliceStack::validate() const {
  if (slices.empty()) throw InvalidInput("slice stack is empty");
  const PlanarImage& first = slices.front();
  const Vec3 n = first.pose().normal();
  double prev = 0.0;
  int direction = 0;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const PlanarImage& s = slices[i];
    if (s.width() != first.width() || s.height() != first.height() ||
        (s.spacing() - first.spacing()).cwiseAbs().maxCoeff() > 1e-12)
      throw InvalidInput("slices do not share width/height/spacing");
    if ((s.pose().normal() - n).norm() > kAxisTolerance)
      throw InvalidInput("slice planes are not parallel");
    const double pos = (s.pose().origin - first.pose().origin).dot(n);
    if (i > 0) {
      const double step = pos - prev;
      const int dir = step > 0 ? 1 : (step < 0 ? -1 : 0);
      if (dir == 0 || (direction != 0 && dir != direction))
        throw InvalidInput("slices are not monotonically ordered along the normal");
      direction = dir;
    }
    prev = pos;
  }
}

Vec3 SliceStack::normal() const {
  if (slices.empty()) throw InvalidInput("slice stack is empty");
  return slices.front().pose().normal();
}

std::vector<double> SliceStack::positions() const {
  std::vector<double> out;
  out.reserve(slices.size());
  const Vec3 n = normal();
  for (const PlanarImage& s : slices) out.push_back((s.pose().origin - slices.front().pose().origin).dot(n));
  return out;
}

}  // namespace cmc
