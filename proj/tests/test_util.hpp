#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "cmc/geometry.hpp"

namespace cmc::test {

inline PlanarImage make_image(int w, int h, const std::function<double(int, int)>& f, Vec2 spacing = Vec2::Ones(),
                              PlanePose pose = {}, Role role = Role::intensity) {
  PlanarImage img(w, h, spacing, pose, role);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>(f(x, y));
  return img;
}

inline PlanePose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 a(n(rng), n(rng), n(rng));
  Vec3 b(n(rng), n(rng), n(rng));
  a.normalize();
  b = (b - b.dot(a) * a).normalized();
  PlanePose p;
  p.origin = Vec3(n(rng), n(rng), n(rng)) * 20.0;
  p.row_dir = a;
  p.col_dir = b;
  p.inplane_offset = Vec2(n(rng), n(rng));
  return p;
}

// Smooth random texture: sum of a few random sinusoids.
inline PlanarImage smooth_texture(int w, int h, std::uint64_t seed, Vec2 spacing = Vec2::Ones()) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double fx[6], fy[6], ph[6], amp[6];
  for (int i = 0; i < 6; ++i) {
    fx[i] = (u(rng) - 0.5) * 0.5;
    fy[i] = (u(rng) - 0.5) * 0.5;
    ph[i] = u(rng) * 6.283185307179586;
    amp[i] = 0.5 + u(rng);
  }
  return make_image(
      w, h,
      [&](int x, int y) {
        double v = 0.0;
        for (int i = 0; i < 6; ++i) v += amp[i] * std::sin(fx[i] * x + fy[i] * y + ph[i]);
        return v;
      },
      spacing);
}

}  // namespace cmc::test
