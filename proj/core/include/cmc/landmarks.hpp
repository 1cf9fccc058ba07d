#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmc/geometry.hpp"

namespace cmc {

// Named 3D landmarks (mm) of one long-axis view.
struct ViewLandmarks {
  std::string view;
  Vec3 apex = Vec3::Zero();
  std::vector<Vec3> mitral;  // valve annulus points visible in the view
};

struct LandmarkSet {
  std::vector<ViewLandmarks> views;

  // Componentwise medians; the mitral median pools every valve point of
  // every view. Throw InvalidInput on an empty set.
  Vec3 median_apex() const;
  Vec3 median_mv() const;
};

// Componentwise median (mean of the two middle values for even counts).
Vec3 componentwise_median(const std::vector<Vec3>& pts);

nlohmann::json to_json(const LandmarkSet& set);
LandmarkSet landmarks_from_json(const nlohmann::json& j);

nlohmann::json vec_to_json(const Vec3& v);
nlohmann::json vec_to_json(const Vec2& v);
Vec3 vec3_from_json(const nlohmann::json& j);
Vec2 vec2_from_json(const nlohmann::json& j);

}  // namespace cmc
