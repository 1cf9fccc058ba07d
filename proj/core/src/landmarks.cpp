#include "cmc/landmarks.hpp"

#include <algorithm>

#include "cmc/error.hpp"

namespace cmc {

Vec3 componentwise_median(const std::vector<Vec3>& pts) {
  if (pts.empty()) throw InvalidInput("median of an empty point set");
  Vec3 out;
  std::vector<double> c(pts.size());
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < pts.size(); ++i) c[i] = pts[i][a];
    std::sort(c.begin(), c.end());
    const std::size_t n = c.size();
    out[a] = n % 2 ? c[n / 2] : 0.5 * (c[n / 2 - 1] + c[n / 2]);
  }
  return out;
}

Vec3 LandmarkSet::median_apex() const {
  std::vector<Vec3> pts;
  for (const auto& v : views) pts.push_back(v.apex);
  return componentwise_median(pts);
}

Vec3 LandmarkSet::median_mv() const {
  std::vector<Vec3> pts;
  for (const auto& v : views) pts.insert(pts.end(), v.mitral.begin(), v.mitral.end());
  return componentwise_median(pts);
}

nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }
nlohmann::json vec_to_json(const Vec2& v) { return nlohmann::json::array({v.x(), v.y()}); }

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Vec2 vec2_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw FormatError("expected a 2-vector");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

nlohmann::json to_json(const LandmarkSet& set) {
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : set.views) {
    nlohmann::json mv = nlohmann::json::array();
    for (const auto& p : v.mitral) mv.push_back(vec_to_json(p));
    views.push_back({{"view", v.view}, {"apex", vec_to_json(v.apex)}, {"mitral", mv}});
  }
  nlohmann::json j{{"views", views}};
  if (!set.views.empty()) {
    j["median_apex"] = vec_to_json(set.median_apex());
    j["median_mv"] = vec_to_json(set.median_mv());
  }
  return j;
}

LandmarkSet landmarks_from_json(const nlohmann::json& j) {
  LandmarkSet s;
  for (const auto& v : j.at("views")) {
    ViewLandmarks vl;
    vl.view = v.at("view").get<std::string>();
    vl.apex = vec3_from_json(v.at("apex"));
    for (const auto& p : v.at("mitral")) vl.mitral.push_back(vec3_from_json(p));
    s.views.push_back(std::move(vl));
  }
  return s;
}

}  // namespace cmc
