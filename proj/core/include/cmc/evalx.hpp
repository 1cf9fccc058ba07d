#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmc/geometry.hpp"
#include "cmc/register.hpp"

namespace cmc {

// Boundary pixels of a binary mask: foreground pixels with at least one
// background (or out-of-grid) 4-neighbour. Coordinates are in-plane mm.
struct ContourSet {
  std::vector<Eigen::Vector2i> pixels;
  std::vector<Vec2> points_mm;

  bool empty() const { return points_mm.empty(); }
  std::size_t size() const { return points_mm.size(); }
};

ContourSet extract_contour(const PlanarImage& mask);
ContourSet contour_from_points(std::vector<Vec2> points_mm);

// 2|a & b| / (|a| + |b|); both empty gives 1.
double dice(const PlanarImage& a, const PlanarImage& b);

// Symmetric mean of nearest-point distances (mm). Throws UndefinedMetric on an empty contour.
double mad(const ContourSet& a, const ContourSet& b);
// Max of the two directed Hausdorff distances (mm).
double hausdorff(const ContourSet& a, const ContourSet& b);

struct EvalConfig {
  double corrupted_threshold_mm = 3.0;
  int radius_px = 10;
  double radius3d_mm = 20.0;
  double step3d_mm = 1.0;
  int threads = 1;
};

nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig base = {});

// 3D translation (mm) that aligns the reference volume with the stack:
// reference(w - t) ~ stack at w.
Translation3D register_reference(const Volume& reference, const SliceStack& stack, const EvalConfig& cfg);

// Nearest-neighbour section of the reference (shifted by t) on a slice grid.
PlanarImage reference_section(const Volume& reference, const Vec3& t, const PlaneGrid& grid);

struct CorruptionResult {
  std::vector<double> misalignment_mm;  // per slice, NaN for excluded slices
  std::vector<Vec2> translation_px;
  std::vector<std::size_t> corrupted;
  std::vector<std::size_t> excluded;  // empty slice mask or undefined metric
};

// Expects a reference already registered to the stack (shift t applied).
CorruptionResult detect_corrupted_slices(const Volume& reference, const Vec3& reference_t, const SliceStack& stack_seg,
                                         const EvalConfig& cfg);

struct SliceEval {
  std::size_t index = 0;
  double misalignment_mm = 0.0;
  double mad_before = 0.0, mad_after = 0.0;
  double hd_before = 0.0, hd_after = 0.0;
  double dsc_before = 0.0, dsc_after = 0.0;
  bool improved = false;
};

struct EvalReport {
  std::vector<SliceEval> slices;  // corrupted slices only
  std::vector<std::size_t> corrupted;
  std::vector<std::size_t> excluded;
  std::vector<double> misalignment_mm;  // every slice
  Vec3 reference_t_before = Vec3::Zero();
  Vec3 reference_t_after = Vec3::Zero();
  double mad_before = 0.0, mad_after = 0.0, mad_impr = 0.0;
  double hd_before = 0.0, hd_after = 0.0, hd_impr = 0.0;
  double dsc_before = 0.0, dsc_after = 0.0, dsc_impr = 0.0;
  double improved_ratio = 0.0;
  nlohmann::json provenance = nlohmann::json::object();
};

// translations: per-slice px corrections to add to the stack poses.
EvalReport evaluate_correction(const Volume& reference_seg, const SliceStack& stack_seg_before,
                               const std::vector<Vec2>& translations, const EvalConfig& cfg = {});

nlohmann::json to_json(const EvalReport& r);
std::string report_json_text(const EvalReport& r);
std::string report_csv(const EvalReport& r);
std::string report_markdown(const EvalReport& r);

}  // namespace cmc
