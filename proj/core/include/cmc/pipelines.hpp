#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmc/forest.hpp"
#include "cmc/geometry.hpp"
#include "cmc/landmarks.hpp"
#include "cmc/register.hpp"
#include "cmc/resample.hpp"

namespace cmc {

enum class Gate { corrected, skipped_low_peak, skipped_outside_landmarks, skipped_no_overlap };

const char* gate_name(Gate g);
Gate gate_from_name(const std::string& name);

struct SliceMotion {
  Vec2 t = Vec2::Zero();  // total applied translation, px
  Gate gate = Gate::corrected;
  double peak = 0.0;                  // 2D PSM peak (PSM methods)
  double metric = 0.0;                // metric at the last estimate
  std::vector<Vec2> per_iteration;    // estimate applied in each iteration
};

struct MotionEstimate {
  std::string method;
  std::vector<SliceMotion> slices;
  std::vector<double> history_px;  // max translation per iteration
  int iterations = 0;
  bool converged = false;
  std::string status = "ok";
  Vec3 la_translation_mm = Vec3::Zero();  // accumulated 3D shift of the LA planes
  std::optional<LandmarkSet> landmarks;   // after the 3D alignment
  Vec2 spacing = Vec2::Ones();            // SA in-plane spacing, for mm output
  nlohmann::json config = nlohmann::json::object();

  std::vector<Vec2> translations() const;
};

nlohmann::json to_json(const MotionEstimate& m);
MotionEstimate motion_from_json(const nlohmann::json& j);
// Byte-stable motion.json text.
std::string motion_json_text(const MotionEstimate& m);

struct PipelineConfig {
  double t_m = 0.4;        // minimum 2D PSM peak
  double conv_px = 2.0;    // stop once the largest estimate is below this
  int max_iter = 10;
  int radius_px = 10;      // 2D search radius
  double radius3d_mm = 20.0;
  double step3d_mm = 1.0;
  double upsample_z_mm = 2.5;  // z spacing for the SA PSM target of the 3D LA alignment
  int psm_stride = 2;
  int landmark_stride = 2;
  double band_half_thickness_mm = -1.0;  // < 0: 0.5 * mean SA spacing
  int nmi_bins = 32;
  bool repredict = false;  // re-run SA 2D inference every iteration
  int threads = 1;
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {});

struct LaModels {
  const HybridForest* views[3] = {nullptr, nullptr, nullptr};
};

struct Combined {
  PlanarImage image;
  std::vector<std::uint8_t> support;
  bool empty() const;
};

// Resamples each LA image into the SA slice plane and keeps the voxelwise
// maximum over the views that cover a pixel; support is the union.
Combined combine_la_psms(const std::vector<PlanarImage>& la, const PlaneGrid& sa_grid, double half_thickness_mm = -1.0);

// Corrected iff peak > t_m and the slice centre projects strictly between the
// median apex and median mitral point along the stack normal.
Gate slice_gate(double psm_peak, const Vec3& slice_center_world, const Vec3& stack_normal,
                const LandmarkSet& landmarks, double t_m);

MotionEstimate mc_la_psm(const SliceStack& sa_stack, const std::vector<PlanarImage>& la_images,
                         const HybridForest& sa2d, const LaModels& la_models, const PipelineConfig& cfg = {});
MotionEstimate mc_3d_psm(const SliceStack& sa_stack, const HybridForest& sa2d, const HybridForest& sa3d,
                         const PipelineConfig& cfg = {});
MotionEstimate mc_la_intensity(const SliceStack& sa_stack, const std::vector<PlanarImage>& la_images,
                               const PipelineConfig& cfg = {});

// Adds the estimate's translations to the slice poses.
SliceStack apply_motion(const SliceStack& stack, const MotionEstimate& m);

// Predicted LA landmarks in world coordinates for one view.
ViewLandmarks view_landmarks(const PlanarImage& la, const LandmarkPrediction& pred, const std::string& view);

}  // namespace cmc
