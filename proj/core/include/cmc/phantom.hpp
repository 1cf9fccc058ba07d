#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmc/forest.hpp"
#include "cmc/geometry.hpp"
#include "cmc/landmarks.hpp"

namespace cmc {

inline constexpr int kLongAxisViews = 3;
inline constexpr const char* kViewNames[kLongAxisViews] = {"2ch", "3ch", "4ch"};

struct PhantomConfig {
  Vec3 cavity_radii{25.0, 25.0, 45.0};  // mm; z runs along the long axis
  double myo_thickness = 8.0;           // mm
  double base_fraction = 0.4;           // truncation plane at base_fraction * rz above the centre
  double tilt_jitter_deg = 10.0;        // long axis tilt from the volume z axis
  double centre_jitter_mm = 2.0;
  double blood = 1.0;
  double myocardium = 0.4;
  double background = 0.2;
  double texture_sigma = 0.08;  // smoothed background noise, sd
  double noise_sigma = 0.02;    // white noise, sd
  double bias_amplitude = 0.15;
  int a3d_dim = 112;
  double a3d_spacing = 1.25;
  int sa_dim = 80;
  double sa_spacing = 1.25;
  double slice_gap = 10.0;
  double phase_min = 0.25;  // valve plane to first slice, in slice gaps
  double phase_max = 0.75;
  int la_dim = 96;
  double la_spacing = 1.25;
  double la_gain = 1.15;
  double la_noise_sigma = 0.03;
};

nlohmann::json to_json(const PhantomConfig& c);
PhantomConfig phantom_config_from_json(const nlohmann::json& j, PhantomConfig base = {});

struct PhantomCase {
  Volume a3d;
  Volume a3d_seg;
  SliceStack sa_stack;
  SliceStack sa_seg;
  std::array<PlanarImage, kLongAxisViews> la_images;
  std::array<PlanarImage, kLongAxisViews> la_seg;
  LandmarkSet gt_landmarks;
  std::vector<Vec2> gt_translations;  // px, per slice
  Vec3 lv_centre = Vec3::Zero();
  Vec3 long_axis = Vec3::UnitZ();  // apex -> base
  Vec3 mv_point = Vec3::Zero();    // centre of the basal truncation plane
  std::uint64_t seed = 0;
  PhantomConfig config;
};

// Analytic cavity volume (mm^3) of the truncated ellipsoid.
double analytic_cavity_volume(const PhantomConfig& c);

PhantomCase generate_phantom(const PhantomConfig& cfg, std::uint64_t seed);

// One N(0, sigma^2 I) shift (mm) per run of `group` consecutive slices,
// applied to the poses of sa_stack and sa_seg and recorded in px.
PhantomCase inject_motion(const PhantomCase& clean, double sigma_mm, int group, std::uint64_t seed);

// Signed distance (mm) of a world point above the valve plane (towards the base).
double beyond_valve_mm(const PhantomCase& c, const Vec3& w);

// Per-view pixel coordinates of apex, mv1, mv2.
std::vector<Vec2> view_landmark_pixels(const PhantomCase& c, int view);

struct TrainingOptions {
  std::uint64_t seed = 1;
  bool augment = true;
  int dilation_px = 8;        // foreground centres lie within this distance of the cavity
  int max_per_center = 8;     // augmentations available per distinct centre
  int threads = 1;
};

TrainingSet build_training_set(const std::vector<const PhantomCase*>& cases, ModelKind kind, std::size_t n_samples,
                               const TrainingOptions& opt = {});
// Source plane index of slice k in a z-upsampled stack for the SA-3D model.
int sa3d_plane_of_slice(const SliceStack& stack, const Volume& upsampled, std::size_t k);

// Directory layout: a3d/, a3d_seg/, sa/, sa_seg/ (motion-corrupted when
// translations are nonzero), sa_clean/, sa_seg_clean/, la_<view>/,
// la_seg_<view>/, truth.json.
void write_case(const std::filesystem::path& dir, const PhantomCase& motion, const PhantomCase& clean);
// Reads the motion-corrupted variant (sa/, sa_seg/) unless clean is true.
PhantomCase read_case(const std::filesystem::path& dir, bool clean = false);

}  // namespace cmc
