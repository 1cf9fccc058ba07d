#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmc/geometry.hpp"

namespace cmc {

enum class Metric { ncc, nmi };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

inline constexpr std::size_t kNccMinSamples = 16;
inline constexpr std::size_t kNmiMinSamples = 64;

// Pearson correlation over pixels with mask != 0 (empty mask = all pixels).
// Throws UndefinedMetric on fewer than 16 samples or zero variance.
double ncc(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask = {});

struct JointHistogram {
  int bins = 0;
  std::vector<double> counts;  // bins x bins, row = a bin
  double total() const;
};

// Min-max binning per image over the masked samples.
JointHistogram joint_histogram(std::span<const float> a, std::span<const float> b,
                               std::span<const std::uint8_t> mask, int bins);

// (H(A) + H(B)) / H(A,B). Throws UndefinedMetric on fewer than 64 samples or a
// constant input.
double nmi(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask = {},
           int bins = 32);

double similarity(Metric m, std::span<const float> a, std::span<const float> b,
                  std::span<const std::uint8_t> mask = {}, int nmi_bins = 32);

struct Translation2D {
  Vec2 t = Vec2::Zero();  // pixels
  double metric_value = 0.0;
  bool converged = false;
};

struct Register2DConfig {
  int radius = 10;
  Metric metric = Metric::ncc;
  int nmi_bins = 32;
  bool subpixel = true;
};

// Finds t maximising metric(fixed(q), moving(q - t)) over q in support (on the
// fixed grid) with q - t inside moving. Both images share one grid layout.
// An empty support means every fixed pixel.
Translation2D register_translation_2d(const PlanarImage& moving, const PlanarImage& fixed,
                                      std::span<const std::uint8_t> support, const Register2DConfig& cfg = {});

// Metric at a possibly fractional t (bilinear moving). nullopt when undefined.
std::optional<double> metric_at_offset(const PlanarImage& moving, const PlanarImage& fixed,
                                       std::span<const std::uint8_t> support, const Vec2& t,
                                       Metric metric = Metric::ncc, int nmi_bins = 32);

struct Translation3D {
  Vec3 t = Vec3::Zero();  // mm, world
  double metric_value = 0.0;
  bool converged = false;
};

struct Register3DConfig {
  double radius_mm = 20.0;
  double step_mm = 1.0;
  Metric metric = Metric::ncc;
  int nmi_bins = 32;
  int threads = 1;
};

// Moving samples at world points; group g collects the samples scored by one
// metric term. The objective at t is the sum over groups of
// metric(values, fixed(point + t)); groups with an undefined metric are left out.
struct PointSamples {
  std::vector<Vec3> points;
  std::vector<float> values;
  std::vector<int> group;
  int n_groups = 0;
};

PointSamples samples_from_planes(const std::vector<PlanarImage>& planes);
PointSamples samples_from_volume(const Volume& vol, int stride = 1);

std::optional<double> objective_3d(const PointSamples& moving, const Volume& fixed, const Vec3& t,
                                   Metric metric = Metric::ncc, int nmi_bins = 32);

// Coarse-to-fine grid search (steps 4s, 2s, s). The coarse level covers
// [-radius, radius]^3; finer levels scan +-2 steps around the previous best.
Translation3D register_translation_3d(const PointSamples& moving, const Volume& fixed,
                                      const Register3DConfig& cfg = {});
Translation3D register_translation_3d(const std::vector<PlanarImage>& moving_planes, const Volume& fixed,
                                      const Register3DConfig& cfg = {});
Translation3D register_translation_3d(const Volume& moving, const Volume& fixed, const Register3DConfig& cfg = {},
                                      int stride = 1);

}  // namespace cmc
