#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cmc/features.hpp"
#include "cmc/geometry.hpp"

namespace cmc {

enum class ModelKind { la2ch, la3ch, la4ch, sa2d, sa3d };

const char* kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);
bool is_long_axis(ModelKind kind);

struct ModelMeta {
  ModelKind kind = ModelKind::sa2d;
  int patch_size = 32;
  int label_size = 16;
  int n_landmarks = 0;
  std::vector<std::string> landmark_names;
  FeatureConfig features;
  // SA-3D only: probes reach +-z_reach planes; planes are z_spacing_mm apart.
  int z_reach = 0;
  double z_spacing_mm = 0.0;
  nlohmann::json provenance = nlohmann::json::object();

  int label_pixels() const { return label_size * label_size; }
};

// Patch 48 px for long-axis views (with apex + two mitral points), 32 px for
// short-axis models, 16 px labels everywhere.
ModelMeta default_meta(ModelKind kind);
nlohmann::json to_json(const ModelMeta& meta);
ModelMeta meta_from_json(const nlohmann::json& j);

// Binary split test h(x, theta): the sample goes right iff response >= threshold.
struct SplitParam {
  enum class Kind : std::uint8_t { single = 0, difference = 1 };
  Kind kind = Kind::single;
  int channel = 0;
  int dx1 = 0, dy1 = 0, dz1 = 0;
  int dx2 = 0, dy2 = 0, dz2 = 0;
  float threshold = 0.0f;
};

struct TreeNode {
  SplitParam split;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;  // index into DecisionTree::leaves, -1 for split nodes

  bool is_leaf() const { return leaf >= 0; }
};

struct LeafPayload {
  std::vector<float> mean_label;  // label_size^2, values in [0,1]
  float peak = 0.0f;
  std::uint32_t n = 0;
  std::vector<float> reg_mean;  // 2 per landmark (px)
  std::vector<float> reg_cov;   // 2x2 row-major per landmark, eps-regularised

  bool has_regression() const { return !reg_mean.empty(); }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<LeafPayload> leaves;

  int depth() const;
};

struct HybridForest {
  ModelMeta meta;
  std::vector<DecisionTree> trees;
};

// Row-major 2x2 map from patch offsets to source-image offsets. Identity at
// inference time; augmentation folds the inverse rotation/scale into it.
using ProbeTransform = std::array<float, 4>;
inline constexpr ProbeTransform kIdentityProbe{1.0f, 0.0f, 0.0f, 1.0f};

struct TrainSample {
  std::uint32_t source = 0;
  int plane = 0;
  int cx = 0;
  int cy = 0;
  ProbeTransform probe_xf = kIdentityProbe;
  std::vector<std::uint8_t> label;  // label_size^2 binary, row-major
  std::vector<float> disp;          // 2 per landmark, empty for PSM-only models
};

struct TrainingSet {
  ModelMeta meta;
  std::vector<FeatureStack> sources;
  std::vector<TrainSample> samples;
};

float split_response(const SplitParam& s, const FeatureStack& fs, int plane, int cx, int cy,
                     const ProbeTransform& xf = kIdentityProbe);
int route(const DecisionTree& tree, const FeatureStack& fs, int plane, int cx, int cy,
          const ProbeTransform& xf = kIdentityProbe);

// --- structured labels -------------------------------------------------------

using PixelPair = std::pair<int, int>;

// Two bits per pair: [y(j1) = y(j2) = 0] then [y(j1) = y(j2) = 1].
std::vector<std::uint8_t> pi_mapping(std::span<const std::uint8_t> label, std::span<const PixelPair> pairs);

// Projection of every (centred) z onto the first principal axis. The axis is
// estimated by power iteration from a fixed-seed start vector on at most
// max_axis_samples vectors (0 = all); its sign is fixed so that the largest
// absolute component is positive.
std::vector<double> principal_projections(const std::vector<std::vector<std::uint8_t>>& zs,
                                          int iterations = 50, int max_axis_samples = 0);

// Median-thresholded principal projection. All-identical input yields all 0.
std::vector<std::uint8_t> binarize_labels(const std::vector<std::vector<std::uint8_t>>& zs,
                                          int iterations = 50, int max_axis_samples = 0);

// --- information gain --------------------------------------------------------

struct ClassCounts {
  double n0 = 0.0;
  double n1 = 0.0;
  double total() const { return n0 + n1; }
};

double entropy_bits(const ClassCounts& c);
// H(S) - sum |S^i|/|S| H(S^i), in bits. An empty side scores 0.
double info_gain_classification(const ClassCounts& left, const ClassCounts& right);

// Running first/second moments of concatenated displacement vectors.
class DisplacementMoments {
 public:
  explicit DisplacementMoments(int dim = 0);

  void add(std::span<const float> d);
  void add(const Eigen::VectorXd& d);
  void merge(const DisplacementMoments& other);

  int dim() const { return dim_; }
  double count() const { return n_; }
  Eigen::VectorXd mean() const;
  // Maximum-likelihood covariance (divides by n).
  Eigen::MatrixXd covariance() const;
  // log |cov + eps I|
  double log_det(double eps) const;

 private:
  int dim_ = 0;
  double n_ = 0.0;
  Eigen::VectorXd sum_;
  Eigen::MatrixXd outer_;
};

// 1/2 log|L_S| - sum |S^i|/|S| 1/2 log|L_{S^i}| in nats (the (2 pi e)^d terms
// cancel). nullopt when either side has fewer than two samples.
std::optional<double> info_gain_regression(const DisplacementMoments& left, const DisplacementMoments& right,
                                           double eps = 1e-3);
std::optional<double> info_gain_regression(const std::vector<Eigen::VectorXd>& samples,
                                           std::span<const std::uint8_t> goes_right, double eps = 1e-3);

// --- training ----------------------------------------------------------------

struct ForestConfig {
  int n_trees = 8;
  int max_depth = 24;
  int min_leaf = 5;
  int n_candidate_splits = 1000;
  int thresholds_per_feature = 10;  // candidates are drawn as (feature, thresholds) groups
  double bag_fraction = 0.63;
  double regression_probability = 0.5;
  int regression_min_depth = 2;
  int pair_samples = 256;
  int pca_iterations = 50;
  int pca_max_samples = 128;
  int split_eval_max_samples = 8192;
  double difference_probability = 0.5;
  double cov_epsilon = 1e-3;
  std::uint64_t seed = 1;
  int threads = 0;
};

nlohmann::json to_json(const ForestConfig& cfg);
ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig base = {});

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

HybridForest train_forest(const TrainingSet& data, const ForestConfig& cfg);

// --- augmentation ------------------------------------------------------------

struct Augmentation {
  double scale = 1.0;
  double angle_rad = 0.0;

  Mat2 matrix() const;  // scale * R(angle)
};

// scale ~ N(1, scale_sd^2) (draws <= 0.5 are redrawn), angle ~ N(0, angle_sd_deg^2).
Augmentation draw_augmentation(std::mt19937_64& rng, double scale_sd = 0.1, double angle_sd_deg = 30.0);

// Label patch read from the mask around center (nearest, 0 outside).
std::vector<std::uint8_t> extract_label(const PlanarImage& mask, int cx, int cy, int label_size,
                                        const ProbeTransform& xf = kIdentityProbe);

// Rotates/scales the sample about its patch centre: the context probes, the
// label patch (re-read from mask_plane, nearest neighbour) and the
// displacement vectors all move consistently.
TrainSample augment(const TrainSample& sample, const Augmentation& aug, const PlanarImage& mask_plane,
                    int label_size);
TrainSample augment(const TrainSample& sample, const PlanarImage& mask_plane, int label_size,
                    std::mt19937_64& rng);

// --- inference ---------------------------------------------------------------

// Patch centres probed at inference: every stride-th pixel whose label
// footprint fits inside the image.
std::vector<int> probe_centers(int extent, int label_size, int stride);

PlanarImage predict_psm(const PlanarImage& image, const HybridForest& forest, int stride = 2);
PlanarImage predict_psm(const FeatureStack& fs, int plane, const HybridForest& forest,
                        const PlanarImage& geometry, int stride = 2);

struct LandmarkPrediction {
  std::vector<PlanarImage> hough;  // one map per landmark
  std::vector<Vec2> pixels;
  std::vector<double> confidence;  // peak / total vote mass
};

LandmarkPrediction predict_landmarks(const PlanarImage& image, const HybridForest& forest, int stride = 2);
LandmarkPrediction predict_landmarks(const FeatureStack& fs, int plane, const HybridForest& forest,
                                     const PlanarImage& geometry, int stride = 2);

// Adds weight * exp(-1/2 q^T S^-1 q) around mean, S = cov + I/12 (pixel
// quantisation), truncated at 3 sigma of S.
void splat_gaussian(PlanarImage& map, const Vec2& mean, const Mat2& cov, double weight);
// First maximum in row-major order.
Eigen::Vector2i hough_argmax(const PlanarImage& map);

// --- persistence -------------------------------------------------------------

inline constexpr std::uint16_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const HybridForest& forest);
HybridForest deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const HybridForest& forest);
HybridForest load_model(const std::filesystem::path& path);

}  // namespace cmc
