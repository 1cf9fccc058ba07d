#include "cmc/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cmc/error.hpp"
#include "cmc/parallel.hpp"

namespace cmc {

const char* gate_name(Gate g) {
  switch (g) {
    case Gate::corrected: return "corrected";
    case Gate::skipped_low_peak: return "skipped_low_peak";
    case Gate::skipped_outside_landmarks: return "skipped_outside_landmarks";
    case Gate::skipped_no_overlap: return "skipped_no_overlap";
  }
  return "corrected";
}

Gate gate_from_name(const std::string& name) {
  for (Gate g : {Gate::corrected, Gate::skipped_low_peak, Gate::skipped_outside_landmarks, Gate::skipped_no_overlap})
    if (name == gate_name(g)) return g;
  throw FormatError("unknown gate '" + name + "'");
}

std::vector<Vec2> MotionEstimate::translations() const {
  std::vector<Vec2> out;
  for (const auto& s : slices) out.push_back(s.t);
  return out;
}

nlohmann::json to_json(const PipelineConfig& c) {
  // threads is deliberately absent: outputs must not depend on it.
  return {{"t_m", c.t_m},
          {"conv_px", c.conv_px},
          {"max_iter", c.max_iter},
          {"radius_px", c.radius_px},
          {"radius3d_mm", c.radius3d_mm},
          {"step3d_mm", c.step3d_mm},
          {"upsample_z_mm", c.upsample_z_mm},
          {"psm_stride", c.psm_stride},
          {"landmark_stride", c.landmark_stride},
          {"band_half_thickness_mm", c.band_half_thickness_mm},
          {"nmi_bins", c.nmi_bins},
          {"repredict", c.repredict}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig c) {
  c.t_m = j.value("t_m", c.t_m);
  c.conv_px = j.value("conv_px", c.conv_px);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.radius_px = j.value("radius_px", c.radius_px);
  c.radius3d_mm = j.value("radius3d_mm", c.radius3d_mm);
  c.step3d_mm = j.value("step3d_mm", c.step3d_mm);
  c.upsample_z_mm = j.value("upsample_z_mm", c.upsample_z_mm);
  c.psm_stride = j.value("psm_stride", c.psm_stride);
  c.landmark_stride = j.value("landmark_stride", c.landmark_stride);
  c.band_half_thickness_mm = j.value("band_half_thickness_mm", c.band_half_thickness_mm);
  c.nmi_bins = j.value("nmi_bins", c.nmi_bins);
  c.repredict = j.value("repredict", c.repredict);
  return c;
}

nlohmann::json to_json(const MotionEstimate& m) {
  nlohmann::json slices = nlohmann::json::array();
  for (std::size_t k = 0; k < m.slices.size(); ++k) {
    const SliceMotion& s = m.slices[k];
    nlohmann::json its = nlohmann::json::array();
    for (const Vec2& t : s.per_iteration) its.push_back(vec_to_json(t));
    slices.push_back({{"index", k},
                      {"t_px", vec_to_json(s.t)},
                      {"t_mm", vec_to_json(Vec2(s.t.cwiseProduct(m.spacing)))},
                      {"gate", gate_name(s.gate)},
                      {"peak", s.peak},
                      {"metric", std::isfinite(s.metric) ? nlohmann::json(s.metric) : nlohmann::json()},
                      {"per_iteration_px", its}});
  }
  nlohmann::json j{{"version", 1},
                   {"method", m.method},
                   {"status", m.status},
                   {"iterations", m.iterations},
                   {"converged", m.converged},
                   {"history_px", m.history_px},
                   {"spacing_mm", vec_to_json(m.spacing)},
                   {"la_translation_mm", vec_to_json(m.la_translation_mm)},
                   {"slices", slices},
                   {"config", m.config}};
  if (m.landmarks) j["landmarks"] = to_json(*m.landmarks);
  return j;
}

MotionEstimate motion_from_json(const nlohmann::json& j) {
  try {
    MotionEstimate m;
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported motion.json version");
    m.method = j.at("method").get<std::string>();
    m.status = j.value("status", std::string("ok"));
    m.iterations = j.at("iterations").get<int>();
    m.converged = j.at("converged").get<bool>();
    m.history_px = j.at("history_px").get<std::vector<double>>();
    m.spacing = vec2_from_json(j.at("spacing_mm"));
    m.la_translation_mm = vec3_from_json(j.value("la_translation_mm", nlohmann::json::array({0.0, 0.0, 0.0})));
    for (const auto& s : j.at("slices")) {
      SliceMotion sm;
      sm.t = vec2_from_json(s.at("t_px"));
      sm.gate = gate_from_name(s.at("gate").get<std::string>());
      sm.peak = s.value("peak", 0.0);
      sm.metric = s.at("metric").is_null() ? std::nan("") : s.at("metric").get<double>();
      for (const auto& t : s.at("per_iteration_px")) sm.per_iteration.push_back(vec2_from_json(t));
      m.slices.push_back(std::move(sm));
    }
    m.config = j.value("config", nlohmann::json::object());
    if (j.contains("landmarks")) m.landmarks = landmarks_from_json(j["landmarks"]);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("motion.json: ") + e.what());
  }
}

std::string motion_json_text(const MotionEstimate& m) { return to_json(m).dump(2) + "\n"; }

bool Combined::empty() const { return std::none_of(support.begin(), support.end(), [](std::uint8_t v) { return v != 0; }); }

Combined combine_la_psms(const std::vector<PlanarImage>& la, const PlaneGrid& sa_grid, double half_thickness_mm) {
  std::optional<double> band;
  if (half_thickness_mm >= 0.0) band = half_thickness_mm;
  Combined out{PlanarImage(sa_grid.width, sa_grid.height, sa_grid.spacing, sa_grid.pose,
                           la.empty() ? Role::probability : la.front().role()),
               std::vector<std::uint8_t>(static_cast<std::size_t>(sa_grid.width) * sa_grid.height, 0)};
  auto dst = out.image.samples();
  for (const PlanarImage& view : la) {
    const Resampled r = resample_plane(view, sa_grid, Interp::linear, band);
    const auto src = r.image.samples();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!r.mask[i]) continue;
      dst[i] = out.support[i] ? std::max(dst[i], src[i]) : src[i];
      out.support[i] = 1;
    }
  }
  return out;
}

Gate slice_gate(double psm_peak, const Vec3& slice_center_world, const Vec3& stack_normal,
                const LandmarkSet& landmarks, double t_m) {
  if (!(psm_peak > t_m)) return Gate::skipped_low_peak;
  const double s = slice_center_world.dot(stack_normal);
  const double a = landmarks.median_apex().dot(stack_normal);
  const double m = landmarks.median_mv().dot(stack_normal);
  if (s > std::min(a, m) && s < std::max(a, m)) return Gate::corrected;
  return Gate::skipped_outside_landmarks;
}

SliceStack apply_motion(const SliceStack& stack, const MotionEstimate& m) {
  if (m.slices.size() != stack.size()) throw InvalidInput("motion estimate does not match the stack size");
  SliceStack out = stack;
  for (std::size_t k = 0; k < out.size(); ++k) apply_translation(out, k, m.slices[k].t);
  return out;
}

ViewLandmarks view_landmarks(const PlanarImage& la, const LandmarkPrediction& pred, const std::string& view) {
  if (pred.pixels.empty()) throw InvalidInput("no landmark predictions");
  ViewLandmarks vl;
  vl.view = view;
  vl.apex = la.world(pred.pixels[0]);
  for (std::size_t i = 1; i < pred.pixels.size(); ++i) vl.mitral.push_back(la.world(pred.pixels[i]));
  return vl;
}

namespace {

using SliceEstimator = std::function<std::optional<Translation2D>(std::size_t)>;

// Shared iteration: estimate every eligible slice, apply all estimates, stop
// when the largest falls below conv_px. `before_iteration` runs first in each
// iteration (target updates).
void iterate(MotionEstimate& m, SliceStack& working, std::vector<SliceStack*> followers, const PipelineConfig& cfg,
             const std::function<void(int)>& before_iteration, const SliceEstimator& estimate) {
  const std::size_t n = working.size();
  std::vector<bool> ever(n, false);
  for (int it = 0; it < cfg.max_iter; ++it) {
    before_iteration(it);
    std::vector<std::optional<Translation2D>> est(n);
    parallel_for(n, cfg.threads, [&](std::size_t k) {
      if (m.slices[k].gate != Gate::corrected) return;
      est[k] = estimate(k);
    });
    double max_t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      Vec2 t = Vec2::Zero();
      if (est[k] && est[k]->converged) {
        t = est[k]->t;
        m.slices[k].metric = est[k]->metric_value;
        ever[k] = true;
      }
      m.slices[k].per_iteration.push_back(t);
      m.slices[k].t += t;
      apply_translation(working, k, t);
      for (SliceStack* f : followers) apply_translation(*f, k, t);
      max_t = std::max(max_t, t.norm());
    }
    m.history_px.push_back(max_t);
    m.iterations = it + 1;
    if (max_t < cfg.conv_px) {
      m.converged = true;
      break;
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    if (m.slices[k].gate == Gate::corrected && !ever[k]) m.slices[k].gate = Gate::skipped_no_overlap;
  if (std::none_of(m.slices.begin(), m.slices.end(), [](const SliceMotion& s) { return s.gate == Gate::corrected; }))
    m.status = "no_slice_corrected";
}

void check_stack(const SliceStack& s, std::size_t min_slices) {
  if (s.size() < min_slices)
    throw InvalidInput("stack needs at least " + std::to_string(min_slices) + " slices");
  s.validate();
}

void check_config(const PipelineConfig& c) {
  if (!(c.conv_px > 0.0) || c.max_iter < 1 || c.radius_px < 0 || !(c.t_m >= 0.0 && c.t_m <= 1.0) ||
      !(c.radius3d_mm > 0.0) || !(c.step3d_mm > 0.0) || !(c.upsample_z_mm > 0.0) || c.psm_stride < 1 ||
      c.landmark_stride < 1 || c.nmi_bins < 2)
    throw InvalidInput("pipeline config out of range");
}

void check_la(const std::vector<PlanarImage>& la) {
  if (la.size() != 3) throw InvalidInput("three long-axis views are required (2ch, 3ch, 4ch)");
}

double band_of(const PipelineConfig& cfg, const SliceStack& s) {
  if (cfg.band_half_thickness_mm >= 0.0) return cfg.band_half_thickness_mm;
  return 0.25 * (s[0].spacing().x() + s[0].spacing().y());
}

SliceStack predict_psm_stack(const SliceStack& stack, const HybridForest& model, const PipelineConfig& cfg) {
  SliceStack out;
  out.slice_gap = stack.slice_gap;
  out.slices.resize(stack.size());
  parallel_for(stack.size(), cfg.threads,
               [&](std::size_t k) { out.slices[k] = predict_psm(stack[k], model, cfg.psm_stride); });
  return out;
}

MotionEstimate init_estimate(const std::string& method, const SliceStack& stack, const PipelineConfig& cfg) {
  MotionEstimate m;
  m.method = method;
  m.slices.resize(stack.size());
  m.spacing = stack[0].spacing();
  m.config = to_json(cfg);
  return m;
}

void move_planes(std::vector<PlanarImage>& planes, const Vec3& t) {
  for (PlanarImage& p : planes) p.pose().origin += t;
}

void move_landmarks(LandmarkSet& set, const Vec3& t) {
  for (ViewLandmarks& v : set.views) {
    v.apex += t;
    for (Vec3& p : v.mitral) p += t;
  }
}

}  // namespace

MotionEstimate mc_la_psm(const SliceStack& sa_stack, const std::vector<PlanarImage>& la_images,
                         const HybridForest& sa2d, const LaModels& la_models, const PipelineConfig& cfg) {
  check_config(cfg);
  check_stack(sa_stack, 2);
  check_la(la_images);
  if (sa2d.meta.kind != ModelKind::sa2d) throw InvalidInput("mc_la_psm: expected an sa2d model");
  const ModelKind expect[3] = {ModelKind::la2ch, ModelKind::la3ch, ModelKind::la4ch};
  for (int v = 0; v < 3; ++v) {
    if (!la_models.views[v]) throw InvalidInput("mc_la_psm: missing long-axis model");
    if (la_models.views[v]->meta.kind != expect[v])
      throw InvalidInput(std::string("mc_la_psm: expected a ") + kind_name(expect[v]) + " model");
  }

  MotionEstimate m = init_estimate("la-psm", sa_stack, cfg);
  SliceStack working = sa_stack;
  SliceStack psms = predict_psm_stack(working, sa2d, cfg);
  for (std::size_t k = 0; k < psms.size(); ++k) m.slices[k].peak = psms[k].max_value();

  std::vector<PlanarImage> la_psm(3);
  std::vector<LandmarkPrediction> la_lm(3);
  parallel_for(3, cfg.threads, [&](std::size_t v) {
    const HybridForest& model = *la_models.views[v];
    const FeatureStack fs = compute_feature_stack(la_images[v], model.meta.features);
    la_psm[v] = predict_psm(fs, 0, model, la_images[v], cfg.psm_stride);
    la_lm[v] = predict_landmarks(fs, 0, model, la_images[v], cfg.landmark_stride);
  });
  LandmarkSet landmarks;
  for (std::size_t v = 0; v < 3; ++v)
    landmarks.views.push_back(view_landmarks(la_images[v], la_lm[v], kind_name(expect[v])));

  const Vec3 normal = working.normal();
  const double band = band_of(cfg, working);
  Register2DConfig r2;
  r2.radius = cfg.radius_px;
  Register3DConfig r3;
  r3.radius_mm = cfg.radius3d_mm;
  r3.step_mm = cfg.step3d_mm;
  r3.threads = cfg.threads;

  auto before = [&](int it) {
    if (cfg.repredict && it > 0) {
      SliceStack fresh = predict_psm_stack(working, sa2d, cfg);
      for (std::size_t k = 0; k < fresh.size(); ++k) fresh[k].pose() = working[k].pose();
      psms = std::move(fresh);
    }
    const Volume target = upsample_z(psms, cfg.upsample_z_mm);
    const Translation3D t3 = register_translation_3d(la_psm, target, r3);
    if (t3.converged) {
      move_planes(la_psm, t3.t);
      move_landmarks(landmarks, t3.t);
      m.la_translation_mm += t3.t;
    }
    if (it == 0) {
      for (std::size_t k = 0; k < working.size(); ++k)
        m.slices[k].gate = slice_gate(m.slices[k].peak, working[k].center_world(), normal, landmarks, cfg.t_m);
    }
  };
  auto estimate = [&](std::size_t k) -> std::optional<Translation2D> {
    const Combined c = combine_la_psms(la_psm, psms[k].grid(), band);
    if (c.empty()) return std::nullopt;
    return register_translation_2d(psms[k], c.image, c.support, r2);
  };
  std::vector<SliceStack*> followers{&psms};
  iterate(m, working, followers, cfg, before, estimate);
  m.landmarks = landmarks;
  return m;
}

MotionEstimate mc_3d_psm(const SliceStack& sa_stack, const HybridForest& sa2d, const HybridForest& sa3d,
                         const PipelineConfig& cfg) {
  check_config(cfg);
  check_stack(sa_stack, 5);
  if (sa2d.meta.kind != ModelKind::sa2d) throw InvalidInput("mc_3d_psm: expected an sa2d model");
  if (sa3d.meta.kind != ModelKind::sa3d) throw InvalidInput("mc_3d_psm: expected an sa3d model");
  if (!(sa3d.meta.z_spacing_mm > 0.0)) throw InvalidInput("mc_3d_psm: sa3d model lacks a z spacing");

  MotionEstimate m = init_estimate("3d-psm", sa_stack, cfg);
  SliceStack working = sa_stack;
  SliceStack psms = predict_psm_stack(working, sa2d, cfg);
  for (std::size_t k = 0; k < psms.size(); ++k) {
    m.slices[k].peak = psms[k].max_value();
    m.slices[k].gate = m.slices[k].peak > cfg.t_m ? Gate::corrected : Gate::skipped_low_peak;
  }

  Register2DConfig r2;
  r2.radius = cfg.radius_px;
  std::vector<PlanarImage> targets(working.size());
  auto before = [&](int it) {
    if (cfg.repredict && it > 0) {
      SliceStack fresh = predict_psm_stack(working, sa2d, cfg);
      for (std::size_t k = 0; k < fresh.size(); ++k) fresh[k].pose() = working[k].pose();
      psms = std::move(fresh);
    }
    const Volume vol = upsample_z(working, sa3d.meta.z_spacing_mm);
    const FeatureStack fs = compute_feature_stack(vol, sa3d.meta.features, cfg.threads);
    const std::vector<double> pos = working.positions();
    parallel_for(working.size(), cfg.threads, [&](std::size_t k) {
      if (m.slices[k].gate != Gate::corrected) return;
      const int plane = static_cast<int>(std::lround(std::abs(pos[k]) / vol.spacing().z()));
      const PlanarImage geom = vol.plane(plane);
      targets[k] = predict_psm(fs, plane, sa3d, geom, cfg.psm_stride);
    });
  };
  auto estimate = [&](std::size_t k) -> std::optional<Translation2D> {
    const Resampled r = resample_plane(targets[k], psms[k].grid(), Interp::linear);
    if (r.support_count() == 0) return std::nullopt;
    return register_translation_2d(psms[k], r.image, r.mask, r2);
  };
  std::vector<SliceStack*> followers{&psms};
  iterate(m, working, followers, cfg, before, estimate);
  return m;
}

MotionEstimate mc_la_intensity(const SliceStack& sa_stack, const std::vector<PlanarImage>& la_images,
                               const PipelineConfig& cfg) {
  check_config(cfg);
  check_stack(sa_stack, 2);
  check_la(la_images);
  MotionEstimate m = init_estimate("la-int", sa_stack, cfg);
  SliceStack working = sa_stack;
  std::vector<PlanarImage> la = la_images;
  const double band = band_of(cfg, working);
  Register2DConfig r2;
  r2.radius = cfg.radius_px;
  r2.metric = Metric::nmi;
  r2.nmi_bins = cfg.nmi_bins;
  Register3DConfig r3;
  r3.radius_mm = cfg.radius3d_mm;
  r3.step_mm = cfg.step3d_mm;
  r3.metric = Metric::nmi;
  r3.nmi_bins = cfg.nmi_bins;
  r3.threads = cfg.threads;
  for (SliceMotion& s : m.slices) s.peak = 0.0;

  auto before = [&](int) {
    const Volume target = upsample_z(working, cfg.upsample_z_mm);
    const Translation3D t3 = register_translation_3d(la, target, r3);
    if (t3.converged) {
      move_planes(la, t3.t);
      m.la_translation_mm += t3.t;
    }
  };
  auto estimate = [&](std::size_t k) -> std::optional<Translation2D> {
    const Combined c = combine_la_psms(la, working[k].grid(), band);
    if (c.empty()) return std::nullopt;
    return register_translation_2d(working[k], c.image, c.support, r2);
  };
  iterate(m, working, {}, cfg, before, estimate);
  return m;
}

}  // namespace cmc
