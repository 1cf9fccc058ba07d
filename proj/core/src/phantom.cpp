#include "cmc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cmc/error.hpp"
#include "cmc/image_io.hpp"
#include "cmc/parallel.hpp"
#include "cmc/resample.hpp"

namespace cmc {

nlohmann::json to_json(const PhantomConfig& c) {
  return {{"cavity_radii", vec_to_json(c.cavity_radii)},
          {"myo_thickness", c.myo_thickness},
          {"base_fraction", c.base_fraction},
          {"tilt_jitter_deg", c.tilt_jitter_deg},
          {"centre_jitter_mm", c.centre_jitter_mm},
          {"blood", c.blood},
          {"myocardium", c.myocardium},
          {"background", c.background},
          {"texture_sigma", c.texture_sigma},
          {"noise_sigma", c.noise_sigma},
          {"bias_amplitude", c.bias_amplitude},
          {"a3d_dim", c.a3d_dim},
          {"a3d_spacing", c.a3d_spacing},
          {"sa_dim", c.sa_dim},
          {"sa_spacing", c.sa_spacing},
          {"slice_gap", c.slice_gap},
          {"phase_min", c.phase_min},
          {"phase_max", c.phase_max},
          {"la_dim", c.la_dim},
          {"la_spacing", c.la_spacing},
          {"la_gain", c.la_gain},
          {"la_noise_sigma", c.la_noise_sigma}};
}

PhantomConfig phantom_config_from_json(const nlohmann::json& j, PhantomConfig c) {
  if (j.contains("cavity_radii")) c.cavity_radii = vec3_from_json(j["cavity_radii"]);
  c.myo_thickness = j.value("myo_thickness", c.myo_thickness);
  c.base_fraction = j.value("base_fraction", c.base_fraction);
  c.tilt_jitter_deg = j.value("tilt_jitter_deg", c.tilt_jitter_deg);
  c.centre_jitter_mm = j.value("centre_jitter_mm", c.centre_jitter_mm);
  c.blood = j.value("blood", c.blood);
  c.myocardium = j.value("myocardium", c.myocardium);
  c.background = j.value("background", c.background);
  c.texture_sigma = j.value("texture_sigma", c.texture_sigma);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.bias_amplitude = j.value("bias_amplitude", c.bias_amplitude);
  c.a3d_dim = j.value("a3d_dim", c.a3d_dim);
  c.a3d_spacing = j.value("a3d_spacing", c.a3d_spacing);
  c.sa_dim = j.value("sa_dim", c.sa_dim);
  c.sa_spacing = j.value("sa_spacing", c.sa_spacing);
  c.slice_gap = j.value("slice_gap", c.slice_gap);
  c.phase_min = j.value("phase_min", c.phase_min);
  c.phase_max = j.value("phase_max", c.phase_max);
  c.la_dim = j.value("la_dim", c.la_dim);
  c.la_spacing = j.value("la_spacing", c.la_spacing);
  c.la_gain = j.value("la_gain", c.la_gain);
  c.la_noise_sigma = j.value("la_noise_sigma", c.la_noise_sigma);
  return c;
}

double analytic_cavity_volume(const PhantomConfig& c) {
  const double rx = c.cavity_radii.x(), ry = c.cavity_radii.y(), rz = c.cavity_radii.z();
  const double zb = c.base_fraction * rz;
  return std::numbers::pi * rx * ry * ((zb + rz) - (zb * zb * zb + rz * rz * rz) / (3.0 * rz * rz));
}

namespace {

struct LvFrame {
  Vec3 c, u, v, a;  // centre; short-axis directions; long axis (apex -> base)
  Vec3 radii;
  double thickness;
  double zb;

  Vec3 local(const Vec3& w) const {
    const Vec3 d = w - c;
    return Vec3(d.dot(u), d.dot(v), d.dot(a));
  }
  static bool inside(const Vec3& l, const Vec3& r, double zb) {
    if (l.z() > zb) return false;
    const double q = (l.x() / r.x()) * (l.x() / r.x()) + (l.y() / r.y()) * (l.y() / r.y()) +
                     (l.z() / r.z()) * (l.z() / r.z());
    return q <= 1.0;
  }
  bool in_cavity(const Vec3& w) const { return inside(local(w), radii, zb); }
  bool in_outer(const Vec3& w) const {
    return inside(local(w), radii + Vec3::Constant(thickness), zb);
  }
};

void validate(const PhantomConfig& c) {
  if ((c.cavity_radii.array() <= 0.0).any()) throw InvalidInput("phantom cavity radii must be > 0");
  if (!(c.myo_thickness > 0.0)) throw InvalidInput("phantom myocardium thickness must be > 0");
  if (!(c.base_fraction > -1.0 && c.base_fraction < 1.0)) throw InvalidInput("base_fraction must be in (-1, 1)");
  if (c.a3d_dim < 8 || c.sa_dim < 8 || c.la_dim < 8) throw InvalidInput("phantom grids must be >= 8 px");
  if (!(c.a3d_spacing > 0.0 && c.sa_spacing > 0.0 && c.la_spacing > 0.0 && c.slice_gap > 0.0))
    throw InvalidInput("phantom spacings must be > 0");
  if (!(c.phase_min >= 0.0 && c.phase_max <= 1.0 && c.phase_min <= c.phase_max))
    throw InvalidInput("phantom slice phase range must lie in [0, 1]");
}

void blur_axis(std::vector<float>& data, const std::array<int, 3>& dims, int axis, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) s += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= s;
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims[0])
                                                          : static_cast<std::size_t>(dims[0]) * dims[1]);
  const int n = dims[static_cast<std::size_t>(axis)];
  std::vector<double> line(static_cast<std::size_t>(n));
  const std::size_t total = data.size();
  for (std::size_t base = 0; base < total; ++base) {
    // base must be the first element of a line along `axis`
    if ((base / stride) % static_cast<std::size_t>(n) != 0) continue;
    for (int i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = data[base + static_cast<std::size_t>(i) * stride];
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        const int p = std::clamp(i + j, 0, n - 1);
        acc += k[static_cast<std::size_t>(j + radius)] * line[static_cast<std::size_t>(p)];
      }
      data[base + static_cast<std::size_t>(i) * stride] = static_cast<float>(acc);
    }
  }
}

PlanePose centred_pose(const Vec3& centre, const Vec3& row, const Vec3& col, int dim, double spacing) {
  PlanePose p;
  p.row_dir = row.normalized();
  p.col_dir = col.normalized();
  const double h = 0.5 * (dim - 1) * spacing;
  p.origin = centre - h * p.row_dir - h * p.col_dir;
  return p;
}

PlanarImage sample_image(const Volume& vol, const PlanePose& pose, int dim, double spacing, Interp interp,
                         Role role, float fill) {
  PlanarImage img(dim, dim, Vec2(spacing, spacing), pose, role);
  for (int y = 0; y < dim; ++y)
    for (int x = 0; x < dim; ++x)
      img.at(x, y) = static_cast<float>(sample_volume(vol, img.world(Vec2(x, y)), interp).value_or(fill));
  return img;
}

}  // namespace

PhantomCase generate_phantom(const PhantomConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Orientation and placement.
  const double tilt = uni(rng) * cfg.tilt_jitter_deg * std::numbers::pi / 180.0;
  const double azim = uni(rng) * 2.0 * std::numbers::pi;
  const double spin = uni(rng) * 2.0 * std::numbers::pi;
  const Vec3 a(std::sin(tilt) * std::cos(azim), std::sin(tilt) * std::sin(azim), std::cos(tilt));
  const Vec3 ref = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = a.cross(ref).normalized();
  const Vec3 e2 = a.cross(e1);
  LvFrame lv;
  lv.a = a;
  lv.u = std::cos(spin) * e1 + std::sin(spin) * e2;
  lv.v = a.cross(lv.u);
  lv.radii = cfg.cavity_radii;
  lv.thickness = cfg.myo_thickness;
  lv.zb = cfg.base_fraction * cfg.cavity_radii.z();
  const double z_apex_outer = -(cfg.cavity_radii.z() + cfg.myo_thickness);
  const double z_mid = 0.5 * (lv.zb + z_apex_outer);
  Vec3 jitter;
  for (int i = 0; i < 3; ++i) jitter[i] = (2.0 * uni(rng) - 1.0) * cfg.centre_jitter_mm;
  lv.c = -z_mid * a + jitter;

  const double half = 0.5 * (cfg.a3d_dim - 1) * cfg.a3d_spacing;
  const Vec3 outer = cfg.cavity_radii + Vec3::Constant(cfg.myo_thickness);
  for (int cx = -1; cx <= 1; cx += 2)
    for (int cy = -1; cy <= 1; cy += 2)
      for (int cz = 0; cz < 2; ++cz) {
        const Vec3 corner = lv.c + cx * outer.x() * lv.u + cy * outer.y() * lv.v +
                            (cz ? lv.zb : -outer.z()) * lv.a;
        if ((corner.cwiseAbs().array() > half).any())
          throw InvalidInput("phantom geometry does not fit the A3D volume");
      }

  PhantomCase pc;
  pc.seed = seed;
  pc.config = cfg;
  pc.lv_centre = lv.c;
  pc.long_axis = a;
  pc.mv_point = lv.c + lv.zb * a;

  // A3D intensities and cavity mask.
  const std::array<int, 3> dims{cfg.a3d_dim, cfg.a3d_dim, cfg.a3d_dim};
  const Vec3 spacing = Vec3::Constant(cfg.a3d_spacing);
  const Vec3 origin = Vec3::Constant(-half);
  pc.a3d = Volume(dims, spacing, origin, Mat3::Identity(), Role::intensity);
  pc.a3d_seg = Volume(dims, spacing, origin, Mat3::Identity(), Role::mask);

  std::vector<float> texture(pc.a3d.size());
  for (float& t : texture) t = static_cast<float>(gauss(rng));
  for (int axis = 0; axis < 3; ++axis) blur_axis(texture, dims, axis, 2.0);
  {
    double s2 = 0.0;
    for (float t : texture) s2 += static_cast<double>(t) * t;
    const double sd = std::sqrt(s2 / static_cast<double>(texture.size()));
    const double scale = sd > 0.0 ? cfg.texture_sigma / sd : 0.0;
    for (float& t : texture) t = static_cast<float>(t * scale);
  }
  Vec3 bias_dir(gauss(rng), gauss(rng), gauss(rng));
  bias_dir.normalize();

  const double q = 0.25 * cfg.a3d_spacing;  // 2x2x2 sub-voxel offsets
  for (int k = 0; k < cfg.a3d_dim; ++k) {
    for (int j = 0; j < cfg.a3d_dim; ++j) {
      for (int i = 0; i < cfg.a3d_dim; ++i) {
        const Vec3 w = pc.a3d.world_from_index(Vec3(i, j, k));
        const std::size_t idx = pc.a3d.index(i, j, k);
        int n_cav = 0, n_myo = 0;
        for (int s = 0; s < 8; ++s) {
          const Vec3 p = w + Vec3((s & 1) ? q : -q, (s & 2) ? q : -q, (s & 4) ? q : -q);
          if (lv.in_cavity(p))
            ++n_cav;
          else if (lv.in_outer(p))
            ++n_myo;
        }
        const double f_cav = n_cav / 8.0, f_myo = n_myo / 8.0;
        const double bg = cfg.background + texture[idx];
        double v = f_cav * cfg.blood + f_myo * cfg.myocardium + (1.0 - f_cav - f_myo) * bg;
        v *= 1.0 + cfg.bias_amplitude * bias_dir.dot(w) / half;
        pc.a3d.samples()[idx] = static_cast<float>(v);
        pc.a3d_seg.samples()[idx] = lv.in_cavity(w) ? 1.0f : 0.0f;
      }
    }
  }
  for (float& v : pc.a3d.samples()) v += static_cast<float>(cfg.noise_sigma * gauss(rng));

  // Short-axis stack, base to apex.
  const double phase = cfg.phase_min + (cfg.phase_max - cfg.phase_min) * uni(rng);
  const double z0 = lv.zb + phase * cfg.slice_gap;
  const int n_slices = static_cast<int>(std::floor((z0 - z_apex_outer) / cfg.slice_gap)) + 1;
  pc.sa_stack.slice_gap = pc.sa_seg.slice_gap = cfg.slice_gap;
  const Vec3 sa_col = lv.u.cross(a);  // row x col = -a: positions grow towards the apex
  for (int s = 0; s < n_slices; ++s) {
    const Vec3 centre = lv.c + (z0 - s * cfg.slice_gap) * a;
    const PlanePose pose = centred_pose(centre, lv.u, sa_col, cfg.sa_dim, cfg.sa_spacing);
    pc.sa_stack.slices.push_back(
        sample_image(pc.a3d, pose, cfg.sa_dim, cfg.sa_spacing, Interp::linear, Role::intensity,
                     static_cast<float>(cfg.background)));
    pc.sa_seg.slices.push_back(
        sample_image(pc.a3d_seg, pose, cfg.sa_dim, cfg.sa_spacing, Interp::nearest, Role::mask, 0.0f));
  }
  pc.gt_translations.assign(static_cast<std::size_t>(n_slices), Vec2::Zero());

  // Long-axis views through the LV axis at 0, 60, 120 degrees.
  const Vec3 la_centre = lv.c + z_mid * a;
  const double rho_scale = std::sqrt(std::max(0.0, 1.0 - (lv.zb / cfg.cavity_radii.z()) * (lv.zb / cfg.cavity_radii.z())));
  for (int view = 0; view < kLongAxisViews; ++view) {
    const double th = view * std::numbers::pi / 3.0;
    const Vec3 r = std::cos(th) * lv.u + std::sin(th) * lv.v;
    const PlanePose pose = centred_pose(la_centre, r, -a, cfg.la_dim, cfg.la_spacing);
    PlanarImage img = sample_image(pc.a3d, pose, cfg.la_dim, cfg.la_spacing, Interp::linear, Role::intensity,
                                   static_cast<float>(cfg.background));
    for (float& v : img.samples()) v = static_cast<float>(cfg.la_gain * v + cfg.la_noise_sigma * gauss(rng));
    pc.la_images[static_cast<std::size_t>(view)] = std::move(img);
    // LA masks come from the analytic cavity at pixel centres (no voxel round trip).
    PlanarImage seg(cfg.la_dim, cfg.la_dim, Vec2(cfg.la_spacing, cfg.la_spacing), pose, Role::mask);
    for (int y = 0; y < cfg.la_dim; ++y)
      for (int x = 0; x < cfg.la_dim; ++x) seg.at(x, y) = lv.in_cavity(seg.world(Vec2(x, y))) ? 1.0f : 0.0f;
    pc.la_seg[static_cast<std::size_t>(view)] = std::move(seg);

    const double ex = std::cos(th) / cfg.cavity_radii.x();
    const double ey = std::sin(th) / cfg.cavity_radii.y();
    const double rho = rho_scale / std::sqrt(ex * ex + ey * ey);
    ViewLandmarks vl;
    vl.view = kViewNames[view];
    vl.apex = lv.c - cfg.cavity_radii.z() * a;
    vl.mitral = {pc.mv_point + rho * r, pc.mv_point - rho * r};
    pc.gt_landmarks.views.push_back(std::move(vl));
  }
  return pc;
}

PhantomCase inject_motion(const PhantomCase& clean, double sigma_mm, int group, std::uint64_t seed) {
  if (sigma_mm < 0.0) throw InvalidInput("motion sigma must be >= 0");
  if (group < 1 || group > 3) throw InvalidInput("breath-hold group size must be 1, 2 or 3");
  PhantomCase out = clean;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = out.sa_stack.size();
  out.gt_translations.resize(n, Vec2::Zero());
  for (std::size_t k = 0; k < n; k += static_cast<std::size_t>(group)) {
    Vec2 shift_mm = Vec2::Zero();
    if (sigma_mm > 0.0) {
      shift_mm.x() = sigma_mm * gauss(rng);
      shift_mm.y() = sigma_mm * gauss(rng);
    }
    const Vec2 px = shift_mm.cwiseQuotient(out.sa_stack[k].spacing());
    for (std::size_t s = k; s < std::min(n, k + static_cast<std::size_t>(group)); ++s) {
      out.sa_stack[s].pose().inplane_offset += px;
      out.sa_seg[s].pose().inplane_offset += px;
      out.gt_translations[s] += px;
    }
  }
  return out;
}

double beyond_valve_mm(const PhantomCase& c, const Vec3& w) { return (w - c.mv_point).dot(c.long_axis); }

std::vector<Vec2> view_landmark_pixels(const PhantomCase& c, int view) {
  const PlanarImage& img = c.la_images[static_cast<std::size_t>(view)];
  const ViewLandmarks& vl = c.gt_landmarks.views[static_cast<std::size_t>(view)];
  std::vector<Vec2> out{img.pixel(vl.apex)};
  for (const Vec3& m : vl.mitral) out.push_back(img.pixel(m));
  return out;
}

int sa3d_plane_of_slice(const SliceStack& stack, const Volume& upsampled, std::size_t k) {
  const double pos = std::abs(stack.positions()[k]);
  return static_cast<int>(std::lround(pos / upsampled.spacing().z()));
}

namespace {

// Square (Chebyshev) dilation of a binary mask.
std::vector<std::uint8_t> dilate(const PlanarImage& mask, int r) {
  const int w = mask.width(), h = mask.height();
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(w) * h, 0), out(rows.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y) < 0.5f) continue;
      for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) rows[static_cast<std::size_t>(y) * w + xx] = 1;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!rows[static_cast<std::size_t>(y) * w + x]) continue;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) out[static_cast<std::size_t>(yy) * w + x] = 1;
    }
  return out;
}

struct PlaneEntry {
  std::uint32_t source;
  int plane;
  const PlanarImage* mask;
  std::vector<Vec2> landmarks;
  std::vector<std::uint32_t> fg, bg;  // candidate centres, y * w + x
};

}  // namespace

TrainingSet build_training_set(const std::vector<const PhantomCase*>& cases, ModelKind kind, std::size_t n_samples,
                               const TrainingOptions& opt) {
  if (cases.empty()) throw InvalidInput("build_training_set: no cases");
  if (n_samples == 0) throw InvalidInput("build_training_set: n_samples must be > 0");
  TrainingSet ts;
  ts.meta = default_meta(kind);
  const ModelMeta& meta = ts.meta;
  const int view = kind == ModelKind::la2ch ? 0 : kind == ModelKind::la3ch ? 1 : kind == ModelKind::la4ch ? 2 : -1;

  std::vector<PlaneEntry> entries;
  if (view >= 0) {
    ts.sources.resize(cases.size());
    parallel_for(cases.size(), opt.threads, [&](std::size_t i) {
      ts.sources[i] = compute_feature_stack(cases[i]->la_images[static_cast<std::size_t>(view)], meta.features);
    });
    for (std::size_t i = 0; i < cases.size(); ++i)
      entries.push_back({static_cast<std::uint32_t>(i), 0, &cases[i]->la_seg[static_cast<std::size_t>(view)],
                         view_landmark_pixels(*cases[i], view), {}, {}});
  } else if (kind == ModelKind::sa2d) {
    std::vector<std::pair<std::size_t, std::size_t>> slices;
    for (std::size_t i = 0; i < cases.size(); ++i)
      for (std::size_t k = 0; k < cases[i]->sa_stack.size(); ++k) slices.emplace_back(i, k);
    ts.sources.resize(slices.size());
    parallel_for(slices.size(), opt.threads, [&](std::size_t s) {
      ts.sources[s] = compute_feature_stack(cases[slices[s].first]->sa_stack[slices[s].second], meta.features);
    });
    for (std::size_t s = 0; s < slices.size(); ++s)
      entries.push_back({static_cast<std::uint32_t>(s), 0, &cases[slices[s].first]->sa_seg[slices[s].second], {}, {}, {}});
  } else {
    for (const PhantomCase* c : cases)
      for (const Vec2& t : c->gt_translations)
        if (t != Vec2::Zero()) throw InvalidInput("SA-3D training requires motion-free cases");
    ts.sources.resize(cases.size());
    std::vector<Volume> vols(cases.size());
    parallel_for(cases.size(), opt.threads, [&](std::size_t i) {
      vols[i] = upsample_z(cases[i]->sa_stack, meta.z_spacing_mm);
      ts.sources[i] = compute_feature_stack(vols[i], meta.features, 1);
    });
    for (std::size_t i = 0; i < cases.size(); ++i)
      for (std::size_t k = 0; k < cases[i]->sa_stack.size(); ++k)
        entries.push_back({static_cast<std::uint32_t>(i), sa3d_plane_of_slice(cases[i]->sa_stack, vols[i], k),
                           &cases[i]->sa_seg[k], {}, {}, {}});
  }

  const int h = meta.label_size / 2;
  std::size_t n_centres = 0;
  for (PlaneEntry& e : entries) {
    const int w = e.mask->width(), ht = e.mask->height();
    const auto dil = dilate(*e.mask, opt.dilation_px);
    for (int y = h; y + (meta.label_size - h) <= ht; ++y)
      for (int x = h; x + (meta.label_size - h) <= w; ++x) {
        const auto idx = static_cast<std::uint32_t>(y * w + x);
        (dil[idx] ? e.fg : e.bg).push_back(idx);
        ++n_centres;
      }
  }
  if (n_samples > n_centres * static_cast<std::size_t>(std::max(1, opt.max_per_center)))
    throw InvalidInput("build_training_set: " + std::to_string(n_samples) + " samples requested but only " +
                       std::to_string(n_centres) + " distinct centres available");
  std::vector<std::size_t> with_fg, with_bg;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].fg.empty()) with_fg.push_back(i);
    if (!entries[i].bg.empty()) with_bg.push_back(i);
  }
  if (with_fg.empty() || with_bg.empty())
    throw InvalidInput("build_training_set: data lacks foreground or background centres");

  std::mt19937_64 rng(opt.seed);
  ts.samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const bool fg = i % 2 == 0;
    const auto& pool = fg ? with_fg : with_bg;
    const PlaneEntry& e = entries[pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]];
    const auto& centres = fg ? e.fg : e.bg;
    const std::uint32_t idx = centres[std::uniform_int_distribution<std::size_t>(0, centres.size() - 1)(rng)];
    TrainSample s;
    s.source = e.source;
    s.plane = e.plane;
    s.cx = static_cast<int>(idx % static_cast<std::uint32_t>(e.mask->width()));
    s.cy = static_cast<int>(idx / static_cast<std::uint32_t>(e.mask->width()));
    s.label = extract_label(*e.mask, s.cx, s.cy, meta.label_size);
    for (const Vec2& lm : e.landmarks) {
      s.disp.push_back(static_cast<float>(lm.x() - s.cx));
      s.disp.push_back(static_cast<float>(lm.y() - s.cy));
    }
    if (opt.augment) s = augment(s, *e.mask, meta.label_size, rng);
    ts.samples.push_back(std::move(s));
  }
  ts.meta.provenance["training_samples"] = n_samples;
  ts.meta.provenance["training_cases"] = cases.size();
  ts.meta.provenance["training_seed"] = opt.seed;
  return ts;
}

void write_case(const std::filesystem::path& dir, const PhantomCase& motion, const PhantomCase& clean) {
  std::filesystem::create_directories(dir);
  write_volume(dir / "a3d", motion.a3d);
  write_volume(dir / "a3d_seg", motion.a3d_seg);
  write_stack(dir / "sa", motion.sa_stack);
  write_stack(dir / "sa_seg", motion.sa_seg);
  write_stack(dir / "sa_clean", clean.sa_stack);
  write_stack(dir / "sa_seg_clean", clean.sa_seg);
  for (int v = 0; v < kLongAxisViews; ++v) {
    write_image(dir / (std::string("la_") + kViewNames[v]), motion.la_images[static_cast<std::size_t>(v)]);
    write_image(dir / (std::string("la_seg_") + kViewNames[v]), motion.la_seg[static_cast<std::size_t>(v)]);
  }
  nlohmann::json tr = nlohmann::json::array();
  for (const Vec2& t : motion.gt_translations) tr.push_back(vec_to_json(t));
  nlohmann::json truth{{"version", 1},
                       {"seed", motion.seed},
                       {"config", to_json(motion.config)},
                       {"translations_px", tr},
                       {"landmarks", to_json(motion.gt_landmarks)},
                       {"lv_centre", vec_to_json(motion.lv_centre)},
                       {"long_axis", vec_to_json(motion.long_axis)},
                       {"mv_point", vec_to_json(motion.mv_point)}};
  write_text_file(dir / "truth.json", truth.dump(2) + "\n");
}

PhantomCase read_case(const std::filesystem::path& dir, bool clean) {
  PhantomCase pc;
  nlohmann::json truth;
  try {
    truth = nlohmann::json::parse(read_text_file(dir / "truth.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("truth.json: " + std::string(e.what()));
  }
  pc.seed = truth.at("seed").get<std::uint64_t>();
  pc.config = phantom_config_from_json(truth.at("config"));
  pc.gt_landmarks = landmarks_from_json(truth.at("landmarks"));
  pc.lv_centre = vec3_from_json(truth.at("lv_centre"));
  pc.long_axis = vec3_from_json(truth.at("long_axis"));
  pc.mv_point = vec3_from_json(truth.at("mv_point"));
  pc.a3d = read_volume(dir / "a3d");
  pc.a3d_seg = read_volume(dir / "a3d_seg");
  pc.sa_stack = read_stack(dir / (clean ? "sa_clean" : "sa"));
  pc.sa_seg = read_stack(dir / (clean ? "sa_seg_clean" : "sa_seg"));
  for (int v = 0; v < kLongAxisViews; ++v) {
    pc.la_images[static_cast<std::size_t>(v)] = read_image(dir / (std::string("la_") + kViewNames[v]));
    pc.la_seg[static_cast<std::size_t>(v)] = read_image(dir / (std::string("la_seg_") + kViewNames[v]));
  }
  pc.gt_translations.assign(pc.sa_stack.size(), Vec2::Zero());
  if (!clean) {
    const auto& tr = truth.at("translations_px");
    if (tr.size() != pc.sa_stack.size()) throw FormatError("truth.json translation count does not match the stack");
    for (std::size_t k = 0; k < tr.size(); ++k) pc.gt_translations[k] = vec2_from_json(tr[k]);
  }
  return pc;
}

}  // namespace cmc
