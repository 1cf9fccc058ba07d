#include "cmc/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "cmc/error.hpp"
#include "cmc/landmarks.hpp"
#include "cmc/parallel.hpp"
#include "cmc/resample.hpp"

namespace cmc {

ContourSet extract_contour(const PlanarImage& mask) {
  ContourSet c;
  const int w = mask.width(), h = mask.height();
  auto fg = [&](int x, int y) { return mask.contains(x, y) && mask.at(x, y) >= 0.5f; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!fg(x, y)) continue;
      if (fg(x - 1, y) && fg(x + 1, y) && fg(x, y - 1) && fg(x, y + 1)) continue;
      c.pixels.emplace_back(x, y);
      c.points_mm.emplace_back(x * mask.spacing().x(), y * mask.spacing().y());
    }
  return c;
}

ContourSet contour_from_points(std::vector<Vec2> points_mm) {
  ContourSet c;
  c.points_mm = std::move(points_mm);
  return c;
}

double dice(const PlanarImage& a, const PlanarImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw InvalidInput("dice: masks differ in size");
  std::size_t na = 0, nb = 0, nab = 0;
  const auto sa = a.samples();
  const auto sb = b.samples();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const bool pa = sa[i] >= 0.5f, pb = sb[i] >= 0.5f;
    na += pa;
    nb += pb;
    nab += pa && pb;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(nab) / static_cast<double>(na + nb);
}

namespace {

// Exact nearest-neighbour distances from every point of a to the set b.
// b is sorted by x; the scan stops once the x gap alone exceeds the best
// distance found so far.
std::vector<double> nearest_distances(const ContourSet& a, const ContourSet& b) {
  if (a.empty() || b.empty()) throw UndefinedMetric("contour distance: empty contour");
  std::vector<Vec2> sb = b.points_mm;
  std::sort(sb.begin(), sb.end(), [](const Vec2& p, const Vec2& q) {
    return p.x() < q.x() || (p.x() == q.x() && p.y() < q.y());
  });
  std::vector<double> out;
  out.reserve(a.size());
  for (const Vec2& p : a.points_mm) {
    const auto start = std::lower_bound(sb.begin(), sb.end(), p.x(), [](const Vec2& q, double x) { return q.x() < x; });
    double best2 = std::numeric_limits<double>::infinity();
    for (auto it = start; it != sb.end(); ++it) {
      const double dx = it->x() - p.x();
      if (dx * dx > best2) break;
      const double dy = it->y() - p.y();
      best2 = std::min(best2, dx * dx + dy * dy);
    }
    for (auto it = start; it != sb.begin();) {
      --it;
      const double dx = it->x() - p.x();
      if (dx * dx > best2) break;
      const double dy = it->y() - p.y();
      best2 = std::min(best2, dx * dx + dy * dy);
    }
    out.push_back(std::sqrt(best2));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double mad(const ContourSet& a, const ContourSet& b) {
  return 0.5 * (mean(nearest_distances(a, b)) + mean(nearest_distances(b, a)));
}

double hausdorff(const ContourSet& a, const ContourSet& b) {
  const auto ab = nearest_distances(a, b);
  const auto ba = nearest_distances(b, a);
  return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
}

nlohmann::json to_json(const EvalConfig& c) {
  return {{"corrupted_threshold_mm", c.corrupted_threshold_mm},
          {"radius_px", c.radius_px},
          {"radius3d_mm", c.radius3d_mm},
          {"step3d_mm", c.step3d_mm}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig c) {
  c.corrupted_threshold_mm = j.value("corrupted_threshold_mm", c.corrupted_threshold_mm);
  c.radius_px = j.value("radius_px", c.radius_px);
  c.radius3d_mm = j.value("radius3d_mm", c.radius3d_mm);
  c.step3d_mm = j.value("step3d_mm", c.step3d_mm);
  return c;
}

Translation3D register_reference(const Volume& reference, const SliceStack& stack, const EvalConfig& cfg) {
  // Slice pixels (every second one in each direction) against the reference.
  PointSamples pts;
  pts.n_groups = 1;
  for (const PlanarImage& s : stack.slices)
    for (int y = 0; y < s.height(); y += 2)
      for (int x = 0; x < s.width(); x += 2) {
        pts.points.push_back(s.world(Vec2(x, y)));
        pts.values.push_back(s.at(x, y));
        pts.group.push_back(0);
      }
  Register3DConfig r3;
  r3.radius_mm = cfg.radius3d_mm;
  r3.step_mm = cfg.step3d_mm;
  r3.threads = cfg.threads;
  Translation3D t = register_translation_3d(pts, reference, r3);
  // stack(w) ~ reference(w + t'), so the reference moves by -t'.
  t.t = -t.t;
  return t;
}

PlanarImage reference_section(const Volume& reference, const Vec3& t, const PlaneGrid& grid) {
  PlanarImage out(grid.width, grid.height, grid.spacing, grid.pose, Role::mask);
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x)
      out.at(x, y) = static_cast<float>(sample_volume(reference, out.world(Vec2(x, y)) - t, Interp::nearest).value_or(0.0));
  return out;
}

namespace {

bool mask_empty(const PlanarImage& m) {
  return std::none_of(m.samples().begin(), m.samples().end(), [](float v) { return v >= 0.5f; });
}

}  // namespace

CorruptionResult detect_corrupted_slices(const Volume& reference, const Vec3& reference_t, const SliceStack& stack_seg,
                                         const EvalConfig& cfg) {
  const std::size_t n = stack_seg.size();
  CorruptionResult r;
  r.misalignment_mm.assign(n, std::numeric_limits<double>::quiet_NaN());
  r.translation_px.assign(n, Vec2::Zero());
  std::vector<std::uint8_t> ok(n, 0);
  Register2DConfig r2;
  r2.radius = cfg.radius_px;
  parallel_for(n, cfg.threads, [&](std::size_t k) {
    const PlanarImage& s = stack_seg[k];
    if (mask_empty(s)) return;
    const PlanarImage sec = reference_section(reference, reference_t, s.grid());
    const Translation2D t = register_translation_2d(sec, s, {}, r2);
    if (!t.converged) return;
    r.translation_px[k] = t.t;
    r.misalignment_mm[k] = t.t.cwiseProduct(s.spacing()).norm();
    ok[k] = 1;
  });
  for (std::size_t k = 0; k < n; ++k) {
    if (!ok[k])
      r.excluded.push_back(k);
    else if (r.misalignment_mm[k] > cfg.corrupted_threshold_mm)
      r.corrupted.push_back(k);
  }
  return r;
}

EvalReport evaluate_correction(const Volume& reference_seg, const SliceStack& stack_seg_before,
                               const std::vector<Vec2>& translations, const EvalConfig& cfg) {
  if (translations.size() != stack_seg_before.size())
    throw InvalidInput("evaluate_correction: one translation per slice is required");
  stack_seg_before.validate();
  SliceStack after = stack_seg_before;
  for (std::size_t k = 0; k < after.size(); ++k) apply_translation(after, k, translations[k]);

  EvalReport rep;
  const Translation3D tb = register_reference(reference_seg, stack_seg_before, cfg);
  const Translation3D ta = register_reference(reference_seg, after, cfg);
  if (!tb.converged || !ta.converged) throw UndefinedMetric("reference registration failed (no overlap)");
  rep.reference_t_before = tb.t;
  rep.reference_t_after = ta.t;
  const CorruptionResult cr = detect_corrupted_slices(reference_seg, tb.t, stack_seg_before, cfg);
  rep.misalignment_mm = cr.misalignment_mm;
  rep.corrupted = cr.corrupted;
  rep.excluded = cr.excluded;

  std::vector<std::optional<SliceEval>> per(cr.corrupted.size());
  parallel_for(cr.corrupted.size(), cfg.threads, [&](std::size_t i) {
    const std::size_t k = cr.corrupted[i];
    const PlanarImage ref_b = reference_section(reference_seg, tb.t, stack_seg_before[k].grid());
    const PlanarImage ref_a = reference_section(reference_seg, ta.t, after[k].grid());
    const ContourSet cb = extract_contour(stack_seg_before[k]);
    const ContourSet ca = extract_contour(after[k]);
    const ContourSet crb = extract_contour(ref_b);
    const ContourSet cra = extract_contour(ref_a);
    if (cb.empty() || ca.empty() || crb.empty() || cra.empty()) return;
    SliceEval e;
    e.index = k;
    e.misalignment_mm = cr.misalignment_mm[k];
    e.mad_before = mad(crb, cb);
    e.mad_after = mad(cra, ca);
    e.hd_before = hausdorff(crb, cb);
    e.hd_after = hausdorff(cra, ca);
    e.dsc_before = dice(ref_b, stack_seg_before[k]);
    e.dsc_after = dice(ref_a, after[k]);
    e.improved = e.mad_after < e.mad_before;
    per[i] = e;
  });
  for (std::size_t i = 0; i < per.size(); ++i) {
    if (per[i])
      rep.slices.push_back(*per[i]);
    else
      rep.excluded.push_back(cr.corrupted[i]);
  }
  std::sort(rep.excluded.begin(), rep.excluded.end());

  const double n = static_cast<double>(rep.slices.size());
  if (n > 0) {
    double improved = 0.0;
    auto rel = [](double before, double after) { return before != 0.0 ? (before - after) / before : 0.0; };
    for (const SliceEval& e : rep.slices) {
      rep.mad_before += e.mad_before / n;
      rep.mad_after += e.mad_after / n;
      rep.hd_before += e.hd_before / n;
      rep.hd_after += e.hd_after / n;
      rep.dsc_before += e.dsc_before / n;
      rep.dsc_after += e.dsc_after / n;
      rep.mad_impr += rel(e.mad_before, e.mad_after) / n;
      rep.hd_impr += rel(e.hd_before, e.hd_after) / n;
      rep.dsc_impr += (e.dsc_before != 0.0 ? (e.dsc_after - e.dsc_before) / e.dsc_before : 0.0) / n;
      improved += e.improved ? 1.0 : 0.0;
    }
    rep.improved_ratio = improved / n;
  }
  rep.provenance["eval_config"] = to_json(cfg);
  return rep;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json slices = nlohmann::json::array();
  for (const SliceEval& e : r.slices)
    slices.push_back({{"index", e.index},
                      {"misalignment_mm", e.misalignment_mm},
                      {"mad_before", e.mad_before},
                      {"mad_after", e.mad_after},
                      {"hd_before", e.hd_before},
                      {"hd_after", e.hd_after},
                      {"dsc_before", e.dsc_before},
                      {"dsc_after", e.dsc_after},
                      {"improved", e.improved}});
  nlohmann::json mis = nlohmann::json::array();
  for (double m : r.misalignment_mm) mis.push_back(std::isfinite(m) ? nlohmann::json(m) : nlohmann::json());
  return {{"version", 1},
          {"summary",
           {{"n_slices", r.slices.size()},
            {"mad_before_mm", r.mad_before},
            {"mad_after_mm", r.mad_after},
            {"mad_mean_impr", r.mad_impr},
            {"hd_before_mm", r.hd_before},
            {"hd_after_mm", r.hd_after},
            {"hd_mean_impr", r.hd_impr},
            {"dsc_before", r.dsc_before},
            {"dsc_after", r.dsc_after},
            {"dsc_mean_impr", r.dsc_impr},
            {"improved_ratio", r.improved_ratio}}},
          {"corrupted", r.corrupted},
          {"excluded", r.excluded},
          {"misalignment_mm", mis},
          {"reference_t_before_mm", vec_to_json(r.reference_t_before)},
          {"reference_t_after_mm", vec_to_json(r.reference_t_after)},
          {"slices", slices},
          {"provenance", r.provenance}};
}

std::string report_json_text(const EvalReport& r) { return to_json(r).dump(2) + "\n"; }

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "index,misalignment_mm,mad_before,mad_after,hd_before,hd_after,dsc_before,dsc_after,improved\n";
  for (const SliceEval& e : r.slices) {
    os << e.index << ',' << fmt("%.6f", e.misalignment_mm) << ',' << fmt("%.6f", e.mad_before) << ','
       << fmt("%.6f", e.mad_after) << ',' << fmt("%.6f", e.hd_before) << ',' << fmt("%.6f", e.hd_after) << ','
       << fmt("%.6f", e.dsc_before) << ',' << fmt("%.6f", e.dsc_after) << ',' << (e.improved ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string report_markdown(const EvalReport& r) {
  std::ostringstream os;
  os << "| Stack | MAD Mean (mm) | MAD Mean Impr. | HD Mean (mm) | HD Mean Impr. | DSC Mean | DSC Mean Impr. | "
        "Ratio of improved slices |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  os << "| Uncorrected | " << fmt("%.2f", r.mad_before) << " | - | " << fmt("%.2f", r.hd_before) << " | - | "
     << fmt("%.3f", r.dsc_before) << " | - | - |\n";
  os << "| Corrected | " << fmt("%.2f", r.mad_after) << " | " << fmt("%.1f%%", 100.0 * r.mad_impr) << " | "
     << fmt("%.2f", r.hd_after) << " | " << fmt("%.1f%%", 100.0 * r.hd_impr) << " | " << fmt("%.3f", r.dsc_after)
     << " | " << fmt("%.1f%%", 100.0 * r.dsc_impr) << " | " << fmt("%.1f%%", 100.0 * r.improved_ratio) << " |\n";
  os << "\nCorrupted slices evaluated: " << r.slices.size() << "\n";
  return os.str();
}

}  // namespace cmc
