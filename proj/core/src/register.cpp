#include "cmc/register.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cmc/error.hpp"
#include "cmc/parallel.hpp"
#include "cmc/resample.hpp"

namespace cmc {

const char* metric_name(Metric m) { return m == Metric::ncc ? "ncc" : "nmi"; }

Metric metric_from_name(const std::string& name) {
  if (name == "ncc") return Metric::ncc;
  if (name == "nmi") return Metric::nmi;
  throw InvalidInput("unknown metric '" + name + "'");
}

namespace {

void check_sizes(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask) {
  if (a.size() != b.size() || (!mask.empty() && mask.size() != a.size()))
    throw InvalidInput("metric inputs differ in size");
}

bool selected(std::span<const std::uint8_t> mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

}  // namespace

double ncc(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask) {
  check_sizes(a, b, mask);
  double sa = 0.0, sb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!selected(mask, i)) continue;
    sa += a[i];
    sb += b[i];
    ++n;
  }
  if (n < kNccMinSamples) throw UndefinedMetric("ncc: fewer than 16 overlapping samples");
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double cab = 0.0, caa = 0.0, cbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!selected(mask, i)) continue;
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cab += da * db;
    caa += da * da;
    cbb += db * db;
  }
  if (!(caa > 0.0) || !(cbb > 0.0)) throw UndefinedMetric("ncc: zero variance");
  return std::clamp(cab / std::sqrt(caa * cbb), -1.0, 1.0);
}

double JointHistogram::total() const {
  double t = 0.0;
  for (double c : counts) t += c;
  return t;
}

JointHistogram joint_histogram(std::span<const float> a, std::span<const float> b,
                               std::span<const std::uint8_t> mask, int bins) {
  check_sizes(a, b, mask);
  if (bins < 2) throw InvalidInput("nmi: need at least 2 bins");
  float amin = std::numeric_limits<float>::infinity(), amax = -amin;
  float bmin = amin, bmax = -amin;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!selected(mask, i)) continue;
    amin = std::min(amin, a[i]);
    amax = std::max(amax, a[i]);
    bmin = std::min(bmin, b[i]);
    bmax = std::max(bmax, b[i]);
  }
  JointHistogram h;
  h.bins = bins;
  h.counts.assign(static_cast<std::size_t>(bins) * bins, 0.0);
  auto bin_of = [bins](float v, float lo, float hi) {
    if (!(hi > lo)) return 0;
    const auto k = static_cast<int>(std::floor((static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo) * bins));
    return std::clamp(k, 0, bins - 1);
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!selected(mask, i)) continue;
    h.counts[static_cast<std::size_t>(bin_of(a[i], amin, amax)) * bins + bin_of(b[i], bmin, bmax)] += 1.0;
  }
  return h;
}

double nmi(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask, int bins) {
  check_sizes(a, b, mask);
  std::size_t n = 0;
  float amin = std::numeric_limits<float>::infinity(), amax = -amin;
  float bmin = amin, bmax = -amin;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!selected(mask, i)) continue;
    ++n;
    amin = std::min(amin, a[i]);
    amax = std::max(amax, a[i]);
    bmin = std::min(bmin, b[i]);
    bmax = std::max(bmax, b[i]);
  }
  if (n < kNmiMinSamples) throw UndefinedMetric("nmi: fewer than 64 overlapping samples");
  if (!(amax > amin) || !(bmax > bmin)) throw UndefinedMetric("nmi: constant input");
  const JointHistogram h = joint_histogram(a, b, mask, bins);
  const double total = h.total();
  std::vector<double> pa(static_cast<std::size_t>(bins), 0.0), pb(static_cast<std::size_t>(bins), 0.0);
  double hab = 0.0;
  for (int i = 0; i < bins; ++i) {
    for (int j = 0; j < bins; ++j) {
      const double c = h.counts[static_cast<std::size_t>(i) * bins + j];
      if (c <= 0.0) continue;
      const double p = c / total;
      hab -= p * std::log(p);
      pa[static_cast<std::size_t>(i)] += p;
      pb[static_cast<std::size_t>(j)] += p;
    }
  }
  double ha = 0.0, hb = 0.0;
  for (int i = 0; i < bins; ++i) {
    if (pa[static_cast<std::size_t>(i)] > 0.0) ha -= pa[static_cast<std::size_t>(i)] * std::log(pa[static_cast<std::size_t>(i)]);
    if (pb[static_cast<std::size_t>(i)] > 0.0) hb -= pb[static_cast<std::size_t>(i)] * std::log(pb[static_cast<std::size_t>(i)]);
  }
  if (!(hab > 0.0)) throw UndefinedMetric("nmi: zero joint entropy");
  return (ha + hb) / hab;
}

double similarity(Metric m, std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                  int nmi_bins) {
  return m == Metric::ncc ? ncc(a, b, mask) : nmi(a, b, mask, nmi_bins);
}

namespace {

void check_common_grid(const PlanarImage& moving, const PlanarImage& fixed, std::span<const std::uint8_t> support) {
  if (moving.width() != fixed.width() || moving.height() != fixed.height())
    throw InvalidInput("registration images must share a grid");
  if (!support.empty() && support.size() != fixed.size()) throw InvalidInput("support mask size mismatch");
}

// Metric for an integer shift; buffers are reused across calls.
std::optional<double> integer_metric(const PlanarImage& moving, const PlanarImage& fixed,
                                     std::span<const std::uint8_t> support, int tx, int ty, Metric metric,
                                     int nmi_bins, std::vector<float>& fa, std::vector<float>& mb) {
  fa.clear();
  mb.clear();
  const int w = fixed.width();
  const int h = fixed.height();
  for (int y = std::max(0, ty); y < std::min(h, h + ty); ++y) {
    for (int x = std::max(0, tx); x < std::min(w, w + tx); ++x) {
      const std::size_t q = static_cast<std::size_t>(y) * w + x;
      if (!support.empty() && !support[q]) continue;
      fa.push_back(fixed.at(x, y));
      mb.push_back(moving.at(x - tx, y - ty));
    }
  }
  try {
    return similarity(metric, fa, mb, {}, nmi_bins);
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

}  // namespace

std::optional<double> metric_at_offset(const PlanarImage& moving, const PlanarImage& fixed,
                                       std::span<const std::uint8_t> support, const Vec2& t, Metric metric,
                                       int nmi_bins) {
  check_common_grid(moving, fixed, support);
  std::vector<float> fa, mb;
  for (int y = 0; y < fixed.height(); ++y) {
    for (int x = 0; x < fixed.width(); ++x) {
      const std::size_t q = static_cast<std::size_t>(y) * fixed.width() + x;
      if (!support.empty() && !support[q]) continue;
      const auto v = sample_planar(moving, Vec2(x, y) - t, Interp::linear);
      if (!v) continue;
      fa.push_back(fixed.at(x, y));
      mb.push_back(static_cast<float>(*v));
    }
  }
  try {
    return similarity(metric, fa, mb, {}, nmi_bins);
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

Translation2D register_translation_2d(const PlanarImage& moving, const PlanarImage& fixed,
                                      std::span<const std::uint8_t> support, const Register2DConfig& cfg) {
  check_common_grid(moving, fixed, support);
  if (cfg.radius < 1) throw InvalidInput("registration radius must be >= 1");
  const int r = cfg.radius;
  // One extra ring so the parabola has neighbours at the search boundary.
  const int ext = r + 1;
  const int eside = 2 * ext + 1;
  std::vector<std::optional<double>> values(static_cast<std::size_t>(eside) * eside);
  std::vector<float> fa, mb;
  auto value = [&](int tx, int ty) -> std::optional<double>& {
    return values[static_cast<std::size_t>(ty + ext) * eside + (tx + ext)];
  };
  bool any = false;
  int bx = 0, by = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int ty = -r; ty <= r; ++ty) {
    for (int tx = -r; tx <= r; ++tx) {
      auto v = integer_metric(moving, fixed, support, tx, ty, cfg.metric, cfg.nmi_bins, fa, mb);
      value(tx, ty) = v;
      if (v && *v > best) {
        best = *v;
        bx = tx;
        by = ty;
        any = true;
      }
    }
  }
  Translation2D out;
  if (!any) {
    out.metric_value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.t = Vec2(bx, by);
  out.metric_value = best;
  out.converged = true;
  // A perfect score at the integer optimum is an exact match; no refinement.
  const double perfect = cfg.metric == Metric::ncc ? 1.0 : 2.0;
  if (cfg.subpixel && best < perfect - 1e-9) {
    auto neighbour = [&](int tx, int ty) {
      auto& slot = value(tx, ty);
      if (!slot && (std::abs(tx) > r || std::abs(ty) > r))
        slot = integer_metric(moving, fixed, support, tx, ty, cfg.metric, cfg.nmi_bins, fa, mb);
      return slot;
    };
    auto refine = [&](std::optional<double> lo, std::optional<double> hi) {
      if (!lo || !hi) return 0.0;
      const double den = *lo - 2.0 * best + *hi;
      if (!(den < 0.0)) return 0.0;
      return std::clamp(0.5 * (*lo - *hi) / den, -0.5, 0.5);
    };
    out.t.x() += refine(neighbour(bx - 1, by), neighbour(bx + 1, by));
    out.t.y() += refine(neighbour(bx, by - 1), neighbour(bx, by + 1));
  }
  return out;
}

PointSamples samples_from_planes(const std::vector<PlanarImage>& planes) {
  PointSamples s;
  s.n_groups = static_cast<int>(planes.size());
  for (std::size_t g = 0; g < planes.size(); ++g) {
    const PlanarImage& p = planes[g];
    for (int y = 0; y < p.height(); ++y) {
      for (int x = 0; x < p.width(); ++x) {
        s.points.push_back(p.world(Vec2(x, y)));
        s.values.push_back(p.at(x, y));
        s.group.push_back(static_cast<int>(g));
      }
    }
  }
  return s;
}

PointSamples samples_from_volume(const Volume& vol, int stride) {
  if (stride < 1) throw InvalidInput("stride must be >= 1");
  PointSamples s;
  s.n_groups = 1;
  for (int k = 0; k < vol.nz(); k += stride)
    for (int j = 0; j < vol.ny(); j += stride)
      for (int i = 0; i < vol.nx(); i += stride) {
        s.points.push_back(vol.world_from_index(Vec3(i, j, k)));
        s.values.push_back(vol.at(i, j, k));
        s.group.push_back(0);
      }
  return s;
}

std::optional<double> objective_3d(const PointSamples& moving, const Volume& fixed, const Vec3& t, Metric metric,
                                   int nmi_bins) {
  std::vector<std::vector<float>> ma(static_cast<std::size_t>(moving.n_groups));
  std::vector<std::vector<float>> fb(static_cast<std::size_t>(moving.n_groups));
  for (std::size_t i = 0; i < moving.points.size(); ++i) {
    const auto v = sample_volume(fixed, moving.points[i] + t, Interp::linear);
    if (!v) continue;
    const auto g = static_cast<std::size_t>(moving.group[i]);
    ma[g].push_back(moving.values[i]);
    fb[g].push_back(static_cast<float>(*v));
  }
  double sum = 0.0;
  bool any = false;
  for (std::size_t g = 0; g < ma.size(); ++g) {
    try {
      sum += similarity(metric, ma[g], fb[g], {}, nmi_bins);
      any = true;
    } catch (const UndefinedMetric&) {
    }
  }
  if (!any) return std::nullopt;
  return sum;
}

Translation3D register_translation_3d(const PointSamples& moving, const Volume& fixed, const Register3DConfig& cfg) {
  if (!(cfg.step_mm > 0.0) || !(cfg.radius_mm >= 0.0)) throw InvalidInput("invalid 3D search radius/step");
  if (moving.points.size() != moving.values.size() || moving.points.size() != moving.group.size())
    throw InvalidInput("point sample arrays differ in size");
  Translation3D out;
  Vec3 centre = Vec3::Zero();
  bool found = false;
  double best_val = -std::numeric_limits<double>::infinity();
  const double steps[3] = {4.0 * cfg.step_mm, 2.0 * cfg.step_mm, cfg.step_mm};
  for (int level = 0; level < 3; ++level) {
    const double s = steps[level];
    std::vector<Vec3> cands;
    if (level == 0) {
      const int n = static_cast<int>(std::floor(cfg.radius_mm / s + 1e-9));
      for (int z = -n; z <= n; ++z)
        for (int y = -n; y <= n; ++y)
          for (int x = -n; x <= n; ++x) cands.emplace_back(x * s, y * s, z * s);
    } else {
      for (int z = -2; z <= 2; ++z)
        for (int y = -2; y <= 2; ++y)
          for (int x = -2; x <= 2; ++x) {
            const Vec3 c = centre + Vec3(x * s, y * s, z * s);
            if (c.cwiseAbs().maxCoeff() <= cfg.radius_mm + 1e-9) cands.push_back(c);
          }
    }
    std::vector<std::optional<double>> vals(cands.size());
    parallel_for(cands.size(), cfg.threads,
                 [&](std::size_t i) { vals[i] = objective_3d(moving, fixed, cands[i], cfg.metric, cfg.nmi_bins); });
    bool level_found = false;
    double level_best = -std::numeric_limits<double>::infinity();
    Vec3 level_arg = centre;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (vals[i] && *vals[i] > level_best) {
        level_best = *vals[i];
        level_arg = cands[i];
        level_found = true;
      }
    }
    if (!level_found) break;
    centre = level_arg;
    best_val = level_best;
    found = true;
  }
  if (!found) {
    out.metric_value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.t = centre;
  out.metric_value = best_val;
  out.converged = true;
  return out;
}

Translation3D register_translation_3d(const std::vector<PlanarImage>& moving_planes, const Volume& fixed,
                                      const Register3DConfig& cfg) {
  return register_translation_3d(samples_from_planes(moving_planes), fixed, cfg);
}

Translation3D register_translation_3d(const Volume& moving, const Volume& fixed, const Register3DConfig& cfg,
                                      int stride) {
  return register_translation_3d(samples_from_volume(moving, stride), fixed, cfg);
}

}  // namespace cmc
