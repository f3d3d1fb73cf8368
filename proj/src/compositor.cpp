#include "hfr/compositor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hfr {

void CompositeSettings::validate() const {
  if (!(blend_band > 0.0 && blend_band <= 0.5)) throw std::invalid_argument("blend_band must be in (0, 0.5]");
  if (!(cutout_scale > 0.0 && cutout_scale < 1.0)) throw std::invalid_argument("cutout_scale must be in (0, 1)");
  if (!(cutout_depth_margin >= 0.0)) throw std::invalid_argument("cutout_depth_margin must be non-negative");
}

std::optional<Vec3> reconstruct_world(const Camera& cam_old, const Vec2& uv, double d) {
  if (!(d > 0.0)) return std::nullopt;
  const Mat4 inv = cam_old.view_projection().inverse();
  const Eigen::Vector4d clip(2.0 * uv.x() - 1.0, 2.0 * uv.y() - 1.0, 1.0, 1.0);
  const Eigen::Vector4d h = inv * clip;
  const Vec3 p_far = h.head<3>() / h.w();
  const Vec3 pos = cam_old.position();
  return pos + (p_far - pos).normalized() * d;
}

namespace {

double depth_at_uv(const FoveatedFrame& frame, const Vec2& uv) {
  const Image& d = frame.depth;
  const int x = std::clamp(static_cast<int>(std::floor(uv.x() * d.width)), 0, d.width - 1);
  const int y = std::clamp(static_cast<int>(std::floor((1.0 - uv.y()) * d.height)), 0, d.height - 1);
  return d.at(x, y, 0);
}

// Bilinear sample of premultiplied RGBA at a continuous pixel position (centres at +0.5).
Vec4 sample_bilinear(const Image& img, double px, double py) {
  const double fx = std::clamp(px - 0.5, 0.0, img.width - 1.0);
  const double fy = std::clamp(py - 0.5, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  Vec4 out;
  for (int c = 0; c < 4; ++c) {
    const double top = (1 - tx) * img.at(x0, y0, c) + tx * img.at(x1, y0, c);
    const double bottom = (1 - tx) * img.at(x0, y1, c) + tx * img.at(x1, y1, c);
    out[c] = (1 - ty) * top + ty * bottom;
  }
  return out;
}

}  // namespace

ReprojectionGrid build_grid(const FoveatedFrame& frame, int resolution) {
  if (resolution < 2) throw std::invalid_argument("grid resolution must be >= 2");
  if (frame.depth.width != frame.camera.width || frame.depth.height != frame.camera.height) {
    throw std::invalid_argument("frame depth does not match its camera");
  }
  ReprojectionGrid g;
  g.frame_id = frame.frame_id;
  g.resolution = resolution;
  const int n = resolution;
  g.uvd.resize(static_cast<std::size_t>(n) * n);
  std::vector<double> depth(g.uvd.size());
  std::vector<char> valid(g.uvd.size());
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Vec2 uv(static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1));
      const double d = depth_at_uv(frame, uv);
      const std::size_t k = static_cast<std::size_t>(j) * n + i;
      g.uvd[k] = Vec3(uv.x(), uv.y(), d);
      depth[k] = d;
      valid[k] = d > 0.0;
    }
  }
  if (std::none_of(valid.begin(), valid.end(), [](char v) { return v != 0; })) return g;

  // Grow valid depths into no-hit vertices so the mesh stays connected.
  bool pending = true;
  while (pending) {
    pending = false;
    std::vector<double> next = depth;
    std::vector<char> next_valid = valid;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * n + i;
        if (valid[k]) continue;
        double sum = 0.0;
        int count = 0;
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            const int ii = i + di, jj = j + dj;
            if (ii < 0 || jj < 0 || ii >= n || jj >= n) continue;
            const std::size_t kk = static_cast<std::size_t>(jj) * n + ii;
            if (valid[kk]) {
              sum += depth[kk];
              ++count;
            }
          }
        }
        if (count > 0) {
          next[k] = sum / count;
          next_valid[k] = 1;
        } else {
          pending = true;
        }
      }
    }
    depth.swap(next);
    valid.swap(next_valid);
  }
  g.world.resize(g.uvd.size());
  for (std::size_t k = 0; k < g.uvd.size(); ++k) {
    g.world[k] = *reconstruct_world(frame.camera, g.uvd[k].head<2>(), depth[k]);
  }
  g.empty = false;
  return g;
}

ReprojectedImage reproject(const FoveatedFrame& frame, const Camera& cam_new, const ReprojectionSettings& settings) {
  cam_new.validate();
  const int w = cam_new.width;
  const int h = cam_new.height;
  ReprojectedImage out;
  out.camera = cam_new;
  out.frame_id = frame.frame_id;
  out.rgba = Image(w, h, 4);
  out.depth = Image(w, h, 1);
  out.source_uv = Image(w, h, 2);
  out.covered.assign(static_cast<std::size_t>(w) * h, 0);

  const ReprojectionGrid grid = build_grid(frame, settings.grid_resolution);
  if (grid.empty) return out;
  const Image source = to_premultiplied(frame.rgba);
  const Camera& cam_old = frame.camera;
  const int n = grid.resolution;

  const Mat4 view_new = cam_new.view();
  const double f_new = cam_new.focal_px();
  struct Vertex {
    Vec2 px;
    double z;
    bool ok;
  };
  std::vector<Vertex> verts(grid.world.size());
  for (std::size_t k = 0; k < verts.size(); ++k) {
    const Vec3 c = transform_point(view_new, grid.world[k]);
    const double z = -c.z();
    verts[k].ok = z > cam_new.near;
    verts[k].z = z;
    verts[k].px = verts[k].ok ? Vec2(0.5 * w + f_new * c.x() / z, 0.5 * h - f_new * c.y() / z) : Vec2::Zero();
  }

  std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  std::vector<Vec3> hit(zbuf.size(), Vec3::Zero());
  const double cell_area_px = (static_cast<double>(cam_old.width) / (n - 1)) * (static_cast<double>(cam_old.height) / (n - 1));
  const Vec3 old_pos = cam_old.position();

  auto raster_triangle = [&](std::size_t a, std::size_t b, std::size_t c) {
    const std::size_t idx[3] = {a, b, c};
    if (!verts[a].ok || !verts[b].ok || !verts[c].ok) return;
    // Disocclusion: large depth ratio that actually opens up on screen.
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (auto k : idx) {
      const double d = (grid.world[k] - old_pos).norm();
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    if (dmax > settings.disocclusion_ratio * dmin) {
      double parallax = 0.0;
      for (auto k : idx) {
        const Vec3 ray = (grid.world[k] - old_pos).normalized();
        const auto flat = cam_new.project(old_pos + ray * dmin);
        if (!flat) {
          parallax = std::numeric_limits<double>::infinity();
          break;
        }
        parallax = std::max(parallax, (*flat - verts[k].px).norm());
      }
      if (parallax > settings.disocclusion_parallax_px) {
        out.dropped_area_px += 0.5 * cell_area_px;
        return;
      }
    }
    const Vec2 p0 = verts[a].px, p1 = verts[b].px, p2 = verts[c].px;
    const double area = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p1.y() - p0.y()) * (p2.x() - p0.x());
    if (std::abs(area) < 1e-12) return;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p0.x(), p1.x(), p2.x()}) - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({p0.x(), p1.x(), p2.x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p0.y(), p1.y(), p2.y()}) - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({p0.y(), p1.y(), p2.y()}) - 0.5)));
    const double inv_area = 1.0 / area;
    constexpr double kEdgeEps = -1e-9;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double l0 = ((p1.x() - px) * (p2.y() - py) - (p1.y() - py) * (p2.x() - px)) * inv_area;
        const double l1 = ((p2.x() - px) * (p0.y() - py) - (p2.y() - py) * (p0.x() - px)) * inv_area;
        const double l2 = 1.0 - l0 - l1;
        if (l0 < kEdgeEps || l1 < kEdgeEps || l2 < kEdgeEps) continue;
        const double w0 = l0 / verts[a].z, w1 = l1 / verts[b].z, w2 = l2 / verts[c].z;
        const double sum = w0 + w1 + w2;
        const double z = 1.0 / sum;
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        if (z >= zbuf[pix]) continue;
        zbuf[pix] = z;
        hit[pix] = (w0 * grid.world[a] + w1 * grid.world[b] + w2 * grid.world[c]) / sum;
      }
    }
  };

  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const std::size_t k00 = static_cast<std::size_t>(j) * n + i;
      const std::size_t k10 = k00 + 1;
      const std::size_t k01 = k00 + n;
      const std::size_t k11 = k01 + 1;
      raster_triangle(k00, k10, k11);
      raster_triangle(k00, k11, k01);
    }
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      if (!std::isfinite(zbuf[pix])) continue;
      const auto src = cam_old.project(hit[pix]);
      if (!src) continue;
      out.covered[pix] = 1;
      const Vec2 uv = pixel_to_uv(cam_old, *src);
      out.source_uv.at(x, y, 0) = uv.x();
      out.source_uv.at(x, y, 1) = uv.y();
      const int sx = std::clamp(static_cast<int>(std::floor(src->x())), 0, cam_old.width - 1);
      const int sy = std::clamp(static_cast<int>(std::floor(src->y())), 0, cam_old.height - 1);
      if (frame.depth.at(sx, sy, 0) <= 0.0) continue;
      const Vec4 c = sample_bilinear(source, src->x(), src->y());
      for (int ch = 0; ch < 4; ++ch) out.rgba.at(x, y, ch) = c[ch];
      out.depth.at(x, y, 0) = (hit[pix] - cam_new.position()).norm();
    }
  }
  return out;
}

SplatModel apply_cutout(const SplatModel& model, const FoveatedFrame& frame, const CompositeSettings& settings) {
  settings.validate();
  const Camera& cam = frame.camera;
  SplatModel out;
  out.generation = model.generation;
  out.settings_hash = model.settings_hash;
  out.gaussians.reserve(model.size());
  const Vec3 eye = cam.position();
  for (const auto& g : model.gaussians) {
    bool inside = false;
    if (const auto px = cam.project(g.position)) {
      const Vec2 ndc(2.0 * px->x() / cam.width - 1.0, 1.0 - 2.0 * px->y() / cam.height);
      // Radial, like the blend ramp; a square cut would leave holes under the diagonal ring.
      if (ndc.norm() <= settings.cutout_scale) {
        const int x = std::clamp(static_cast<int>(px->x()), 0, cam.width - 1);
        const int y = std::clamp(static_cast<int>(px->y()), 0, cam.height - 1);
        const double surface = frame.depth.at(x, y, 0);
        const double dist = (g.position - eye).norm();
        inside = surface <= 0.0 || dist <= surface * (1.0 + settings.cutout_depth_margin);
      }
    }
    if (!inside) out.gaussians.push_back(g);
  }
  return out;
}

double foveal_blend_weight(const Vec2& source_uv, double blend_band) {
  const double r = 2.0 * (source_uv - Vec2(0.5, 0.5)).norm();
  return std::clamp((1.0 - r) / blend_band, 0.0, 1.0);
}

DisplayImage composite(const RasterOutput& peripheral, const ReprojectedImage& foveal, const CompositeSettings& settings) {
  settings.validate();
  if (!same_camera(peripheral.camera, foveal.camera, 1e-9)) {
    throw std::invalid_argument("composite: peripheral and foveal layers use different cameras");
  }
  const int w = foveal.camera.width;
  const int h = foveal.camera.height;
  DisplayImage out{Image(w, h, 4), Image(w, h, 1)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      double weight = 0.0;
      if (foveal.covered[pix]) {
        weight = foveal_blend_weight(Vec2(foveal.source_uv.at(x, y, 0), foveal.source_uv.at(x, y, 1)), settings.blend_band);
      }
      const double fa = weight * foveal.rgba.at(x, y, 3);
      out.foveal_weight.at(x, y, 0) = fa;
      for (int c = 0; c < 3; ++c) {
        out.rgba.at(x, y, c) = weight * foveal.rgba.at(x, y, c) + (1.0 - fa) * peripheral.rgb.at(x, y, c);
      }
      out.rgba.at(x, y, 3) = fa + (1.0 - fa) * peripheral.alpha.at(x, y, 0);
    }
  }
  return out;
}

DisplayImage render_hybrid(const SplatModel& model, const FoveatedFrame* latest, const Camera& display,
                           const CompositeSettings& settings, const ReprojectionSettings& reprojection) {
  if (latest == nullptr) {
    return DisplayImage{raster_rgba(rasterize(model, display, Vec3::Zero())), Image(display.width, display.height, 1)};
  }
  const SplatModel cut = apply_cutout(model, *latest, settings);
  RasterOutput peripheral;
  if (cut.empty()) {
    peripheral.camera = display;
    peripheral.rgb = Image(display.width, display.height, 3);
    peripheral.alpha = Image(display.width, display.height, 1);
  } else {
    peripheral = rasterize(cut, display, Vec3::Zero());
  }
  return composite(peripheral, reproject(*latest, display, reprojection), settings);
}

int select_latency_mode(double target_frame_ms, double measured_render_ms) {
  if (!(target_frame_ms > 0.0)) throw std::invalid_argument("target frame time must be positive");
  if (!(measured_render_ms >= 0.0)) return 1;
  return std::max(1, static_cast<int>(std::ceil(measured_render_ms / target_frame_ms - 1e-12)));
}

std::vector<DisplayTick> simulate_display(double target_frame_ms, const std::vector<double>& render_ms, int ticks) {
  std::vector<DisplayTick> out;
  out.reserve(static_cast<std::size_t>(std::max(0, ticks)));
  // Completion time of each tracer frame, rendered back to back from t = 0.
  std::vector<double> done;
  double t = 0.0;
  for (double r : render_ms) {
    t += r;
    done.push_back(t);
  }
  std::size_t next = 0;
  std::int64_t shown = -1;
  for (int k = 0; k < ticks; ++k) {
    const double now = k * target_frame_ms;
    while (next < done.size() && done[next] <= now) shown = static_cast<std::int64_t>(next++);
    out.push_back({now, shown});
  }
  return out;
}

}  // namespace hfr
